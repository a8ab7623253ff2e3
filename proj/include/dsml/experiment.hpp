#pragma once
// Experiment harness: declarative configs, replication loops, baselines and
// CSV output.

#include <dsml/core.hpp>
#include <dsml/datagen.hpp>
#include <dsml/debias.hpp>
#include <dsml/metrics.hpp>
#include <dsml/protocol.hpp>
#include <dsml/solvers.hpp>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace dsml {

class ConfigError : public Error {
public:
    using Error::Error;
};

enum class Method { lasso, group_lasso, refit_group_lasso, dsml };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::lasso: return "lasso";
        case Method::group_lasso: return "group_lasso";
        case Method::refit_group_lasso: return "refit_group_lasso";
        case Method::dsml: return "dsml";
    }
    return "?";
}

inline Method method_from_string(const std::string& s) {
    if (s == "lasso") return Method::lasso;
    if (s == "group_lasso") return Method::group_lasso;
    if (s == "refit_group_lasso") return Method::refit_group_lasso;
    if (s == "dsml") return Method::dsml;
    throw ConfigError("unknown method '" + s + "'");
}

enum class SweepKind { n, m };

struct ExperimentConfig {
    /// n and m of the spec are overwritten at each sweep point.
    GenSpec spec;
    SweepKind sweep = SweepKind::n;
    std::vector<Index> sweep_values;
    /// The dimension held fixed (m for an n-sweep, n for an m-sweep).
    Index fixed = 10;
    std::vector<Method> methods{Method::lasso, Method::group_lasso, Method::refit_group_lasso, Method::dsml};
    int replications = 200;

    /// Debiasing level: nullopt means sqrt(log p / n).
    std::optional<double> mu;
    ThresholdRule::Kind threshold = ThresholdRule::Kind::oracle_tuned;
    double threshold_value = 0.0;
    int threshold_grid_size = 50;
    double theory_sigma_x = 1.0;
    double theory_C = 0.0;

    enum class DsmlLambda { theory, tuned, fixed };
    DsmlLambda dsml_lambda = DsmlLambda::theory;
    double dsml_lambda_value = 0.0;

    int lambda_grid_size = 30;
    double lambda_min_ratio = 0.01;

    int max_iter = 10000;
    double tol = 1e-8;
    double group_tol = 1e-6;

    std::string output_path = "results.csv";

    void validate() const {
        spec.validate();
        if (sweep_values.empty()) throw ConfigError("sweep grid must be non-empty");
        for (Index v : sweep_values)
            if (v < 1) throw ConfigError("sweep values must be positive");
        if (fixed < 1) throw ConfigError("fixed dimension must be positive");
        if (replications < 1) throw ConfigError("replications must be >= 1");
        if (methods.empty()) throw ConfigError("no methods selected");
        if (lambda_grid_size < 1) throw ConfigError("lambda_grid_size must be >= 1");
        if (!(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0))
            throw ConfigError("lambda_min_ratio must lie in (0, 1)");
        if (threshold_grid_size < 1) throw ConfigError("threshold_grid_size must be >= 1");
        if (mu && !(*mu > 0.0)) throw ConfigError("mu must be positive");
        if (spec.family == Family::logistic)
            for (Method m : methods)
                if (m == Method::group_lasso || m == Method::refit_group_lasso)
                    throw ConfigError("group lasso baselines support the linear family only");
    }

    GenSpec spec_at(std::size_t sweep_index) const {
        GenSpec g = spec;
        if (sweep == SweepKind::n) {
            g.n = sweep_values[sweep_index];
            g.m = fixed;
        } else {
            g.m = sweep_values[sweep_index];
            g.n = fixed;
        }
        return g;
    }
};

namespace detail {

template <class T>
std::vector<T> parse_list(const std::string& text, T (*convert)(const std::string&)) {
    std::vector<std::string> parts;
    boost::split(parts, text, boost::is_any_of(","));
    std::vector<T> out;
    for (auto& part : parts) {
        boost::trim(part);
        if (!part.empty()) out.push_back(convert(part));
    }
    return out;
}

inline Index to_index(const std::string& s) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw ConfigError("bad integer '" + s + "'");
        return static_cast<Index>(v);
    } catch (const std::logic_error&) {
        throw ConfigError("bad integer '" + s + "'");
    }
}

inline Method to_method(const std::string& s) { return method_from_string(s); }

}  // namespace detail

/// Parses the INI-style configuration; see configs/README.md for the grammar.
inline ExperimentConfig parse_config(std::istream& is) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    static const std::map<std::string, std::vector<std::string>> known = {
        {"data", {"p", "s", "sigma", "rho", "coef_low", "coef_high", "family", "seed"}},
        {"sweep", {"vary", "values", "fixed"}},
        {"methods", {"use"}},
        {"tuning",
         {"mu", "threshold", "threshold_value", "threshold_grid_size", "theory_sigma_x", "theory_C", "dsml_lambda",
          "lambda_grid_size", "lambda_min_ratio"}},
        {"solver", {"max_iter", "tol", "group_tol"}},
        {"run", {"replications", "output"}},
    };
    for (const auto& [section, body] : tree) {
        auto it = known.find(section);
        if (it == known.end()) throw ConfigError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : body)
            if (std::find(it->second.begin(), it->second.end(), key) == it->second.end())
                throw ConfigError("config: unknown key '" + key + "' in [" + section + "]");
    }

    ExperimentConfig c;
    try {
        c.spec.p = tree.get<Index>("data.p", 200);
        c.spec.s = tree.get<Index>("data.s", 10);
        c.spec.sigma = tree.get<double>("data.sigma", 1.0);
        c.spec.rho = tree.get<double>("data.rho", 0.5);
        c.spec.coef_low = tree.get<double>("data.coef_low", 0.0);
        c.spec.coef_high = tree.get<double>("data.coef_high", 1.0);
        c.spec.family = family_from_string(tree.get<std::string>("data.family", "linear"));
        c.spec.seed = tree.get<std::uint64_t>("data.seed", 1);

        const std::string vary = tree.get<std::string>("sweep.vary", "n");
        if (vary == "n") {
            c.sweep = SweepKind::n;
        } else if (vary == "m") {
            c.sweep = SweepKind::m;
        } else {
            throw ConfigError("sweep.vary must be n or m");
        }
        c.sweep_values = detail::parse_list<Index>(tree.get<std::string>("sweep.values", ""), &detail::to_index);
        c.fixed = tree.get<Index>("sweep.fixed", 10);

        if (auto use = tree.get_optional<std::string>("methods.use"))
            c.methods = detail::parse_list<Method>(*use, &detail::to_method);

        const std::string mu = tree.get<std::string>("tuning.mu", "sqrt(log p / n)");
        if (mu != "sqrt(log p / n)") c.mu = std::stod(mu);

        const std::string threshold = tree.get<std::string>("tuning.threshold", "oracle_tuned");
        if (threshold == "oracle_tuned") {
            c.threshold = ThresholdRule::Kind::oracle_tuned;
        } else if (threshold == "fixed") {
            c.threshold = ThresholdRule::Kind::fixed;
        } else if (threshold == "theoretical") {
            c.threshold = ThresholdRule::Kind::theoretical;
        } else {
            throw ConfigError("tuning.threshold must be oracle_tuned, fixed or theoretical");
        }
        c.threshold_value = tree.get<double>("tuning.threshold_value", 0.0);
        c.threshold_grid_size = tree.get<int>("tuning.threshold_grid_size", 50);
        c.theory_sigma_x = tree.get<double>("tuning.theory_sigma_x", 1.0);
        c.theory_C = tree.get<double>("tuning.theory_C", 0.0);

        const std::string dl = tree.get<std::string>("tuning.dsml_lambda", "theory");
        if (dl == "theory") {
            c.dsml_lambda = ExperimentConfig::DsmlLambda::theory;
        } else if (dl == "tuned") {
            c.dsml_lambda = ExperimentConfig::DsmlLambda::tuned;
        } else {
            c.dsml_lambda = ExperimentConfig::DsmlLambda::fixed;
            c.dsml_lambda_value = std::stod(dl);
        }
        c.lambda_grid_size = tree.get<int>("tuning.lambda_grid_size", 30);
        c.lambda_min_ratio = tree.get<double>("tuning.lambda_min_ratio", 0.01);

        c.max_iter = tree.get<int>("solver.max_iter", 10000);
        c.tol = tree.get<double>("solver.tol", 1e-8);
        c.group_tol = tree.get<double>("solver.group_tol", 1e-6);

        c.replications = tree.get<int>("run.replications", 200);
        c.output_path = tree.get<std::string>("run.output", "results.csv");
    } catch (const pt::ptree_bad_data& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: bad number: ") + e.what());
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    try {
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return parse_config(in);
}

/// Data seed for one (sweep point, replication); independent of the methods run.
inline std::uint64_t derive_seed(std::uint64_t base, std::size_t sweep_index, std::size_t replication) {
    using R = RandomStream;
    return R::splitmix64(R::splitmix64(R::splitmix64(base) + sweep_index) + replication);
}

struct ResultRow {
    Method method = Method::lasso;
    Index sweep_value = 0;
    int replication = 0;
    std::uint64_t seed = 0;
    double hamming = 0.0;
    double est_error = 0.0;
    double pred_error = 0.0;
    double pred_error_insample = 0.0;
    double wall_time_ms = 0.0;
    std::int64_t comm_upstream = 0;
    std::int64_t comm_downstream = 0;
    /// Selected penalty and threshold (NaN when not applicable).
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double threshold = std::numeric_limits<double>::quiet_NaN();
    std::string error;
};

/// Log-spaced penalties from lambda_max down to ratio * lambda_max.
inline std::vector<double> lambda_path(double lambda_max, int count, double ratio) {
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1 || lambda_max <= 0.0) {
        std::fill(grid.begin(), grid.end(), std::max(lambda_max, 0.0));
        return grid;
    }
    const double step = std::log(ratio) / double(count - 1);
    for (int i = 0; i < count; ++i) grid[i] = lambda_max * std::exp(step * i);
    return grid;
}

namespace detail {

struct Fitted {
    CoefficientMatrix B;
    double hamming = 0.0;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    double threshold = std::numeric_limits<double>::quiet_NaN();
    SupportSet support;
    CommStats comm;
};

inline SolverOptions solver_options(const ExperimentConfig& c, double lambda, double tol) {
    SolverOptions o;
    o.max_iter = c.max_iter;
    o.tol = tol;
    o.lambda = lambda;
    return o;
}

/// Local lasso with one penalty shared by all tasks, picked on a path to
/// minimize the mean per-task Hamming distance (ties: larger penalty).
inline Fitted fit_local_lasso(const ExperimentConfig& c, const Dataset& d) {
    const Index m = static_cast<Index>(d.tasks.size());
    const Index p = d.spec.p;
    const bool linear = d.spec.family == Family::linear;
    std::vector<QuadraticTask> quad;
    double lmax = 0.0;
    for (const auto& t : d.tasks) {
        if (linear) quad.emplace_back(t.X(), t.y());
        lmax = std::max(lmax, linear ? lasso_lambda_max(t.X(), t.y()) : logistic_lambda_max(t.X(), t.y()));
    }
    Fitted best;
    best.hamming = std::numeric_limits<double>::infinity();
    CoefficientMatrix B(p, m);
    for (double lambda : lambda_path(lmax, c.lambda_grid_size, c.lambda_min_ratio)) {
        const SolverOptions o = solver_options(c, lambda, c.tol);
        for (Index t = 0; t < m; ++t) {
            const Vector warm = B.task(t);
            const auto& task = d.tasks[static_cast<std::size_t>(t)];
            B.task(t) = linear ? solve_lasso(quad[static_cast<std::size_t>(t)], o, warm).beta
                               : solve_logistic_lasso(task.X(), task.y(), o, warm).beta;
        }
        const double h = mean_task_hamming(B, d.support);
        if (h < best.hamming) {
            best.B = B;
            best.hamming = h;
            best.lambda = lambda;
        }
        if (h == 0.0) break;
    }
    return best;
}

/// Group lasso with the penalty tuned on a path for row-support Hamming
/// distance (ties: larger penalty).
inline Fitted fit_group_lasso(const ExperimentConfig& c, const Dataset& d) {
    const GroupLassoProblem problem(d.tasks);
    Fitted best;
    best.hamming = std::numeric_limits<double>::infinity();
    std::optional<Matrix> warm;
    for (double lambda : lambda_path(problem.lambda_max(), c.lambda_grid_size, c.lambda_min_ratio)) {
        GroupLassoFit fit = solve_group_lasso(problem, solver_options(c, lambda, c.group_tol), warm);
        warm = fit.B.matrix();
        const SupportSet rows = SupportSet::of(fit.B.matrix().rowwise().norm());
        const double h = double(hamming(rows, d.support));
        if (h < best.hamming) {
            best.B = std::move(fit.B);
            best.hamming = h;
            best.lambda = lambda;
            best.support = rows;
        }
        if (h == 0.0) break;
    }
    const Index m = d.spec.m;
    // Centralized: every worker ships its raw data (n rows of p + 1 scalars).
    best.comm = {m * d.spec.n * (d.spec.p + 1), 0, 1};
    return best;
}

inline Fitted refit_on_support(const Fitted& group, const Dataset& d) {
    Fitted out = group;
    for (std::size_t t = 0; t < d.tasks.size(); ++t)
        out.B.task(static_cast<Index>(t)) = ols_on_support(d.tasks[t].X(), d.tasks[t].y(), group.support);
    out.comm.downstream_scalars = d.spec.m * static_cast<std::int64_t>(group.support.size());
    return out;
}

inline ThresholdRule threshold_rule(const ExperimentConfig& c, const GenSpec& g, const Matrix& Sigma) {
    switch (c.threshold) {
        case ThresholdRule::Kind::fixed: return ThresholdRule::fixed(c.threshold_value);
        case ThresholdRule::Kind::oracle_tuned: return ThresholdRule::oracle_tuned_auto(c.threshold_grid_size);
        case ThresholdRule::Kind::theoretical: {
            Eigen::SelfAdjointEigenSolver<Matrix> es(Sigma, Eigen::EigenvaluesOnly);
            TheoryParams tp;
            tp.K = Sigma.inverse().diagonal().maxCoeff();
            tp.sigma = g.sigma;
            tp.sigma_X = c.theory_sigma_x;
            tp.lambda_min = es.eigenvalues().minCoeff();
            tp.lambda_max = es.eigenvalues().maxCoeff();
            tp.s = double(g.s);
            tp.m = double(g.m);
            tp.n = double(g.n);
            tp.p = double(g.p);
            tp.C = c.theory_C;
            return ThresholdRule::theoretical(tp);
        }
    }
    throw Error("unknown threshold rule");
}

inline Fitted fit_dsml(const ExperimentConfig& c, const Dataset& d) {
    const GenSpec& g = d.spec;
    const double mu = c.mu ? *c.mu : default_mu(g.n, g.p);
    const ThresholdRule rule = threshold_rule(c, g, d.Sigma);
    InverseCache cache;
    DsmlOptions opts;
    opts.truth = d.support;
    opts.worker.cache = &cache;

    std::vector<double> lambdas;
    switch (c.dsml_lambda) {
        case ExperimentConfig::DsmlLambda::theory: lambdas = {default_lambda(g.sigma, g.n, g.p)}; break;
        case ExperimentConfig::DsmlLambda::fixed: lambdas = {c.dsml_lambda_value}; break;
        case ExperimentConfig::DsmlLambda::tuned: {
            double lmax = 0.0;
            for (const auto& t : d.tasks)
                lmax = std::max(lmax, g.family == Family::linear ? lasso_lambda_max(t.X(), t.y())
                                                                  : logistic_lambda_max(t.X(), t.y()));
            lambdas = lambda_path(lmax, c.lambda_grid_size, c.lambda_min_ratio);
            break;
        }
    }

    Fitted best;
    best.hamming = std::numeric_limits<double>::infinity();
    for (double lambda : lambdas) {
        DsmlResult r = run_dsml(d.tasks, solver_options(c, lambda, c.tol), mu, rule, opts);
        const double h = double(hamming(r.support, d.support));
        if (h < best.hamming) {
            best.B = std::move(r.beta_tilde);
            best.hamming = h;
            best.lambda = lambda;
            best.threshold = r.threshold;
            best.support = std::move(r.support);
            best.comm = r.stats;
        }
        if (h == 0.0) break;
    }
    return best;
}

inline std::string sanitize(std::string s) {
    for (char& ch : s)
        if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
    return s;
}

}  // namespace detail

/// Fits one method on one dataset and evaluates it.
inline ResultRow run_method(const ExperimentConfig& c, Method method, const Dataset& d, Index sweep_value,
                            int replication) {
    ResultRow row;
    row.method = method;
    row.sweep_value = sweep_value;
    row.replication = replication;
    row.seed = d.spec.seed;
    const auto start = std::chrono::steady_clock::now();
    try {
        detail::Fitted f;
        switch (method) {
            case Method::lasso: f = detail::fit_local_lasso(c, d); break;
            case Method::group_lasso: f = detail::fit_group_lasso(c, d); break;
            case Method::refit_group_lasso: f = detail::refit_on_support(detail::fit_group_lasso(c, d), d); break;
            case Method::dsml: f = detail::fit_dsml(c, d); break;
        }
        const std::vector<Matrix> sigmas(d.tasks.size(), d.Sigma);
        const RunMetrics metrics = evaluate(f.B, d.B_star, d.support, sigmas, d.tasks);
        // Shared-support methods report the Hamming distance of the selected rows.
        row.hamming = method == Method::lasso ? metrics.hamming : f.hamming;
        row.est_error = metrics.est_error_l1l2;
        row.pred_error = metrics.pred_error;
        row.pred_error_insample = metrics.pred_error_insample;
        row.comm_upstream = f.comm.upstream_scalars;
        row.comm_downstream = f.comm.downstream_scalars;
        row.lambda = f.lambda;
        row.threshold = f.threshold;
        if (!(std::isfinite(row.hamming) && std::isfinite(row.est_error) && std::isfinite(row.pred_error) &&
              std::isfinite(row.pred_error_insample)))
            throw Error("non-finite metric");
    } catch (const std::exception& e) {
        row.error = detail::sanitize(e.what());
        row.hamming = row.est_error = row.pred_error = row.pred_error_insample = 0.0;
    }
    row.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return row;
}

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::size_t failures = 0;

    bool excessive_failures() const { return failures * 10 > rows.size(); }
};

/// Runs every sweep point x replication x method. Rows come back sorted by
/// (sweep value, replication, method) irrespective of scheduling.
inline ExperimentResult run_experiment(const ExperimentConfig& c, unsigned jobs = 1) {
    c.validate();
    struct Job {
        std::size_t sweep_index;
        int replication;
    };
    std::vector<Job> work;
    for (std::size_t i = 0; i < c.sweep_values.size(); ++i)
        for (int r = 0; r < c.replications; ++r) work.push_back({i, r});

    std::vector<std::vector<ResultRow>> out(work.size());
    auto run_job = [&](std::size_t k) {
        const Job& job = work[k];
        GenSpec g = c.spec_at(job.sweep_index);
        g.seed = derive_seed(c.spec.seed, job.sweep_index, static_cast<std::size_t>(job.replication));
        const Index sweep_value = c.sweep_values[job.sweep_index];
        std::optional<Dataset> data;
        std::string gen_error;
        try {
            data = generate(g);
        } catch (const std::exception& e) {
            gen_error = detail::sanitize(e.what());
        }
        for (Method method : c.methods) {
            if (data) {
                out[k].push_back(run_method(c, method, *data, sweep_value, job.replication));
            } else {
                ResultRow row;
                row.method = method;
                row.sweep_value = sweep_value;
                row.replication = job.replication;
                row.seed = g.seed;
                row.error = gen_error;
                out[k].push_back(row);
            }
        }
    };

    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(work.size())));
    if (jobs == 1) {
        for (std::size_t k = 0; k < work.size(); ++k) run_job(k);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < work.size(); k = next++) run_job(k);
            });
    }

    ExperimentResult result;
    for (auto& rows : out)
        for (auto& row : rows) {
            if (!row.error.empty()) ++result.failures;
            result.rows.push_back(std::move(row));
        }
    std::stable_sort(result.rows.begin(), result.rows.end(), [](const ResultRow& a, const ResultRow& b) {
        if (a.sweep_value != b.sweep_value) return a.sweep_value < b.sweep_value;
        if (a.replication != b.replication) return a.replication < b.replication;
        return static_cast<int>(a.method) < static_cast<int>(b.method);
    });
    return result;
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kResultHeader =
    "method,sweep,sweep_value,replication,seed,hamming,est_error,pred_error,pred_error_insample,"
    "comm_upstream,comm_downstream,lambda,threshold,error";

/// NaN (not applicable) is written as an empty cell.
inline std::string format_real(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

/// Deterministic result CSV. Wall times go to a separate file (see
/// write_timing_csv) so that reruns are byte-identical.
inline void write_results_csv(std::ostream& os, const ExperimentConfig& c, const std::vector<ResultRow>& rows) {
    const char* sweep = c.sweep == SweepKind::n ? "n" : "m";
    os << kResultHeader << '\n';
    for (const auto& r : rows) {
        os << to_string(r.method) << ',' << sweep << ',' << r.sweep_value << ',' << r.replication << ','
           << r.seed << ',' << format_real(r.hamming) << ',' << format_real(r.est_error) << ','
           << format_real(r.pred_error) << ',' << format_real(r.pred_error_insample) << ',' << r.comm_upstream
           << ',' << r.comm_downstream << ',' << format_real(r.lambda) << ',' << format_real(r.threshold) << ','
           << r.error << '\n';
    }
}

inline void write_timing_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
    os << "method,sweep_value,replication,wall_time_ms\n";
    for (const auto& r : rows)
        os << to_string(r.method) << ',' << r.sweep_value << ',' << r.replication << ','
           << format_real(r.wall_time_ms) << '\n';
}

/// Records how tuning grids are built, for reproducibility.
inline void write_run_metadata(std::ostream& os, const ExperimentConfig& c) {
    os << "lambda_grid = " << c.lambda_grid_size << " log-spaced values from lambda_max down to "
       << format_real(c.lambda_min_ratio) << " * lambda_max (lambda_max: smallest penalty with a zero fit)\n";
    os << "lambda_selection = shared across tasks, minimal Hamming distance, ties to the larger penalty\n";
    os << "mu = " << (c.mu ? format_real(*c.mu) : std::string("sqrt(log p / n)")) << '\n';
    switch (c.threshold) {
        case ThresholdRule::Kind::oracle_tuned:
            os << "threshold = oracle_tuned over " << c.threshold_grid_size
               << " log-spaced values from (min positive row norm)/2 to max row norm; ties to the smaller value\n";
            break;
        case ThresholdRule::Kind::fixed: os << "threshold = fixed " << format_real(c.threshold_value) << '\n'; break;
        case ThresholdRule::Kind::theoretical:
            os << "threshold = theoretical (sigma_X = " << format_real(c.theory_sigma_x)
               << ", C = " << format_real(c.theory_C) << ")\n";
            break;
    }
    switch (c.dsml_lambda) {
        case ExperimentConfig::DsmlLambda::theory: os << "dsml_lambda = 4 sigma sqrt(log p / n)\n"; break;
        case ExperimentConfig::DsmlLambda::tuned: os << "dsml_lambda = tuned on the lambda grid\n"; break;
        case ExperimentConfig::DsmlLambda::fixed:
            os << "dsml_lambda = " << format_real(c.dsml_lambda_value) << '\n';
            break;
    }
}

// ---------------------------------------------------------------------------
// Summaries

struct SummaryRow {
    std::string method;
    std::string sweep_value;
    std::size_t count = 0;
    std::vector<double> mean;
    std::vector<double> sd;
};

inline const std::vector<std::string>& summary_metrics() {
    static const std::vector<std::string> names = {"hamming",        "est_error",     "pred_error",
                                                   "pred_error_insample", "comm_upstream", "comm_downstream"};
    return names;
}

/// Groups rows without an error by (method, sweep_value) and reports means
/// and sample standard deviations. Groups appear in order of first occurrence.
inline std::vector<SummaryRow> summarize(std::istream& is) {
    std::string line;
    std::size_t line_no = 0;
    auto split = [](const std::string& s) {
        std::vector<std::string> f;
        boost::split(f, s, boost::is_any_of(","));
        return f;
    };
    if (!std::getline(is, line)) throw Error("summarize: empty input");
    ++line_no;
    const std::vector<std::string> header = split(line);
    auto column = [&](const std::string& name) -> std::size_t {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error("summarize: line 1: missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_method = column("method");
    const std::size_t c_value = column("sweep_value");
    const std::size_t c_error = column("error");
    std::vector<std::size_t> c_metric;
    for (const auto& name : summary_metrics()) c_metric.push_back(column(name));

    struct Acc {
        std::size_t order;
        std::vector<std::vector<double>> values;
    };
    std::map<std::pair<std::string, std::string>, Acc> groups;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> f = split(line);
        if (f.size() != header.size())
            throw Error("summarize: line " + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, found " + std::to_string(f.size()));
        if (!f[c_error].empty()) continue;
        auto [it, inserted] = groups.try_emplace({f[c_method], f[c_value]},
                                                 Acc{groups.size(), std::vector<std::vector<double>>(c_metric.size())});
        for (std::size_t i = 0; i < c_metric.size(); ++i) {
            const std::string& cell = f[c_metric[i]];
            try {
                std::size_t used = 0;
                const double v = std::stod(cell, &used);
                if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
                it->second.values[i].push_back(v);
            } catch (const std::logic_error&) {
                throw Error("summarize: line " + std::to_string(line_no) + ": bad number '" + cell + "' in column " +
                            summary_metrics()[i]);
            }
        }
    }

    std::vector<SummaryRow> out(groups.size());
    for (const auto& [key, acc] : groups) {
        SummaryRow& r = out[acc.order];
        r.method = key.first;
        r.sweep_value = key.second;
        r.count = acc.values.front().size();
        for (const auto& v : acc.values) {
            double sum = 0.0;
            for (double x : v) sum += x;
            const double mean = sum / double(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            r.mean.push_back(mean);
            r.sd.push_back(v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0);
        }
    }
    return out;
}

inline void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
    os << "method,sweep_value,count";
    for (const auto& name : summary_metrics()) os << ',' << name << "_mean," << name << "_sd";
    os << '\n';
    for (const auto& r : rows) {
        os << r.method << ',' << r.sweep_value << ',' << r.count;
        for (std::size_t i = 0; i < r.mean.size(); ++i) os << ',' << format_real(r.mean[i]) << ',' << format_real(r.sd[i]);
        os << '\n';
    }
}

}  // namespace dsml
