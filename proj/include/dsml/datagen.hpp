#pragma once
// Synthetic multi-task data: AR(rho) Gaussian designs, a shared support, and
// Gaussian (linear) or Bernoulli-logit (logistic) responses.

#include <dsml/core.hpp>
#include <dsml/solvers.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dsml {

struct GenSpec {
    Index p = 200;
    Index n = 100;
    Index m = 10;
    Index s = 10;
    double sigma = 1.0;
    double rho = 0.5;
    double coef_low = 0.0;
    double coef_high = 1.0;
    Family family = Family::linear;
    std::uint64_t seed = 1;

    void validate() const {
        if (p < 1 || n < 1 || m < 1 || s < 1) throw Error("p, n, m, s must be positive");
        if (s > p) throw Error("s must not exceed p");
        if (!(sigma > 0.0)) throw Error("sigma must be positive");
        if (!(rho >= 0.0 && rho < 1.0)) throw Error("rho must lie in [0, 1)");
        if (!(coef_low <= coef_high)) throw Error("coef_low must not exceed coef_high");
    }
};

/// Independent reproducible random streams.
///
/// Every stream is a std::mt19937_64 (fully specified by the standard, so
/// bit-identical across platforms) whose seed is splitmix64 applied to a mix
/// of (seed, task, purpose). Uniform and normal variates are derived here
/// rather than through <random> distributions, whose algorithms are
/// implementation-defined.
class RandomStream {
public:
    enum class Purpose : std::uint64_t { support = 1, coefficients = 2, design = 3, noise = 4, labels = 5 };

    RandomStream(std::uint64_t seed, std::uint64_t task, Purpose purpose)
        : engine_(splitmix64(splitmix64(splitmix64(seed) ^ (task + 0x632be59bd9b4e019ULL)) ^
                             static_cast<std::uint64_t>(purpose))) {}

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % bound;
    }

    /// Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Sigma_ab = rho^|a - b|.
inline Matrix ar_covariance(Index p, double rho) {
    if (!(rho >= 0.0 && rho < 1.0)) throw Error("rho must lie in [0, 1)");
    Matrix S(p, p);
    for (Index a = 0; a < p; ++a)
        for (Index b = 0; b < p; ++b) S(a, b) = std::pow(rho, double(std::abs(a - b)));
    return S;
}

struct Dataset {
    GenSpec spec;
    std::vector<TaskData> tasks;
    CoefficientMatrix B_star;
    SupportSet support;
    /// Population covariance of every task's design rows.
    Matrix Sigma;
};

/// Draws a dataset. The support is shared; coefficients are drawn per task.
inline Dataset generate(const GenSpec& spec) {
    spec.validate();
    using P = RandomStream::Purpose;
    Dataset d;
    d.spec = spec;
    d.Sigma = ar_covariance(spec.p, spec.rho);
    const Matrix L = d.Sigma.llt().matrixL();

    // Partial Fisher-Yates for s indices without replacement.
    RandomStream support_rng(spec.seed, 0, P::support);
    std::vector<Index> perm(static_cast<std::size_t>(spec.p));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = 0; i < spec.s; ++i) {
        const auto j = i + static_cast<Index>(support_rng.below(static_cast<std::uint64_t>(spec.p - i)));
        std::swap(perm[i], perm[j]);
    }
    d.support = SupportSet(std::vector<Index>(perm.begin(), perm.begin() + spec.s), spec.p);

    d.B_star = CoefficientMatrix(spec.p, spec.m);
    d.tasks.reserve(static_cast<std::size_t>(spec.m));
    for (Index t = 0; t < spec.m; ++t) {
        const auto task = static_cast<std::uint64_t>(t);
        RandomStream coef_rng(spec.seed, task, P::coefficients);
        for (Index j : d.support) {
            double v = 0.0;
            // Uniform draws of exactly zero would break the shared support.
            while (v == 0.0) v = coef_rng.uniform(spec.coef_low, spec.coef_high);
            d.B_star.task(t)[j] = v;
        }

        RandomStream design_rng(spec.seed, task, P::design);
        Matrix Z(spec.n, spec.p);
        for (Index k = 0; k < spec.n; ++k)
            for (Index j = 0; j < spec.p; ++j) Z(k, j) = design_rng.normal();
        Matrix X = Z * L.transpose();

        const Vector signal = X * d.B_star.task(t);
        Vector y(spec.n);
        if (spec.family == Family::linear) {
            RandomStream noise_rng(spec.seed, task, P::noise);
            for (Index k = 0; k < spec.n; ++k) y[k] = signal[k] + spec.sigma * noise_rng.normal();
        } else {
            // P(y = +1 | x) = 1 / (1 + exp(-x b)).
            RandomStream label_rng(spec.seed, task, P::labels);
            for (Index k = 0; k < spec.n; ++k) y[k] = label_rng.uniform() < sigmoid(signal[k]) ? 1.0 : -1.0;
        }
        d.tasks.emplace_back(std::move(X), std::move(y), spec.family, spec.sigma);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Text serialization
//
//   dsml-dataset 1
//   p n m s family seed sigma rho
//   <p> <n> <m> <s> <linear|logistic> <seed> <sigma> <rho>
//   support <s indices>
//   task <t>
//   beta <p values>
//   <n lines: y x_1 ... x_p>
//
// Reals are written with 17 significant digits, so a dataset reads back
// bit-identically.

inline void write_dataset(std::ostream& os, const Dataset& d) {
    const GenSpec& g = d.spec;
    os << "dsml-dataset 1\n";
    os << "p n m s family seed sigma rho\n";
    os << std::setprecision(17);
    os << g.p << ' ' << g.n << ' ' << g.m << ' ' << g.s << ' ' << to_string(g.family) << ' ' << g.seed << ' '
       << g.sigma << ' ' << g.rho << '\n';
    os << "support";
    for (Index j : d.support) os << ' ' << j;
    os << '\n';
    for (std::size_t t = 0; t < d.tasks.size(); ++t) {
        os << "task " << t << '\n';
        os << "beta";
        const auto beta = d.B_star.task(static_cast<Index>(t));
        for (Index j = 0; j < beta.size(); ++j) os << ' ' << beta[j];
        os << '\n';
        const TaskData& task = d.tasks[t];
        for (Index k = 0; k < task.n(); ++k) {
            os << task.y()[k];
            for (Index j = 0; j < task.p(); ++j) os << ' ' << task.X()(k, j);
            os << '\n';
        }
    }
}

inline Dataset read_dataset(std::istream& is) {
    int line_no = 0;
    std::string line;
    auto next_line = [&]() -> std::istringstream {
        if (!std::getline(is, line)) throw Error("dataset: unexpected end of input after line " + std::to_string(line_no));
        ++line_no;
        return std::istringstream(line);
    };
    auto fail = [&](const std::string& what) {
        return Error("dataset line " + std::to_string(line_no) + ": " + what);
    };

    if (next_line().str() != "dsml-dataset 1") throw fail("bad magic");
    next_line();
    Dataset d;
    GenSpec& g = d.spec;
    {
        auto ss = next_line();
        std::string fam;
        if (!(ss >> g.p >> g.n >> g.m >> g.s >> fam >> g.seed >> g.sigma >> g.rho)) throw fail("bad header");
        g.family = family_from_string(fam);
    }
    {
        auto ss = next_line();
        std::string tag;
        ss >> tag;
        if (tag != "support") throw fail("expected support");
        std::vector<Index> idx;
        Index j;
        while (ss >> j) idx.push_back(j);
        d.support = SupportSet(std::move(idx), g.p);
    }
    d.Sigma = ar_covariance(g.p, g.rho);
    d.B_star = CoefficientMatrix(g.p, g.m);
    for (Index t = 0; t < g.m; ++t) {
        {
            auto ss = next_line();
            std::string tag;
            Index id;
            if (!(ss >> tag >> id) || tag != "task" || id != t) throw fail("expected task " + std::to_string(t));
        }
        {
            auto ss = next_line();
            std::string tag;
            ss >> tag;
            if (tag != "beta") throw fail("expected beta");
            for (Index j = 0; j < g.p; ++j)
                if (!(ss >> d.B_star.task(t)[j])) throw fail("short beta row");
        }
        Matrix X(g.n, g.p);
        Vector y(g.n);
        for (Index k = 0; k < g.n; ++k) {
            auto ss = next_line();
            if (!(ss >> y[k])) throw fail("missing response");
            for (Index j = 0; j < g.p; ++j)
                if (!(ss >> X(k, j))) throw fail("short design row");
        }
        d.tasks.emplace_back(std::move(X), std::move(y), g.family, g.sigma);
    }
    return d;
}

}  // namespace dsml
