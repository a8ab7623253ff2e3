#pragma once
// One-round distributed protocol: workers fit and debias locally, the master
// selects a shared support by group hard thresholding, workers filter.

#include <dsml/core.hpp>
#include <dsml/debias.hpp>
#include <dsml/solvers.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

namespace dsml {

/// Worker-side bookkeeping that travels with a message but is not part of its
/// payload.
struct WorkerDiagnostics {
    bool lasso_converged = true;
    int lasso_iterations = 0;
    double mu_used = 0.0;
    int mu_escalations = 0;
};

/// The only upstream payload: a dense length-p debiased vector.
struct DebiasedMessage {
    std::size_t task_id = 0;
    Vector beta_u;
    WorkerDiagnostics diagnostics;
};

/// The only downstream payload.
struct SupportBroadcast {
    SupportSet support;
    double lambda_threshold = 0.0;
};

struct CommStats {
    std::int64_t upstream_scalars = 0;
    std::int64_t downstream_scalars = 0;
    std::int64_t rounds = 0;
};

/// Constants entering the theoretical signal-strength threshold.
struct TheoryParams {
    double K = 1.0;  ///< max_j (Sigma^{-1})_jj over tasks
    double sigma = 1.0;
    double sigma_X = 1.0;  ///< subgaussian norm bound of the design rows
    double lambda_min = 1.0;
    double lambda_max = 1.0;
    double s = 1.0;
    double m = 1.0;
    double n = 1.0;
    double p = 2.0;
    double C = 0.0;
};

/// Half of
///   6 K sigma sqrt((m + log p) / n)
///     + C sigma_X^4 lambda_max^{1/2} sigma s sqrt(m) log p / (lambda_min^{3/2} n).
inline double theoretical_threshold(const TheoryParams& t) {
    if (!(t.K > 0 && t.sigma > 0 && t.sigma_X > 0 && t.lambda_min > 0 && t.lambda_max > 0 && t.s > 0 &&
          t.m > 0 && t.n > 0 && t.p > 0 && t.C >= 0))
        throw Error("theoretical_threshold: inputs must be positive");
    const double log_p = std::log(t.p);
    const double first = 6.0 * t.K * t.sigma * std::sqrt((t.m + log_p) / t.n);
    const double second = t.C * std::pow(t.sigma_X, 4) * std::sqrt(t.lambda_max) * t.sigma * t.s *
                          std::sqrt(t.m) * log_p / (std::pow(t.lambda_min, 1.5) * t.n);
    return 0.5 * (first + second);
}

/// Default lasso penalty 4 sigma sqrt(log p / n).
inline double default_lambda(double sigma, Index n, Index p) {
    return 4.0 * sigma * std::sqrt(std::log(double(p)) / double(n));
}

/// Default debiasing level sqrt(log p / n).
inline double default_mu(Index n, Index p) { return std::sqrt(std::log(double(p)) / double(n)); }

struct ThresholdRule {
    enum class Kind { fixed, oracle_tuned, theoretical };

    Kind kind = Kind::fixed;
    double value = 0.0;
    std::vector<double> grid;
    /// When true and grid is empty, the master builds the default grid from
    /// the received row norms.
    bool auto_grid = false;
    int auto_grid_size = 50;

    static ThresholdRule fixed(double v) {
        if (!(v >= 0.0)) throw Error("fixed threshold must be >= 0");
        return ThresholdRule{Kind::fixed, v, {}, false, 0};
    }
    static ThresholdRule oracle_tuned(std::vector<double> grid) {
        if (grid.empty()) throw Error("oracle-tuned threshold requires a non-empty grid");
        return ThresholdRule{Kind::oracle_tuned, 0.0, std::move(grid), false, 0};
    }
    static ThresholdRule oracle_tuned_auto(int grid_size = 50) {
        if (grid_size < 1) throw Error("grid size must be >= 1");
        return ThresholdRule{Kind::oracle_tuned, 0.0, {}, true, grid_size};
    }
    static ThresholdRule theoretical(const TheoryParams& params) {
        return ThresholdRule{Kind::theoretical, theoretical_threshold(params), {}, false, 0};
    }
};

/// Stacks messages into B-hat (p x m), ordered by task id.
inline CoefficientMatrix stack_messages(const std::vector<DebiasedMessage>& messages) {
    if (messages.empty()) throw DimensionError("no messages");
    const Index p = messages.front().beta_u.size();
    const Index m = static_cast<Index>(messages.size());
    Matrix B(p, m);
    std::vector<char> seen(messages.size(), 0);
    for (const auto& msg : messages) {
        if (msg.beta_u.size() != p)
            throw DimensionError("message from task " + std::to_string(msg.task_id) + " has inconsistent p",
                                 msg.task_id);
        if (msg.task_id >= messages.size() || seen[msg.task_id])
            throw DimensionError("task ids must be a permutation of 0..m-1", msg.task_id);
        seen[msg.task_id] = 1;
        B.col(static_cast<Index>(msg.task_id)) = msg.beta_u;
    }
    return CoefficientMatrix(std::move(B));
}

/// { j : ||B_j||_2 > threshold }. The inequality is strict.
inline SupportSet group_hard_threshold(const Vector& row_norms, double threshold) {
    std::vector<Index> idx;
    for (Index j = 0; j < row_norms.size(); ++j)
        if (row_norms[j] > threshold) idx.push_back(j);
    return SupportSet(std::move(idx), row_norms.size());
}

/// count log-spaced values from (min positive row norm)/2 to the max row norm.
inline std::vector<double> default_threshold_grid(const Vector& row_norms, int count = 50) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (Index j = 0; j < row_norms.size(); ++j) {
        if (row_norms[j] > 0.0) lo = std::min(lo, row_norms[j]);
        hi = std::max(hi, row_norms[j]);
    }
    if (hi == 0.0) return {0.0};
    lo *= 0.5;
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = lo;
        return grid;
    }
    const double step = std::log(hi / lo) / double(count - 1);
    for (int i = 0; i < count; ++i) grid[i] = lo * std::exp(step * i);
    grid.back() = hi;
    return grid;
}

inline std::size_t symmetric_difference_size(const SupportSet& a, const SupportSet& b) {
    std::size_t common = 0;
    auto ia = a.begin();
    auto ib = b.begin();
    while (ia != a.end() && ib != b.end()) {
        if (*ia < *ib) {
            ++ia;
        } else if (*ib < *ia) {
            ++ib;
        } else {
            ++common;
            ++ia;
            ++ib;
        }
    }
    return a.size() + b.size() - 2 * common;
}

/// Group hard thresholding at the master. For the oracle-tuned rule the grid
/// value with the smallest Hamming distance to truth wins, ties going to the
/// smallest threshold.
inline SupportBroadcast master_threshold(const std::vector<DebiasedMessage>& messages, const ThresholdRule& rule,
                                         const std::optional<SupportSet>& truth = std::nullopt) {
    const CoefficientMatrix B = stack_messages(messages);
    const Vector norms = B.matrix().rowwise().norm();
    switch (rule.kind) {
        case ThresholdRule::Kind::fixed:
        case ThresholdRule::Kind::theoretical:
            return {group_hard_threshold(norms, rule.value), rule.value};
        case ThresholdRule::Kind::oracle_tuned: {
            if (!truth) throw Error("oracle-tuned threshold requires the true support");
            if (truth->universe() != B.p()) throw DimensionError("true support universe does not match p");
            std::vector<double> grid = rule.grid;
            if (grid.empty()) {
                if (!rule.auto_grid) throw Error("oracle-tuned threshold requires a non-empty grid");
                grid = default_threshold_grid(norms, rule.auto_grid_size);
            }
            std::sort(grid.begin(), grid.end());
            SupportBroadcast best{group_hard_threshold(norms, grid.front()), grid.front()};
            std::size_t best_h = symmetric_difference_size(best.support, *truth);
            for (std::size_t i = 1; i < grid.size() && best_h > 0; ++i) {
                SupportSet s = group_hard_threshold(norms, grid[i]);
                const std::size_t h = symmetric_difference_size(s, *truth);
                if (h < best_h) {
                    best = {std::move(s), grid[i]};
                    best_h = h;
                }
            }
            return best;
        }
    }
    throw Error("unknown threshold rule");
}

/// Keeps beta_u on the broadcast support and zeroes everything else.
inline Vector worker_finalize(const DebiasedMessage& message, const SupportBroadcast& broadcast) {
    const Index p = message.beta_u.size();
    if (broadcast.support.universe() != p && !broadcast.support.empty())
        throw DimensionError("support universe does not match message length", message.task_id);
    Vector out = Vector::Zero(p);
    for (Index j : broadcast.support) out[j] = message.beta_u[j];
    return out;
}

struct WorkerOptions {
    InverseOptions inverse;
    /// Shared memo of inverse surrogates; only consulted for the linear family,
    /// where M depends on the design alone.
    InverseCache* cache = nullptr;
};

/// Local lasso, inverse surrogate, debiasing.
inline DebiasedMessage worker_step(const TaskData& task, const SolverOptions& opts, double mu,
                                   std::size_t task_id = 0, const WorkerOptions& wopts = {}) {
    DebiasedMessage msg;
    msg.task_id = task_id;
    if (task.family() == Family::linear) {
        const QuadraticTask q(task.X(), task.y());
        const LassoFit fit = solve_lasso(q, opts);
        auto compute = [&] { return compute_M(q.G, mu, wopts.inverse); };
        std::shared_ptr<const InverseSurrogate> M =
            wopts.cache ? wopts.cache->get_or_compute(task_id, mu, compute)
                        : std::make_shared<const InverseSurrogate>(compute());
        msg.beta_u = debias_linear(task.X(), task.y(), fit.beta, M->M);
        msg.diagnostics = {fit.converged, fit.iterations, M->mu, M->mu_escalations};
    } else {
        const LassoFit fit = solve_logistic_lasso(task.X(), task.y(), opts);
        const LogisticWeights W = compute_logistic_weights(task.X(), fit.beta);
        const InverseSurrogate M = compute_M_logistic(task.X(), W, mu, wopts.inverse);
        msg.beta_u = debias_logistic(task.X(), task.y(), fit.beta, M.M);
        msg.diagnostics = {fit.converged, fit.iterations, M.mu, M.mu_escalations};
    }
    return msg;
}

/// Raised when a worker fails; carries the task index.
class TaskError : public Error {
public:
    TaskError(std::size_t task, const std::string& what)
        : Error("task " + std::to_string(task) + ": " + what), task_(task) {}
    std::size_t task() const noexcept { return task_; }

private:
    std::size_t task_;
};

/// In-process transport with exact scalar accounting. Enforces the one-round
/// contract: one upload per worker, one broadcast.
class MessageBus {
public:
    MessageBus(Index m, Index p) : m_(m), p_(p), inbox_(static_cast<std::size_t>(m)), filled_(m, 0) {}

    void upload(DebiasedMessage msg) {
        if (msg.beta_u.size() != p_)
            throw DimensionError("upload from task " + std::to_string(msg.task_id) + " has wrong length",
                                 msg.task_id);
        if (msg.task_id >= static_cast<std::size_t>(m_)) throw DimensionError("unknown task id", msg.task_id);
        std::lock_guard lock(mutex_);
        if (filled_[msg.task_id]) throw Error("task " + std::to_string(msg.task_id) + " uploaded twice");
        filled_[msg.task_id] = 1;
        upstream_ += p_;
        inbox_[msg.task_id] = std::move(msg);
    }

    /// Barrier: every worker must have uploaded.
    const std::vector<DebiasedMessage>& collect() const {
        std::lock_guard lock(mutex_);
        if (std::find(filled_.begin(), filled_.end(), 0) != filled_.end())
            throw Error("master barrier reached before all workers uploaded");
        return inbox_;
    }

    void broadcast(SupportBroadcast b) {
        std::lock_guard lock(mutex_);
        if (broadcast_) throw Error("support already broadcast");
        downstream_ += m_ * static_cast<std::int64_t>(b.support.size());
        broadcast_ = std::move(b);
    }

    const SupportBroadcast& received() const {
        if (!broadcast_) throw Error("no broadcast received");
        return *broadcast_;
    }

    CommStats stats() const {
        std::lock_guard lock(mutex_);
        return {upstream_.load(), downstream_.load(), broadcast_ ? 1 : 0};
    }

private:
    Index m_;
    Index p_;
    mutable std::mutex mutex_;
    std::vector<DebiasedMessage> inbox_;
    std::vector<char> filled_;
    std::optional<SupportBroadcast> broadcast_;
    std::atomic<std::int64_t> upstream_{0};
    std::atomic<std::int64_t> downstream_{0};
};

struct DsmlOptions {
    WorkerOptions worker;
    /// Concurrent workers; 1 runs them in task order on the caller's thread.
    unsigned jobs = 1;
    /// True support, needed by the oracle-tuned threshold rule only.
    std::optional<SupportSet> truth;
};

struct DsmlResult {
    CoefficientMatrix beta_tilde;
    SupportSet support;
    double threshold = 0.0;
    CommStats stats;
    std::vector<DebiasedMessage> messages;
};

inline DsmlResult run_dsml(const std::vector<TaskData>& tasks, const SolverOptions& opts, double mu,
                           const ThresholdRule& rule, const DsmlOptions& dopts = {}) {
    const ProblemDims dims = validate_problem(tasks);
    MessageBus bus(dims.m, dims.p);
    const std::size_t m = tasks.size();

    auto work = [&](std::size_t t) {
        try {
            bus.upload(worker_step(tasks[t], opts, mu, t, dopts.worker));
        } catch (const TaskError&) {
            throw;
        } catch (const std::exception& e) {
            throw TaskError(t, e.what());
        }
    };

    const unsigned jobs = std::max(1u, std::min<unsigned>(dopts.jobs, static_cast<unsigned>(m)));
    if (jobs == 1) {
        for (std::size_t t = 0; t < m; ++t) work(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> errors(m);
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < jobs; ++w)
                pool.emplace_back([&] {
                    for (std::size_t t = next++; t < m; t = next++) {
                        try {
                            work(t);
                        } catch (...) {
                            errors[t] = std::current_exception();
                        }
                    }
                });
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    const auto& messages = bus.collect();
    bus.broadcast(master_threshold(messages, rule, dopts.truth));
    const SupportBroadcast& b = bus.received();

    DsmlResult result;
    result.beta_tilde = CoefficientMatrix(dims.p, dims.m);
    for (std::size_t t = 0; t < m; ++t)
        result.beta_tilde.task(static_cast<Index>(t)) = worker_finalize(messages[t], b);
    result.support = b.support;
    result.threshold = b.lambda_threshold;
    result.stats = bus.stats();
    result.messages = messages;
    return result;
}

}  // namespace dsml
