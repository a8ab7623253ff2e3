#pragma once
// Approximate inverse Hessian construction and the one-step debiased
// estimators for the linear and logistic families.

#include <dsml/core.hpp>
#include <dsml/solvers.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <thread>
#include <utility>
#include <vector>

namespace dsml {

class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, double last_mu) : Error(what), last_mu_(last_mu) {}
    double last_mu() const noexcept { return last_mu_; }

private:
    double last_mu_;
};

/// M with rows m_j solving
///   min m^T S m  subject to  ||S m - e_j||_inf <= mu.
struct InverseSurrogate {
    Matrix M;
    double mu = 0.0;
    /// max_j ||S m_j - e_j||_inf actually achieved.
    double feasibility_slack = 0.0;
    int mu_escalations = 0;
};

struct InverseOptions {
    /// Bound on the stationarity violation of each row problem.
    double opt_tol = 1e-9;
    int max_sweeps = 2000;
    double escalation_factor = 1.5;
    int max_escalations = 20;
    /// Worker threads across rows; 1 keeps the computation on the caller's thread.
    unsigned threads = 1;
};

namespace detail {

/// One row of M through the penalized form
///   min 1/2 m^T S m - m_j + mu ||m||_1,
/// whose minimizers satisfy S m - e_j = -mu z with z in the subdifferential of
/// ||m||_1. They are therefore feasible for the constrained program, and the
/// multiplier -2 m certifies optimality there. The program is unbounded exactly
/// when the constrained one is infeasible; the row then fails to converge.
class InverseRowSolver {
public:
    InverseRowSolver(const Matrix& S, double mu, const InverseOptions& opts)
        : S_(S), mu_(mu), opts_(opts) {}

    /// Writes the row into m; returns false if no feasible point was found.
    bool solve(Index j, Eigen::Ref<Vector> m) const {
        const Index p = S_.rows();
        m.setZero();
        Vector Sm = Vector::Zero(p);
        std::vector<Index> active;
        const double inner_tol = 0.1 * opts_.opt_tol;

        auto update = [&](Index k) -> double {
            const double skk = S_(k, k);
            const double target = (k == j ? 1.0 : 0.0) - (Sm[k] - skk * m[k]);
            if (!(skk > 0.0)) {
                // Zero curvature: bounded only if the linear term is dominated.
                return std::abs(target) > mu_ ? std::numeric_limits<double>::infinity() : 0.0;
            }
            const double next = soft_threshold(target, mu_) / skk;
            const double delta = next - m[k];
            if (delta != 0.0) {
                Sm.noalias() += delta * S_.col(k);
                m[k] = next;
            }
            return std::abs(delta) * skk;
        };

        int sweeps = 0;
        while (sweeps < opts_.max_sweeps) {
            double change = 0.0;
            for (Index k = 0; k < p; ++k) change = std::max(change, update(k));
            ++sweeps;
            if (!std::isfinite(change) || !(m.cwiseAbs().maxCoeff() < kDivergence)) return false;

            active.clear();
            for (Index k = 0; k < p; ++k)
                if (m[k] != 0.0) active.push_back(k);
            while (change > inner_tol && sweeps < opts_.max_sweeps) {
                change = 0.0;
                for (Index k : active) change = std::max(change, update(k));
                ++sweeps;
                if (!(m.cwiseAbs().maxCoeff() < kDivergence)) return false;
            }
            if (stationarity(j, m, Sm) <= opts_.opt_tol) return true;
        }
        return false;
    }

    /// Largest violation of the optimality conditions of the penalized form.
    double stationarity(Index j, const Vector& m, const Vector& Sm) const {
        double worst = 0.0;
        for (Index k = 0; k < m.size(); ++k) {
            const double r = Sm[k] - (k == j ? 1.0 : 0.0);
            const double v = m[k] > 0.0   ? std::abs(r + mu_)
                             : m[k] < 0.0 ? std::abs(r - mu_)
                                          : std::max(0.0, std::abs(r) - mu_);
            worst = std::max(worst, v);
        }
        return worst;
    }

private:
    static constexpr double kDivergence = 1e12;
    const Matrix& S_;
    double mu_;
    const InverseOptions& opts_;
};

/// Solves rows [begin, end); returns false on the first infeasible row.
inline bool solve_rows(const Matrix& S, double mu, const InverseOptions& opts, Matrix& Mt, Index begin,
                       Index end) {
    InverseRowSolver solver(S, mu, opts);
    for (Index j = begin; j < end; ++j)
        if (!solver.solve(j, Mt.col(j))) return false;
    return true;
}

}  // namespace detail

/// Solves the p row programs at level mu, escalating mu geometrically when
/// some row is infeasible.
inline InverseSurrogate compute_M(const Matrix& Sigma_hat, double mu, const InverseOptions& opts = {}) {
    if (Sigma_hat.rows() != Sigma_hat.cols()) throw DimensionError("Sigma_hat must be square");
    if (!(mu > 0.0) || !std::isfinite(mu)) throw Error("mu must be positive");
    if (!Sigma_hat.allFinite()) throw Error("Sigma_hat contains NaN or Inf");
    const Index p = Sigma_hat.rows();

    InverseSurrogate out;
    // Rows are solved into the columns of Mt for contiguous access.
    Matrix Mt(p, p);
    double level = mu;
    auto solve_all = [&](double at) {
        const unsigned threads = std::max(1u, std::min<unsigned>(opts.threads, static_cast<unsigned>(p)));
        if (threads == 1) return detail::solve_rows(Sigma_hat, at, opts, Mt, 0, p);
        std::vector<char> results(threads, 1);
        {
            std::vector<std::jthread> pool;
            for (unsigned w = 0; w < threads; ++w) {
                const Index begin = p * w / threads;
                const Index end = p * (w + 1) / threads;
                pool.emplace_back([&, w, begin, end] {
                    results[w] = detail::solve_rows(Sigma_hat, at, opts, Mt, begin, end) ? 1 : 0;
                });
            }
        }
        return std::all_of(results.begin(), results.end(), [](char r) { return r != 0; });
    };
    for (int esc = 0; esc <= opts.max_escalations; ++esc) {
        // Rows are stationary only up to opt_tol, so the achieved slack can
        // overshoot the level slightly; re-solve a little inside it when it does.
        double inner = level;
        bool ok = false;
        double slack = 0.0;
        for (int attempt = 0; attempt < 4; ++attempt) {
            ok = solve_all(inner);
            if (!ok) break;
            slack = (Sigma_hat * Mt - Matrix::Identity(p, p)).cwiseAbs().maxCoeff();
            if (slack <= level) break;
            inner -= 2.0 * (slack - level) + opts.opt_tol;
            if (!(inner > 0.0)) break;
        }
        if (ok && slack <= level) {
            out.M = Mt.transpose();
            out.mu = level;
            out.mu_escalations = esc;
            out.feasibility_slack = slack;
            return out;
        }
        level *= opts.escalation_factor;
    }
    throw InfeasibleError("inverse surrogate infeasible after " + std::to_string(opts.max_escalations) +
                              " mu escalations",
                          level / opts.escalation_factor);
}

/// beta + (1/n) M X^T (y - X beta).
inline Vector debias_linear(const Matrix& X, const Vector& y, const Vector& beta_hat, const Matrix& M) {
    if (y.size() != X.rows() || beta_hat.size() != X.cols() || M.rows() != X.cols() || M.cols() != X.cols())
        throw DimensionError("debias_linear: dimension mismatch");
    const Vector residual = y - X * beta_hat;
    return beta_hat + M * (X.transpose() * residual) / double(X.rows());
}

/// Diagonal of W: sigmoid(x_k b) * (1 - sigmoid(x_k b)).
struct LogisticWeights {
    Vector w;
};

/// Evaluated in the log domain as exp(-|z| - 2 log1p(exp(-|z|))).
inline LogisticWeights compute_logistic_weights(const Matrix& X, const Vector& beta_hat) {
    if (beta_hat.size() != X.cols()) throw DimensionError("compute_logistic_weights: dimension mismatch");
    const Vector z = X * beta_hat;
    LogisticWeights W;
    W.w.resize(z.size());
    for (Index k = 0; k < z.size(); ++k) {
        const double a = std::abs(z[k]);
        const double v = std::exp(-a - 2.0 * std::log1p(std::exp(-a)));
        W.w[k] = v > 0.0 ? v : std::numeric_limits<double>::min();
    }
    return W;
}

/// X^T W X / n.
inline Matrix weighted_gram(const Matrix& X, const LogisticWeights& W) {
    if (W.w.size() != X.rows()) throw DimensionError("weights length does not match n");
    const Matrix Xw = W.w.cwiseSqrt().asDiagonal() * X;
    return gram(Xw);
}

/// compute_M with the Gram replaced by X^T W X / n in both objective and
/// constraint.
inline InverseSurrogate compute_M_logistic(const Matrix& X, const LogisticWeights& W, double mu,
                                           const InverseOptions& opts = {}) {
    if ((W.w.array() <= 0.0).any()) throw Error("logistic weights must be positive");
    return compute_M(weighted_gram(X, W), mu, opts);
}

/// beta + (1/n) M X^T ((y + 1)/2 - sigmoid(X beta)).
inline Vector debias_logistic(const Matrix& X, const Vector& y, const Vector& beta_hat, const Matrix& M) {
    if (y.size() != X.rows() || beta_hat.size() != X.cols() || M.rows() != X.cols() || M.cols() != X.cols())
        throw DimensionError("debias_logistic: dimension mismatch");
    const Vector z = X * beta_hat;
    Vector residual(z.size());
    for (Index k = 0; k < z.size(); ++k) residual[k] = 0.5 * (y[k] + 1.0) - sigmoid(z[k]);
    return beta_hat + M * (X.transpose() * residual) / double(X.rows());
}

/// Memoizes inverse surrogates by (task id, mu). M does not depend on the
/// lasso penalty, so a lambda sweep over one dataset reuses it.
class InverseCache {
public:
    using Key = std::pair<std::size_t, double>;

    template <class Compute>
    std::shared_ptr<const InverseSurrogate> get_or_compute(std::size_t task_id, double mu, Compute&& compute) {
        const Key key{task_id, mu};
        {
            std::lock_guard lock(mutex_);
            if (auto it = entries_.find(key); it != entries_.end()) return it->second;
        }
        auto value = std::make_shared<const InverseSurrogate>(compute());
        std::lock_guard lock(mutex_);
        return entries_.try_emplace(key, std::move(value)).first->second;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return entries_.size();
    }

    void clear() {
        std::lock_guard lock(mutex_);
        entries_.clear();
    }

private:
    mutable std::mutex mutex_;
    std::map<Key, std::shared_ptr<const InverseSurrogate>> entries_;
};

}  // namespace dsml
