#pragma once
// Penalized estimators: per-task lasso, l1-logistic regression and the
// centralized group lasso baseline.

#include <dsml/core.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dsml {

inline double soft_threshold(double z, double tau) {
    if (z > tau) return z - tau;
    if (z < -tau) return z + tau;
    return 0.0;
}

struct LassoFit {
    Vector beta;
    int iterations = 0;
    double objective = 0.0;
    bool converged = false;
    /// Objective after each iteration; filled only when requested.
    std::vector<double> history;
    std::string warning;
};

/// Smallest lambda for which beta = 0 solves (1/n)||y - X b||^2 + lambda ||b||_1.
inline double lasso_lambda_max(const Matrix& X, const Vector& y) {
    return 2.0 * (X.transpose() * y).cwiseAbs().maxCoeff() / double(X.rows());
}

/// Sufficient statistics of a least-squares task: G = X^T X / n, c = X^T y / n,
/// yy = y^T y / n.
struct QuadraticTask {
    Matrix G;
    Vector c;
    double yy = 0.0;

    QuadraticTask() = default;
    QuadraticTask(const Matrix& X, const Vector& y)
        : G(gram(X)), c(X.transpose() * y / double(X.rows())), yy(y.squaredNorm() / double(X.rows())) {}

    /// (1/n)||y - X b||^2 expanded through the sufficient statistics.
    double loss(const Vector& b) const { return b.dot(G * b) - 2.0 * c.dot(b) + yy; }
};

namespace detail {

inline void check_init(const std::optional<Vector>& init, Index p) {
    if (init && init->size() != p)
        throw DimensionError("initial point has length " + std::to_string(init->size()) +
                             ", expected " + std::to_string(p));
}

}  // namespace detail

/// Cyclic coordinate descent on the Gram form of
///   (1/n)||y - X b||^2 + lambda ||b||_1.
/// Converged when the largest coordinate change in a sweep is below tol.
inline LassoFit solve_lasso(const QuadraticTask& q, const SolverOptions& opts,
                            const std::optional<Vector>& init = std::nullopt) {
    opts.validate();
    const Index p = q.G.rows();
    detail::check_init(init, p);
    const double half_lambda = 0.5 * opts.lambda;

    LassoFit fit;
    fit.beta = init ? *init : Vector::Zero(p);
    Vector Gb = q.G * fit.beta;

    auto objective = [&] {
        return fit.beta.dot(Gb) - 2.0 * q.c.dot(fit.beta) + q.yy + opts.lambda * fit.beta.lpNorm<1>();
    };

    for (int it = 1; it <= opts.max_iter; ++it) {
        double max_delta = 0.0;
        for (Index j = 0; j < p; ++j) {
            const double gjj = q.G(j, j);
            const double old = fit.beta[j];
            double next = 0.0;
            if (gjj > 0.0) {
                const double r = q.c[j] - (Gb[j] - gjj * old);
                next = soft_threshold(r, half_lambda) / gjj;
            }
            const double delta = next - old;
            if (delta != 0.0) {
                Gb.noalias() += delta * q.G.col(j);
                fit.beta[j] = next;
                max_delta = std::max(max_delta, std::abs(delta));
            }
        }
        fit.iterations = it;
        if (opts.record_history) fit.history.push_back(objective());
        if (max_delta < opts.tol) {
            fit.converged = true;
            break;
        }
    }
    fit.objective = objective();
    return fit;
}

inline LassoFit solve_lasso(const Matrix& X, const Vector& y, const SolverOptions& opts,
                            const std::optional<Vector>& init = std::nullopt) {
    if (y.size() != X.rows()) throw DimensionError("response length does not match design");
    LassoFit fit = solve_lasso(QuadraticTask(X, y), opts, init);
    // Exact objective from the residual; the expanded form can round below zero.
    fit.objective = (y - X * fit.beta).squaredNorm() / double(X.rows()) +
                    opts.lambda * fit.beta.lpNorm<1>();
    return fit;
}

// ---------------------------------------------------------------------------
// Logistic family

/// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
    return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

/// 1 / (1 + exp(-t)) without overflow.
inline double sigmoid(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// (1/n) sum_k log(1 + exp(-y_k x_k b)).
inline double logistic_loss(const Matrix& X, const Vector& y, const Vector& beta) {
    const Vector margin = y.cwiseProduct(X * beta);
    double s = 0.0;
    for (Index k = 0; k < margin.size(); ++k) s += softplus(-margin[k]);
    return s / double(X.rows());
}

/// Gradient of logistic_loss: -(1/n) X^T (y * sigmoid(-y * X b)).
inline Vector logistic_gradient(const Matrix& X, const Vector& y, const Vector& beta) {
    const Vector margin = y.cwiseProduct(X * beta);
    Vector w(margin.size());
    for (Index k = 0; k < margin.size(); ++k) w[k] = -y[k] * sigmoid(-margin[k]);
    return X.transpose() * w / double(X.rows());
}

/// Smallest lambda for which beta = 0 is optimal for the l1-logistic problem.
inline double logistic_lambda_max(const Matrix& X, const Vector& y) {
    return (X.transpose() * y).cwiseAbs().maxCoeff() / (2.0 * double(X.rows()));
}

/// Proximal gradient with backtracking for
///   (1/n) sum_k log(1 + exp(-y_k x_k b)) + lambda ||b||_1.
/// Each iteration starts from step 1 and halves until
///   F(b+) <= F(b) - 1e-4 / step * ||b+ - b||^2.
inline LassoFit solve_logistic_lasso(const Matrix& X, const Vector& y, const SolverOptions& opts,
                                     const std::optional<Vector>& init = std::nullopt) {
    opts.validate();
    if (y.size() != X.rows()) throw DimensionError("response length does not match design");
    const Index p = X.cols();
    detail::check_init(init, p);
    constexpr double kSufficientDecrease = 1e-4;
    constexpr double kMinStep = 1e-20;

    LassoFit fit;
    if (opts.lambda == 0.0)
        fit.warning = "lambda = 0: the logistic problem has no finite solution on separable data";
    fit.beta = init ? *init : Vector::Zero(p);
    double F = logistic_loss(X, y, fit.beta) + opts.lambda * fit.beta.lpNorm<1>();

    Vector cand(p);
    for (int it = 1; it <= opts.max_iter; ++it) {
        const Vector g = logistic_gradient(X, y, fit.beta);
        double step = 1.0;
        double Fc = F;
        bool accepted = false;
        while (step >= kMinStep) {
            for (Index j = 0; j < p; ++j)
                cand[j] = soft_threshold(fit.beta[j] - step * g[j], step * opts.lambda);
            Fc = logistic_loss(X, y, cand) + opts.lambda * cand.lpNorm<1>();
            if (Fc <= F - kSufficientDecrease / step * (cand - fit.beta).squaredNorm()) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        fit.iterations = it;
        if (!accepted) {
            // No descent step exists at machine precision: stationary.
            if (opts.record_history) fit.history.push_back(F);
            fit.converged = true;
            break;
        }
        const double max_delta = (cand - fit.beta).cwiseAbs().maxCoeff();
        fit.beta = cand;
        F = Fc;
        if (opts.record_history) fit.history.push_back(F);
        if (max_delta < opts.tol) {
            fit.converged = true;
            break;
        }
    }
    fit.objective = F;
    return fit;
}

// ---------------------------------------------------------------------------
// Group lasso

struct GroupLassoFit {
    CoefficientMatrix B;
    int iterations = 0;
    double objective = 0.0;
    bool converged = false;
    std::vector<double> history;
};

/// Precomputed sufficient statistics for every task.
struct GroupLassoProblem {
    std::vector<QuadraticTask> tasks;
    Index p = 0;

    explicit GroupLassoProblem(const std::vector<TaskData>& data) {
        const ProblemDims d = validate_problem(data);
        if (d.family != Family::linear) throw Error("group lasso requires the linear family");
        p = d.p;
        tasks.reserve(data.size());
        for (const auto& t : data) tasks.emplace_back(t.X(), t.y());
    }

    Index m() const { return static_cast<Index>(tasks.size()); }

    /// (1/(mn)) sum_t ||y_t - X_t b_t||^2.
    double loss(const Matrix& B) const {
        double s = 0.0;
        for (Index t = 0; t < m(); ++t) s += tasks[t].loss(B.col(t));
        return s / double(m());
    }

    Matrix gradient(const Matrix& B) const {
        Matrix g(p, m());
        for (Index t = 0; t < m(); ++t)
            g.col(t) = (2.0 / double(m())) * (tasks[t].G * B.col(t) - tasks[t].c);
        return g;
    }

    /// Largest row norm of the gradient at B = 0; B = 0 is optimal for any
    /// lambda at or above this.
    double lambda_max() const { return gradient(Matrix::Zero(p, m())).rowwise().norm().maxCoeff(); }
};

inline double group_penalty(const Matrix& B) { return B.rowwise().norm().sum(); }

/// Row-wise group soft threshold: B_j <- B_j * max(0, 1 - tau / ||B_j||).
inline void group_soft_threshold(Matrix& B, double tau) {
    for (Index j = 0; j < B.rows(); ++j) {
        const double norm = B.row(j).norm();
        if (norm <= tau) {
            B.row(j).setZero();
        } else {
            B.row(j) *= (1.0 - tau / norm);
        }
    }
}

/// Proximal gradient with backtracking on
///   (1/(mn)) sum_t ||y_t - X_t b_t||^2 + lambda sum_j ||B_j||_2.
/// A step is accepted when the quadratic model majorizes the loss, which makes
/// the objective monotone.
inline GroupLassoFit solve_group_lasso(const GroupLassoProblem& problem, const SolverOptions& opts,
                                       const std::optional<Matrix>& init = std::nullopt) {
    opts.validate();
    const Index p = problem.p;
    const Index m = problem.m();
    if (init && (init->rows() != p || init->cols() != m))
        throw DimensionError("initial coefficient matrix has wrong shape");

    Matrix B = init ? *init : Matrix::Zero(p, m);
    double f = problem.loss(B);
    double F = f + opts.lambda * group_penalty(B);
    double step = 1.0;

    GroupLassoFit fit;
    Matrix cand(p, m);
    for (int it = 1; it <= opts.max_iter; ++it) {
        const Matrix g = problem.gradient(B);
        step = std::min(1.0, 2.0 * step);
        double fc = f;
        bool accepted = false;
        while (step >= 1e-20) {
            cand = B - step * g;
            group_soft_threshold(cand, step * opts.lambda);
            const Matrix diff = cand - B;
            fc = problem.loss(cand);
            if (fc <= f + (g.array() * diff.array()).sum() + diff.squaredNorm() / (2.0 * step) + 1e-15 * std::abs(f)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        fit.iterations = it;
        if (!accepted) {
            if (opts.record_history) fit.history.push_back(F);
            fit.converged = true;
            break;
        }
        const double max_delta = (cand - B).cwiseAbs().maxCoeff();
        B = cand;
        f = fc;
        F = f + opts.lambda * group_penalty(B);
        if (opts.record_history) fit.history.push_back(F);
        if (max_delta < opts.tol) {
            fit.converged = true;
            break;
        }
    }
    fit.B = CoefficientMatrix(std::move(B));
    fit.objective = F;
    return fit;
}

inline GroupLassoFit solve_group_lasso(const std::vector<TaskData>& tasks, const SolverOptions& opts,
                                       const std::optional<Matrix>& init = std::nullopt) {
    return solve_group_lasso(GroupLassoProblem(tasks), opts, init);
}

}  // namespace dsml
