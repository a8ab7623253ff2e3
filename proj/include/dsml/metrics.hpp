#pragma once
// Support-recovery, estimation and prediction metrics.

#include <dsml/core.hpp>
#include <dsml/protocol.hpp>

#include <vector>

namespace dsml {

struct RunMetrics {
    /// Mean over tasks of the per-task support Hamming distance. Equals the
    /// plain Hamming distance when every task shares one estimated support.
    double hamming = 0.0;
    double est_error_l1l2 = 0.0;
    double pred_error = 0.0;
    double pred_error_insample = 0.0;
    Vector per_task_pred;
};

/// |S_hat symmetric-difference S|.
inline std::size_t hamming(const SupportSet& S_hat, const SupportSet& S) {
    if (!S_hat.empty() && !S.empty() && S_hat.universe() != S.universe())
        throw DimensionError("hamming: supports over different universes");
    return symmetric_difference_size(S_hat, S);
}

/// sum_j ||B_tilde_j - B_j||_2.
inline double estimation_error(const CoefficientMatrix& B_tilde, const CoefficientMatrix& B_star) {
    if (B_tilde.p() != B_star.p() || B_tilde.m() != B_star.m())
        throw DimensionError("estimation_error: shape mismatch");
    return (B_tilde.matrix() - B_star.matrix()).rowwise().norm().sum();
}

namespace detail {
inline void check_pred_args(const CoefficientMatrix& B_tilde, const CoefficientMatrix& B_star) {
    if (B_tilde.p() != B_star.p() || B_tilde.m() != B_star.m())
        throw DimensionError("prediction_error: shape mismatch");
}
}  // namespace detail

/// Per-task population excess risk Delta_t^T Sigma_t Delta_t.
inline Vector prediction_error_per_task(const CoefficientMatrix& B_tilde, const CoefficientMatrix& B_star,
                                        const std::vector<Matrix>& Sigmas) {
    detail::check_pred_args(B_tilde, B_star);
    if (static_cast<Index>(Sigmas.size()) != B_star.m())
        throw DimensionError("prediction_error: need one covariance per task");
    Vector out(B_star.m());
    for (Index t = 0; t < B_star.m(); ++t) {
        const Vector delta = B_tilde.task(t) - B_star.task(t);
        out[t] = delta.dot(Sigmas[t] * delta);
    }
    return out;
}

/// (1/m) sum_t Delta_t^T Sigma_t Delta_t with population covariances.
inline double prediction_error(const CoefficientMatrix& B_tilde, const CoefficientMatrix& B_star,
                               const std::vector<Matrix>& Sigmas) {
    return prediction_error_per_task(B_tilde, B_star, Sigmas).mean();
}

/// In-sample variant (1/(nm)) sum_t ||X_t Delta_t||^2.
inline double prediction_error_insample(const CoefficientMatrix& B_tilde, const CoefficientMatrix& B_star,
                                        const std::vector<TaskData>& tasks) {
    detail::check_pred_args(B_tilde, B_star);
    if (static_cast<Index>(tasks.size()) != B_star.m())
        throw DimensionError("prediction_error_insample: need one task per column");
    double s = 0.0;
    Index n = 0;
    for (Index t = 0; t < B_star.m(); ++t) {
        const auto& task = tasks[static_cast<std::size_t>(t)];
        s += (task.X() * (B_tilde.task(t) - B_star.task(t))).squaredNorm();
        n = task.n();
    }
    return s / (double(n) * double(B_star.m()));
}

/// Mean per-task Hamming distance between the supports of the columns of
/// B_tilde and the shared truth.
inline double mean_task_hamming(const CoefficientMatrix& B_tilde, const SupportSet& truth) {
    double s = 0.0;
    for (Index t = 0; t < B_tilde.m(); ++t) s += double(hamming(SupportSet::of(B_tilde.task(t)), truth));
    return s / double(B_tilde.m());
}

inline RunMetrics evaluate(const CoefficientMatrix& B_tilde, const CoefficientMatrix& B_star,
                           const SupportSet& truth, const std::vector<Matrix>& Sigmas,
                           const std::vector<TaskData>& tasks) {
    RunMetrics r;
    r.hamming = mean_task_hamming(B_tilde, truth);
    r.est_error_l1l2 = estimation_error(B_tilde, B_star);
    r.per_task_pred = prediction_error_per_task(B_tilde, B_star, Sigmas);
    r.pred_error = r.per_task_pred.mean();
    r.pred_error_insample = prediction_error_insample(B_tilde, B_star, tasks);
    return r;
}

}  // namespace dsml
