#pragma once
// Shared domain types and linear-algebra primitives.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dsml {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when input dimensions or families are inconsistent.
class DimensionError : public Error {
public:
    DimensionError(const std::string& what, std::optional<std::size_t> task = std::nullopt)
        : Error(what), task_(task) {}
    std::optional<std::size_t> task() const noexcept { return task_; }

private:
    std::optional<std::size_t> task_;
};

/// Raised by ols_on_support when the restricted Gram is numerically singular.
class SingularError : public Error {
public:
    SingularError(const std::string& what, double condition)
        : Error(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

enum class Family { linear, logistic };

inline const char* to_string(Family f) {
    return f == Family::linear ? "linear" : "logistic";
}

inline Family family_from_string(const std::string& s) {
    if (s == "linear") return Family::linear;
    if (s == "logistic") return Family::logistic;
    throw Error("unknown family '" + s + "'");
}

/// One task's data. Immutable once constructed.
class TaskData {
public:
    TaskData(Matrix X, Vector y, Family family = Family::linear, double sigma = 1.0)
        : X_(std::move(X)), y_(std::move(y)), family_(family), sigma_(sigma) {
        if (X_.rows() < 1 || X_.cols() < 1)
            throw DimensionError("design must have n >= 1 and p >= 1");
        if (y_.size() != X_.rows())
            throw DimensionError("response length " + std::to_string(y_.size()) +
                                 " does not match n = " + std::to_string(X_.rows()));
        if (!X_.allFinite()) throw Error("design contains NaN or Inf");
        if (!y_.allFinite()) throw Error("response contains NaN or Inf");
        if (!(sigma_ > 0.0)) throw Error("sigma must be positive");
        if (family_ == Family::logistic) {
            for (Index k = 0; k < y_.size(); ++k)
                if (y_[k] != 1.0 && y_[k] != -1.0)
                    throw Error("logistic responses must be in {-1, +1}");
        }
    }

    const Matrix& X() const noexcept { return X_; }
    const Vector& y() const noexcept { return y_; }
    Family family() const noexcept { return family_; }
    double sigma() const noexcept { return sigma_; }
    Index n() const noexcept { return X_.rows(); }
    Index p() const noexcept { return X_.cols(); }

private:
    Matrix X_;
    Vector y_;
    Family family_;
    double sigma_;
};

/// p x m matrix whose column t is task t's coefficient vector; rows are the
/// thresholding groups.
class CoefficientMatrix {
public:
    CoefficientMatrix() = default;
    CoefficientMatrix(Index p, Index m) : B_(Matrix::Zero(p, m)) {}
    explicit CoefficientMatrix(Matrix B) : B_(std::move(B)) {}

    Index p() const noexcept { return B_.rows(); }
    Index m() const noexcept { return B_.cols(); }

    const Matrix& matrix() const noexcept { return B_; }
    Matrix& matrix() noexcept { return B_; }

    auto task(Index t) const { return B_.col(t); }
    auto task(Index t) { return B_.col(t); }
    auto row(Index j) const { return B_.row(j); }

    bool operator==(const CoefficientMatrix& other) const {
        return B_.rows() == other.B_.rows() && B_.cols() == other.B_.cols() && B_ == other.B_;
    }

private:
    Matrix B_;
};

/// Strictly increasing indices into [0, p).
class SupportSet {
public:
    SupportSet() = default;

    SupportSet(std::vector<Index> indices, Index p) : idx_(std::move(indices)), p_(p) {
        std::sort(idx_.begin(), idx_.end());
        if (std::adjacent_find(idx_.begin(), idx_.end()) != idx_.end())
            throw Error("support contains duplicate indices");
        if (!idx_.empty() && (idx_.front() < 0 || idx_.back() >= p_))
            throw Error("support index out of range [0, " + std::to_string(p_) + ")");
    }

    /// Indices of the nonzero entries of v.
    static SupportSet of(const Vector& v) {
        std::vector<Index> idx;
        for (Index j = 0; j < v.size(); ++j)
            if (v[j] != 0.0) idx.push_back(j);
        return SupportSet(std::move(idx), v.size());
    }

    const std::vector<Index>& indices() const noexcept { return idx_; }
    Index universe() const noexcept { return p_; }
    std::size_t size() const noexcept { return idx_.size(); }
    bool empty() const noexcept { return idx_.empty(); }
    bool contains(Index j) const { return std::binary_search(idx_.begin(), idx_.end(), j); }

    auto begin() const noexcept { return idx_.begin(); }
    auto end() const noexcept { return idx_.end(); }

    bool operator==(const SupportSet&) const = default;

private:
    std::vector<Index> idx_;
    Index p_ = 0;
};

struct SolverOptions {
    int max_iter = 10000;
    double tol = 1e-8;
    double lambda = 0.0;
    /// Record the objective after every iteration into the fit.
    bool record_history = false;

    void validate() const {
        if (max_iter < 1) throw Error("max_iter must be >= 1");
        if (!(tol > 0.0)) throw Error("tol must be positive");
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("lambda must be finite and >= 0");
    }
};

struct ProblemDims {
    Index n = 0;
    Index p = 0;
    Index m = 0;
    Family family = Family::linear;
    /// Non-fatal diagnostics, e.g. badly scaled columns.
    std::vector<std::string> warnings;
};

/// Checks that all tasks share n, p and family.
inline ProblemDims validate_problem(const std::vector<TaskData>& tasks) {
    if (tasks.empty()) throw DimensionError("no tasks");
    ProblemDims d;
    d.n = tasks.front().n();
    d.p = tasks.front().p();
    d.m = static_cast<Index>(tasks.size());
    d.family = tasks.front().family();
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        const auto& task = tasks[t];
        if (task.n() != d.n || task.p() != d.p)
            throw DimensionError("dimension mismatch at task " + std::to_string(t), t);
        if (task.family() != d.family)
            throw DimensionError("mixed families at task " + std::to_string(t), t);
        const Vector second_moment = task.X().colwise().squaredNorm().transpose() / double(task.n());
        for (Index j = 0; j < d.p; ++j) {
            if (second_moment[j] < 0.1 || second_moment[j] > 10.0) {
                d.warnings.push_back("task " + std::to_string(t) + " column " + std::to_string(j) +
                                     " has second moment " + std::to_string(second_moment[j]) +
                                     " outside [0.1, 10]");
                break;
            }
        }
    }
    return d;
}

/// X^T X / n.
inline Matrix gram(const Matrix& X) {
    const double n = static_cast<double>(X.rows());
    Matrix G = Matrix::Zero(X.cols(), X.cols());
    G.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose(), 1.0 / n);
    return G.selfadjointView<Eigen::Lower>();
}

/// Least squares restricted to the columns in S; zero elsewhere.
inline Vector ols_on_support(const Matrix& X, const Vector& y, const SupportSet& S) {
    if (y.size() != X.rows()) throw DimensionError("response length does not match design");
    if (S.universe() != X.cols() && !S.empty())
        throw DimensionError("support universe does not match p");
    Vector beta = Vector::Zero(X.cols());
    if (S.empty()) return beta;
    const Index k = static_cast<Index>(S.size());
    if (k > X.rows())
        throw SingularError("support size " + std::to_string(k) + " exceeds n = " +
                                std::to_string(X.rows()),
                            std::numeric_limits<double>::infinity());

    Matrix XS(X.rows(), k);
    for (Index i = 0; i < k; ++i) XS.col(i) = X.col(S.indices()[i]);
    const Matrix G = XS.transpose() * XS;
    Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(cond < 1e12))
        throw SingularError("restricted Gram is singular (condition " + std::to_string(cond) + ")", cond);
    const Vector coef = G.llt().solve(XS.transpose() * y);
    for (Index i = 0; i < k; ++i) beta[S.indices()[i]] = coef[i];
    return beta;
}

}  // namespace dsml
