#include <dsml/datagen.hpp>
#include <dsml/debias.hpp>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include <array>

#include "test_util.hpp"

namespace dsml {
namespace {

using testing::random_labels;
using testing::random_matrix;
using testing::random_vector;

double row_objective(const Matrix& S, const Matrix& M, Index j) { return M.row(j).dot(S * M.row(j).transpose()); }

/// Exact minimum of m^T S m over ||S m - e_j||_inf <= mu for invertible 3x3 S.
/// With u = S m the objective is u^T S^{-1} u over a box; the minimizer lies in
/// the relative interior of one face, so every face is solved in closed form.
double qp_oracle(const Matrix& S, double mu, Index j) {
    const Matrix Q = S.inverse();
    Vector lo = Vector::Constant(3, -mu), hi = Vector::Constant(3, mu);
    lo[j] += 1.0;
    hi[j] += 1.0;
    double best = std::numeric_limits<double>::infinity();
    for (int code = 0; code < 27; ++code) {
        std::array<int, 3> state{code % 3, (code / 3) % 3, code / 9};  // 0 free, 1 lower, 2 upper
        std::vector<int> free, fixed;
        Vector u = Vector::Zero(3);
        for (int k = 0; k < 3; ++k) {
            if (state[k] == 0) {
                free.push_back(k);
            } else {
                fixed.push_back(k);
                u[k] = state[k] == 1 ? lo[k] : hi[k];
            }
        }
        if (!free.empty()) {
            Matrix Qff(free.size(), free.size());
            Vector rhs = Vector::Zero(free.size());
            for (std::size_t a = 0; a < free.size(); ++a) {
                for (std::size_t b = 0; b < free.size(); ++b) Qff(a, b) = Q(free[a], free[b]);
                for (int k : fixed) rhs[a] -= Q(free[a], k) * u[k];
            }
            const Vector uf = Qff.ldlt().solve(rhs);
            for (std::size_t a = 0; a < free.size(); ++a) u[free[a]] = uf[a];
        }
        bool feasible = true;
        for (int k = 0; k < 3; ++k) feasible &= (u[k] >= lo[k] - 1e-12 && u[k] <= hi[k] + 1e-12);
        if (feasible) best = std::min(best, u.dot(Q * u));
    }
    return best;
}

TEST(ComputeM, IdentityGram) {
    const InverseSurrogate r = compute_M(Matrix::Identity(5, 5), 0.1);
    EXPECT_LE((r.M - 0.9 * Matrix::Identity(5, 5)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(row_objective(Matrix::Identity(5, 5), r.M, 2), 0.81, 1e-12);
    EXPECT_EQ(r.mu_escalations, 0);
    EXPECT_NEAR(r.feasibility_slack, 0.1, 1e-12);
}

TEST(ComputeM, LargeMuGivesZero) {
    for (double mu : {1.0, 1.5}) EXPECT_TRUE(compute_M(Matrix::Identity(4, 4), mu).M.isZero(0.0));
}

TEST(ComputeM, MatchesExactQpOnSmallProblems) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Matrix S = gram(random_matrix(40, 3, seed));
        const InverseSurrogate r = compute_M(S, 0.2);
        for (Index j = 0; j < 3; ++j)
            EXPECT_NEAR(row_objective(S, r.M, j), qp_oracle(S, 0.2, j), 1e-3) << "seed " << seed << " row " << j;
    }
}

TEST(ComputeM, FeasibleOnGeneratedDesigns) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GenSpec g;
        g.p = 60;
        g.n = 40;
        g.m = 1;
        g.s = 5;
        g.seed = seed;
        const Dataset d = generate(g);
        const Matrix S = gram(d.tasks[0].X());
        const double mu = std::sqrt(std::log(60.0) / 40.0);
        const InverseSurrogate r = compute_M(S, mu);
        EXPECT_LE(r.feasibility_slack, r.mu);
        const Matrix residual = S * r.M.transpose() - Matrix::Identity(60, 60);
        EXPECT_NEAR(residual.cwiseAbs().maxCoeff(), r.feasibility_slack, 1e-15);
    }
}

TEST(ComputeM, ObjectiveNonIncreasingInMu) {
    const Matrix S = gram(random_matrix(30, 12, 99));
    std::vector<double> previous(12, std::numeric_limits<double>::infinity());
    for (double mu = 0.02; mu < 1.2; mu *= 1.25) {
        const InverseSurrogate r = compute_M(S, mu);
        EXPECT_LE(r.feasibility_slack, r.mu);
        for (Index j = 0; j < 12; ++j) {
            const double obj = row_objective(S, r.M, j);
            EXPECT_LE(obj, previous[j] + 1e-8) << "mu " << mu << " row " << j;
            previous[j] = obj;
        }
    }
}

TEST(ComputeM, EscalatesOnZeroColumn) {
    Matrix S = Matrix::Zero(2, 2);
    S(0, 0) = 1.0;
    const InverseSurrogate r = compute_M(S, 0.5);
    EXPECT_EQ(r.mu_escalations, 2);
    EXPECT_DOUBLE_EQ(r.mu, 1.125);
    EXPECT_LE(r.feasibility_slack, r.mu);

    InverseOptions strict;
    strict.max_escalations = 1;
    EXPECT_THROW(compute_M(S, 0.5, strict), InfeasibleError);
}

TEST(ComputeM, EscalatesOnCollinearColumns) {
    // Duplicate columns: feasible only for mu >= 1/2.
    const Matrix S = Matrix::Ones(2, 2);
    const InverseSurrogate r = compute_M(S, 0.3);
    EXPECT_EQ(r.mu_escalations, 2);
    EXPECT_NEAR(r.mu, 0.675, 1e-15);
    EXPECT_LE(r.feasibility_slack, r.mu);
}

TEST(ComputeM, ThreadedMatchesSequential) {
    const Matrix S = gram(random_matrix(80, 30, 5));
    InverseOptions threaded;
    threaded.threads = 4;
    EXPECT_EQ(compute_M(S, 0.2).M, compute_M(S, 0.2, threaded).M);
}

TEST(ComputeM, RejectsBadInput) {
    EXPECT_THROW(compute_M(Matrix::Identity(2, 3), 0.1), DimensionError);
    EXPECT_THROW(compute_M(Matrix::Identity(2, 2), 0.0), Error);
}

// ---------------------------------------------------------------------------

TEST(DebiasLinear, ExactInverseGivesOls) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Matrix X = random_matrix(100, 10, seed);
        const Vector y = random_vector(100, seed + 1);
        const Matrix M = gram(X).inverse();
        const Vector ols = X.colPivHouseholderQr().solve(y);
        const Vector start = random_vector(10, seed + 2, 3.0);
        EXPECT_LE((debias_linear(X, y, start, M) - ols).cwiseAbs().maxCoeff(), 1e-8);
    }
}

TEST(DebiasLinear, OlsStartIsFixedPoint) {
    const Matrix X = random_matrix(60, 6, 1);
    const Vector y = random_vector(60, 2);
    const Vector ols = X.colPivHouseholderQr().solve(y);
    const Matrix M = random_matrix(6, 6, 3);
    EXPECT_LE((debias_linear(X, y, ols, M) - ols).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DebiasLinear, MatchesDirectFormula) {
    const Matrix X = random_matrix(40, 15, 4);
    const Vector y = random_vector(40, 5);
    const Vector b = random_vector(15, 6);
    const Matrix M = compute_M(gram(X), 0.3).M;
    Vector direct = b;
    for (Index i = 0; i < 15; ++i)
        for (Index a = 0; a < 15; ++a)
            for (Index k = 0; k < 40; ++k) {
                double r = y[k];
                for (Index c = 0; c < 15; ++c) r -= X(k, c) * b[c];
                direct[i] += M(i, a) * X(k, a) * r / 40.0;
            }
    EXPECT_LE((debias_linear(X, y, b, M) - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(DebiasLinear, ErrorSplitsIntoNoiseAndBoundedBias) {
    // beta_u - beta* = (1/n) M X^T eps - (M S - I)(beta_hat - beta*), and the
    // second term is bounded by slack * ||beta_hat - beta*||_1.
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        GenSpec g;
        g.p = 40;
        g.n = 100;
        g.m = 1;
        g.s = 4;
        g.seed = 1000 + rep;
        const Dataset d = generate(g);
        const TaskData& task = d.tasks[0];
        const Vector beta = d.B_star.task(0);
        const Vector eps = task.y() - task.X() * beta;
        SolverOptions o;
        o.lambda = 4.0 * std::sqrt(std::log(40.0) / 100.0);
        const Vector b = solve_lasso(task.X(), task.y(), o).beta;
        const Matrix S = gram(task.X());
        const InverseSurrogate M = compute_M(S, std::sqrt(std::log(40.0) / 100.0));
        const Vector bu = debias_linear(task.X(), task.y(), b, M.M);

        const Vector noise = M.M * task.X().transpose() * eps / 100.0;
        const Vector bias = (M.M * S - Matrix::Identity(40, 40)) * (b - beta);
        EXPECT_LE((bu - beta - noise + bias).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LE(bias.cwiseAbs().maxCoeff(), M.feasibility_slack * (b - beta).lpNorm<1>() + 1e-12);
    }
}

// ---------------------------------------------------------------------------

TEST(LogisticWeights, ZeroCoefficientsGiveQuarter) {
    const LogisticWeights W = compute_logistic_weights(random_matrix(20, 4, 1), Vector::Zero(4));
    for (Index k = 0; k < 20; ++k) EXPECT_EQ(W.w[k], 0.25);
}

TEST(LogisticWeights, SaturatedMarginsStayPositive) {
    for (double z : {40.0, -40.0, 700.0, -700.0}) {
        const LogisticWeights W = compute_logistic_weights(Matrix::Constant(1, 1, z), Vector::Ones(1));
        EXPECT_GT(W.w[0], 0.0);
        EXPECT_TRUE(std::isfinite(W.w[0]));
        if (std::abs(z) == 40.0) {
            EXPECT_LT(W.w[0], 1e-17);
        }
    }
}

TEST(LogisticWeights, MatchesExtendedPrecision) {
    using Big = boost::multiprecision::cpp_bin_float_50;
    const Matrix X = random_matrix(50, 5, 7);
    const Vector b = random_vector(5, 8, 2.0);
    const LogisticWeights W = compute_logistic_weights(X, b);
    const Vector z = X * b;
    for (Index k = 0; k < 50; ++k) {
        const Big e = boost::multiprecision::exp(-Big(z[k]));
        const Big ref = (Big(1) / (Big(1) + e)) * (e / (Big(1) + e));
        const double r = ref.convert_to<double>();
        EXPECT_LE(std::abs(W.w[k] - r), 1e-14 * r) << "k " << k;
        EXPECT_GT(W.w[k], 0.0);
        EXPECT_LE(W.w[k], 0.25);
    }
}

TEST(ComputeMLogistic, ConstantWeightsReduceToScaledGram) {
    const Matrix X = random_matrix(60, 8, 9);
    LogisticWeights W{Vector::Constant(60, 0.25)};
    const InverseSurrogate a = compute_M_logistic(X, W, 0.15);
    const InverseSurrogate b = compute_M(0.25 * gram(X), 0.15);
    EXPECT_LE((a.M - b.M).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ComputeMLogistic, OrthonormalDesignAtZero) {
    const Matrix X = std::sqrt(3.0) * Matrix::Identity(3, 3);
    const LogisticWeights W = compute_logistic_weights(X, Vector::Zero(3));
    const double mu = 0.1;
    const InverseSurrogate r = compute_M_logistic(X, W, mu);
    // n^{-1} X^T W X = 0.25 I, so the rows are (1 - mu) / 0.25 e_j.
    EXPECT_LE((r.M - (1.0 - mu) / 0.25 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((r.M - compute_M(0.25 * Matrix::Identity(3, 3), mu).M).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ComputeMLogistic, MatchesExactQp) {
    const Matrix X = random_matrix(50, 3, 12);
    const LogisticWeights W = compute_logistic_weights(X, random_vector(3, 13, 0.5));
    const InverseSurrogate r = compute_M_logistic(X, W, 0.05);
    const Matrix S = weighted_gram(X, W);
    for (Index j = 0; j < 3; ++j) EXPECT_NEAR(row_objective(S, r.M, j), qp_oracle(S, r.mu, j), 1e-3);
    EXPECT_THROW(compute_M_logistic(X, LogisticWeights{Vector::Zero(50)}, 0.1), Error);
}

TEST(DebiasLogistic, ZeroStartUsesHalfLabels) {
    const Matrix X = random_matrix(30, 4, 14);
    const Vector y = random_labels(30, 15);
    const Matrix M = random_matrix(4, 4, 16);
    const Vector expected = M * X.transpose() * (0.5 * y) / 30.0;
    EXPECT_LE((debias_logistic(X, y, Vector::Zero(4), M) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(DebiasLogistic, CorrectionVanishesForPerfectFit) {
    // Separable labels: scaling beta drives sigmoid(X beta) to (y + 1) / 2.
    const Matrix X = random_matrix(30, 3, 17);
    const Vector b = Vector{{1.0, -1.0, 0.5}};
    Vector y = X * b;
    for (Index k = 0; k < 30; ++k) y[k] = y[k] > 0 ? 1.0 : -1.0;
    const Matrix M = Matrix::Identity(3, 3);
    double previous = std::numeric_limits<double>::infinity();
    for (double scale : {1.0, 10.0, 100.0, 1000.0}) {
        const Vector beta = scale * b;
        const double correction = (debias_logistic(X, y, beta, M) - beta).norm();
        EXPECT_LE(correction, previous);
        previous = correction;
    }
    EXPECT_LT(previous, 1e-6);
}

TEST(DebiasLogistic, MatchesDirectFormula) {
    const Matrix X = random_matrix(25, 6, 18);
    const Vector y = random_labels(25, 19);
    const Vector b = random_vector(6, 20, 0.7);
    const Matrix M = random_matrix(6, 6, 21);
    Vector direct = b;
    for (Index i = 0; i < 6; ++i)
        for (Index a = 0; a < 6; ++a)
            for (Index k = 0; k < 25; ++k) {
                double z = 0.0;
                for (Index c = 0; c < 6; ++c) z += X(k, c) * b[c];
                const double r = 0.5 * (y[k] + 1.0) - 1.0 / (1.0 + std::exp(-z));
                direct[i] += M(i, a) * X(k, a) * r / 25.0;
            }
    EXPECT_LE((debias_logistic(X, y, b, M) - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(InverseCache, ComputesOncePerKey) {
    InverseCache cache;
    int calls = 0;
    auto compute = [&] {
        ++calls;
        return compute_M(Matrix::Identity(3, 3), 0.1);
    };
    auto a = cache.get_or_compute(0, 0.1, compute);
    auto b = cache.get_or_compute(0, 0.1, compute);
    auto c = cache.get_or_compute(1, 0.1, compute);
    auto d = cache.get_or_compute(0, 0.2, compute);
    EXPECT_EQ(calls, 3);
    EXPECT_EQ(a.get(), b.get());
    EXPECT_NE(a.get(), c.get());
    EXPECT_EQ(cache.size(), 3u);
}

}  // namespace
}  // namespace dsml
