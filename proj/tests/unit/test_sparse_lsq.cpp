#include <gtest/gtest.h>

#include <random>

#include <Eigen/Dense>

#include "rtkgssm/errors.hpp"
#include "rtkgssm/sparse_lsq.hpp"

using namespace rtkgssm;

namespace {

SparseLsq random_lsq(int rows, int cols, double density, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> g(0.0, 1.0);
    SparseLsq lsq(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            if (u(rng) < density) lsq.add(i, j, g(rng));
        }
        lsq.set_rhs(i, g(rng));
    }
    // Guarantee full column rank.
    const int first = lsq.add_rows(cols);
    for (int j = 0; j < cols; ++j) {
        lsq.add(first + j, j, 0.5 + u(rng));
        lsq.set_rhs(first + j, g(rng));
    }
    return lsq;
}

SparseMatrix normal_of(const SparseLsq& lsq) {
    const SparseMatrix a = lsq.matrix();
    const SparseMatrix at = a.transpose();
    return at * a;
}

}  // namespace

TEST(SolveNormal, IdentityReturnsRhs) {
    SparseLsq lsq(4, 4);
    for (int i = 0; i < 4; ++i) {
        lsq.add(i, i, 1.0);
        lsq.set_rhs(i, 1.5 * i - 2.0);
    }
    const NormalSolution s = solve_normal(lsq);
    EXPECT_LT((s.x - lsq.rhs()).norm(), 1e-15);
}

TEST(SolveNormal, ConsistentOverdetermined) {
    SparseLsq lsq(3, 2);
    lsq.add(0, 0, 1.0);
    lsq.add(1, 1, 1.0);
    lsq.add(2, 0, 1.0);
    lsq.add(2, 1, 1.0);
    lsq.set_rhs(0, 1.0);
    lsq.set_rhs(1, 1.0);
    lsq.set_rhs(2, 2.0);
    const NormalSolution s = solve_normal(lsq);
    EXPECT_NEAR(s.x(0), 1.0, 1e-14);
    EXPECT_NEAR(s.x(1), 1.0, 1e-14);
}

TEST(SolveNormal, MatchesDenseOnRandomSparse) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SparseLsq lsq = random_lsq(200, 80, 0.05, seed);
        const NormalSolution s = solve_normal(lsq);
        const Eigen::VectorXd ref = solve_dense_qr(lsq);
        EXPECT_LE((s.x - ref).norm(), 1e-9 * ref.norm());
    }
}

TEST(SolveNormal, MarginalVariancesMatchDenseInverse) {
    const SparseLsq lsq = random_lsq(60, 20, 0.1, 7);
    const std::vector<int> cols{0, 7, 19};
    const NormalSolution s = solve_normal(lsq, cols);
    ASSERT_TRUE(s.marginal_variances.has_value());
    const Eigen::MatrixXd a = Eigen::MatrixXd(lsq.matrix());
    const Eigen::MatrixXd inv = (a.transpose() * a).inverse();
    for (std::size_t i = 0; i < cols.size(); ++i) {
        EXPECT_NEAR((*s.marginal_variances)(static_cast<Eigen::Index>(i)), inv(cols[i], cols[i]),
                    1e-10 * inv(cols[i], cols[i]));
    }
}

TEST(SolveNormal, OrderingDoesNotChangeSolution) {
    const SparseLsq lsq = random_lsq(120, 40, 0.08, 3);
    const NormalSolution a = solve_normal(lsq);
    Permutation id(40);
    id.setIdentity();
    const NormalSolution b = solve_normal(lsq, id);
    EXPECT_LE((a.x - b.x).norm(), 1e-10 * a.x.norm());
}

TEST(SolveNormal, SingularReportsPivot) {
    SparseLsq lsq(3, 3);
    lsq.add(0, 0, 1.0);
    lsq.add(1, 1, 1.0);
    lsq.add(2, 0, 1.0);
    try {
        solve_normal(lsq);
        FAIL() << "expected a solver error";
    } catch (const SolverError& e) {
        EXPECT_EQ(e.pivot(), 2);
    }
}

TEST(SolveNormal, RowScalingInvariance) {
    // In whitened form a row and its rhs scaled together are the same
    // observation with a rescaled weight; x must not move.
    const SparseLsq base = random_lsq(50, 15, 0.2, 11);
    const NormalSolution ref = solve_normal(base);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.1, 10.0);
    const SparseMatrix a = base.matrix();
    // Duplicate each row r times scaled by 1/sqrt(r): same normal equations.
    SparseLsq dup(0, 15);
    for (int i = 0; i < a.rows(); ++i) {
        const int reps = 1 + i % 3;
        for (int r = 0; r < reps; ++r) {
            const int row = dup.add_rows(1);
            const double s = 1.0 / std::sqrt(static_cast<double>(reps));
            for (int j = 0; j < a.cols(); ++j) {
                const double v = a.coeff(i, j);
                if (v != 0.0) dup.add(row, j, s * v);
            }
            dup.set_rhs(row, s * base.rhs()(i));
        }
    }
    EXPECT_LE((solve_normal(dup).x - ref.x).norm(), 1e-9 * ref.x.norm());
    // Scaling rows of a square (exactly determined) system leaves x unchanged.
    SparseLsq sq(0, 15);
    for (int j = 0; j < 15; ++j) {
        const int row = sq.add_rows(1);
        const double s = u(rng);
        sq.add(row, j, s * (1.0 + j));
        if (j + 1 < 15) sq.add(row, j + 1, s * 0.5);
        sq.set_rhs(row, s * (j - 7.0));
    }
    const Eigen::VectorXd x1 = solve_normal(sq).x;
    EXPECT_LE((Eigen::MatrixXd(sq.matrix()) * x1 - sq.rhs()).norm(), 1e-9 * sq.rhs().norm());
}

TEST(SparseLsq, NoExplicitZerosAndBoundsChecked) {
    SparseLsq lsq(2, 2);
    lsq.add(0, 0, 0.0);
    lsq.add(1, 1, 2.0);
    EXPECT_EQ(lsq.stored_entries(), 1u);
    EXPECT_EQ(lsq.matrix().nonZeros(), 1);
    lsq.add(2, 0, 1.0);
    EXPECT_THROW(lsq.validate(), ValidationError);
    SparseLsq nan(1, 1);
    nan.add(0, 0, std::nan(""));
    EXPECT_THROW(nan.validate(), ValidationError);
}

TEST(AmdOrdering, DiagonalPatternAnyOrderValid) {
    SparseLsq lsq(10, 10);
    for (int i = 0; i < 10; ++i) {
        lsq.add(i, i, 1.0 + i);
        lsq.set_rhs(i, i);
    }
    const SparseMatrix n = normal_of(lsq);
    const Permutation p = amd_ordering(n);
    Permutation id(10);
    id.setIdentity();
    EXPECT_EQ(factor_fill(n, p), 10);
    EXPECT_EQ(factor_fill(n, id), 10);
    const Eigen::VectorXd x = solve_normal(lsq, id).x;
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(x(i), i / (1.0 + i), 1e-14);
}

TEST(AmdOrdering, ArrowHubOrderedLastReducesFill) {
    // Arrow normal matrix with the dense row/column first: natural order fills
    // the whole factor, moving the hub last leaves no fill at all.
    const int n = 40;
    SparseLsq lsq(0, n);
    for (int j = 1; j < n; ++j) {
        const int r = lsq.add_rows(1);
        lsq.add(r, 0, 1.0);
        lsq.add(r, j, 2.0);
    }
    const int r = lsq.add_rows(1);
    lsq.add(r, 0, 1.0);
    const SparseMatrix nm = normal_of(lsq);

    Permutation natural(n);
    natural.setIdentity();
    Permutation hub_last(n);
    hub_last.indices()(0) = n - 1;
    for (int j = 1; j < n; ++j) hub_last.indices()(j) = j - 1;

    const long fill_natural = factor_fill(nm, natural);
    const long fill_hub_last = factor_fill(nm, hub_last);
    const long fill_amd = factor_fill(nm, amd_ordering(nm));
    EXPECT_EQ(fill_natural, static_cast<long>(n) * (n + 1) / 2);
    EXPECT_EQ(fill_hub_last, 2L * n - 1);
    EXPECT_LT(fill_hub_last, fill_natural);
    EXPECT_LE(fill_amd, fill_hub_last);
}
