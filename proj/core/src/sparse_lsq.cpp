#include "rtkgssm/sparse_lsq.hpp"

#include <cmath>
#include <string>

#include <Eigen/OrderingMethods>
#include <Eigen/QR>
#include <Eigen/SparseCholesky>

#include "rtkgssm/errors.hpp"

namespace rtkgssm {

SparseLsq::SparseLsq(int rows, int cols) : rows_(rows), cols_(cols), rhs_(Eigen::VectorXd::Zero(rows)) {}

int SparseLsq::add_rows(int count) {
    const int first = rows_;
    rows_ += count;
    rhs_.conservativeResize(rows_);
    rhs_.tail(count).setZero();
    return first;
}

void SparseLsq::add(int row, int col, double value) {
    if (value != 0.0) triplets_.emplace_back(row, col, value);
}

SparseMatrix SparseLsq::matrix() const {
    SparseMatrix a(rows_, cols_);
    a.setFromTriplets(triplets_.begin(), triplets_.end());
    a.prune(0.0);
    return a;
}

void SparseLsq::validate() const {
    for (const auto& t : triplets_) {
        if (t.row() < 0 || t.row() >= rows_ || t.col() < 0 || t.col() >= cols_) {
            throw ValidationError("sparse entry (" + std::to_string(t.row()) + "," + std::to_string(t.col()) +
                                  ") out of bounds");
        }
        if (!std::isfinite(t.value())) throw ValidationError("non-finite sparse entry");
    }
    if (!rhs_.allFinite()) throw ValidationError("non-finite right-hand side");
}

namespace {

SparseMatrix normal_matrix(const SparseMatrix& a) {
    // Evaluate the product first: pruned() on the expression selects a much
    // slower product kernel.
    const SparseMatrix at = a.transpose();
    SparseMatrix n = at * a;
    n.prune(0.0);
    n.makeCompressed();
    return n;
}

}  // namespace

Permutation amd_ordering(const SparseMatrix& normal) {
    Eigen::AMDOrdering<int> amd;
    Permutation pinv;
    amd(normal, pinv);
    return pinv.inverse();
}

Permutation amd_ordering(const SparseLsq& lsq) { return amd_ordering(normal_matrix(lsq.matrix())); }

long factor_fill(const SparseMatrix& normal, const Permutation& p) {
    SparseMatrix pn;
    pn = normal.twistedBy(p);
    Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> llt;
    llt.analyzePattern(pn);
    llt.factorize(pn);
    if (llt.info() != Eigen::Success) throw SolverError("factor_fill: matrix is not positive definite");
    const SparseMatrix l = llt.matrixL();
    return static_cast<long>(l.nonZeros());
}

NormalSolution solve_normal(const SparseLsq& lsq, std::span<const int> variance_columns) {
    lsq.validate();
    const SparseMatrix a = lsq.matrix();
    const SparseMatrix n = normal_matrix(a);
    return solve_normal(lsq, amd_ordering(n), variance_columns);
}

NormalSolution solve_normal(const SparseLsq& lsq, const Permutation& ordering, std::span<const int> variance_columns) {
    lsq.validate();
    const SparseMatrix a = lsq.matrix();
    const SparseMatrix n = normal_matrix(a);
    const Eigen::VectorXd atb = a.transpose() * lsq.rhs();
    if (ordering.size() != n.rows()) throw SolverError("ordering size does not match column count");

    SparseMatrix pn;
    pn = n.twistedBy(ordering);
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::NaturalOrdering<int>> ldlt;
    ldlt.compute(pn);

    // Locate the first non-positive pivot in factorization order.
    const Eigen::Index ncols = n.cols();
    Permutation inv = ordering.inverse();
    auto original_col = [&](Eigen::Index permuted) { return inv.indices()(permuted); };
    const Eigen::VectorXd d = ldlt.vectorD();
    if (ldlt.info() != Eigen::Success) {
        // The factorization stops at the first exactly-zero pivot; D is valid up to it.
        for (Eigen::Index i = 0; i < d.size(); ++i) {
            if (!(d(i) > 0.0)) {
                const int col = original_col(i);
                throw SolverError("normal matrix is singular: zero pivot at column " + std::to_string(col), col);
            }
        }
        throw SolverError("normal matrix factorization failed (singular)", -1);
    }
    const double dmax = d.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < ncols; ++i) {
        if (!(d(i) > dmax * 1e-15)) {
            const int col = original_col(i);
            throw SolverError("normal matrix not positive definite: pivot " + std::to_string(d(i)) +
                                  " at column " + std::to_string(col),
                              col);
        }
    }

    NormalSolution out;
    out.x = ordering.transpose() * ldlt.solve(ordering * atb);
    const SparseMatrix l = ldlt.matrixL();
    out.factor_nonzeros = static_cast<long>(l.nonZeros());

    if (!variance_columns.empty()) {
        Eigen::VectorXd var(static_cast<Eigen::Index>(variance_columns.size()));
        Eigen::VectorXd e = Eigen::VectorXd::Zero(ncols);
        for (std::size_t i = 0; i < variance_columns.size(); ++i) {
            const int c = variance_columns[i];
            e.setZero();
            e(c) = 1.0;
            const Eigen::VectorXd col = ordering.transpose() * ldlt.solve(ordering * e);
            var(static_cast<Eigen::Index>(i)) = col(c);
        }
        out.marginal_variances = std::move(var);
    }
    return out;
}

Eigen::VectorXd solve_dense_qr(const SparseLsq& lsq) {
    const Eigen::MatrixXd a = Eigen::MatrixXd(lsq.matrix());
    return a.colPivHouseholderQr().solve(lsq.rhs());
}

}  // namespace rtkgssm
