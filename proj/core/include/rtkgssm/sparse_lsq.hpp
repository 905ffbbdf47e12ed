#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace rtkgssm {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Permutation = Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int>;

/// Whitened linear least-squares problem min ||A x - b||^2 with A stored as
/// triplets. Explicit zeros are dropped on insertion.
class SparseLsq {
public:
    SparseLsq() = default;
    SparseLsq(int rows, int cols);

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    /// Appends `count` rows and returns the index of the first one.
    int add_rows(int count);
    /// Adds `value` to A(row, col); zero values are not stored.
    void add(int row, int col, double value);
    void set_rhs(int row, double value) { rhs_(row) = value; }

    const Eigen::VectorXd& rhs() const { return rhs_; }
    SparseMatrix matrix() const;
    std::size_t stored_entries() const { return triplets_.size(); }

    /// Throws ValidationError on out-of-range indices or non-finite values.
    void validate() const;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Eigen::Triplet<double, int>> triplets_;
    Eigen::VectorXd rhs_;
};

struct NormalSolution {
    Eigen::VectorXd x;
    /// Diagonal of (A^T A)^-1 at the requested columns, in request order.
    std::optional<Eigen::VectorXd> marginal_variances;
    long factor_nonzeros = 0;
};

/// Fill-reducing (approximate minimum degree) ordering of A^T A. Returns P such
/// that P N P^T is the matrix that gets factorized.
Permutation amd_ordering(const SparseLsq& lsq);
Permutation amd_ordering(const SparseMatrix& normal);

/// Nonzeros in the Cholesky factor of P N P^T (diagonal included).
long factor_fill(const SparseMatrix& normal, const Permutation& p);

/// Solves the normal equations A^T A x = A^T b by sparse LDL^T under the AMD
/// ordering. Throws SolverError carrying the first non-positive pivot (original
/// column index) if A^T A is not positive definite.
NormalSolution solve_normal(const SparseLsq& lsq, std::span<const int> variance_columns = {});

/// As solve_normal but with an explicit ordering.
NormalSolution solve_normal(const SparseLsq& lsq, const Permutation& ordering,
                            std::span<const int> variance_columns = {});

/// Dense column-pivoted QR reference solve.
Eigen::VectorXd solve_dense_qr(const SparseLsq& lsq);

}  // namespace rtkgssm
