#pragma once

#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "spare/core.hpp"

namespace spare {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Sparse Cholesky solver that performs the symbolic analysis once and only
/// refactorizes numerically while the sparsity pattern stays the same.
/// Small matrices that are mostly full (the coarse stage) go through a dense LLT.
class CachedCholesky {
public:
    Eigen::VectorXd solve(const SparseMatrix& a, const Eigen::VectorXd& b) {
        if (a.rows() != a.cols() || a.rows() != b.size()) throw SolverError("factorization failed: shape mismatch");
        if (!same_pattern(a)) {
            remember_pattern(a);
            dense_ = prefers_dense(a);
            if (!dense_) llt_.analyzePattern(a);
            ++symbolic_count_;
        }
        if (dense_) return solve_dense(a, b);
        llt_.factorize(a);
        if (llt_.info() != Eigen::Success) throw SolverError("factorization failed");
        Eigen::VectorXd x = llt_.solve(b);
        if (llt_.info() != Eigen::Success || !x.allFinite()) throw SolverError("factorization failed");
        return x;
    }

    /// Number of symbolic analyses performed so far.
    int symbolic_count() const { return symbolic_count_; }

    bool uses_dense() const { return dense_; }

private:
    static bool prefers_dense(const SparseMatrix& a) {
        const double n = static_cast<double>(a.rows());
        return a.rows() <= kMaxDenseSize && static_cast<double>(a.nonZeros()) > kDenseFill * n * n;
    }

    Eigen::VectorXd solve_dense(const SparseMatrix& a, const Eigen::VectorXd& b) {
        // Like the sparse path, only the lower triangle is read.
        dense_llt_.compute(Eigen::MatrixXd(a));
        if (dense_llt_.info() != Eigen::Success) throw SolverError("factorization failed");
        Eigen::VectorXd x = dense_llt_.solve(b);
        if (!x.allFinite()) throw SolverError("factorization failed");
        return x;
    }

    bool same_pattern(const SparseMatrix& a) const {
        if (symbolic_count_ == 0 || a.rows() != rows_ || a.nonZeros() != static_cast<Eigen::Index>(inner_.size())) {
            return false;
        }
        SparseMatrix c = a;
        c.makeCompressed();
        return std::equal(outer_.begin(), outer_.end(), c.outerIndexPtr()) &&
               std::equal(inner_.begin(), inner_.end(), c.innerIndexPtr());
    }

    void remember_pattern(const SparseMatrix& a) {
        SparseMatrix c = a;
        c.makeCompressed();
        rows_ = c.rows();
        outer_.assign(c.outerIndexPtr(), c.outerIndexPtr() + c.outerSize() + 1);
        inner_.assign(c.innerIndexPtr(), c.innerIndexPtr() + c.nonZeros());
    }

    static constexpr Eigen::Index kMaxDenseSize = 3000;
    static constexpr double kDenseFill = 0.2;

    Eigen::SimplicialLLT<SparseMatrix> llt_;
    Eigen::LLT<Eigen::MatrixXd> dense_llt_;
    bool dense_ = false;
    int symbolic_count_ = 0;
    Eigen::Index rows_ = -1;
    std::vector<SparseMatrix::StorageIndex> outer_;
    std::vector<SparseMatrix::StorageIndex> inner_;
};

/// Adds lambda on the diagonal and lambda * anchor to the right-hand side, i.e. a
/// proximal term lambda * ||x - anchor||^2 that keeps degenerate directions in place.
inline void add_proximal_term(SparseMatrix& a, Eigen::VectorXd& b, const Eigen::VectorXd& anchor, double lambda) {
    if (lambda == 0.0) return;
    for (Eigen::Index i = 0; i < a.rows(); ++i) a.coeffRef(i, i) += lambda;
    b += lambda * anchor;
}

}  // namespace spare
