#include "pessilab/spd_matrix.hpp"

#include <cmath>
#include <string>

namespace pessilab {

namespace {

void check_square_symmetric(const Mat& m, const char* op) {
    if (m.rows() != m.cols() || m.rows() < 1) {
        throw DimensionMismatch(std::string(op) +
                                ": matrix must be square, dim >= 1");
    }
    const double scale = m.cwiseAbs().maxCoeff();
    const double sym_err = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (sym_err > 1e-12 * std::max(scale, 1.0)) {
        throw NotPositiveDefinite(std::string(op) +
                                  ": matrix is not symmetric");
    }
}

void check_dim(int dim, const Vec& v, const char* op) {
    if (v.size() != dim) {
        throw DimensionMismatch(std::string(op) + ": vector size " +
                                std::to_string(v.size()) + " vs matrix dim " +
                                std::to_string(dim));
    }
}

Eigen::LLT<Mat> factorize(const Mat& m, const char* op) {
    Eigen::LLT<Mat> llt(m);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        // Eigen accepts a zero pivot in edge cases; the contract requires
        // strictly positive pivots.
        Mat storage = llt.matrixLLT();
        for (int i = 0; i < storage.rows(); ++i) {
            if (!(storage(i, i) > 0.0)) {
                ok = false;
                break;
            }
        }
    }
    if (!ok) {
        throw NotPositiveDefinite(std::string(op) + ": non-positive pivot");
    }
    return llt;
}

}  // namespace

Mat cholesky(const Mat& m) {
    check_square_symmetric(m, "cholesky");
    return factorize(m, "cholesky").matrixL();
}

SpdMatrix::SpdMatrix(const Mat& entries, int refactor_interval)
    : entries_(entries), refactor_interval_(refactor_interval) {
    check_square_symmetric(entries_, "SpdMatrix");
    refactor();
}

SpdMatrix SpdMatrix::identity(int dim, double scale, int refactor_interval) {
    return SpdMatrix(Mat::Identity(dim, dim) * scale, refactor_interval);
}

double SpdMatrix::quad_form_inv(const Vec& v) const {
    check_dim(dim(), v, "quad_form_inv");
    // v^T (L L^T)^{-1} v = ||L^{-1} v||^2
    Vec w = llt_.matrixL().solve(v);
    return w.squaredNorm();
}

Vec SpdMatrix::solve(const Vec& v) const {
    check_dim(dim(), v, "solve");
    return llt_.solve(v);
}

SpdMatrix SpdMatrix::rank1_update(const Vec& e) const {
    check_dim(dim(), e, "rank1_update");
    SpdMatrix out = *this;
    out.entries_.noalias() += e * e.transpose();
    out.updates_since_refactor_ = updates_since_refactor_ + 1;
    if (out.updates_since_refactor_ >= refactor_interval_) {
        out.refactor();
        return out;
    }
    out.llt_.rankUpdate(e, 1.0);  // O(d^2)
    // Sherman-Morrison: inv' = inv - (inv e)(inv e)^T / (1 + e^T inv e).
    Vec u = inv_ * e;
    double denom = 1.0 + e.dot(u);
    out.inv_.noalias() -= (u * u.transpose()) / denom;
    return out;
}

void SpdMatrix::refactor() {
    llt_ = factorize(entries_, "SpdMatrix");
    inv_ = llt_.solve(Mat::Identity(dim(), dim()));
    updates_since_refactor_ = 0;
}

}  // namespace pessilab
