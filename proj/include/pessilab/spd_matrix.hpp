#pragma once

#include <Eigen/Dense>

#include "pessilab/errors.hpp"

namespace pessilab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Lower-triangular Cholesky factor L with L L^T = m.
/// Throws NotPositiveDefinite when a pivot is not strictly positive.
Mat cholesky(const Mat& m);

/// Dense symmetric positive definite matrix with a cached Cholesky factor
/// (authoritative) and a cached explicit inverse (kept in sync through
/// Sherman-Morrison across rank-1 updates, refreshed by a full
/// refactorization every `refactor_interval` updates).
///
/// Values are immutable once constructed; rank1_update returns a new value.
/// Intended for dense desk-scale problems (d <= 512).
class SpdMatrix {
  public:
    /// Validates symmetry (1e-12 relative) and positive definiteness.
    explicit SpdMatrix(const Mat& entries, int refactor_interval = 256);

    static SpdMatrix identity(int dim, double scale = 1.0,
                              int refactor_interval = 256);

    int dim() const { return static_cast<int>(entries_.rows()); }
    const Mat& entries() const { return entries_; }
    const Mat& inverse() const { return inv_; }

    /// Materializes the lower-triangular factor.
    Mat chol() const { return llt_.matrixL(); }

    /// v^T m^{-1} v via a triangular solve on the Cholesky factor; never
    /// touches the cached inverse, always >= 0.
    double quad_form_inv(const Vec& v) const;

    /// Solves m x = v through the Cholesky factor.
    Vec solve(const Vec& v) const;

    /// Returns a new matrix with entries + e e^T. The Cholesky factor is
    /// rank-1-updated in place and the inverse follows Sherman-Morrison;
    /// both are rebuilt from scratch every `refactor_interval` updates.
    SpdMatrix rank1_update(const Vec& e) const;

    /// Rebuilds the Cholesky factor and inverse from the entries.
    void refactor();

  private:
    SpdMatrix() = default;

    Mat entries_;
    Eigen::LLT<Mat> llt_;
    Mat inv_;
    int refactor_interval_ = 256;
    int updates_since_refactor_ = 0;
};

}  // namespace pessilab
