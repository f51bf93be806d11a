#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pessilab/spd_matrix.hpp"
#include "pessilab/world.hpp"

namespace pessilab {

/// M_D = lambda I + sum over preference pairs of e e^T for both the chosen
/// and the rejected embedding, accumulated in dataset order.
struct PrecisionState {
    SpdMatrix m;
    double lambda_ridge = 1.0;
    std::size_t n_embeddings = 0;
};

struct RobustnessConfig {
    double B = 5.0;      // squared confidence radius, B = b^2
    double delta = 0.1;  // informational only; B is configured directly
};

PrecisionState build_precision(const SyntheticWorld& world,
                               const PreferenceDataset& data,
                               double lambda_ridge);

/// Unscaled confidence-interval width sqrt(e^T M_D^{-1} e); callers apply
/// the b = sqrt(B) scaling where needed.
double ci_uncertainty(const PrecisionState& prec, const Vec& e);

enum class KernelKind : int { Rbf = 0, Linear = 1 };

struct GpConfig {
    KernelKind kernel = KernelKind::Rbf;
    double length_scale = 1.0;
    double sigma_n = 0.1;
    int subset_size = 512;
};

struct GpPosterior {
    KernelKind kernel = KernelKind::Rbf;
    double length_scale = 1.0;
    double sigma_n = 0.1;
    Mat train_x;   // subset rows
    Vec train_y;
    Mat chol_k;    // lower Cholesky of K + sigma_n^2 I
    Vec alpha;     // (K + sigma_n^2 I)^{-1} train_y
};

double kernel_eval(KernelKind kind, double length_scale, const Vec& a,
                   const Vec& b);

/// Fits on a uniform random subset (without replacement) of the samples.
GpPosterior gp_fit(const Mat& x, const Vec& y, const GpConfig& cfg,
                   std::uint64_t seed);

/// Predictive mean and standard deviation:
///   mu    = k(e, X) [K + sigma_n^2 I]^{-1} y
///   sigma = sqrt(max(k(e, e) - k(e, X) [K + sigma_n^2 I]^{-1} k(X, e), 0))
std::pair<double, double> gp_predict(const GpPosterior& post, const Vec& e);

struct CorrelationReport {
    double pearson = 0.0;
    double spearman = 0.0;
};

/// Pearson on raw values; Spearman via average ranks then Pearson on ranks.
/// Requires >= 3 samples and non-constant inputs on both coordinates.
CorrelationReport correlation_report(
    const std::vector<std::pair<double, double>>& samples);

}  // namespace pessilab
