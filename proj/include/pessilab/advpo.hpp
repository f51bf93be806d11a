#pragma once

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pessilab/reward_model.hpp"
#include "pessilab/uncertainty.hpp"

namespace pessilab {

struct AdvpoConfig {
    double B = 5.0;            // squared confidence radius
    bool use_reference = true;
    double g_floor = 1e-9;     // ||g||_{M^{-1}} below this zeroes the adjustment
    bool rescale = false;      // dynamic reward rescaling

    void validate() const;
};

/// Closed-form solution of the inner minimization
///   min_{||phi - phi_hat||_M^2 <= B} g . phi
/// When ||g||_{M^{-1}} <= g_floor the adjustment is inactive: lambda_star is
/// the 0 sentinel and adjusted rewards reduce to the plain head prediction.
struct PessimisticAdjustment {
    Vec g;
    double lambda_star = 0.0;
    Vec minv_g;      // M^{-1} g
    Vec phi_pess;    // phi_hat - minv_g / lambda_star
    double inner_value = 0.0;  // g . phi_hat - sqrt(B g^T M^{-1} g)
    bool active = false;
};

/// Aggregate direction g: expected policy embedding minus expected reference
/// embedding (policy expectation alone when no reference is used).
Vec compute_g(const Vec& policy_expected_embedding,
              const std::optional<Vec>& ref_expected_embedding);

/// lambda* = sqrt(g^T M^{-1} g / B); returns the 0 sentinel when
/// ||g||_{M^{-1}} <= g_floor.
double lambda_star(const PrecisionState& prec, const Vec& g, double B,
                   double g_floor = 1e-9);

PessimisticAdjustment make_adjustment(const RewardHead& head,
                                      const PrecisionState& prec, const Vec& g,
                                      double B, double g_floor = 1e-9);

/// r_hat(e) - (1/lambda*) e^T M^{-1} g; r_hat(e) unchanged on the sentinel.
double adjusted_reward(const RewardHead& head, const PessimisticAdjustment& adj,
                       const Vec& e);

/// g . phi_hat - sqrt(B g^T M^{-1} g).
double inner_min_value(const RewardHead& head, const PrecisionState& prec,
                       const Vec& g, double B);

/// Independent verification oracle: projected gradient descent on
/// min g . phi over the ellipsoid, using the change of variables
/// u = L^T (phi - phi_hat) and the ball clamp ||u|| <= sqrt(B).
double oracle_inner_min(const RewardHead& head, const PrecisionState& prec,
                        const Vec& g, double B, int iters = 200);

/// Sample-wise comparator: r_hat(e) - sqrt(B) * ci_uncertainty(prec, e).
double samplewise_adjusted_reward(const RewardHead& head,
                                  const PrecisionState& prec, double B,
                                  const Vec& e);

struct PessimismGap {
    double advpo_penalty = 0.0;       // sqrt(B) ||mean g||_{M^{-1}}
    double samplewise_penalty = 0.0;  // sqrt(B) mean ||g_i||_{M^{-1}}
};

PessimismGap pessimism_gap(const PrecisionState& prec, double B,
                           const std::vector<Vec>& batch_g);

/// Rescales adjusted rewards back to the raw-reward scale using exponential
/// running means of mean absolute values.
class RewardRescaler {
  public:
    explicit RewardRescaler(double decay = 0.99) : decay_(decay) {}

    std::vector<double> apply(const std::vector<double>& raw_batch,
                              const std::vector<double>& adjusted_batch);

    double factor() const;

  private:
    double decay_;
    bool initialized_ = false;
    double raw_mean_ = 0.0;
    double adjusted_mean_ = 0.0;
};

}  // namespace pessilab
