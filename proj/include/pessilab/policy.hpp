#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pessilab/advpo.hpp"
#include "pessilab/reward_model.hpp"
#include "pessilab/uncertainty.hpp"
#include "pessilab/world.hpp"

namespace pessilab {

enum class Variant : int {
    Vanilla = 0,
    Samplewise = 1,
    Ensemble = 2,
    Advpo = 3,
    AdvpoNoref = 4,
};

const char* variant_name(Variant v);
std::optional<Variant> parse_variant(const std::string& name);

struct TrainConfig {
    Variant variant = Variant::Vanilla;
    double beta = 0.0;  // KL coefficient; 0 is the overoptimization stress mode
    double B = 5.0;
    int steps = 1500;
    double lr = 1.0;
    int eval_every = 100;
    bool rescale = false;
    double g_floor = 1e-9;
    // Constant added to reference rewards in the objective. It never reaches
    // the gradient, which is the point of logging it as an ablation hook.
    double ref_reward_shift = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Per-prompt softmax policy over a finite candidate pool. ref_logits is the
/// SFT stand-in (all zero = uniform by default).
struct PolicyState {
    std::vector<Vec> logits;      // aligned with RunMetrics::trained_prompts
    std::vector<Vec> ref_logits;
    int step = 0;
};

struct MetricsRow {
    int step = 0;
    double proxy_mean = 0.0;
    double gold_mean = 0.0;
    double kl_mean = 0.0;
    double u_mean = 0.0;
    double penalty_mean = 0.0;
    double lambda_star = 0.0;
    double g_norm_minv = 0.0;
    double advpo_penalty = 0.0;
    double samplewise_penalty = 0.0;
    bool has_val = false;
    double val_proxy = 0.0;
};

struct RunMetrics {
    std::vector<MetricsRow> rows;
    // Prompts the policy holds logits for: policy split first, then the
    // validation split (validation pools follow the same update rule but are
    // excluded from metrics and from the aggregate direction g).
    std::vector<int> trained_prompts;
    int n_policy_prompts = 0;
    PolicyState best_checkpoint;
    int best_step = 0;
    double best_val_proxy = 0.0;
    double gold_at_best = 0.0;
    double proxy_at_best = 0.0;
};

Vec softmax(const Vec& logits);

/// KL(softmax(logits) || softmax(ref_logits)) over the finite support.
double kl_divergence(const Vec& logits, const Vec& ref_logits);

/// Mean over prompts of [sum_i pi_i r_i - beta KL(pi || ref)], minus the mean
/// reference reward when present.
double objective(const std::vector<Vec>& logits,
                 const std::vector<Vec>& ref_logits,
                 const std::vector<Vec>& rewards, double beta,
                 const std::optional<std::vector<double>>& ref_rewards);

/// Exact gradient of the per-prompt objective with respect to the logits.
std::vector<Vec> policy_gradient(const std::vector<Vec>& logits,
                                 const std::vector<Vec>& ref_logits,
                                 const std::vector<Vec>& rewards, double beta);

/// Runs the training loop for one variant. `prec` is required by the
/// samplewise and advpo variants (and used for uncertainty logging whenever
/// present); `ens` is required by the ensemble variant. `ref_override`
/// replaces the per-prompt reference embeddings (policy split order) for the
/// advpo variant.
RunMetrics train(const SyntheticWorld& world, const RewardHead& head,
                 const PrecisionState* prec, const EnsembleHeads* ens,
                 const TrainConfig& config,
                 const std::vector<Vec>* ref_override = nullptr);

/// The per-prompt reference embeddings the advpo variant uses by default:
/// the chosen side of one freshly sampled in-distribution preference pair
/// per policy-split prompt.
std::vector<Vec> default_references(const SyntheticWorld& world,
                                    std::uint64_t seed);

}  // namespace pessilab
