#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "pessilab/errors.hpp"

namespace pessilab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Split : int { RewardTrain = 0, Policy = 1, Validation = 2 };

const char* split_name(Split s);

struct WorldConfig {
    int dim = 16;
    int n_prompts = 200;
    int candidates_per_prompt = 16;
    double ood_fraction = 0.25;
    double ood_shift = 2.0;
    double noise_rate = 0.30;     // label flip probability
    double bt_temperature = 0.25; // tau in the preference sampler
    std::uint64_t seed = 1;
    std::array<double, 3> split_fractions{0.5, 0.4, 0.1}; // reward/policy/val

    // Out-of-distribution construction. The shift axis spans a weakly
    // covered subspace: in-distribution draws are damped there by
    // `held_in_scale`, OOD draws are shifted along the axis and spread over
    // the subspace by `ood_perturb_held_sd` (plus a small isotropic term).
    int held_dims = 4;
    double held_in_scale = 0.08;
    double ood_perturb_held_sd = 1.5;
    double ood_perturb_sd = 0.25;

    void validate() const;  // throws InvalidConfig
};

struct CandidatePool {
    int prompt_id = 0;
    Mat embeddings;  // candidates_per_prompt x dim, rows are candidates
    std::vector<std::uint8_t> is_ood;
};

struct SyntheticWorld {
    WorldConfig config;
    Vec phi_star;    // unit norm, gold reward is phi_star . e
    Mat held_axes;   // dim x held_dims, orthonormal, orthogonal to phi_star
    std::vector<CandidatePool> pools;          // indexed by prompt_id
    std::vector<Split> split_of;               // per prompt
    std::vector<int> reward_train_ids;
    std::vector<int> policy_ids;
    std::vector<int> validation_ids;

    const std::vector<int>& ids_of(Split s) const;
};

struct PreferenceTriple {
    int prompt_id = 0;
    int chosen_idx = 0;
    int rejected_idx = 0;
};

struct PreferenceDataset {
    std::vector<PreferenceTriple> triples;
    std::vector<std::uint8_t> flipped;  // diagnostic only
    std::uint64_t seed = 0;
    std::string config_hash;
};

SyntheticWorld gen_world(const WorldConfig& config);

/// Gold reward phi_star . e, exact.
double gold_reward(const SyntheticWorld& world, int prompt_id, int cand_idx);

/// Bradley-Terry preference sampling over in-distribution candidates of
/// reward-train prompts: chosen = y_a with probability
/// sigmoid((r*(y_a) - r*(y_b)) / tau), then swapped with probability
/// noise_rate.
PreferenceDataset gen_preferences(const SyntheticWorld& world, int n_pairs,
                                  double noise_rate, std::uint64_t seed);

double sigmoid(double x);

}  // namespace pessilab
