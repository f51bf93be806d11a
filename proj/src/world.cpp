#include "pessilab/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pessilab/rng.hpp"

namespace pessilab {

namespace {

constexpr std::uint64_t kWorldStream = 0x776f726c64;  // "world"
constexpr std::uint64_t kPrefsStream = 0x7072656673;  // "prefs"

Vec normal_vec(Rng& rng, int dim) {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    return v;
}

/// Removes the components of v along the columns of basis.
void project_out(Vec& v, const Mat& basis) {
    for (int j = 0; j < basis.cols(); ++j) {
        v -= basis.col(j).dot(v) * basis.col(j);
    }
}

}  // namespace

const char* split_name(Split s) {
    switch (s) {
        case Split::RewardTrain: return "reward_train";
        case Split::Policy: return "policy";
        case Split::Validation: return "validation";
    }
    return "unknown";
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

void WorldConfig::validate() const {
    if (dim < 2 || dim > 512) throw InvalidConfig("dim must be in [2, 512]");
    if (n_prompts < 1) throw InvalidConfig("n_prompts must be positive");
    if (candidates_per_prompt < 2) {
        throw InvalidConfig("candidates_per_prompt must be >= 2");
    }
    if (!(ood_fraction >= 0.0) || ood_fraction >= 1.0) {
        throw InvalidConfig("ood_fraction must be in [0, 1)");
    }
    if (!(ood_shift >= 0.0)) throw InvalidConfig("ood_shift must be >= 0");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
        throw InvalidConfig("noise_rate must be in [0, 1]");
    }
    if (!(bt_temperature > 0.0)) {
        throw InvalidConfig("bt_temperature must be > 0");
    }
    double sum = 0.0;
    for (double f : split_fractions) {
        if (f < 0.0) throw InvalidConfig("split fractions must be >= 0");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-12) {
        throw InvalidConfig("split fractions must sum to 1");
    }
    if (held_dims < 1 || held_dims > dim - 1) {
        throw InvalidConfig("held_dims must be in [1, dim - 1]");
    }
    if (!(held_in_scale >= 0.0 && held_in_scale <= 1.0)) {
        throw InvalidConfig("held_in_scale must be in [0, 1]");
    }
    if (!(ood_perturb_held_sd >= 0.0) || !(ood_perturb_sd >= 0.0)) {
        throw InvalidConfig("perturbation scales must be >= 0");
    }
}

const std::vector<int>& SyntheticWorld::ids_of(Split s) const {
    switch (s) {
        case Split::RewardTrain: return reward_train_ids;
        case Split::Policy: return policy_ids;
        case Split::Validation: return validation_ids;
    }
    throw IndexOutOfRange("unknown split");
}

SyntheticWorld gen_world(const WorldConfig& config) {
    config.validate();
    Rng rng(mix_seed(config.seed, kWorldStream));
    const int d = config.dim;

    SyntheticWorld world;
    world.config = config;

    world.phi_star = normal_vec(rng, d).normalized();

    // Orthonormal held subspace, orthogonal to phi_star; column 0 is the
    // OOD shift axis.
    world.held_axes = Mat(d, config.held_dims);
    for (int j = 0; j < config.held_dims; ++j) {
        Vec a = normal_vec(rng, d);
        a -= world.phi_star.dot(a) * world.phi_star;
        for (int k = 0; k < j; ++k) {
            a -= world.held_axes.col(k).dot(a) * world.held_axes.col(k);
        }
        double n = a.norm();
        if (n < 1e-8) throw InvalidConfig("degenerate held axis draw");
        world.held_axes.col(j) = a / n;
    }

    // Prompt splits: shuffle then partition by fractions.
    const int n = config.n_prompts;
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(rng.integer(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }
    int n_reward = static_cast<int>(std::llround(config.split_fractions[0] * n));
    int n_policy = static_cast<int>(std::llround(config.split_fractions[1] * n));
    n_reward = std::min(n_reward, n);
    n_policy = std::min(n_policy, n - n_reward);
    world.split_of.assign(n, Split::Validation);
    for (int i = 0; i < n_reward; ++i) world.split_of[order[i]] = Split::RewardTrain;
    for (int i = n_reward; i < n_reward + n_policy; ++i) {
        world.split_of[order[i]] = Split::Policy;
    }
    for (int i = 0; i < n; ++i) {
        switch (world.split_of[i]) {
            case Split::RewardTrain: world.reward_train_ids.push_back(i); break;
            case Split::Policy: world.policy_ids.push_back(i); break;
            case Split::Validation: world.validation_ids.push_back(i); break;
        }
    }

    const int cpp = config.candidates_per_prompt;
    const int n_ood = static_cast<int>(
        std::llround(config.ood_fraction * cpp));
    world.pools.resize(n);
    for (int p = 0; p < n; ++p) {
        CandidatePool& pool = world.pools[p];
        pool.prompt_id = p;
        pool.embeddings = Mat(cpp, d);
        pool.is_ood.assign(cpp, 0);
        const bool pool_has_ood = world.split_of[p] == Split::Policy;
        for (int c = 0; c < cpp; ++c) {
            const bool ood = pool_has_ood && c >= cpp - n_ood;
            Vec x = normal_vec(rng, d);
            // Damp the held subspace for every base draw.
            for (int j = 0; j < config.held_dims; ++j) {
                const Vec axis = world.held_axes.col(j);
                x += (config.held_in_scale - 1.0) * axis.dot(x) * axis;
            }
            if (ood) {
                Vec pert = normal_vec(rng, d);
                Vec pert_held = Vec::Zero(d);
                for (int j = 0; j < config.held_dims; ++j) {
                    const Vec axis = world.held_axes.col(j);
                    pert_held += axis.dot(pert) * axis;
                }
                x += config.ood_shift * world.held_axes.col(0) +
                     config.ood_perturb_held_sd * pert_held +
                     config.ood_perturb_sd * (pert - pert_held);
                pool.is_ood[c] = 1;
            }
            double norm = x.norm();
            if (norm < 1e-12) {
                x[0] = 1.0;
                norm = 1.0;
            }
            pool.embeddings.row(c) = x.transpose() / norm;
        }
    }
    return world;
}

double gold_reward(const SyntheticWorld& world, int prompt_id, int cand_idx) {
    if (prompt_id < 0 ||
        prompt_id >= static_cast<int>(world.pools.size())) {
        throw IndexOutOfRange("gold_reward: prompt_id " +
                              std::to_string(prompt_id));
    }
    const CandidatePool& pool = world.pools[prompt_id];
    if (cand_idx < 0 || cand_idx >= pool.embeddings.rows()) {
        throw IndexOutOfRange("gold_reward: cand_idx " +
                              std::to_string(cand_idx));
    }
    return world.phi_star.dot(pool.embeddings.row(cand_idx));
}

PreferenceDataset gen_preferences(const SyntheticWorld& world, int n_pairs,
                                  double noise_rate, std::uint64_t seed) {
    if (world.reward_train_ids.empty()) {
        throw EmptySplit("gen_preferences: reward_train split is empty");
    }
    if (n_pairs < 0) throw InvalidConfig("n_pairs must be >= 0");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0)) {
        throw InvalidConfig("noise_rate must be in [0, 1]");
    }
    const double tau = world.config.bt_temperature;
    Rng rng(mix_seed(seed, kPrefsStream));

    PreferenceDataset data;
    data.seed = seed;
    data.triples.reserve(n_pairs);
    data.flipped.reserve(n_pairs);
    const std::size_t n_prompts = world.reward_train_ids.size();
    const int cpp = world.config.candidates_per_prompt;
    for (int i = 0; i < n_pairs; ++i) {
        const int pid = world.reward_train_ids[rng.integer(n_prompts)];
        // Reward-train pools are fully in-distribution.
        int a = static_cast<int>(rng.integer(cpp));
        int b = static_cast<int>(rng.integer(cpp - 1));
        if (b >= a) ++b;
        const double ra = gold_reward(world, pid, a);
        const double rb = gold_reward(world, pid, b);
        const double p_a = sigmoid((ra - rb) / tau);
        int chosen = rng.bernoulli(p_a) ? a : b;
        int rejected = chosen == a ? b : a;
        const bool flip = rng.bernoulli(noise_rate);
        if (flip) std::swap(chosen, rejected);
        data.triples.push_back({pid, chosen, rejected});
        data.flipped.push_back(flip ? 1 : 0);
    }
    return data;
}

}  // namespace pessilab
