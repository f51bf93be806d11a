#include "pessilab/policy.hpp"

#include <cmath>

#include "pessilab/rng.hpp"

namespace pessilab {

namespace {

constexpr std::uint64_t kRefStream = 0x726566;  // "ref"

void check_shapes(const std::vector<Vec>& logits,
                  const std::vector<Vec>& other, const char* what) {
    if (logits.size() != other.size()) {
        throw DimensionMismatch(std::string(what) + ": prompt count mismatch");
    }
    for (std::size_t p = 0; p < logits.size(); ++p) {
        if (logits[p].size() != other[p].size()) {
            throw DimensionMismatch(std::string(what) +
                                    ": candidate count mismatch");
        }
    }
}

double expectation(const Vec& pi, const Vec& values) {
    return pi.dot(values);
}

}  // namespace

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Vanilla: return "vanilla";
        case Variant::Samplewise: return "samplewise";
        case Variant::Ensemble: return "ensemble";
        case Variant::Advpo: return "advpo";
        case Variant::AdvpoNoref: return "advpo_noref";
    }
    return "unknown";
}

std::optional<Variant> parse_variant(const std::string& name) {
    if (name == "vanilla") return Variant::Vanilla;
    if (name == "samplewise") return Variant::Samplewise;
    if (name == "ensemble") return Variant::Ensemble;
    if (name == "advpo") return Variant::Advpo;
    if (name == "advpo_noref") return Variant::AdvpoNoref;
    return std::nullopt;
}

void TrainConfig::validate() const {
    if (steps < 1) throw InvalidConfig("TrainConfig: steps must be >= 1");
    if (!(lr >= 0.0)) throw InvalidConfig("TrainConfig: lr must be >= 0");
    if (!(beta >= 0.0)) throw InvalidConfig("TrainConfig: beta must be >= 0");
    if (!(B > 0.0)) throw InvalidConfig("TrainConfig: B must be > 0");
    if (eval_every < 1) throw InvalidConfig("TrainConfig: eval_every must be >= 1");
}

Vec softmax(const Vec& logits) {
    const double m = logits.maxCoeff();
    Vec out = (logits.array() - m).exp();
    return out / out.sum();
}

double kl_divergence(const Vec& logits, const Vec& ref_logits) {
    if (logits.size() != ref_logits.size()) {
        throw DimensionMismatch("kl_divergence: support sizes differ");
    }
    const Vec pi = softmax(logits);
    const Vec q = softmax(ref_logits);
    double kl = 0.0;
    for (Eigen::Index i = 0; i < pi.size(); ++i) {
        if (pi[i] > 0.0) kl += pi[i] * std::log(pi[i] / q[i]);
    }
    return kl;
}

double objective(const std::vector<Vec>& logits,
                 const std::vector<Vec>& ref_logits,
                 const std::vector<Vec>& rewards, double beta,
                 const std::optional<std::vector<double>>& ref_rewards) {
    check_shapes(logits, ref_logits, "objective");
    check_shapes(logits, rewards, "objective");
    if (logits.empty()) throw DimensionMismatch("objective: no prompts");
    double total = 0.0;
    for (std::size_t p = 0; p < logits.size(); ++p) {
        const Vec pi = softmax(logits[p]);
        total += expectation(pi, rewards[p]) -
                 beta * kl_divergence(logits[p], ref_logits[p]);
    }
    total /= static_cast<double>(logits.size());
    if (ref_rewards.has_value()) {
        if (ref_rewards->empty()) {
            throw DimensionMismatch("objective: empty reference rewards");
        }
        double ref_mean = 0.0;
        for (double r : *ref_rewards) ref_mean += r;
        total -= ref_mean / static_cast<double>(ref_rewards->size());
    }
    return total;
}

std::vector<Vec> policy_gradient(const std::vector<Vec>& logits,
                                 const std::vector<Vec>& ref_logits,
                                 const std::vector<Vec>& rewards, double beta) {
    check_shapes(logits, ref_logits, "policy_gradient");
    check_shapes(logits, rewards, "policy_gradient");
    std::vector<Vec> grads(logits.size());
    for (std::size_t p = 0; p < logits.size(); ++p) {
        const Vec pi = softmax(logits[p]);
        const Vec q = softmax(ref_logits[p]);
        Vec a = rewards[p];
        if (beta != 0.0) {
            for (Eigen::Index i = 0; i < a.size(); ++i) {
                a[i] -= beta * (std::log(pi[i]) - std::log(q[i]));
            }
        }
        const double mean_a = expectation(pi, a);
        grads[p] = pi.array() * (a.array() - mean_a);
    }
    return grads;
}

std::vector<Vec> default_references(const SyntheticWorld& world,
                                    std::uint64_t seed) {
    Rng rng(mix_seed(seed, kRefStream));
    const double tau = world.config.bt_temperature;
    const double noise = world.config.noise_rate;
    std::vector<Vec> refs;
    refs.reserve(world.policy_ids.size());
    for (int pid : world.policy_ids) {
        const CandidatePool& pool = world.pools[pid];
        std::vector<int> in_dist;
        for (int c = 0; c < pool.embeddings.rows(); ++c) {
            if (!pool.is_ood[c]) in_dist.push_back(c);
        }
        // Pool invariant guarantees at least one in-distribution candidate.
        const std::size_t n_in = in_dist.size();
        std::size_t pa = rng.integer(n_in);
        std::size_t pb = pa;
        if (n_in > 1) {
            pb = rng.integer(n_in - 1);
            if (pb >= pa) ++pb;
        }
        const int a = in_dist[pa];
        const int b = in_dist[pb];
        const double ra = gold_reward(world, pid, a);
        const double rb = gold_reward(world, pid, b);
        int chosen = rng.bernoulli(sigmoid((ra - rb) / tau)) ? a : b;
        int rejected = chosen == a ? b : a;
        if (rng.bernoulli(noise)) std::swap(chosen, rejected);
        refs.push_back(pool.embeddings.row(chosen));
    }
    return refs;
}

RunMetrics train(const SyntheticWorld& world, const RewardHead& head,
                 const PrecisionState* prec, const EnsembleHeads* ens,
                 const TrainConfig& config,
                 const std::vector<Vec>* ref_override) {
    config.validate();
    const Variant variant = config.variant;
    const bool needs_prec = variant == Variant::Samplewise ||
                            variant == Variant::Advpo ||
                            variant == Variant::AdvpoNoref;
    if (needs_prec && prec == nullptr) {
        throw MissingInput("train: variant requires a PrecisionState");
    }
    if (variant == Variant::Ensemble && ens == nullptr) {
        throw MissingInput("train: ensemble variant requires EnsembleHeads");
    }
    if (world.policy_ids.empty()) {
        throw EmptySplit("train: policy split is empty");
    }

    RunMetrics metrics;
    metrics.trained_prompts = world.policy_ids;
    metrics.n_policy_prompts = static_cast<int>(world.policy_ids.size());
    metrics.trained_prompts.insert(metrics.trained_prompts.end(),
                                   world.validation_ids.begin(),
                                   world.validation_ids.end());
    const int n_pools = static_cast<int>(metrics.trained_prompts.size());
    const int n_pol = metrics.n_policy_prompts;

    // Static per-candidate tables.
    std::vector<Vec> raw(n_pools), gold(n_pools), unc(n_pools),
        base_reward(n_pools);
    for (int k = 0; k < n_pools; ++k) {
        const CandidatePool& pool = world.pools[metrics.trained_prompts[k]];
        const int cpp = static_cast<int>(pool.embeddings.rows());
        raw[k] = Vec(cpp);
        gold[k] = Vec(cpp);
        unc[k] = Vec::Zero(cpp);
        for (int c = 0; c < cpp; ++c) {
            const Vec e = pool.embeddings.row(c);
            raw[k][c] = predict(head, e);
            gold[k][c] = world.phi_star.dot(e);
            if (prec != nullptr) unc[k][c] = ci_uncertainty(*prec, e);
        }
        switch (variant) {
            case Variant::Vanilla:
                base_reward[k] = raw[k];
                break;
            case Variant::Samplewise:
                base_reward[k] =
                    raw[k] - std::sqrt(config.B) * unc[k];
                break;
            case Variant::Ensemble: {
                base_reward[k] = Vec(cpp);
                for (int c = 0; c < cpp; ++c) {
                    base_reward[k][c] =
                        ensemble_reward(*ens, pool.embeddings.row(c));
                }
                break;
            }
            case Variant::Advpo:
            case Variant::AdvpoNoref:
                base_reward[k] = raw[k];  // adjusted per step
                break;
        }
    }

    // Reference responses (advpo only).
    std::optional<Vec> z_ref;
    double ref_raw_mean = 0.0;
    if (variant == Variant::Advpo) {
        std::vector<Vec> refs = ref_override != nullptr
                                    ? *ref_override
                                    : default_references(world, config.seed);
        if (static_cast<int>(refs.size()) != n_pol) {
            throw DimensionMismatch("train: reference count vs policy prompts");
        }
        Vec z = Vec::Zero(world.config.dim);
        for (const Vec& r : refs) {
            z += r;
            ref_raw_mean += predict(head, r);
        }
        z_ref = z / static_cast<double>(n_pol);
        ref_raw_mean /= static_cast<double>(n_pol);
    }

    PolicyState state;
    state.logits.resize(n_pools);
    state.ref_logits.resize(n_pools);
    for (int k = 0; k < n_pools; ++k) {
        const int cpp =
            static_cast<int>(world.pools[metrics.trained_prompts[k]]
                                 .embeddings.rows());
        state.logits[k] = Vec::Zero(cpp);
        state.ref_logits[k] = Vec::Zero(cpp);  // uniform SFT stand-in
    }

    RewardRescaler rescaler;
    bool have_best = false;

    std::vector<Vec> pi(n_pools), reward(n_pools);
    for (int step = 1; step <= config.steps; ++step) {
        for (int k = 0; k < n_pools; ++k) pi[k] = softmax(state.logits[k]);

        // Aggregate direction from the current policy, policy pools only.
        double lam = 0.0, g_norm_minv = 0.0, advpo_pen = 0.0;
        double ref_term = 0.0;
        if (variant == Variant::Advpo || variant == Variant::AdvpoNoref) {
            Vec policy_mean = Vec::Zero(world.config.dim);
            for (int k = 0; k < n_pol; ++k) {
                const CandidatePool& pool =
                    world.pools[metrics.trained_prompts[k]];
                policy_mean += pool.embeddings.transpose() * pi[k];
            }
            policy_mean /= static_cast<double>(n_pol);
            const Vec g = compute_g(policy_mean, z_ref);
            const PessimisticAdjustment adj =
                make_adjustment(head, *prec, g, config.B, config.g_floor);
            lam = adj.lambda_star;
            if (adj.active) {
                g_norm_minv = adj.lambda_star * std::sqrt(config.B);
                advpo_pen = std::sqrt(config.B) * g_norm_minv;
            }
            for (int k = 0; k < n_pools; ++k) {
                const CandidatePool& pool =
                    world.pools[metrics.trained_prompts[k]];
                if (adj.active) {
                    reward[k] = raw[k] -
                                (pool.embeddings * adj.minv_g) / adj.lambda_star;
                } else {
                    reward[k] = raw[k];
                }
            }
            if (variant == Variant::Advpo) {
                // Adjusted reference reward, a per-step constant: it enters
                // the diagnostic objective but never the gradient.
                ref_term = ref_raw_mean + config.ref_reward_shift;
                if (adj.active) {
                    ref_term -= z_ref->dot(adj.minv_g) / adj.lambda_star;
                }
            }
        } else {
            for (int k = 0; k < n_pools; ++k) reward[k] = base_reward[k];
        }

        if (config.rescale) {
            std::vector<double> flat_raw, flat_adj;
            for (int k = 0; k < n_pol; ++k) {
                for (Eigen::Index c = 0; c < raw[k].size(); ++c) {
                    flat_raw.push_back(raw[k][c]);
                    flat_adj.push_back(reward[k][c]);
                }
            }
            rescaler.apply(flat_raw, flat_adj);
            const double f = rescaler.factor();
            for (int k = 0; k < n_pools; ++k) reward[k] *= f;
        }

        // Ascent step on every trained pool; per-prompt exact gradients.
        std::vector<Vec> grads =
            policy_gradient(state.logits, state.ref_logits, reward, config.beta);
        for (int k = 0; k < n_pools; ++k) {
            state.logits[k] += config.lr * grads[k];
            if (!state.logits[k].allFinite()) {
                throw NonFiniteEncountered("train: non-finite logits at step " +
                                           std::to_string(step));
            }
        }
        state.step = step;

        // Log the post-update policy; reward-transform trace is the step's.
        MetricsRow row;
        row.step = step;
        for (int k = 0; k < n_pol; ++k) {
            const Vec p = softmax(state.logits[k]);
            row.proxy_mean += expectation(p, raw[k]);
            row.gold_mean += expectation(p, gold[k]);
            row.kl_mean += kl_divergence(state.logits[k], state.ref_logits[k]);
            row.u_mean += expectation(p, unc[k]);
            row.penalty_mean += expectation(p, raw[k] - reward[k]);
        }
        row.proxy_mean /= n_pol;
        row.gold_mean /= n_pol;
        row.kl_mean /= n_pol;
        row.u_mean /= n_pol;
        row.penalty_mean /= n_pol;
        row.lambda_star = lam;
        row.g_norm_minv = g_norm_minv;
        row.advpo_penalty = advpo_pen;
        row.samplewise_penalty =
            prec != nullptr ? std::sqrt(config.B) * row.u_mean : 0.0;
        const double obj_diag = row.proxy_mean - row.penalty_mean -
                                config.beta * row.kl_mean - ref_term;
        if (!std::isfinite(obj_diag + row.gold_mean + row.u_mean)) {
            throw NonFiniteEncountered("train: non-finite metrics at step " +
                                       std::to_string(step));
        }

        if (step % config.eval_every == 0 && n_pools > n_pol) {
            double val = 0.0;
            for (int k = n_pol; k < n_pools; ++k) {
                val += expectation(softmax(state.logits[k]), raw[k]);
            }
            val /= static_cast<double>(n_pools - n_pol);
            row.has_val = true;
            row.val_proxy = val;
            if (!have_best || val > metrics.best_val_proxy) {
                have_best = true;
                metrics.best_val_proxy = val;
                metrics.best_step = step;
                metrics.best_checkpoint = state;
            }
        }
        metrics.rows.push_back(row);
    }

    if (!have_best) {
        metrics.best_checkpoint = state;
        metrics.best_step = config.steps;
        metrics.best_val_proxy = 0.0;
    }
    for (int k = 0; k < n_pol; ++k) {
        const Vec p = softmax(metrics.best_checkpoint.logits[k]);
        metrics.gold_at_best += expectation(p, gold[k]);
        metrics.proxy_at_best += expectation(p, raw[k]);
    }
    metrics.gold_at_best /= n_pol;
    metrics.proxy_at_best /= n_pol;
    return metrics;
}

}  // namespace pessilab
