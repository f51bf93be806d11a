#include "pessilab/reward_model.hpp"

#include <cmath>
#include <string>

#include "pessilab/rng.hpp"

namespace pessilab {

namespace {

constexpr std::uint64_t kEnsembleStream = 0x656e73;  // "ens"

double softplus(double t) {
    // log(1 + exp(t)), stable for large |t|.
    if (t > 0.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

}  // namespace

Mat preference_diffs(const SyntheticWorld& world,
                     const PreferenceDataset& data) {
    const int d = world.config.dim;
    Mat diffs(static_cast<Eigen::Index>(data.triples.size()), d);
    for (std::size_t i = 0; i < data.triples.size(); ++i) {
        const PreferenceTriple& t = data.triples[i];
        const CandidatePool& pool = world.pools.at(t.prompt_id);
        diffs.row(static_cast<Eigen::Index>(i)) =
            pool.embeddings.row(t.chosen_idx) -
            pool.embeddings.row(t.rejected_idx);
    }
    return diffs;
}

double bt_loss(const Vec& phi, const Mat& diffs, double ridge) {
    if (phi.size() != diffs.cols()) {
        throw DimensionMismatch("bt_loss: phi size vs embedding dim");
    }
    const Eigen::Index n = diffs.rows();
    if (n == 0) return 0.5 * ridge * phi.squaredNorm();
    Vec margins = diffs * phi;
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) total += softplus(-margins[i]);
    return total / static_cast<double>(n) + 0.5 * ridge * phi.squaredNorm();
}

double bt_loss(const Vec& phi, const SyntheticWorld& world,
               const PreferenceDataset& data, double ridge) {
    return bt_loss(phi, preference_diffs(world, data), ridge);
}

Vec bt_loss_grad(const Vec& phi, const Mat& diffs, double ridge) {
    if (phi.size() != diffs.cols()) {
        throw DimensionMismatch("bt_loss_grad: phi size vs embedding dim");
    }
    const Eigen::Index n = diffs.rows();
    if (n == 0) return ridge * phi;
    Vec margins = diffs * phi;
    Vec weights(n);
    for (Eigen::Index i = 0; i < n; ++i) weights[i] = -sigmoid(-margins[i]);
    Vec grad = diffs.transpose() * weights / static_cast<double>(n);
    grad += ridge * phi;
    return grad;
}

RewardHead fit_bt_diffs(const Mat& diffs, double ridge, const FitOptions& opts,
                        const Vec* init) {
    const int d = static_cast<int>(diffs.cols());
    Vec phi = init ? *init : Vec::Zero(d);
    double loss = bt_loss(phi, diffs, ridge);
    double step = 1.0;
    int iter = 0;
    double grad_norm = 0.0;
    for (; iter < opts.max_iters; ++iter) {
        Vec grad = bt_loss_grad(phi, diffs, ridge);
        grad_norm = grad.norm();
        if (grad_norm <= opts.grad_tol) break;
        // Backtracking line search (Armijo), warm-started from the last
        // accepted step.
        double eta = step * 2.0;
        const double gg = grad.squaredNorm();
        Vec cand;
        double cand_loss = 0.0;
        while (true) {
            cand = phi - eta * grad;
            cand_loss = bt_loss(cand, diffs, ridge);
            if (cand_loss <= loss - 1e-4 * eta * gg || eta < 1e-18) break;
            eta *= 0.5;
        }
        phi = cand;
        loss = cand_loss;
        step = eta;
    }
    RewardHead head;
    head.phi_hat = phi;
    head.ridge = ridge;
    head.fit_diag.final_loss = loss;
    head.fit_diag.grad_norm = grad_norm;
    head.fit_diag.iters = iter;
    head.fit_diag.converged = grad_norm <= opts.grad_tol;
    return head;
}

RewardHead fit_bt(const SyntheticWorld& world, const PreferenceDataset& data,
                  double ridge, const FitOptions& opts) {
    if (data.triples.empty()) {
        throw InvalidConfig("fit_bt: empty preference dataset");
    }
    return fit_bt_diffs(preference_diffs(world, data), ridge, opts);
}

double predict(const RewardHead& head, const Vec& e) {
    if (head.phi_hat.size() != e.size()) {
        throw DimensionMismatch("predict: phi size vs embedding size");
    }
    return head.phi_hat.dot(e);
}

EnsembleHeads fit_ensemble(const SyntheticWorld& world,
                           const PreferenceDataset& data, int K, double ridge,
                           std::uint64_t seed, double gamma,
                           const EnsembleOptions& opts) {
    if (K < 2) throw InvalidConfig("fit_ensemble: K must be >= 2");
    if (data.triples.empty()) {
        throw InvalidConfig("fit_ensemble: empty preference dataset");
    }
    const Mat diffs = preference_diffs(world, data);
    const Eigen::Index n = diffs.rows();
    const int d = static_cast<int>(diffs.cols());

    EnsembleHeads ens;
    ens.gamma = gamma;
    ens.heads.reserve(K);
    for (int k = 0; k < K; ++k) {
        Rng rng(mix_seed(seed, kEnsembleStream + static_cast<std::uint64_t>(k)));
        Mat rows = diffs;
        if (opts.bootstrap) {
            for (Eigen::Index i = 0; i < n; ++i) {
                rows.row(i) = diffs.row(static_cast<Eigen::Index>(
                    rng.integer(static_cast<std::uint64_t>(n))));
            }
        }
        Vec init = Vec::Zero(d);
        if (opts.init_jitter > 0.0) {
            for (int j = 0; j < d; ++j) init[j] = opts.init_jitter * rng.normal();
        }
        ens.heads.push_back(fit_bt_diffs(rows, ridge, opts.fit, &init));
    }
    return ens;
}

double ensemble_reward(const EnsembleHeads& ens, const Vec& e) {
    const std::size_t K = ens.heads.size();
    double mean = 0.0;
    std::vector<double> rewards(K);
    for (std::size_t k = 0; k < K; ++k) {
        rewards[k] = predict(ens.heads[k], e);
        mean += rewards[k];
    }
    mean /= static_cast<double>(K);
    double var = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double dk = rewards[k] - mean;
        var += dk * dk;
    }
    var /= static_cast<double>(K);
    const double penalty =
        ens.stat == PenaltyStat::Var ? var : std::sqrt(var);
    return mean - ens.gamma * penalty;
}

}  // namespace pessilab
