#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "pessilab/world.hpp"

namespace pessilab {

struct FitDiagnostics {
    double final_loss = 0.0;
    double grad_norm = 0.0;
    int iters = 0;
    bool converged = false;
};

struct RewardHead {
    Vec phi_hat;
    double ridge = 0.0;
    FitDiagnostics fit_diag;
};

enum class PenaltyStat : int { Var = 0, Std = 1 };

struct EnsembleHeads {
    std::vector<RewardHead> heads;
    double gamma = 1.0;
    PenaltyStat stat = PenaltyStat::Var;
};

struct FitOptions {
    int max_iters = 5000;
    double grad_tol = 1e-6;
};

struct EnsembleOptions {
    FitOptions fit;
    bool bootstrap = true;
    double init_jitter = 0.01;
};

/// Per-pair embedding differences e_chosen - e_rejected, one row per pair.
Mat preference_diffs(const SyntheticWorld& world, const PreferenceDataset& data);

/// Negative mean Bradley-Terry log-likelihood plus (ridge/2)||phi||^2.
double bt_loss(const Vec& phi, const Mat& diffs, double ridge);
double bt_loss(const Vec& phi, const SyntheticWorld& world,
               const PreferenceDataset& data, double ridge);

/// Analytic gradient of bt_loss.
Vec bt_loss_grad(const Vec& phi, const Mat& diffs, double ridge);

/// Full-batch gradient descent with backtracking line search from phi = 0
/// until ||grad|| <= grad_tol or max_iters. Convergence failure is reported
/// in the diagnostics, not thrown.
RewardHead fit_bt(const SyntheticWorld& world, const PreferenceDataset& data,
                  double ridge, const FitOptions& opts = {});
RewardHead fit_bt_diffs(const Mat& diffs, double ridge,
                        const FitOptions& opts = {},
                        const Vec* init = nullptr);

double predict(const RewardHead& head, const Vec& e);

/// K heads, each fit on an independent bootstrap resample with a distinct
/// initialization jitter; deterministic given seed.
EnsembleHeads fit_ensemble(const SyntheticWorld& world,
                           const PreferenceDataset& data, int K, double ridge,
                           std::uint64_t seed, double gamma = 1.0,
                           const EnsembleOptions& opts = {});

/// Mean reward across heads minus gamma times the population variance
/// (or standard deviation, per the configured penalty statistic).
double ensemble_reward(const EnsembleHeads& ens, const Vec& e);

}  // namespace pessilab
