#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pessilab/policy.hpp"
#include "pessilab/uncertainty.hpp"
#include "pessilab/world.hpp"

namespace pessilab {

using Json = nlohmann::json;

constexpr int kSchemaVersion = 1;

std::string sha256_hex(const std::string& bytes);
std::string fmt_double(double v);  // shortest round-trip-safe decimal

Json config_to_json(const WorldConfig& cfg);
WorldConfig config_from_json(const Json& j);

Json world_to_json(const SyntheticWorld& world);
SyntheticWorld world_from_json(const Json& j);

Json prefs_to_json(const PreferenceDataset& data,
                   const std::string& config_hash);
PreferenceDataset prefs_from_json(const Json& j);

void write_text_file(const std::filesystem::path& path,
                     const std::string& content);
std::string read_text_file(const std::filesystem::path& path);
Json load_json(const std::filesystem::path& path);

void save_world(const SyntheticWorld& world, const std::filesystem::path& path);
SyntheticWorld load_world(const std::filesystem::path& path);
void save_prefs(const PreferenceDataset& data, const std::string& config_hash,
                const std::filesystem::path& path);
PreferenceDataset load_prefs(const std::filesystem::path& path);

/// Everything one `run` invocation needs beyond the world and preferences.
struct RunOptions {
    TrainConfig train;
    double head_ridge = 1e-3;
    double lambda_ridge = 1.0;
    int ensemble_k = 3;
    double gamma = 1.0;
    PenaltyStat penalty_stat = PenaltyStat::Var;
    GpConfig gp;
};

struct RunResult {
    RunMetrics metrics;
    RewardHead head;
    Json manifest;
};

std::string metrics_to_csv(const RunMetrics& metrics);
std::vector<MetricsRow> metrics_from_csv(const std::string& csv);

/// Per-candidate dump over policy-split pools:
/// prompt_id, cand_idx, is_ood, u_ci, gp_sd, proxy, gold, abs_err.
std::string samples_to_csv(const SyntheticWorld& world, const RewardHead& head,
                           const PrecisionState& prec, const GpPosterior& gp);

/// Fits the head, builds M_D, trains the requested variant and writes
/// metrics.csv, samples.csv and manifest.json into out_dir.
RunResult run_experiment(const SyntheticWorld& world,
                         const PreferenceDataset& prefs,
                         const RunOptions& opts,
                         const std::filesystem::path& out_dir,
                         const std::filesystem::path& world_path = {},
                         const std::filesystem::path& prefs_path = {});

/// The manifest hash covers the whole document except created_at and the
/// hash field itself.
std::string manifest_hash(const Json& manifest);

/// Least-squares slope of u_mean per step over the final `fraction` of rows.
double late_phase_slope(const std::vector<MetricsRow>& rows,
                        double fraction = 0.2);

struct BSweepEntry {
    double B = 0.0;
    double u_slope = 0.0;
    double best_val_proxy = 0.0;
    double gold_at_best = 0.0;
    bool stable = false;
};

struct BSweepReport {
    std::vector<BSweepEntry> entries;
    double selected_b = 0.0;
    bool any_stable = false;  // false means NoStableB: max-val fallback
};

BSweepReport sweep_b(const SyntheticWorld& world, const PreferenceDataset& prefs,
                     RunOptions opts, const std::vector<double>& b_grid,
                     double stability_threshold,
                     const std::filesystem::path& out_dir,
                     const std::filesystem::path& world_path = {},
                     const std::filesystem::path& prefs_path = {});

struct RunInfo {
    std::string variant;
    std::uint64_t seed = 0;
    double gold_at_best = 0.0;
};

struct PairCounts {
    std::string variant_a;
    std::string variant_b;
    int win = 0;
    int tie = 0;
    int lose = 0;
};

using ComparisonTable = std::vector<PairCounts>;

/// Pairwise win/tie/lose by gold-at-best-checkpoint over common seeds.
/// Tie threshold 0.01 gold units. Throws SeedMismatch when the variants were
/// not run on identical seed sets.
ComparisonTable compare_runs(const std::vector<RunInfo>& runs,
                             double tie_threshold = 0.01);

/// CLI entry point; returns the process exit code (0 ok, 2 usage/config,
/// 3 I/O, 4 non-finite, 5 degenerate input).
int run_cli(const std::vector<std::string>& args);

}  // namespace pessilab
