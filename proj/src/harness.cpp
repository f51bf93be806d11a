#include "pessilab/harness.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "pessilab/svg.hpp"

namespace fs = std::filesystem;

namespace pessilab {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(),
               nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

Json config_to_json(const WorldConfig& cfg) {
    return Json{{"dim", cfg.dim},
                {"n_prompts", cfg.n_prompts},
                {"candidates_per_prompt", cfg.candidates_per_prompt},
                {"ood_fraction", cfg.ood_fraction},
                {"ood_shift", cfg.ood_shift},
                {"noise_rate", cfg.noise_rate},
                {"bt_temperature", cfg.bt_temperature},
                {"seed", cfg.seed},
                {"split_fractions", cfg.split_fractions},
                {"held_dims", cfg.held_dims},
                {"held_in_scale", cfg.held_in_scale},
                {"ood_perturb_held_sd", cfg.ood_perturb_held_sd},
                {"ood_perturb_sd", cfg.ood_perturb_sd}};
}

WorldConfig config_from_json(const Json& j) {
    WorldConfig cfg;
    cfg.dim = j.at("dim").get<int>();
    cfg.n_prompts = j.at("n_prompts").get<int>();
    cfg.candidates_per_prompt = j.at("candidates_per_prompt").get<int>();
    cfg.ood_fraction = j.at("ood_fraction").get<double>();
    cfg.ood_shift = j.at("ood_shift").get<double>();
    cfg.noise_rate = j.at("noise_rate").get<double>();
    cfg.bt_temperature = j.at("bt_temperature").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.split_fractions = j.at("split_fractions").get<std::array<double, 3>>();
    cfg.held_dims = j.at("held_dims").get<int>();
    cfg.held_in_scale = j.at("held_in_scale").get<double>();
    cfg.ood_perturb_held_sd = j.at("ood_perturb_held_sd").get<double>();
    cfg.ood_perturb_sd = j.at("ood_perturb_sd").get<double>();
    return cfg;
}

namespace {

Json vec_to_json(const Vec& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

Vec vec_from_json(const Json& j) {
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

Json mat_to_json(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        rows.push_back(vec_to_json(m.row(r)));
    }
    return rows;
}

Mat mat_from_json(const Json& j) {
    if (j.empty()) return Mat(0, 0);
    Mat m(static_cast<Eigen::Index>(j.size()),
          static_cast<Eigen::Index>(j[0].size()));
    for (std::size_t r = 0; r < j.size(); ++r) {
        m.row(static_cast<Eigen::Index>(r)) = vec_from_json(j[r]).transpose();
    }
    return m;
}

void require_version(const Json& j, const char* kind) {
    if (!j.contains("schema_version") ||
        j.at("schema_version").get<int>() != kSchemaVersion) {
        throw InvalidConfig(std::string(kind) + ": unsupported schema_version");
    }
    if (!j.contains("kind") || j.at("kind").get<std::string>() != kind) {
        throw InvalidConfig(std::string(kind) + ": wrong file kind");
    }
}

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

Json world_to_json(const SyntheticWorld& world) {
    Json pools = Json::array();
    for (const CandidatePool& pool : world.pools) {
        pools.push_back(
            Json{{"prompt_id", pool.prompt_id},
                 {"split", split_name(world.split_of[pool.prompt_id])},
                 {"is_ood", pool.is_ood},
                 {"embeddings", mat_to_json(pool.embeddings)}});
    }
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "world"},
                {"config", config_to_json(world.config)},
                {"phi_star", vec_to_json(world.phi_star)},
                {"held_axes", mat_to_json(world.held_axes)},
                {"pools", pools}};
}

SyntheticWorld world_from_json(const Json& j) {
    require_version(j, "world");
    SyntheticWorld world;
    world.config = config_from_json(j.at("config"));
    world.phi_star = vec_from_json(j.at("phi_star"));
    world.held_axes = mat_from_json(j.at("held_axes"));
    const Json& pools = j.at("pools");
    world.pools.resize(pools.size());
    world.split_of.resize(pools.size());
    for (std::size_t p = 0; p < pools.size(); ++p) {
        const Json& jp = pools[p];
        CandidatePool pool;
        pool.prompt_id = jp.at("prompt_id").get<int>();
        pool.is_ood = jp.at("is_ood").get<std::vector<std::uint8_t>>();
        pool.embeddings = mat_from_json(jp.at("embeddings"));
        const std::string split = jp.at("split").get<std::string>();
        Split s;
        if (split == "reward_train") {
            s = Split::RewardTrain;
        } else if (split == "policy") {
            s = Split::Policy;
        } else if (split == "validation") {
            s = Split::Validation;
        } else {
            throw InvalidConfig("world: unknown split " + split);
        }
        const int id = pool.prompt_id;
        if (id < 0 || id >= static_cast<int>(pools.size())) {
            throw InvalidConfig("world: prompt_id out of range");
        }
        world.split_of[id] = s;
        world.pools[id] = std::move(pool);
    }
    for (std::size_t p = 0; p < world.pools.size(); ++p) {
        const int id = static_cast<int>(p);
        switch (world.split_of[p]) {
            case Split::RewardTrain: world.reward_train_ids.push_back(id); break;
            case Split::Policy: world.policy_ids.push_back(id); break;
            case Split::Validation: world.validation_ids.push_back(id); break;
        }
    }
    return world;
}

Json prefs_to_json(const PreferenceDataset& data,
                   const std::string& config_hash) {
    Json triples = Json::array();
    for (std::size_t i = 0; i < data.triples.size(); ++i) {
        const PreferenceTriple& t = data.triples[i];
        triples.push_back(Json::array({t.prompt_id, t.chosen_idx,
                                       t.rejected_idx,
                                       static_cast<int>(data.flipped[i])}));
    }
    return Json{{"schema_version", kSchemaVersion},
                {"kind", "prefs"},
                {"provenance", Json{{"seed", data.seed},
                                    {"config_hash", config_hash}}},
                {"triples", triples}};
}

PreferenceDataset prefs_from_json(const Json& j) {
    require_version(j, "prefs");
    PreferenceDataset data;
    data.seed = j.at("provenance").at("seed").get<std::uint64_t>();
    data.config_hash =
        j.at("provenance").at("config_hash").get<std::string>();
    for (const Json& t : j.at("triples")) {
        data.triples.push_back({t.at(0).get<int>(), t.at(1).get<int>(),
                                t.at(2).get<int>()});
        data.flipped.push_back(static_cast<std::uint8_t>(t.at(3).get<int>()));
    }
    return data;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

Json load_json(const fs::path& path) {
    try {
        return Json::parse(read_text_file(path));
    } catch (const Json::parse_error& e) {
        throw IoError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void save_world(const SyntheticWorld& world, const fs::path& path) {
    write_text_file(path, world_to_json(world).dump());
}

SyntheticWorld load_world(const fs::path& path) {
    return world_from_json(load_json(path));
}

void save_prefs(const PreferenceDataset& data, const std::string& config_hash,
                const fs::path& path) {
    write_text_file(path, prefs_to_json(data, config_hash).dump());
}

PreferenceDataset load_prefs(const fs::path& path) {
    return prefs_from_json(load_json(path));
}

std::string metrics_to_csv(const RunMetrics& metrics) {
    std::ostringstream csv;
    csv << "step,proxy_mean,gold_mean,kl_mean,u_mean,penalty_mean,"
           "lambda_star,g_norm_minv,advpo_penalty,samplewise_penalty,"
           "val_proxy\n";
    for (const MetricsRow& r : metrics.rows) {
        csv << r.step << ',' << fmt_double(r.proxy_mean) << ','
            << fmt_double(r.gold_mean) << ',' << fmt_double(r.kl_mean) << ','
            << fmt_double(r.u_mean) << ',' << fmt_double(r.penalty_mean) << ','
            << fmt_double(r.lambda_star) << ',' << fmt_double(r.g_norm_minv)
            << ',' << fmt_double(r.advpo_penalty) << ','
            << fmt_double(r.samplewise_penalty) << ',';
        if (r.has_val) csv << fmt_double(r.val_proxy);
        csv << '\n';
    }
    return csv.str();
}

std::vector<MetricsRow> metrics_from_csv(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw IoError("metrics CSV: empty");
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 11) throw IoError("metrics CSV: bad row");
        MetricsRow r;
        r.step = std::stoi(f[0]);
        r.proxy_mean = std::stod(f[1]);
        r.gold_mean = std::stod(f[2]);
        r.kl_mean = std::stod(f[3]);
        r.u_mean = std::stod(f[4]);
        r.penalty_mean = std::stod(f[5]);
        r.lambda_star = std::stod(f[6]);
        r.g_norm_minv = std::stod(f[7]);
        r.advpo_penalty = std::stod(f[8]);
        r.samplewise_penalty = std::stod(f[9]);
        r.has_val = !f[10].empty();
        if (r.has_val) r.val_proxy = std::stod(f[10]);
        rows.push_back(r);
    }
    return rows;
}

std::string samples_to_csv(const SyntheticWorld& world, const RewardHead& head,
                           const PrecisionState& prec, const GpPosterior& gp) {
    std::ostringstream csv;
    csv << "prompt_id,cand_idx,is_ood,u_ci,gp_sd,proxy,gold,abs_err\n";
    for (int pid : world.policy_ids) {
        const CandidatePool& pool = world.pools[pid];
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c) {
            const Vec e = pool.embeddings.row(c);
            const double proxy = predict(head, e);
            const double gold = world.phi_star.dot(e);
            const double u = ci_uncertainty(prec, e);
            const double gp_sd = gp_predict(gp, e).second;
            csv << pid << ',' << c << ',' << int(pool.is_ood[c]) << ','
                << fmt_double(u) << ',' << fmt_double(gp_sd) << ','
                << fmt_double(proxy) << ',' << fmt_double(gold) << ','
                << fmt_double(std::abs(gold - proxy)) << '\n';
        }
    }
    return csv.str();
}

std::string manifest_hash(const Json& manifest) {
    Json stripped = manifest;
    stripped.erase("created_at");
    stripped.erase("manifest_hash");
    return sha256_hex(stripped.dump());
}

namespace {

Json train_config_to_json(const TrainConfig& cfg) {
    return Json{{"variant", variant_name(cfg.variant)},
                {"beta", cfg.beta},
                {"B", cfg.B},
                {"steps", cfg.steps},
                {"lr", cfg.lr},
                {"eval_every", cfg.eval_every},
                {"rescale", cfg.rescale},
                {"g_floor", cfg.g_floor},
                {"ref_reward_shift", cfg.ref_reward_shift},
                {"seed", cfg.seed}};
}

Json gp_config_to_json(const GpConfig& gp) {
    return Json{{"kernel", gp.kernel == KernelKind::Rbf ? "rbf" : "linear"},
                {"length_scale", gp.length_scale},
                {"sigma_n", gp.sigma_n},
                {"subset_size", gp.subset_size}};
}

}  // namespace

RunResult run_experiment(const SyntheticWorld& world,
                         const PreferenceDataset& prefs,
                         const RunOptions& opts, const fs::path& out_dir,
                         const fs::path& world_path,
                         const fs::path& prefs_path) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string());

    RunResult result;
    result.head = fit_bt(world, prefs, opts.head_ridge);
    PrecisionState prec = build_precision(world, prefs, opts.lambda_ridge);
    std::optional<EnsembleHeads> ens;
    if (opts.train.variant == Variant::Ensemble) {
        ens = fit_ensemble(world, prefs, opts.ensemble_k, opts.head_ridge,
                           opts.train.seed, opts.gamma);
        ens->stat = opts.penalty_stat;
    }
    result.metrics = train(world, result.head, &prec,
                           ens ? &*ens : nullptr, opts.train);

    // GP posterior over the reward-train embeddings with proxy targets,
    // recorded per candidate in the sample dump.
    std::size_t n_train = 0;
    for (int pid : world.reward_train_ids) {
        n_train += static_cast<std::size_t>(
            world.pools[pid].embeddings.rows());
    }
    Mat gp_x(static_cast<Eigen::Index>(n_train), world.config.dim);
    Vec gp_y(static_cast<Eigen::Index>(n_train));
    Eigen::Index row = 0;
    for (int pid : world.reward_train_ids) {
        const CandidatePool& pool = world.pools[pid];
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c, ++row) {
            gp_x.row(row) = pool.embeddings.row(c);
            gp_y[row] = predict(result.head, pool.embeddings.row(c));
        }
    }
    GpPosterior gp = gp_fit(gp_x, gp_y, opts.gp, opts.train.seed);

    write_text_file(out_dir / "metrics.csv", metrics_to_csv(result.metrics));
    write_text_file(out_dir / "samples.csv",
                    samples_to_csv(world, result.head, prec, gp));

    Json manifest{
        {"schema_version", kSchemaVersion},
        {"kind", "run_manifest"},
        {"created_at", now_iso8601()},
        {"variant", variant_name(opts.train.variant)},
        {"seeds", Json{{"train", opts.train.seed}}},
        {"config",
         Json{{"world", config_to_json(world.config)},
              {"train", train_config_to_json(opts.train)},
              {"reward", Json{{"head_ridge", opts.head_ridge},
                              {"ensemble_k", opts.ensemble_k},
                              {"gamma", opts.gamma},
                              {"penalty_stat",
                               opts.penalty_stat == PenaltyStat::Var ? "var"
                                                                     : "std"}}},
              {"uncertainty", Json{{"lambda_ridge", opts.lambda_ridge},
                                   {"gp", gp_config_to_json(opts.gp)},
                                   {"gp_targets", "proxy_head_rewards"}}}}},
        {"artifacts", Json{{"world", world_path.string()},
                           {"prefs", prefs_path.string()},
                           // Relative to the manifest's own directory.
                           {"metrics_csv", "metrics.csv"},
                           {"samples_csv", "samples.csv"}}},
        {"head", Json{{"phi_hat", vec_to_json(result.head.phi_hat)},
                      {"ridge", result.head.ridge},
                      {"fit", Json{{"final_loss", result.head.fit_diag.final_loss},
                                   {"grad_norm", result.head.fit_diag.grad_norm},
                                   {"iters", result.head.fit_diag.iters},
                                   {"converged", result.head.fit_diag.converged}}}}},
        {"best", Json{{"step", result.metrics.best_step},
                      {"val_proxy", result.metrics.best_val_proxy},
                      {"gold_at_best", result.metrics.gold_at_best},
                      {"proxy_at_best", result.metrics.proxy_at_best}}},
    };
    Json logits = Json::array();
    for (const Vec& l : result.metrics.best_checkpoint.logits) {
        logits.push_back(vec_to_json(l));
    }
    manifest["checkpoint"] = Json{{"step", result.metrics.best_step},
                                  {"prompts", result.metrics.trained_prompts},
                                  {"logits", logits}};

    std::string input_blob = config_to_json(world.config).dump() +
                             train_config_to_json(opts.train).dump();
    if (!world_path.empty()) {
        if (!fs::exists(world_path)) {
            throw IoError("manifest references missing " + world_path.string());
        }
        input_blob += read_text_file(world_path);
    }
    if (!prefs_path.empty()) {
        if (!fs::exists(prefs_path)) {
            throw IoError("manifest references missing " + prefs_path.string());
        }
        input_blob += read_text_file(prefs_path);
    }
    manifest["input_hash"] = sha256_hex(input_blob);
    manifest["manifest_hash"] = manifest_hash(manifest);
    write_text_file(out_dir / "manifest.json", manifest.dump(2));
    result.manifest = manifest;
    return result;
}

double late_phase_slope(const std::vector<MetricsRow>& rows, double fraction) {
    if (rows.size() < 2) return 0.0;
    const std::size_t start =
        static_cast<std::size_t>(std::floor(rows.size() * (1.0 - fraction)));
    const std::size_t first = std::min(start, rows.size() - 2);
    double mx = 0.0, my = 0.0;
    const double n = static_cast<double>(rows.size() - first);
    for (std::size_t i = first; i < rows.size(); ++i) {
        mx += rows[i].step;
        my += rows[i].u_mean;
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = first; i < rows.size(); ++i) {
        sxy += (rows[i].step - mx) * (rows[i].u_mean - my);
        sxx += (rows[i].step - mx) * (rows[i].step - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

BSweepReport sweep_b(const SyntheticWorld& world,
                     const PreferenceDataset& prefs, RunOptions opts,
                     const std::vector<double>& b_grid,
                     double stability_threshold, const fs::path& out_dir,
                     const fs::path& world_path, const fs::path& prefs_path) {
    if (b_grid.empty()) throw InvalidConfig("sweep_b: empty B grid");
    opts.train.variant = Variant::Advpo;
    BSweepReport report;
    for (double b : b_grid) {
        opts.train.B = b;
        char name[32];
        std::snprintf(name, sizeof(name), "B_%g", b);
        RunResult run = run_experiment(world, prefs, opts, out_dir / name,
                                       world_path, prefs_path);
        BSweepEntry entry;
        entry.B = b;
        entry.u_slope = late_phase_slope(run.metrics.rows);
        entry.best_val_proxy = run.metrics.best_val_proxy;
        entry.gold_at_best = run.metrics.gold_at_best;
        entry.stable = entry.u_slope <= stability_threshold;
        report.entries.push_back(entry);
    }
    const BSweepEntry* chosen = nullptr;
    for (const BSweepEntry& e : report.entries) {
        if (!e.stable) continue;
        if (chosen == nullptr || e.best_val_proxy > chosen->best_val_proxy ||
            (e.best_val_proxy == chosen->best_val_proxy && e.B < chosen->B)) {
            chosen = &e;
        }
    }
    report.any_stable = chosen != nullptr;
    if (chosen == nullptr) {
        for (const BSweepEntry& e : report.entries) {
            if (chosen == nullptr || e.best_val_proxy > chosen->best_val_proxy) {
                chosen = &e;
            }
        }
    }
    report.selected_b = chosen->B;
    return report;
}

ComparisonTable compare_runs(const std::vector<RunInfo>& runs,
                             double tie_threshold) {
    std::map<std::string, std::map<std::uint64_t, double>> by_variant;
    for (const RunInfo& r : runs) {
        auto [it, inserted] = by_variant[r.variant].emplace(r.seed,
                                                            r.gold_at_best);
        if (!inserted) {
            throw SeedMismatch("compare: duplicate seed " +
                               std::to_string(r.seed) + " for variant " +
                               r.variant);
        }
    }
    if (by_variant.empty()) throw InvalidConfig("compare: no runs");

    std::vector<std::string> variants;
    for (const auto& [name, _] : by_variant) variants.push_back(name);
    const auto& ref_seeds = by_variant.begin()->second;
    for (const auto& [name, seeds] : by_variant) {
        if (seeds.size() != ref_seeds.size()) {
            throw SeedMismatch("compare: variant " + name +
                               " has a different seed set");
        }
        for (const auto& [seed, _] : seeds) {
            if (ref_seeds.find(seed) == ref_seeds.end()) {
                throw SeedMismatch("compare: variant " + name +
                                   " has a different seed set");
            }
        }
    }

    std::vector<std::pair<std::string, std::string>> pairs;
    if (variants.size() == 1) {
        pairs.emplace_back(variants[0], variants[0]);
    } else {
        for (std::size_t i = 0; i < variants.size(); ++i) {
            for (std::size_t j = i + 1; j < variants.size(); ++j) {
                pairs.emplace_back(variants[i], variants[j]);
            }
        }
    }

    ComparisonTable table;
    for (const auto& [a, b] : pairs) {
        PairCounts counts;
        counts.variant_a = a;
        counts.variant_b = b;
        for (const auto& [seed, gold_a] : by_variant[a]) {
            const double gold_b = by_variant[b].at(seed);
            const double delta = gold_a - gold_b;
            if (std::abs(delta) < tie_threshold) {
                ++counts.tie;
            } else if (delta > 0.0) {
                ++counts.win;
            } else {
                ++counts.lose;
            }
        }
        table.push_back(counts);
    }
    return table;
}

// ---------------------------------------------------------------------------
// CLI
// ---------------------------------------------------------------------------

namespace {

fs::path resolve_out(const std::string& path) {
    fs::path p(path);
    const char* root = std::getenv("PESSILAB_OUT");
    if (root != nullptr && *root != '\0' && p.is_relative()) {
        return fs::path(root) / p;
    }
    return p;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) grid.push_back(std::stod(item));
    }
    return grid;
}

struct CliRunFlags {
    std::string world_path;
    std::string prefs_path;
    std::string out;
    std::string variant = "vanilla";
    RunOptions opts;
    std::string penalty_stat = "var";
    std::string gp_kernel = "rbf";
};

void add_run_options(CLI::App* cmd, CliRunFlags& f, bool with_variant) {
    cmd->add_option("--world", f.world_path, "world JSON")->required();
    cmd->add_option("--prefs", f.prefs_path, "preference JSON")->required();
    cmd->add_option("--out", f.out, "output directory")->required();
    if (with_variant) {
        cmd->add_option("--variant", f.variant, "training variant")
            ->check(CLI::IsMember({"vanilla", "samplewise", "ensemble",
                                   "advpo", "advpo_noref"}))
            ->required();
        cmd->add_option("--B", f.opts.train.B, "squared confidence radius");
    }
    cmd->add_option("--beta", f.opts.train.beta, "KL coefficient");
    cmd->add_option("--steps", f.opts.train.steps, "optimization steps");
    cmd->add_option("--lr", f.opts.train.lr, "learning rate");
    cmd->add_option("--seed", f.opts.train.seed, "training seed");
    cmd->add_option("--eval-every", f.opts.train.eval_every,
                    "validation cadence");
    cmd->add_flag("--rescale", f.opts.train.rescale,
                  "dynamic reward rescaling");
    cmd->add_option("--ref-shift", f.opts.train.ref_reward_shift,
                    "constant added to reference rewards");
    cmd->add_option("--ridge", f.opts.head_ridge, "head ridge");
    cmd->add_option("--lambda", f.opts.lambda_ridge, "M_D ridge");
    cmd->add_option("--gamma", f.opts.gamma, "ensemble penalty coefficient");
    cmd->add_option("--ensemble-k", f.opts.ensemble_k, "ensemble size");
    cmd->add_option("--penalty-stat", f.penalty_stat, "var|std")
        ->check(CLI::IsMember({"var", "std"}));
    cmd->add_option("--gp-kernel", f.gp_kernel, "rbf|linear")
        ->check(CLI::IsMember({"rbf", "linear"}));
    cmd->add_option("--gp-length-scale", f.opts.gp.length_scale,
                    "RBF length scale");
    cmd->add_option("--gp-sigma-n", f.opts.gp.sigma_n, "GP noise sd");
    cmd->add_option("--gp-subset", f.opts.gp.subset_size,
                    "GP training subset size");
}

void finish_run_flags(CliRunFlags& f) {
    f.opts.train.variant = *parse_variant(f.variant);
    f.opts.penalty_stat =
        f.penalty_stat == "var" ? PenaltyStat::Var : PenaltyStat::Std;
    f.opts.gp.kernel =
        f.gp_kernel == "rbf" ? KernelKind::Rbf : KernelKind::Linear;
}

int cli_gen_data(const WorldConfig& cfg, int pairs, const std::string& out) {
    const fs::path dir = resolve_out(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string());

    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset prefs =
        gen_preferences(world, pairs, cfg.noise_rate, cfg.seed);
    const std::string config_hash = sha256_hex(config_to_json(cfg).dump());

    const fs::path world_path = dir / "world.json";
    const fs::path prefs_path = dir / "prefs.json";
    save_world(world, world_path);
    save_prefs(prefs, config_hash, prefs_path);

    std::cout << "world " << world_path.string() << " sha256 "
              << sha256_hex(read_text_file(world_path)) << "\n"
              << "prefs " << prefs_path.string() << " sha256 "
              << sha256_hex(read_text_file(prefs_path)) << "\n";
    return 0;
}

int cli_run(const CliRunFlags& flags) {
    const fs::path out = resolve_out(flags.out);
    SyntheticWorld world = load_world(flags.world_path);
    PreferenceDataset prefs = load_prefs(flags.prefs_path);
    RunResult run = run_experiment(world, prefs, flags.opts, out,
                                   flags.world_path, flags.prefs_path);
    std::cout << "variant=" << variant_name(flags.opts.train.variant)
              << " B=" << fmt_double(flags.opts.train.B)
              << " best_step=" << run.metrics.best_step
              << " gold_at_best=" << fmt_double(run.metrics.gold_at_best)
              << " proxy_at_best=" << fmt_double(run.metrics.proxy_at_best)
              << "\n";
    return 0;
}

int cli_sweep_b(const CliRunFlags& flags, const std::string& grid_text,
                double stability_threshold) {
    const fs::path out = resolve_out(flags.out);
    const std::vector<double> grid = parse_grid(grid_text);
    if (grid.empty()) throw InvalidConfig("sweep-b: empty --b-grid");
    SyntheticWorld world = load_world(flags.world_path);
    PreferenceDataset prefs = load_prefs(flags.prefs_path);
    BSweepReport report =
        sweep_b(world, prefs, flags.opts, grid, stability_threshold, out,
                flags.world_path, flags.prefs_path);
    Json entries = Json::array();
    for (const BSweepEntry& e : report.entries) {
        entries.push_back(Json{{"B", e.B},
                               {"u_slope", e.u_slope},
                               {"best_val_proxy", e.best_val_proxy},
                               {"gold_at_best", e.gold_at_best},
                               {"stable", e.stable}});
        std::cout << "B=" << fmt_double(e.B)
                  << " u_slope=" << fmt_double(e.u_slope)
                  << " best_val_proxy=" << fmt_double(e.best_val_proxy)
                  << (e.stable ? " stable" : " unstable") << "\n";
    }
    if (!report.any_stable) {
        std::cerr << "warning: no B stabilizes uncertainty at threshold "
                  << fmt_double(stability_threshold)
                  << "; selecting by validation reward only\n";
    }
    Json selection{{"schema_version", kSchemaVersion},
                   {"kind", "b_sweep"},
                   {"stability_threshold", stability_threshold},
                   {"entries", entries},
                   {"selected_b", report.selected_b},
                   {"any_stable", report.any_stable}};
    write_text_file(out / "selection.json", selection.dump(2));
    std::cout << "selected_b=" << fmt_double(report.selected_b) << "\n";
    return 0;
}

int cli_analyze(const std::string& run_dir_text, const std::string& out_text) {
    const fs::path run_dir = resolve_out(run_dir_text);
    const fs::path out = out_text.empty() ? run_dir : resolve_out(out_text);
    std::error_code ec;
    fs::create_directories(out, ec);

    // Per-sample dump -> correlation between U and |gold - proxy|.
    std::istringstream samples(read_text_file(run_dir / "samples.csv"));
    std::string line;
    std::getline(samples, line);
    std::vector<std::pair<double, double>> pairs;
    std::vector<double> us, errs;
    std::vector<int> oods;
    while (std::getline(samples, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> f = split_csv_line(line);
        if (f.size() != 8) throw IoError("samples.csv: bad row");
        pairs.emplace_back(std::stod(f[3]), std::stod(f[7]));
        us.push_back(std::stod(f[3]));
        errs.push_back(std::stod(f[7]));
        oods.push_back(std::stoi(f[2]));
    }
    const CorrelationReport corr = correlation_report(pairs);

    const std::vector<MetricsRow> rows =
        metrics_from_csv(read_text_file(run_dir / "metrics.csv"));
    std::vector<double> steps, proxy, gold, u;
    for (const MetricsRow& r : rows) {
        steps.push_back(r.step);
        proxy.push_back(r.proxy_mean);
        gold.push_back(r.gold_mean);
        u.push_back(r.u_mean);
    }

    Json summary{{"schema_version", kSchemaVersion},
                 {"kind", "analysis"},
                 {"n_samples", pairs.size()},
                 {"pearson", corr.pearson},
                 {"spearman", corr.spearman}};
    write_text_file(out / "summary.json", summary.dump(2));

    std::vector<SvgSeries> curve_series{
        {"proxy reward", "#1f77b4", steps, proxy, false, false},
        {"gold reward", "#2ca02c", steps, gold, false, false},
        {"uncertainty", "#d62728", steps, u, true, false}};
    write_text_file(out / "curves.svg",
                    svg_chart("training dynamics", "step", "reward",
                              "uncertainty", curve_series));

    std::vector<double> u_in, e_in, u_ood, e_ood;
    for (std::size_t i = 0; i < us.size(); ++i) {
        if (oods[i] != 0) {
            u_ood.push_back(us[i]);
            e_ood.push_back(errs[i]);
        } else {
            u_in.push_back(us[i]);
            e_in.push_back(errs[i]);
        }
    }
    std::vector<SvgSeries> scatter_series{
        {"in-distribution", "#1f77b4", u_in, e_in, false, true},
        {"shifted tail", "#d62728", u_ood, e_ood, false, true}};
    write_text_file(out / "scatter.svg",
                    svg_chart("uncertainty vs reward gap", "U_ci",
                              "|gold - proxy|", "", scatter_series));

    std::cout << "n=" << pairs.size() << " pearson=" << fmt_double(corr.pearson)
              << " spearman=" << fmt_double(corr.spearman) << "\n";
    return 0;
}

int cli_compare(const std::vector<std::string>& run_dirs,
                const std::string& out_text, double tie_threshold) {
    std::vector<RunInfo> infos;
    for (const std::string& dir_text : run_dirs) {
        const fs::path dir = resolve_out(dir_text);
        const Json manifest = load_json(dir / "manifest.json");
        RunInfo info;
        info.variant = manifest.at("variant").get<std::string>();
        info.seed = manifest.at("seeds").at("train").get<std::uint64_t>();
        info.gold_at_best =
            manifest.at("best").at("gold_at_best").get<double>();
        infos.push_back(info);
    }
    const ComparisonTable table = compare_runs(infos, tie_threshold);

    std::ostringstream csv;
    csv << "variant_a,variant_b,win,tie,lose\n";
    for (const PairCounts& p : table) {
        csv << p.variant_a << ',' << p.variant_b << ',' << p.win << ','
            << p.tie << ',' << p.lose << '\n';
        std::cout << p.variant_a << " vs " << p.variant_b << ": win=" << p.win
                  << " tie=" << p.tie << " lose=" << p.lose << "\n";
    }
    if (!out_text.empty()) {
        write_text_file(resolve_out(out_text), csv.str());
    }
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"pessilab: reward-uncertainty and pessimistic policy "
                 "optimization laboratory"};
    app.require_subcommand(1);

    // gen-data
    WorldConfig cfg;
    int pairs = 2000;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data",
                                       "generate a synthetic world and "
                                       "preference dataset");
    gen->add_option("--dim", cfg.dim, "embedding dimension");
    gen->add_option("--prompts", cfg.n_prompts, "number of prompts");
    gen->add_option("--candidates", cfg.candidates_per_prompt,
                    "candidates per prompt");
    gen->add_option("--ood-frac", cfg.ood_fraction,
                    "OOD fraction of policy pools");
    gen->add_option("--ood-shift", cfg.ood_shift, "OOD shift magnitude");
    gen->add_option("--noise", cfg.noise_rate, "label flip probability");
    gen->add_option("--tau", cfg.bt_temperature, "BT temperature");
    gen->add_option("--pairs", pairs, "preference pairs");
    gen->add_option("--seed", cfg.seed, "world seed");
    std::string splits_text;
    gen->add_option("--splits", splits_text,
                    "reward,policy,validation fractions");
    gen->add_option("--held-dims", cfg.held_dims, "held subspace dimension");
    gen->add_option("--held-in-scale", cfg.held_in_scale,
                    "in-distribution coverage of the held subspace");
    gen->add_option("--ood-perturb-held", cfg.ood_perturb_held_sd,
                    "OOD perturbation sd inside the held subspace");
    gen->add_option("--ood-perturb", cfg.ood_perturb_sd,
                    "OOD perturbation sd elsewhere");
    gen->add_option("--out", gen_out, "output directory")->required();

    // run
    CliRunFlags run_flags;
    CLI::App* run = app.add_subcommand("run", "train one variant");
    add_run_options(run, run_flags, true);

    // sweep-b
    CliRunFlags sweep_flags;
    std::string grid_text = "1,5,10,15";
    double stability_threshold = 1e-4;
    CLI::App* sweep = app.add_subcommand("sweep-b",
                                         "sweep B for advpo and select the "
                                         "stable maximizer");
    add_run_options(sweep, sweep_flags, false);
    sweep->add_option("--b-grid", grid_text, "comma-separated B grid");
    sweep->add_option("--stability-threshold", stability_threshold,
                      "late-phase u_mean slope threshold");

    // analyze
    std::string analyze_run, analyze_out;
    CLI::App* analyze = app.add_subcommand("analyze",
                                           "correlation report and figures "
                                           "for a finished run");
    analyze->add_option("--run", analyze_run, "run directory")->required();
    analyze->add_option("--out", analyze_out, "output directory");

    // compare
    std::vector<std::string> compare_dirs;
    std::string compare_out;
    double tie_threshold = 0.01;
    CLI::App* compare = app.add_subcommand("compare",
                                           "pairwise win/tie/lose table over "
                                           "run manifests");
    compare->add_option("--runs", compare_dirs, "run directories")
        ->required()
        ->expected(-1);
    compare->add_option("--out", compare_out, "comparison CSV path");
    compare->add_option("--tie-threshold", tie_threshold,
                        "gold-reward tie threshold");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            if (!splits_text.empty()) {
                const std::vector<double> f = parse_grid(splits_text);
                if (f.size() != 3) {
                    throw InvalidConfig("--splits needs three fractions");
                }
                cfg.split_fractions = {f[0], f[1], f[2]};
            }
            return cli_gen_data(cfg, pairs, gen_out);
        }
        if (run->parsed()) {
            finish_run_flags(run_flags);
            return cli_run(run_flags);
        }
        if (sweep->parsed()) {
            finish_run_flags(sweep_flags);
            return cli_sweep_b(sweep_flags, grid_text, stability_threshold);
        }
        if (analyze->parsed()) return cli_analyze(analyze_run, analyze_out);
        if (compare->parsed()) {
            return cli_compare(compare_dirs, compare_out, tie_threshold);
        }
    } catch (const DegenerateInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 5;
    } catch (const NonFiniteEncountered& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}

}  // namespace pessilab
