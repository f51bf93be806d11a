#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pessilab/advpo.hpp"
#include "pessilab/harness.hpp"
#include "pessilab/policy.hpp"
#include "pessilab/reward_model.hpp"
#include "pessilab/uncertainty.hpp"
#include "pessilab/world.hpp"

namespace py = pybind11;
using namespace pessilab;

namespace {

py::dict metrics_to_dict(const RunMetrics& m) {
    std::vector<int> step;
    std::vector<double> proxy, gold, kl, u, penalty, lam, val;
    for (const MetricsRow& r : m.rows) {
        step.push_back(r.step);
        proxy.push_back(r.proxy_mean);
        gold.push_back(r.gold_mean);
        kl.push_back(r.kl_mean);
        u.push_back(r.u_mean);
        penalty.push_back(r.penalty_mean);
        lam.push_back(r.lambda_star);
        val.push_back(r.has_val ? r.val_proxy
                                : std::numeric_limits<double>::quiet_NaN());
    }
    py::dict d;
    d["step"] = step;
    d["proxy_mean"] = proxy;
    d["gold_mean"] = gold;
    d["kl_mean"] = kl;
    d["u_mean"] = u;
    d["penalty_mean"] = penalty;
    d["lambda_star"] = lam;
    d["val_proxy"] = val;
    d["best_step"] = m.best_step;
    d["best_val_proxy"] = m.best_val_proxy;
    d["gold_at_best"] = m.gold_at_best;
    d["proxy_at_best"] = m.proxy_at_best;
    return d;
}

}  // namespace

PYBIND11_MODULE(_pessilab, m) {
    m.doc() = "Reward-uncertainty estimation and pessimistic policy "
              "optimization in a synthetic embedding world";

    py::register_exception<Error>(m, "PessilabError");

    py::class_<WorldConfig>(m, "WorldConfig")
        .def(py::init<>())
        .def_readwrite("dim", &WorldConfig::dim)
        .def_readwrite("n_prompts", &WorldConfig::n_prompts)
        .def_readwrite("candidates_per_prompt",
                       &WorldConfig::candidates_per_prompt)
        .def_readwrite("ood_fraction", &WorldConfig::ood_fraction)
        .def_readwrite("ood_shift", &WorldConfig::ood_shift)
        .def_readwrite("noise_rate", &WorldConfig::noise_rate)
        .def_readwrite("bt_temperature", &WorldConfig::bt_temperature)
        .def_readwrite("seed", &WorldConfig::seed)
        .def_readwrite("split_fractions", &WorldConfig::split_fractions)
        .def_readwrite("held_dims", &WorldConfig::held_dims)
        .def_readwrite("held_in_scale", &WorldConfig::held_in_scale)
        .def_readwrite("ood_perturb_held_sd", &WorldConfig::ood_perturb_held_sd)
        .def_readwrite("ood_perturb_sd", &WorldConfig::ood_perturb_sd);

    py::class_<CandidatePool>(m, "CandidatePool")
        .def_readonly("prompt_id", &CandidatePool::prompt_id)
        .def_readonly("embeddings", &CandidatePool::embeddings)
        .def_readonly("is_ood", &CandidatePool::is_ood);

    py::class_<SyntheticWorld>(m, "SyntheticWorld")
        .def_readonly("config", &SyntheticWorld::config)
        .def_readonly("phi_star", &SyntheticWorld::phi_star)
        .def_readonly("pools", &SyntheticWorld::pools)
        .def_readonly("reward_train_ids", &SyntheticWorld::reward_train_ids)
        .def_readonly("policy_ids", &SyntheticWorld::policy_ids)
        .def_readonly("validation_ids", &SyntheticWorld::validation_ids);

    py::class_<PreferenceTriple>(m, "PreferenceTriple")
        .def_readonly("prompt_id", &PreferenceTriple::prompt_id)
        .def_readonly("chosen_idx", &PreferenceTriple::chosen_idx)
        .def_readonly("rejected_idx", &PreferenceTriple::rejected_idx);

    py::class_<PreferenceDataset>(m, "PreferenceDataset")
        .def_readonly("triples", &PreferenceDataset::triples)
        .def_readonly("seed", &PreferenceDataset::seed);

    py::class_<RewardHead>(m, "RewardHead")
        .def_readonly("phi_hat", &RewardHead::phi_hat)
        .def_readonly("ridge", &RewardHead::ridge)
        .def_property_readonly("converged", [](const RewardHead& h) {
            return h.fit_diag.converged;
        });

    py::class_<EnsembleHeads>(m, "EnsembleHeads")
        .def_readonly("gamma", &EnsembleHeads::gamma)
        .def_property_readonly("size", [](const EnsembleHeads& e) {
            return e.heads.size();
        });

    py::class_<PrecisionState>(m, "PrecisionState")
        .def_readonly("lambda_ridge", &PrecisionState::lambda_ridge)
        .def_readonly("n_embeddings", &PrecisionState::n_embeddings)
        .def_property_readonly("matrix", [](const PrecisionState& p) {
            return p.m.entries();
        });

    py::class_<PessimisticAdjustment>(m, "PessimisticAdjustment")
        .def_readonly("g", &PessimisticAdjustment::g)
        .def_readonly("lambda_star", &PessimisticAdjustment::lambda_star)
        .def_readonly("minv_g", &PessimisticAdjustment::minv_g)
        .def_readonly("phi_pess", &PessimisticAdjustment::phi_pess)
        .def_readonly("inner_value", &PessimisticAdjustment::inner_value)
        .def_readonly("active", &PessimisticAdjustment::active);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("beta", &TrainConfig::beta)
        .def_readwrite("B", &TrainConfig::B)
        .def_readwrite("steps", &TrainConfig::steps)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("eval_every", &TrainConfig::eval_every)
        .def_readwrite("rescale", &TrainConfig::rescale)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_property("variant",
                      [](const TrainConfig& c) {
                          return std::string(variant_name(c.variant));
                      },
                      [](TrainConfig& c, const std::string& name) {
                          auto v = parse_variant(name);
                          if (!v) throw InvalidConfig("unknown variant " + name);
                          c.variant = *v;
                      });

    m.def("gen_world", &gen_world, py::arg("config"));
    m.def("gold_reward", &gold_reward, py::arg("world"), py::arg("prompt_id"),
          py::arg("cand_idx"));
    m.def("gen_preferences", &gen_preferences, py::arg("world"),
          py::arg("n_pairs"), py::arg("noise_rate"), py::arg("seed"));

    m.def("bt_loss",
          [](const Vec& phi, const SyntheticWorld& world,
             const PreferenceDataset& data, double ridge) {
              return bt_loss(phi, world, data, ridge);
          },
          py::arg("phi"), py::arg("world"), py::arg("data"), py::arg("ridge"));
    m.def("fit_bt",
          [](const SyntheticWorld& world, const PreferenceDataset& data,
             double ridge) { return fit_bt(world, data, ridge); },
          py::arg("world"), py::arg("data"), py::arg("ridge") = 1e-3);
    m.def("predict", &predict, py::arg("head"), py::arg("e"));
    m.def("fit_ensemble",
          [](const SyntheticWorld& world, const PreferenceDataset& data, int K,
             double ridge, std::uint64_t seed, double gamma) {
              return fit_ensemble(world, data, K, ridge, seed, gamma);
          },
          py::arg("world"), py::arg("data"), py::arg("K"), py::arg("ridge"),
          py::arg("seed"), py::arg("gamma") = 1.0);
    m.def("ensemble_reward", &ensemble_reward, py::arg("ensemble"),
          py::arg("e"));

    m.def("build_precision", &build_precision, py::arg("world"),
          py::arg("data"), py::arg("lambda_ridge") = 1.0);
    m.def("ci_uncertainty", &ci_uncertainty, py::arg("precision"),
          py::arg("e"));
    m.def("correlation_report",
          [](const std::vector<std::pair<double, double>>& samples) {
              const CorrelationReport r = correlation_report(samples);
              return py::make_tuple(r.pearson, r.spearman);
          },
          py::arg("samples"));

    m.def("lambda_star", &lambda_star, py::arg("precision"), py::arg("g"),
          py::arg("B"), py::arg("g_floor") = 1e-9);
    m.def("pessimistic_adjustment", &make_adjustment, py::arg("head"),
          py::arg("precision"), py::arg("g"), py::arg("B"),
          py::arg("g_floor") = 1e-9);
    m.def("adjusted_reward", &adjusted_reward, py::arg("head"),
          py::arg("adjustment"), py::arg("e"));
    m.def("inner_min_value", &inner_min_value, py::arg("head"),
          py::arg("precision"), py::arg("g"), py::arg("B"));
    m.def("oracle_inner_min", &oracle_inner_min, py::arg("head"),
          py::arg("precision"), py::arg("g"), py::arg("B"),
          py::arg("iters") = 200);
    m.def("samplewise_adjusted_reward", &samplewise_adjusted_reward,
          py::arg("head"), py::arg("precision"), py::arg("B"), py::arg("e"));
    m.def("pessimism_gap",
          [](const PrecisionState& prec, double B,
             const std::vector<Vec>& batch) {
              const PessimismGap gap = pessimism_gap(prec, B, batch);
              return py::make_tuple(gap.advpo_penalty, gap.samplewise_penalty);
          },
          py::arg("precision"), py::arg("B"), py::arg("batch_g"));

    m.def("train",
          [](const SyntheticWorld& world, const RewardHead& head,
             const PrecisionState* prec, const EnsembleHeads* ens,
             const TrainConfig& config) {
              return metrics_to_dict(train(world, head, prec, ens, config));
          },
          py::arg("world"), py::arg("head"), py::arg("precision") = nullptr,
          py::arg("ensemble") = nullptr, py::arg("config") = TrainConfig{});

    m.def("save_world",
          [](const SyntheticWorld& world, const std::string& path) {
              save_world(world, path);
          },
          py::arg("world"), py::arg("path"));
    m.def("load_world",
          [](const std::string& path) { return load_world(path); },
          py::arg("path"));
    m.def("run_cli", &run_cli, py::arg("args"));
}
