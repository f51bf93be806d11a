#include <doctest.h>

#include <cmath>
#include <set>

#include "pessilab/world.hpp"

using namespace pessilab;

namespace {

WorldConfig small_config() {
    WorldConfig cfg;
    cfg.dim = 8;
    cfg.n_prompts = 40;
    cfg.candidates_per_prompt = 8;
    cfg.seed = 5;
    cfg.held_dims = 3;
    return cfg;
}

/// Hand-built world: phi_star = e0, one prompt, explicit embeddings.
SyntheticWorld toy_world(const Mat& embeddings) {
    SyntheticWorld world;
    world.config.dim = static_cast<int>(embeddings.cols());
    world.config.candidates_per_prompt = static_cast<int>(embeddings.rows());
    world.config.n_prompts = 1;
    world.phi_star = Vec::Zero(embeddings.cols());
    world.phi_star[0] = 1.0;
    CandidatePool pool;
    pool.prompt_id = 0;
    pool.embeddings = embeddings;
    pool.is_ood.assign(embeddings.rows(), 0);
    world.pools.push_back(pool);
    world.split_of.push_back(Split::RewardTrain);
    world.reward_train_ids.push_back(0);
    return world;
}

}  // namespace

TEST_CASE("gen_world is deterministic given the seed") {
    WorldConfig cfg = small_config();
    SyntheticWorld a = gen_world(cfg);
    SyntheticWorld b = gen_world(cfg);
    CHECK((a.phi_star - b.phi_star).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(a.pools.size() == b.pools.size());
    for (std::size_t p = 0; p < a.pools.size(); ++p) {
        CHECK((a.pools[p].embeddings - b.pools[p].embeddings)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
        CHECK(a.pools[p].is_ood == b.pools[p].is_ood);
    }
    CHECK(a.reward_train_ids == b.reward_train_ids);

    cfg.seed = 6;
    SyntheticWorld c = gen_world(cfg);
    CHECK((a.phi_star - c.phi_star).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("world construction invariants") {
    SyntheticWorld world = gen_world(small_config());
    CHECK(std::abs(world.phi_star.norm() - 1.0) < 1e-12);
    // Held axes orthonormal and orthogonal to phi_star.
    const Mat gram = world.held_axes.transpose() * world.held_axes;
    CHECK((gram - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((world.held_axes.transpose() * world.phi_star).cwiseAbs().maxCoeff() <
          1e-12);
    for (const CandidatePool& pool : world.pools) {
        bool any_in_dist = false;
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c) {
            CHECK(pool.embeddings.row(c).allFinite());
            CHECK(std::abs(pool.embeddings.row(c).norm() - 1.0) < 1e-12);
            any_in_dist = any_in_dist || !pool.is_ood[c];
        }
        CHECK(any_in_dist);
    }
}

TEST_CASE("OOD candidates appear only in policy pools") {
    SyntheticWorld world = gen_world(small_config());
    bool saw_ood = false;
    for (const CandidatePool& pool : world.pools) {
        for (std::uint8_t flag : pool.is_ood) {
            if (flag) {
                saw_ood = true;
                CHECK(world.split_of[pool.prompt_id] == Split::Policy);
            }
        }
    }
    CHECK(saw_ood);
}

TEST_CASE("ood_fraction zero means no OOD flags") {
    WorldConfig cfg = small_config();
    cfg.ood_fraction = 0.0;
    SyntheticWorld world = gen_world(cfg);
    for (const CandidatePool& pool : world.pools) {
        for (std::uint8_t flag : pool.is_ood) CHECK(flag == 0);
    }
}

TEST_CASE("mean gold reward is near zero at the default scale") {
    WorldConfig cfg;  // d=16, 200 prompts, 16 candidates
    cfg.seed = 3;
    SyntheticWorld world = gen_world(cfg);
    double sum = 0.0;
    int count = 0;
    for (const CandidatePool& pool : world.pools) {
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c) {
            sum += gold_reward(world, pool.prompt_id, static_cast<int>(c));
            ++count;
        }
    }
    CHECK(std::abs(sum / count) < 0.05);
}

TEST_CASE("splits are disjoint and cover all prompts") {
    SyntheticWorld world = gen_world(small_config());
    std::set<int> seen;
    for (int id : world.reward_train_ids) seen.insert(id);
    for (int id : world.policy_ids) CHECK(seen.insert(id).second);
    for (int id : world.validation_ids) CHECK(seen.insert(id).second);
    CHECK(seen.size() == static_cast<std::size_t>(world.config.n_prompts));
}

TEST_CASE("gold_reward is an exact projection") {
    Mat embeddings(2, 4);
    embeddings << 0.6, 0.8, 0, 0,
                  0.0, 1.0, 0, 0;
    SyntheticWorld world = toy_world(embeddings);
    CHECK(gold_reward(world, 0, 0) == doctest::Approx(0.6));
    CHECK(gold_reward(world, 0, 1) == 0.0);  // orthogonal to phi_star
    CHECK_THROWS_AS(gold_reward(world, 0, 9), IndexOutOfRange);
    CHECK_THROWS_AS(gold_reward(world, 2, 0), IndexOutOfRange);
}

TEST_CASE("gold reward is bounded by the embedding norm") {
    SyntheticWorld world = gen_world(small_config());
    for (const CandidatePool& pool : world.pools) {
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c) {
            CHECK(std::abs(gold_reward(world, pool.prompt_id,
                                       static_cast<int>(c))) <= 1.0 + 1e-12);
        }
    }
}

TEST_CASE("preferences stay on reward-train prompts and in-dist candidates") {
    SyntheticWorld world = gen_world(small_config());
    PreferenceDataset data = gen_preferences(world, 500, 0.3, 9);
    REQUIRE(data.triples.size() == 500);
    std::set<int> train_ids(world.reward_train_ids.begin(),
                            world.reward_train_ids.end());
    for (const PreferenceTriple& t : data.triples) {
        CHECK(train_ids.count(t.prompt_id) == 1);
        CHECK(t.chosen_idx != t.rejected_idx);
        CHECK(world.pools[t.prompt_id].is_ood[t.chosen_idx] == 0);
        CHECK(world.pools[t.prompt_id].is_ood[t.rejected_idx] == 0);
    }
}

TEST_CASE("deterministic BT labels align with gold at noise zero") {
    WorldConfig cfg = small_config();
    cfg.bt_temperature = 1e-12;  // hard argmax labels
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 400, 0.0, 11);
    for (const PreferenceTriple& t : data.triples) {
        CHECK(gold_reward(world, t.prompt_id, t.chosen_idx) >=
              gold_reward(world, t.prompt_id, t.rejected_idx));
    }
}

TEST_CASE("full noise inverts every deterministic label") {
    WorldConfig cfg = small_config();
    cfg.bt_temperature = 1e-12;
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 400, 1.0, 13);
    for (const PreferenceTriple& t : data.triples) {
        CHECK(gold_reward(world, t.prompt_id, t.chosen_idx) <=
              gold_reward(world, t.prompt_id, t.rejected_idx));
    }
}

TEST_CASE("flip fraction concentrates around the noise rate") {
    WorldConfig cfg = small_config();
    cfg.bt_temperature = 1e-12;
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 10000, 0.3, 17);
    int flips = 0;
    for (std::size_t i = 0; i < data.triples.size(); ++i) {
        const PreferenceTriple& t = data.triples[i];
        const bool anti = gold_reward(world, t.prompt_id, t.chosen_idx) <
                          gold_reward(world, t.prompt_id, t.rejected_idx);
        CHECK(anti == (data.flipped[i] != 0));
        if (anti) ++flips;
    }
    const double frac = static_cast<double>(flips) / 10000.0;
    CHECK(frac > 0.28);
    CHECK(frac < 0.32);
}

TEST_CASE("preference generation is deterministic given the seed") {
    SyntheticWorld world = gen_world(small_config());
    PreferenceDataset a = gen_preferences(world, 200, 0.3, 21);
    PreferenceDataset b = gen_preferences(world, 200, 0.3, 21);
    REQUIRE(a.triples.size() == b.triples.size());
    for (std::size_t i = 0; i < a.triples.size(); ++i) {
        CHECK(a.triples[i].prompt_id == b.triples[i].prompt_id);
        CHECK(a.triples[i].chosen_idx == b.triples[i].chosen_idx);
        CHECK(a.triples[i].rejected_idx == b.triples[i].rejected_idx);
    }
}

TEST_CASE("empty reward split is rejected") {
    WorldConfig cfg = small_config();
    cfg.split_fractions = {0.0, 0.9, 0.1};
    SyntheticWorld world = gen_world(cfg);
    CHECK_THROWS_AS(gen_preferences(world, 10, 0.3, 1), EmptySplit);
}

TEST_CASE("config validation") {
    WorldConfig cfg;
    cfg.dim = 1;
    CHECK_THROWS_AS(gen_world(cfg), InvalidConfig);
    cfg = WorldConfig{};
    cfg.ood_fraction = 1.0;
    CHECK_THROWS_AS(gen_world(cfg), InvalidConfig);
    cfg = WorldConfig{};
    cfg.split_fractions = {0.5, 0.4, 0.2};
    CHECK_THROWS_AS(gen_world(cfg), InvalidConfig);
    cfg = WorldConfig{};
    cfg.held_dims = 16;
    CHECK_THROWS_AS(gen_world(cfg), InvalidConfig);
}
