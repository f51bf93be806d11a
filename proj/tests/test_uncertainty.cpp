#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pessilab/reward_model.hpp"
#include "pessilab/rng.hpp"
#include "pessilab/uncertainty.hpp"

using namespace pessilab;

namespace {

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

Vec random_vec(Rng& rng, int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
}

Mat random_mat(Rng& rng, int rows, int cols) {
    Mat m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.normal();
    }
    return m;
}

}  // namespace

TEST_CASE("build_precision on an empty dataset is the ridge identity") {
    Mat emb(2, 3);
    emb.setRandom();
    SyntheticWorld world = toy_world(emb);
    PreferenceDataset empty;
    PrecisionState prec = build_precision(world, empty, 1.0);
    CHECK((prec.m.entries() - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK(prec.n_embeddings == 0);
    CHECK_THROWS_AS(build_precision(world, empty, 0.0), InvalidConfig);
}

TEST_CASE("build_precision accumulates both sides of each pair") {
    Mat emb(2, 2);
    emb << 1, 0,
           0, 1;
    SyntheticWorld world = toy_world(emb);
    PreferenceDataset data;
    data.triples.push_back({0, 0, 1});
    data.flipped.push_back(0);
    PrecisionState prec = build_precision(world, data, 1.0);
    CHECK((prec.m.entries() - 2.0 * Mat::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-15);
    CHECK(prec.n_embeddings == 2);
}

TEST_CASE("pair order does not change the precision matrix") {
    WorldConfig cfg;
    cfg.dim = 6;
    cfg.n_prompts = 30;
    cfg.candidates_per_prompt = 6;
    cfg.held_dims = 2;
    cfg.seed = 77;
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 300, 0.3, 7);
    PreferenceDataset reversed = data;
    std::reverse(reversed.triples.begin(), reversed.triples.end());
    PrecisionState a = build_precision(world, data, 1.0);
    PrecisionState b = build_precision(world, reversed, 1.0);
    a.m.refactor();
    b.m.refactor();
    CHECK((a.m.entries() - b.m.entries()).cwiseAbs().maxCoeff() < 1e-10);
    const Vec probe = world.pools[0].embeddings.row(0);
    CHECK(std::abs(a.m.quad_form_inv(probe) - b.m.quad_form_inv(probe)) <
          1e-10);
}

TEST_CASE("ci_uncertainty basics") {
    Mat emb(2, 3);
    emb.setRandom();
    SyntheticWorld world = toy_world(emb);
    PreferenceDataset empty;
    PrecisionState prec = build_precision(world, empty, 1.0);
    Vec e = Vec::Zero(3);
    CHECK(ci_uncertainty(prec, e) == 0.0);
    e << 1, 0, 0;
    CHECK(ci_uncertainty(prec, e) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ci_uncertainty scales absolutely homogeneously") {
    Rng rng(5);
    Mat emb = random_mat(rng, 4, 5);
    SyntheticWorld world = toy_world(emb);
    PreferenceDataset data;
    data.triples.push_back({0, 0, 1});
    data.triples.push_back({0, 2, 3});
    data.flipped = {0, 0};
    PrecisionState prec = build_precision(world, data, 1.0);
    const Vec e = random_vec(rng, 5);
    const double base = ci_uncertainty(prec, e);
    for (double alpha : {-2.0, 0.5, 3.0}) {
        CHECK(ci_uncertainty(prec, alpha * e) ==
              doctest::Approx(std::abs(alpha) * base).epsilon(1e-10));
    }
}

TEST_CASE("more ridge means less uncertainty") {
    WorldConfig cfg;
    cfg.dim = 8;
    cfg.n_prompts = 20;
    cfg.candidates_per_prompt = 6;
    cfg.held_dims = 2;
    cfg.seed = 11;
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 200, 0.3, 3);
    PrecisionState lam1 = build_precision(world, data, 1.0);
    PrecisionState lam10 = build_precision(world, data, 10.0);
    Rng rng(9);
    for (int t = 0; t < 50; ++t) {
        const Vec e = random_vec(rng, 8);
        CHECK(ci_uncertainty(lam10, e) <= ci_uncertainty(lam1, e) + 1e-12);
    }
}

TEST_CASE("OOD candidates carry more CI uncertainty than in-dist ones") {
    WorldConfig cfg;  // defaults: d=16, held subspace weakly covered
    cfg.n_prompts = 80;
    cfg.seed = 19;
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 1000, 0.3, 23);
    PrecisionState prec = build_precision(world, data, 1.0);
    double u_in = 0.0, u_ood = 0.0;
    int n_in = 0, n_ood = 0;
    for (int pid : world.policy_ids) {
        const CandidatePool& pool = world.pools[pid];
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c) {
            const double u = ci_uncertainty(prec, pool.embeddings.row(c));
            if (pool.is_ood[c]) {
                u_ood += u;
                ++n_ood;
            } else {
                u_in += u;
                ++n_in;
            }
        }
    }
    REQUIRE(n_in > 0);
    REQUIRE(n_ood > 0);
    CHECK(u_in / n_in < u_ood / n_ood);
}

TEST_CASE("Theorem-style bound holds with equality at the extremal point") {
    WorldConfig cfg;
    cfg.dim = 8;
    cfg.n_prompts = 40;
    cfg.candidates_per_prompt = 8;
    cfg.held_dims = 2;
    cfg.seed = 29;
    SyntheticWorld world = gen_world(cfg);
    PreferenceDataset data = gen_preferences(world, 600, 0.3, 31);
    RewardHead head = fit_bt(world, data, 1e-3);
    PrecisionState prec = build_precision(world, data, 1.0);

    const Vec delta = world.phi_star - head.phi_hat;
    const double delta_m = std::sqrt(delta.dot(prec.m.entries() * delta));
    for (const CandidatePool& pool : world.pools) {
        for (Eigen::Index c = 0; c < pool.embeddings.rows(); ++c) {
            const Vec e = pool.embeddings.row(c);
            const double gap = std::abs(world.phi_star.dot(e) - predict(head, e));
            CHECK(gap <= delta_m * ci_uncertainty(prec, e) + 1e-10);
        }
    }
    // Cauchy-Schwarz is tight at e = M (phi_star - phi_hat).
    const Vec extremal = prec.m.entries() * delta;
    const double lhs = std::abs(delta.dot(extremal));
    const double rhs = delta_m * ci_uncertainty(prec, extremal);
    CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(rhs)));
}

TEST_CASE("single-point linear-kernel GP matches the scalar formula") {
    Mat x(1, 2);
    x << 3, 4;  // k = 25
    Vec y(1);
    y << 2;
    GpConfig cfg;
    cfg.kernel = KernelKind::Linear;
    cfg.sigma_n = 1.0;
    GpPosterior post = gp_fit(x, y, cfg, 1);
    auto [mean, sd] = gp_predict(post, x.row(0));
    CHECK(mean == doctest::Approx(2.0 * 25.0 / 26.0).epsilon(1e-12));
}

TEST_CASE("RBF GP at the sole training point with unit noise") {
    Mat x(1, 3);
    x << 0.1, -0.2, 0.4;
    Vec y(1);
    y << 1;
    GpConfig cfg;
    cfg.kernel = KernelKind::Rbf;
    cfg.sigma_n = 1.0;
    GpPosterior post = gp_fit(x, y, cfg, 1);
    auto [mean, sd] = gp_predict(post, x.row(0));
    CHECK(mean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(sd * sd == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("RBF GP interpolates as the noise vanishes") {
    Rng rng(41);
    Mat x = random_mat(rng, 5, 3);
    Vec y = random_vec(rng, 5);
    GpConfig cfg;
    cfg.kernel = KernelKind::Rbf;
    cfg.sigma_n = 1e-5;
    GpPosterior post = gp_fit(x, y, cfg, 1);
    for (int i = 0; i < 5; ++i) {
        auto [mean, sd] = gp_predict(post, x.row(i));
        CHECK(std::abs(mean - y[i]) < 1e-6);
    }
}

TEST_CASE("linear-kernel GP equals Bayesian linear regression") {
    Rng rng(43);
    const int d = 8, n = 50;
    Mat x = random_mat(rng, n, d);
    Vec y = random_vec(rng, n);
    const double sigma_n = 0.3;
    GpConfig cfg;
    cfg.kernel = KernelKind::Linear;
    cfg.sigma_n = sigma_n;
    cfg.subset_size = n;
    GpPosterior post = gp_fit(x, y, cfg, 1);

    // BLR normal equations with prior N(0, I):
    //   mean(e) = e^T (X^T X + sigma_n^2 I)^{-1} X^T y
    //   var(e)  = sigma_n^2 e^T (X^T X + sigma_n^2 I)^{-1} e
    const Mat a = x.transpose() * x + sigma_n * sigma_n * Mat::Identity(d, d);
    const Vec m = a.ldlt().solve(x.transpose() * y);
    for (int t = 0; t < 50; ++t) {
        const Vec e = random_vec(rng, d);
        auto [mean, sd] = gp_predict(post, e);
        const double blr_mean = e.dot(m);
        const double blr_var = sigma_n * sigma_n * e.dot(a.ldlt().solve(e));
        CHECK(std::abs(mean - blr_mean) < 1e-8);
        CHECK(std::abs(sd * sd - blr_var) < 1e-8);
    }
}

TEST_CASE("GP variance never increases as data is added") {
    Rng rng(47);
    const int d = 4;
    Mat x = random_mat(rng, 20, d);
    Vec y = random_vec(rng, 20);
    GpConfig cfg;
    cfg.kernel = KernelKind::Rbf;
    cfg.sigma_n = 0.3;
    std::vector<Vec> queries;
    for (int q = 0; q < 100; ++q) queries.push_back(random_vec(rng, d));

    std::vector<double> prev_sd(queries.size(),
                                std::numeric_limits<double>::infinity());
    for (int n = 1; n <= 20; ++n) {
        GpPosterior post = gp_fit(x.topRows(n), y.head(n), cfg, 1);
        for (std::size_t q = 0; q < queries.size(); ++q) {
            auto [mean, sd] = gp_predict(post, queries[q]);
            CHECK(sd <= prev_sd[q] + 1e-10);
            prev_sd[q] = sd;
        }
    }
}

TEST_CASE("gp_fit validates input") {
    Mat x(2, 2);
    x.setRandom();
    Vec y(2);
    y.setRandom();
    GpConfig cfg;
    cfg.sigma_n = 0.0;
    CHECK_THROWS_AS(gp_fit(x, y, cfg, 1), InvalidConfig);
    cfg.sigma_n = 0.1;
    CHECK_THROWS_AS(gp_fit(Mat(0, 2), Vec(0), cfg, 1), InvalidConfig);
}

TEST_CASE("correlation identities") {
    std::vector<std::pair<double, double>> identical, reversed;
    for (int i = 0; i < 10; ++i) {
        identical.emplace_back(i, i);
        reversed.emplace_back(i, -i);
    }
    CorrelationReport same = correlation_report(identical);
    CHECK(same.pearson == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(same.spearman == doctest::Approx(1.0).epsilon(1e-12));
    CorrelationReport anti = correlation_report(reversed);
    CHECK(anti.pearson == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(anti.spearman == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("one adjacent swap gives spearman 0.9 at n = 5") {
    // ranks (1,2,3,4,5) vs (2,1,3,4,5): sum d^2 = 2,
    // rho = 1 - 6*2 / (5 * 24) = 0.9
    std::vector<std::pair<double, double>> samples{
        {1.0, 2.0}, {2.0, 1.0}, {3.0, 3.0}, {4.0, 4.0}, {5.0, 5.0}};
    CorrelationReport report = correlation_report(samples);
    CHECK(report.spearman == doctest::Approx(0.9).epsilon(1e-12));
}

TEST_CASE("degenerate correlation input is rejected") {
    std::vector<std::pair<double, double>> two{{1, 2}, {3, 4}};
    CHECK_THROWS_AS(correlation_report(two), DegenerateInput);
    std::vector<std::pair<double, double>> flat{{1, 2}, {1, 4}, {1, 9}};
    CHECK_THROWS_AS(correlation_report(flat), DegenerateInput);
}
