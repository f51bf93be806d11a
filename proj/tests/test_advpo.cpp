#include <doctest.h>

#include <cmath>

#include "pessilab/advpo.hpp"
#include "pessilab/rng.hpp"

using namespace pessilab;

namespace {

Vec random_vec(Rng& rng, int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v[i] = rng.normal();
    return v;
}

Mat random_spd(Rng& rng, int d) {
    Mat g(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
    }
    return g * g.transpose() + 0.5 * Mat::Identity(d, d);
}

PrecisionState identity_prec(int d) {
    return PrecisionState{SpdMatrix::identity(d), 1.0, 0};
}

PrecisionState prec_of(const Mat& m) {
    return PrecisionState{SpdMatrix(m), 1.0, 0};
}

RewardHead head_of(const Vec& phi) {
    RewardHead head;
    head.phi_hat = phi;
    return head;
}

Vec vec2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

}  // namespace

TEST_CASE("compute_g") {
    Rng rng(3);
    const Vec pol = random_vec(rng, 4);
    CHECK((compute_g(pol, pol) - Vec::Zero(4)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((compute_g(pol, std::nullopt) - pol).cwiseAbs().maxCoeff() == 0.0);
    // A zero reference collapses to the no-reference direction exactly.
    CHECK((compute_g(pol, Vec(Vec::Zero(4))) - compute_g(pol, std::nullopt))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK_THROWS_AS(compute_g(pol, Vec(Vec::Zero(3))), DimensionMismatch);
}

TEST_CASE("lambda_star closed form and sentinel") {
    PrecisionState prec = identity_prec(2);
    CHECK(lambda_star(prec, vec2(2, 0), 4.0) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lambda_star(prec, Vec::Zero(2), 4.0) == 0.0);

    Rng rng(5);
    for (int t = 0; t < 20; ++t) {
        PrecisionState p = prec_of(random_spd(rng, 6));
        const Vec g = random_vec(rng, 6);
        const double B = 0.5 + rng.uniform() * 10.0;
        const double lam = lambda_star(p, g, B);
        CHECK(lam * lam * B ==
              doctest::Approx(p.m.quad_form_inv(g)).epsilon(1e-10));
    }
}

TEST_CASE("adjusted reward unit algebra") {
    PrecisionState prec = identity_prec(2);
    RewardHead head = head_of(vec2(1, 0));
    PessimisticAdjustment adj =
        make_adjustment(head, prec, vec2(1, 0), 1.0);
    CHECK(adj.lambda_star == doctest::Approx(1.0));
    CHECK(adjusted_reward(head, adj, vec2(1, 0)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    // Orthogonal to M^{-1} g: reward unchanged.
    CHECK(adjusted_reward(head, adj, vec2(0, 1)) ==
          doctest::Approx(predict(head, vec2(0, 1))).epsilon(1e-12));
}

TEST_CASE("adjusted reward equals the pessimistic head prediction") {
    Rng rng(7);
    PrecisionState prec = prec_of(random_spd(rng, 8));
    RewardHead head = head_of(random_vec(rng, 8));
    const Vec g = random_vec(rng, 8);
    PessimisticAdjustment adj = make_adjustment(head, prec, g, 2.5);
    for (int t = 0; t < 100; ++t) {
        const Vec e = random_vec(rng, 8);
        CHECK(std::abs(adjusted_reward(head, adj, e) - adj.phi_pess.dot(e)) <
              1e-10);
    }
}

TEST_CASE("sentinel zeroes the adjustment") {
    Rng rng(9);
    PrecisionState prec = prec_of(random_spd(rng, 4));
    RewardHead head = head_of(random_vec(rng, 4));
    PessimisticAdjustment adj =
        make_adjustment(head, prec, Vec::Zero(4), 1.0);
    CHECK(!adj.active);
    CHECK(adj.lambda_star == 0.0);
    const Vec e = random_vec(rng, 4);
    CHECK(adjusted_reward(head, adj, e) == predict(head, e));
}

TEST_CASE("inner_min_value basics") {
    PrecisionState prec = identity_prec(2);
    RewardHead head = head_of(vec2(1, 0));
    CHECK(inner_min_value(head, prec, vec2(1, 0), 1.0) ==
          doctest::Approx(0.0).epsilon(1e-12));
    // Shrinking ball recovers g . phi_hat.
    CHECK(inner_min_value(head, prec, vec2(1, 0), 1e-18) ==
          doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("oracle agrees with the closed form") {
    // Interval case: M = [1], phi_hat = [0], g = [1], B = 1.
    PrecisionState prec = identity_prec(1);
    RewardHead head;
    head.phi_hat = Vec::Zero(1);
    Vec g(1);
    g << 1;
    CHECK(oracle_inner_min(head, prec, g, 1.0) ==
          doctest::Approx(-1.0).epsilon(1e-9));

    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
        const int d = 2 + static_cast<int>(rng.integer(15));
        PrecisionState p = prec_of(random_spd(rng, d));
        RewardHead h = head_of(random_vec(rng, d));
        const Vec gg = random_vec(rng, d);
        const double B = 0.5 + 10.0 * rng.uniform();
        const double closed = inner_min_value(h, p, gg, B);
        const double oracle = oracle_inner_min(h, p, gg, B);
        // The oracle stays feasible, so it can never beat the true minimum.
        CHECK(oracle >= closed - 1e-6);
        CHECK(std::abs(oracle - closed) <= 1e-6 * (1.0 + std::abs(closed)));
    }
}

TEST_CASE("pessimistic weight sits on the ellipsoid boundary") {
    Rng rng(13);
    for (int t = 0; t < 25; ++t) {
        PrecisionState p = prec_of(random_spd(rng, 6));
        RewardHead h = head_of(random_vec(rng, 6));
        const Vec g = random_vec(rng, 6);
        const double B = 0.5 + 5.0 * rng.uniform();
        PessimisticAdjustment adj = make_adjustment(h, p, g, B);
        const Vec diff = adj.phi_pess - h.phi_hat;
        const double dist2 = diff.dot(p.m.entries() * diff);
        CHECK(std::abs(dist2 - B) <= 1e-8 * B);
        CHECK(std::abs(g.dot(adj.phi_pess) - adj.inner_value) <= 1e-10);
    }
}

TEST_CASE("inner value dominates every feasible point") {
    Rng rng(17);
    PrecisionState p = prec_of(random_spd(rng, 6));
    RewardHead h = head_of(random_vec(rng, 6));
    const Vec g = random_vec(rng, 6);
    const double B = 3.0;
    const double value = inner_min_value(h, p, g, B);
    const Mat chol = p.m.chol();
    for (int t = 0; t < 1000; ++t) {
        // Random point inside the ball through the change of variables.
        Vec u = random_vec(rng, 6);
        u *= std::pow(rng.uniform(), 1.0 / 6.0) * std::sqrt(B) /
             std::max(u.norm(), 1e-12);
        const Vec phi =
            h.phi_hat +
            chol.transpose().triangularView<Eigen::Upper>().solve(u);
        CHECK(g.dot(phi) >= value - 1e-9);
    }
}

TEST_CASE("inner value is monotone non-increasing in B") {
    Rng rng(19);
    PrecisionState p = prec_of(random_spd(rng, 5));
    RewardHead h = head_of(random_vec(rng, 5));
    const Vec g = random_vec(rng, 5);
    double prev = inner_min_value(h, p, g, 0.1);
    for (double B : {0.5, 1.0, 5.0, 10.0, 15.0}) {
        const double value = inner_min_value(h, p, g, B);
        CHECK(value <= prev + 1e-12);
        prev = value;
    }
}

TEST_CASE("samplewise adjusted reward") {
    PrecisionState prec = identity_prec(2);
    RewardHead head = head_of(vec2(1, 0));
    CHECK(samplewise_adjusted_reward(head, prec, 1.0, vec2(1, 0)) ==
          doctest::Approx(0.0).epsilon(1e-12));
    CHECK(samplewise_adjusted_reward(head, prec, 1.0, Vec(Vec::Zero(2))) ==
          0.0);

    Rng rng(21);
    PrecisionState p = prec_of(random_spd(rng, 5));
    RewardHead h = head_of(random_vec(rng, 5));
    for (int t = 0; t < 20; ++t) {
        const Vec e = random_vec(rng, 5);
        const double B = 0.5 + 3.0 * rng.uniform();
        const double penalty = predict(h, e) -
                               samplewise_adjusted_reward(h, p, B, e);
        CHECK(penalty ==
              doctest::Approx(std::sqrt(B) * ci_uncertainty(p, e))
                  .epsilon(1e-12));
    }
}

TEST_CASE("pessimism gap: cancellation versus magnitudes") {
    PrecisionState prec = identity_prec(2);
    std::vector<Vec> batch{vec2(1, 0), vec2(-1, 0)};
    PessimismGap gap = pessimism_gap(prec, 1.0, batch);
    CHECK(gap.advpo_penalty == 0.0);
    CHECK(gap.samplewise_penalty == doctest::Approx(1.0).epsilon(1e-12));

    // Singleton batch: Jensen equality.
    PessimismGap single = pessimism_gap(prec, 2.0, {vec2(0.3, -0.4)});
    CHECK(single.advpo_penalty ==
          doctest::Approx(single.samplewise_penalty).epsilon(1e-12));

    CHECK_THROWS_AS(pessimism_gap(prec, 1.0, {}), EmptyBatch);
}

TEST_CASE("advpo penalty never exceeds the samplewise penalty") {
    Rng rng(23);
    for (int t = 0; t < 1000; ++t) {
        const int d = 8;
        PrecisionState p = prec_of(random_spd(rng, d));
        std::vector<Vec> batch;
        for (int i = 0; i < 32; ++i) batch.push_back(random_vec(rng, d));
        const double B = 0.1 + 10.0 * rng.uniform();
        PessimismGap gap = pessimism_gap(p, B, batch);
        CHECK(gap.advpo_penalty <= gap.samplewise_penalty + 1e-12);
    }
}

TEST_CASE("penalties scale with sqrt(B)") {
    Rng rng(29);
    PrecisionState p = prec_of(random_spd(rng, 4));
    std::vector<Vec> batch{random_vec(rng, 4), random_vec(rng, 4)};
    double prev_a = 0.0, prev_s = 0.0;
    for (double B : {0.5, 1.0, 5.0, 10.0}) {
        PessimismGap gap = pessimism_gap(p, B, batch);
        CHECK(gap.advpo_penalty >= prev_a);
        CHECK(gap.samplewise_penalty >= prev_s);
        prev_a = gap.advpo_penalty;
        prev_s = gap.samplewise_penalty;
    }
}

TEST_CASE("reward rescaler") {
    RewardRescaler identity_scale;
    std::vector<double> raw{1.0, -2.0, 3.0};
    std::vector<double> out = identity_scale.apply(raw, raw);
    CHECK(identity_scale.factor() == doctest::Approx(1.0));
    for (std::size_t i = 0; i < raw.size(); ++i) {
        CHECK(out[i] == doctest::Approx(raw[i]));
    }

    // Steady state with adjusted = raw / 2: factor converges to 2.
    RewardRescaler halved;
    std::vector<double> half{0.5, -1.0, 1.5};
    for (int t = 0; t < 2000; ++t) halved.apply(raw, half);
    CHECK(halved.factor() == doctest::Approx(2.0).epsilon(1e-6));

    // Zero batches stay finite thanks to the denominator guard.
    RewardRescaler guarded;
    std::vector<double> zeros{0.0, 0.0};
    std::vector<double> guarded_out = guarded.apply(zeros, zeros);
    CHECK(std::isfinite(guarded.factor()));
    CHECK(std::isfinite(guarded_out[0]));
}
