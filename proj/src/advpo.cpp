#include "pessilab/advpo.hpp"

#include <cmath>

namespace pessilab {

void AdvpoConfig::validate() const {
    if (!(B > 0.0)) throw InvalidConfig("AdvpoConfig: B must be > 0");
    if (!(g_floor > 0.0)) throw InvalidConfig("AdvpoConfig: g_floor must be > 0");
}

Vec compute_g(const Vec& policy_expected_embedding,
              const std::optional<Vec>& ref_expected_embedding) {
    if (!ref_expected_embedding.has_value()) return policy_expected_embedding;
    if (ref_expected_embedding->size() != policy_expected_embedding.size()) {
        throw DimensionMismatch("compute_g: policy vs reference expectation");
    }
    return policy_expected_embedding - *ref_expected_embedding;
}

double lambda_star(const PrecisionState& prec, const Vec& g, double B,
                   double g_floor) {
    if (!(B > 0.0)) throw InvalidConfig("lambda_star: B must be > 0");
    const double q = prec.m.quad_form_inv(g);
    if (std::sqrt(q) <= g_floor) return 0.0;  // sentinel
    return std::sqrt(q / B);
}

PessimisticAdjustment make_adjustment(const RewardHead& head,
                                      const PrecisionState& prec, const Vec& g,
                                      double B, double g_floor) {
    if (!(B > 0.0)) throw InvalidConfig("make_adjustment: B must be > 0");
    if (g.size() != prec.m.dim() || head.phi_hat.size() != prec.m.dim()) {
        throw DimensionMismatch("make_adjustment: dims");
    }
    PessimisticAdjustment adj;
    adj.g = g;
    const double q = prec.m.quad_form_inv(g);
    if (std::sqrt(q) <= g_floor) {
        adj.lambda_star = 0.0;
        adj.minv_g = Vec::Zero(g.size());
        adj.phi_pess = head.phi_hat;
        adj.inner_value = g.dot(head.phi_hat);
        adj.active = false;
        return adj;
    }
    adj.lambda_star = std::sqrt(q / B);
    adj.minv_g = prec.m.solve(g);
    adj.phi_pess = head.phi_hat - adj.minv_g / adj.lambda_star;
    adj.inner_value = g.dot(head.phi_hat) - std::sqrt(B * q);
    adj.active = true;
    return adj;
}

double adjusted_reward(const RewardHead& head, const PessimisticAdjustment& adj,
                       const Vec& e) {
    const double raw = predict(head, e);
    if (!adj.active) return raw;
    return raw - e.dot(adj.minv_g) / adj.lambda_star;
}

double inner_min_value(const RewardHead& head, const PrecisionState& prec,
                       const Vec& g, double B) {
    if (!(B > 0.0)) throw InvalidConfig("inner_min_value: B must be > 0");
    const double q = prec.m.quad_form_inv(g);
    return g.dot(head.phi_hat) - std::sqrt(B * q);
}

double oracle_inner_min(const RewardHead& head, const PrecisionState& prec,
                        const Vec& g, double B, int iters) {
    if (!(B > 0.0)) throw InvalidConfig("oracle_inner_min: B must be > 0");
    const Mat chol = prec.m.chol();
    // phi = phi_hat + L^{-T} u, so the objective is
    // g . phi_hat + (L^{-1} g) . u over ||u|| <= sqrt(B).
    const Vec c = chol.triangularView<Eigen::Lower>().solve(g);
    const double radius = std::sqrt(B);
    const double c_norm = c.norm();
    if (c_norm == 0.0) return g.dot(head.phi_hat);
    const double step = 0.5 * radius / c_norm;
    Vec u = Vec::Zero(g.size());
    double best = g.dot(head.phi_hat);
    for (int i = 0; i < iters; ++i) {
        u -= step * c;
        const double n = u.norm();
        if (n > radius) u *= radius / n;
        const double value = g.dot(head.phi_hat) + c.dot(u);
        if (value < best) best = value;
    }
    return best;
}

double samplewise_adjusted_reward(const RewardHead& head,
                                  const PrecisionState& prec, double B,
                                  const Vec& e) {
    if (!(B > 0.0)) {
        throw InvalidConfig("samplewise_adjusted_reward: B must be > 0");
    }
    return predict(head, e) - std::sqrt(B) * ci_uncertainty(prec, e);
}

PessimismGap pessimism_gap(const PrecisionState& prec, double B,
                           const std::vector<Vec>& batch_g) {
    if (batch_g.empty()) throw EmptyBatch("pessimism_gap: empty batch");
    if (!(B > 0.0)) throw InvalidConfig("pessimism_gap: B must be > 0");
    const double root_b = std::sqrt(B);
    Vec mean = Vec::Zero(batch_g.front().size());
    double sum_norms = 0.0;
    for (const Vec& g : batch_g) {
        if (g.size() != mean.size()) {
            throw DimensionMismatch("pessimism_gap: inconsistent batch dims");
        }
        mean += g;
        sum_norms += std::sqrt(prec.m.quad_form_inv(g));
    }
    const double n = static_cast<double>(batch_g.size());
    mean /= n;
    PessimismGap gap;
    gap.advpo_penalty = root_b * std::sqrt(prec.m.quad_form_inv(mean));
    gap.samplewise_penalty = root_b * sum_norms / n;
    return gap;
}

std::vector<double> RewardRescaler::apply(
    const std::vector<double>& raw_batch,
    const std::vector<double>& adjusted_batch) {
    if (raw_batch.size() != adjusted_batch.size()) {
        throw DimensionMismatch("RewardRescaler: batch sizes differ");
    }
    if (raw_batch.empty()) return {};
    double raw_abs = 0.0, adj_abs = 0.0;
    for (std::size_t i = 0; i < raw_batch.size(); ++i) {
        raw_abs += std::abs(raw_batch[i]);
        adj_abs += std::abs(adjusted_batch[i]);
    }
    raw_abs /= static_cast<double>(raw_batch.size());
    adj_abs /= static_cast<double>(raw_batch.size());
    if (!initialized_) {
        raw_mean_ = raw_abs;
        adjusted_mean_ = adj_abs;
        initialized_ = true;
    } else {
        raw_mean_ = decay_ * raw_mean_ + (1.0 - decay_) * raw_abs;
        adjusted_mean_ = decay_ * adjusted_mean_ + (1.0 - decay_) * adj_abs;
    }
    const double f = factor();
    std::vector<double> out(adjusted_batch.size());
    for (std::size_t i = 0; i < adjusted_batch.size(); ++i) {
        out[i] = adjusted_batch[i] * f;
    }
    return out;
}

double RewardRescaler::factor() const {
    if (!initialized_) return 1.0;
    return raw_mean_ / std::max(adjusted_mean_, 1e-8);
}

}  // namespace pessilab
