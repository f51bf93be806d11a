#include "pessilab/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pessilab/rng.hpp"

namespace pessilab {

namespace {

constexpr std::uint64_t kGpStream = 0x6770;  // "gp"

std::vector<double> average_ranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return values[a] < values[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) {
        throw DegenerateInput("correlation: constant input");
    }
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace

PrecisionState build_precision(const SyntheticWorld& world,
                               const PreferenceDataset& data,
                               double lambda_ridge) {
    if (!(lambda_ridge > 0.0)) {
        throw InvalidConfig("build_precision: lambda_ridge must be > 0");
    }
    PrecisionState state{
        SpdMatrix::identity(world.config.dim, lambda_ridge), lambda_ridge, 0};
    for (const PreferenceTriple& t : data.triples) {
        const CandidatePool& pool = world.pools.at(t.prompt_id);
        state.m = state.m.rank1_update(pool.embeddings.row(t.chosen_idx));
        state.m = state.m.rank1_update(pool.embeddings.row(t.rejected_idx));
        state.n_embeddings += 2;
    }
    return state;
}

double ci_uncertainty(const PrecisionState& prec, const Vec& e) {
    return std::sqrt(prec.m.quad_form_inv(e));
}

double kernel_eval(KernelKind kind, double length_scale, const Vec& a,
                   const Vec& b) {
    switch (kind) {
        case KernelKind::Rbf: {
            const double d2 = (a - b).squaredNorm();
            return std::exp(-d2 / (2.0 * length_scale * length_scale));
        }
        case KernelKind::Linear:
            return a.dot(b);
    }
    return 0.0;
}

GpPosterior gp_fit(const Mat& x, const Vec& y, const GpConfig& cfg,
                   std::uint64_t seed) {
    const Eigen::Index n = x.rows();
    if (n < 1) throw InvalidConfig("gp_fit: no samples");
    if (y.size() != n) throw DimensionMismatch("gp_fit: x rows vs y size");
    if (!(cfg.sigma_n > 0.0)) throw InvalidConfig("gp_fit: sigma_n must be > 0");
    if (cfg.subset_size < 1) throw InvalidConfig("gp_fit: subset_size must be >= 1");

    // Uniform subset without replacement (partial Fisher-Yates).
    const Eigen::Index m = std::min<Eigen::Index>(n, cfg.subset_size);
    std::vector<Eigen::Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, kGpStream));
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index j =
            i + static_cast<Eigen::Index>(rng.integer(
                    static_cast<std::uint64_t>(n - i)));
        std::swap(idx[i], idx[j]);
    }

    GpPosterior post;
    post.kernel = cfg.kernel;
    post.length_scale = cfg.length_scale;
    post.sigma_n = cfg.sigma_n;
    post.train_x = Mat(m, x.cols());
    post.train_y = Vec(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        post.train_x.row(i) = x.row(idx[i]);
        post.train_y[i] = y[idx[i]];
    }

    Mat gram(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double k = kernel_eval(cfg.kernel, cfg.length_scale,
                                         post.train_x.row(i),
                                         post.train_x.row(j));
            gram(i, j) = k;
            gram(j, i) = k;
        }
        gram(i, i) += cfg.sigma_n * cfg.sigma_n;
    }
    post.chol_k = cholesky(gram);  // NotPositiveDefinite if sigma_n too small
    Vec w = post.chol_k.triangularView<Eigen::Lower>().solve(post.train_y);
    post.alpha =
        post.chol_k.transpose().triangularView<Eigen::Upper>().solve(w);
    return post;
}

std::pair<double, double> gp_predict(const GpPosterior& post, const Vec& e) {
    if (e.size() != post.train_x.cols()) {
        throw DimensionMismatch("gp_predict: query dim vs training dim");
    }
    const Eigen::Index m = post.train_x.rows();
    Vec k_star(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        k_star[i] = kernel_eval(post.kernel, post.length_scale,
                                post.train_x.row(i), e);
    }
    const double mean = k_star.dot(post.alpha);
    Vec v = post.chol_k.triangularView<Eigen::Lower>().solve(k_star);
    const double var =
        kernel_eval(post.kernel, post.length_scale, e, e) - v.squaredNorm();
    return {mean, std::sqrt(std::max(var, 0.0))};
}

CorrelationReport correlation_report(
    const std::vector<std::pair<double, double>>& samples) {
    if (samples.size() < 3) {
        throw DegenerateInput("correlation_report: need >= 3 samples");
    }
    std::vector<double> u(samples.size()), err(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        u[i] = samples[i].first;
        err[i] = samples[i].second;
    }
    CorrelationReport report;
    report.pearson = pearson(u, err);
    report.spearman = pearson(average_ranks(u), average_ranks(err));
    return report;
}

}  // namespace pessilab
