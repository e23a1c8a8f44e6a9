#pragma once

// Negatively correlated search: N randomized local searchers with isotropic
// Gaussian mutation. A proposal replaces its searcher when its normalized
// fitness, divided by its Bhattacharyya distance to the nearest other
// searcher (each as a share against the incumbent), stays below a slowly
// annealed threshold.

#include "antr/surrogate.hpp"

#include <functional>

namespace antr::ncs {

/// Bhattacharyya distance between N(mean_i, sigma_i^2 I) and N(mean_j, sigma_j^2 I):
///   ||m_i - m_j||^2 / (8 s2) + (d/2) ln(s2 / (sigma_i sigma_j)),  s2 = (sigma_i^2 + sigma_j^2) / 2
inline double bhattacharyya(std::span<const double> mean_i, std::span<const double> mean_j, double sigma_i,
                            double sigma_j) {
    const std::size_t d = mean_i.size();
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = mean_i[k] - mean_j[k];
        sq += diff * diff;
    }
    const double s2 = 0.5 * (sigma_i * sigma_i + sigma_j * sigma_j);
    const double log_term = std::log(s2) - std::log(sigma_i) - std::log(sigma_j);
    return sq / (8.0 * s2) + 0.5 * static_cast<double>(d) * std::max(0.0, log_term);
}

struct Distribution {
    std::vector<double> mean;
    double sigma = 0.1;
};

/// min over j != i of D_B(proposal_i, current_j).
inline double corr(std::size_t i, const Distribution& proposal_i, std::span<const Distribution> current) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < current.size(); ++j) {
        if (j == i)
            continue;
        best = std::min(best, bhattacharyya(proposal_i.mean, current[j].mean, proposal_i.sigma, current[j].sigma));
    }
    return best;
}

inline constexpr double kRatioEps = 1e-12;

/// Normalized fitness (0 = best in pool) over corr below lambda -> replace.
inline bool ncs_replace_decision(double f_normalized, double corr_value, double lambda_t) {
    return f_normalized / (corr_value + kRatioEps) < lambda_t;
}

/// Min-max normalization where the largest objective value maps to 0.
inline double normalize_fitness(double value, double pool_max, double pool_min) {
    return (pool_max - value) / (pool_max - pool_min + kRatioEps);
}

/// Candidate share of a (candidate, incumbent) pair: a / (a + b), with a tie
/// (including two zeros) mapping to 1/2.
inline double pair_share(double candidate, double incumbent) {
    const double total = candidate + incumbent;
    if (!(total > 0.0))
        return 0.5;
    return candidate / total;
}

/// Reflects x into [lo, hi].
inline double reflect(double x, double lo, double hi) {
    const double w = hi - lo;
    if (!(w > 0.0))
        return lo;
    double y = std::fmod(std::abs(x - lo), 2.0 * w);
    return y <= w ? lo + y : hi - (y - w);
}

struct NcsConfig {
    std::size_t searchers = 10;
    std::size_t iterations = 200; // the first iteration evaluates the initial means
    std::size_t epoch = 10;
    double lambda0 = 1.0;
    double lambda_sd = 0.1;
    double sigma_init_fraction = 0.0; // 0 -> mean box width / searchers
    Box box;
    std::uint64_t seed = 1;

    void validate() const {
        if (searchers < 2)
            throw ConfigError("ncs: need at least two searchers");
        if (epoch < 1 || iterations < 1)
            throw ConfigError("ncs: epoch and iterations must be >= 1");
        if (box.dim() == 0)
            throw ConfigError("ncs: empty search box");
        for (std::size_t i = 0; i < box.dim(); ++i)
            if (!(box.hi[i] >= box.lo[i]))
                throw ConfigError("ncs: inverted search box");
    }
};

struct Searcher {
    std::vector<double> mean;
    double sigma = 0.1;
    double value = -std::numeric_limits<double>::infinity();
    std::vector<double> best;
    double best_value = -std::numeric_limits<double>::infinity();
    std::size_t successes = 0; // in the current epoch
};

struct Evaluation {
    std::vector<double> theta;
    double value = 0.0;
    std::size_t searcher = 0;
    std::size_t iteration = 0;
};

struct NcsResult {
    std::vector<Evaluation> ranked; // every evaluation, objective descending
    std::vector<Searcher> searchers;
    std::size_t evaluations = 0;
};

inline constexpr double kSigmaMin = 1e-6;
inline constexpr double kSigmaMax = 1.0;

/// Maximizes `objective` inside cfg.box with exactly searchers * iterations
/// objective calls. Proposals of one iteration are evaluated through
/// `batch_objective`, which may evaluate them in any order or in parallel.
inline NcsResult ncs_run(const std::function<std::vector<double>(const std::vector<std::vector<double>>&)>& batch_objective,
                         const NcsConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::size_t N = cfg.searchers, d = cfg.box.dim();
    double mean_width = 0.0;
    for (std::size_t k = 0; k < d; ++k)
        mean_width += cfg.box.width(k);
    mean_width /= static_cast<double>(d);
    const double sigma0 = std::clamp(cfg.sigma_init_fraction > 0.0 ? cfg.sigma_init_fraction * mean_width
                                                                    : mean_width / static_cast<double>(N),
                                     kSigmaMin, kSigmaMax);

    NcsResult res;
    res.searchers.resize(N);
    std::vector<std::vector<double>> batch(N, std::vector<double>(d));
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < d; ++k)
            batch[i][k] = cfg.box.lo[k] + cfg.box.width(k) * rng.uniform();
        res.searchers[i].mean = batch[i];
        res.searchers[i].sigma = sigma0;
    }
    auto record = [&](const std::vector<double>& values, std::size_t iter) {
        if (values.size() != N)
            throw Error("ncs: objective returned " + std::to_string(values.size()) + " values for " +
                        std::to_string(N) + " points");
        for (std::size_t i = 0; i < N; ++i)
            res.ranked.push_back({batch[i], values[i], i, iter});
        res.evaluations += N;
    };

    auto values = batch_objective(batch);
    record(values, 1);
    for (std::size_t i = 0; i < N; ++i) {
        auto& s = res.searchers[i];
        s.value = values[i];
        s.best = s.mean;
        s.best_value = s.value;
    }

    std::vector<Distribution> current(N);
    std::size_t epoch_iters = 0;
    for (std::size_t t = 2; t <= cfg.iterations; ++t) {
        for (std::size_t i = 0; i < N; ++i) {
            const auto& s = res.searchers[i];
            for (std::size_t k = 0; k < d; ++k)
                batch[i][k] = reflect(s.mean[k] + s.sigma * rng.normal(), cfg.box.lo[k], cfg.box.hi[k]);
            current[i] = {s.mean, s.sigma};
        }
        values = batch_objective(batch);
        record(values, t);

        const double progress = static_cast<double>(t) / static_cast<double>(cfg.iterations);
        const double lambda_t = cfg.lambda0 + std::abs(rng.normal(0.0, cfg.lambda_sd * (1.0 - progress)));

        double pool_max = -std::numeric_limits<double>::infinity();
        double pool_min = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < N; ++i) {
            for (double v : {values[i], res.searchers[i].value}) {
                pool_max = std::max(pool_max, v);
                pool_min = std::min(pool_min, v);
            }
        }

        // Both terms are taken relative to the incumbent, as in the original
        // NCS: a tie in fitness leaves the decision to the correlation term.
        std::vector<char> replace(N, 0);
        for (std::size_t i = 0; i < N; ++i) {
            const auto& s = res.searchers[i];
            const double c_new = corr(i, Distribution{batch[i], s.sigma}, current);
            const double c_old = corr(i, current[i], current);
            const double f = pair_share(normalize_fitness(values[i], pool_max, pool_min),
                                        normalize_fitness(s.value, pool_max, pool_min));
            replace[i] = ncs_replace_decision(f, pair_share(c_new, c_old), lambda_t);
        }
        for (std::size_t i = 0; i < N; ++i) {
            auto& s = res.searchers[i];
            if (values[i] > s.value)
                ++s.successes;
            if (values[i] > s.best_value) {
                s.best_value = values[i];
                s.best = batch[i];
            }
            if (replace[i]) {
                s.mean = batch[i];
                s.value = values[i];
            }
        }

        if (++epoch_iters == cfg.epoch) {
            for (auto& s : res.searchers) {
                const double rate = static_cast<double>(s.successes) / static_cast<double>(cfg.epoch);
                s.sigma = std::clamp(s.sigma * std::exp((rate - 0.2) / 3.0), kSigmaMin, kSigmaMax);
                s.successes = 0;
            }
            epoch_iters = 0;
        }
    }

    std::stable_sort(res.ranked.begin(), res.ranked.end(),
                     [](const Evaluation& a, const Evaluation& b) { return a.value > b.value; });
    return res;
}

/// Convenience overload for a pointwise objective.
inline NcsResult ncs_run(const std::function<double(std::span<const double>)>& objective, const NcsConfig& cfg,
                         Rng& rng) {
    return ncs_run(
        [&](const std::vector<std::vector<double>>& pts) {
            std::vector<double> v(pts.size());
            for (std::size_t i = 0; i < pts.size(); ++i)
                v[i] = objective(pts[i]);
            return v;
        },
        cfg, rng);
}

} // namespace antr::ncs
