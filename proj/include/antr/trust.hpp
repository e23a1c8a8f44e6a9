#pragma once

// Trust regions: boxes of side L around a center, doubled after three
// consecutive improvements, halved after fail_tol consecutive failures and
// restarted from the global posterior once L drops below L_min.

#include "antr/surrogate.hpp"

#include <functional>

namespace antr {

struct TrustConfig {
    std::size_t regions = 3;
    double L_init = 0.4;
    double L_min = 0.01;
    double L_max = 1.0;
    std::size_t success_tol = 3;
    std::size_t init_samples = 1000;

    void validate() const {
        if (regions < 1)
            throw ConfigError("trust.regions must be >= 1");
        if (!(L_min > 0.0 && L_min <= L_init && L_init <= L_max))
            throw ConfigError("trust: need 0 < L_min <= L_init <= L_max");
        if (success_tol < 1 || init_samples < 1)
            throw ConfigError("trust: success_tol and init_samples must be >= 1");
    }
};

/// ceil(max(4/N, d/N)).
inline std::size_t fail_tolerance(std::size_t population, std::size_t dim) {
    if (population < 1 || dim < 1)
        throw ConfigError("fail_tolerance: need N >= 1 and d >= 1");
    const double n = static_cast<double>(population);
    return static_cast<std::size_t>(std::ceil(std::max(4.0 / n, static_cast<double>(dim) / n)));
}

struct TrustRegion {
    std::size_t id = 0;
    std::vector<double> center;
    double L = 0.4;
    std::size_t c_s = 0;
    std::size_t c_f = 0;
    std::vector<double> best;
    double best_fitness = -std::numeric_limits<double>::infinity();
    bool alive = true;
    std::size_t restarts = 0;

    /// center +- L/2 in every dimension, intersected with the unit cube.
    Box box() const {
        Box b;
        b.lo.resize(center.size());
        b.hi.resize(center.size());
        for (std::size_t i = 0; i < center.size(); ++i) {
            b.lo[i] = std::clamp(center[i] - 0.5 * L, 0.0, 1.0);
            b.hi[i] = std::clamp(center[i] + 0.5 * L, 0.0, 1.0);
        }
        return b;
    }

    /// Records a new archival best and recenters on it.
    void set_best(std::vector<double> theta, double fitness) {
        best = std::move(theta);
        best_fitness = fitness;
        center = best;
    }
};

/// Best solutions retired by restarts, plus the running overall best.
struct Archive {
    std::vector<double> best;
    double best_fitness = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::vector<double>, double>> retired;

    void offer(const std::vector<double>& theta, double fitness) {
        if (fitness > best_fitness) {
            best = theta;
            best_fitness = fitness;
        }
    }
};

enum class RegionEvent { None, Expanded, Shrunk, Restarted };

/// Counter update for one iteration outcome. `draw_center` supplies a fresh
/// center from the global posterior when the region collapses.
inline RegionEvent record_outcome(TrustRegion& region, bool improved, std::size_t fail_tol, const TrustConfig& cfg,
                                  const std::function<std::vector<double>()>& draw_center, Archive* archive = nullptr) {
    if (!region.alive)
        throw Error("record_outcome: region is not alive");
    if (improved) {
        ++region.c_s;
        region.c_f = 0;
    } else {
        ++region.c_f;
        region.c_s = 0;
    }
    RegionEvent ev = RegionEvent::None;
    if (region.c_s >= cfg.success_tol) {
        region.L = std::min(2.0 * region.L, cfg.L_max);
        region.c_s = 0;
        ev = RegionEvent::Expanded;
    }
    if (region.c_f >= fail_tol) {
        region.L *= 0.5;
        region.c_f = 0;
        ev = RegionEvent::Shrunk;
    }
    if (region.L < cfg.L_min) {
        if (archive && !region.best.empty()) {
            archive->retired.emplace_back(region.best, region.best_fitness);
            archive->offer(region.best, region.best_fitness);
        }
        region.center = draw_center();
        region.L = cfg.L_init;
        region.c_s = 0;
        region.c_f = 0;
        region.best.clear();
        region.best_fitness = -std::numeric_limits<double>::infinity();
        ++region.restarts;
        ev = RegionEvent::Restarted;
    }
    return ev;
}

inline double unit_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

struct RegionInit {
    std::vector<TrustRegion> regions;
    std::vector<double> mode_estimate; // highest-density sample
};

/// Centers from the highest-density posterior samples, at least L_init/2
/// apart; the farthest remaining sample fills any shortfall.
inline RegionInit init_regions(const Mixture& posterior, const TrustConfig& cfg, Rng& rng) {
    cfg.validate();
    auto draws = sample_mixture(posterior, cfg.init_samples, rng, Box::unit(posterior.d)).points;
    std::vector<std::pair<double, std::size_t>> scored(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i)
        scored[i] = {posterior.log_prob(draws[i]), i};
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

    std::vector<std::size_t> chosen;
    const double sep = 0.5 * cfg.L_init;
    for (const auto& [lp, idx] : scored) {
        if (chosen.size() == cfg.regions)
            break;
        bool ok = true;
        for (auto c : chosen)
            ok = ok && unit_distance(draws[idx], draws[c]) >= sep;
        if (ok)
            chosen.push_back(idx);
    }
    while (chosen.size() < cfg.regions) {
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < draws.size(); ++i) {
            double dmin = std::numeric_limits<double>::infinity();
            for (auto c : chosen)
                dmin = std::min(dmin, unit_distance(draws[i], draws[c]));
            if (dmin > far_d) {
                far_d = dmin;
                far = i;
            }
        }
        chosen.push_back(far);
    }

    RegionInit out;
    out.mode_estimate = draws[scored.front().second];
    for (std::size_t j = 0; j < chosen.size(); ++j) {
        TrustRegion r;
        r.id = j;
        r.center = draws[chosen[j]];
        r.L = cfg.L_init;
        out.regions.push_back(std::move(r));
    }
    return out;
}

} // namespace antr
