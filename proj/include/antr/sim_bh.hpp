#pragma once

// Brock-Hommes heterogeneous expectations asset pricing model.
//
//   x_{t+1} = (1/R) [ sum_h n_{h,t+1} (g_h x_t + b_h) + eps_{t+1} ],  R = 1 + r
//   n_{h,t+1} = softmax_h(beta * U_{h,t})
//   U_{h,t}  = (x_t - R x_{t-1}) (g_h x_{t-2} + b_h - R x_{t-1})

#include "antr/core.hpp"

#include <array>

namespace antr::bh {

struct BhConfig {
    std::vector<double> g{0.0, 0.0};
    std::vector<double> b{0.0, 0.0};
    double r = 0.01;
    double beta = 120.0;
    double sigma = 0.04;
    std::array<double, 3> x_init{0.1, 0.1, 0.1}; // x_{-2}, x_{-1}, x_0

    std::size_t types() const { return g.size(); }

    void validate() const {
        if (g.empty() || g.size() != b.size())
            throw ConfigError("BhConfig: g and b must be nonempty and of equal length");
        auto finite = [](double v) { return std::isfinite(v); };
        for (std::size_t h = 0; h < g.size(); ++h)
            if (!finite(g[h]) || !finite(b[h]))
                throw ConfigError("BhConfig: non-finite trader coefficient at type " + std::to_string(h));
        if (!finite(r) || !(r > -1.0))
            throw ConfigError("BhConfig: need finite r > -1");
        if (!finite(beta) || beta < 0.0)
            throw ConfigError("BhConfig: need finite beta >= 0");
        if (!finite(sigma) || sigma < 0.0)
            throw ConfigError("BhConfig: need finite sigma >= 0");
        for (double x : x_init)
            if (!finite(x))
                throw ConfigError("BhConfig: non-finite initial price");
    }
};

inline constexpr double kDivergenceBound = 1e12;

struct BhRun {
    TimeSeries series;
    bool diverged = false;
};

/// Logit fractions with max-subtraction.
inline std::vector<double> bh_fractions(std::span<const double> utilities, double beta) {
    std::vector<double> n(utilities.size());
    if (n.empty())
        return n;
    double top = -std::numeric_limits<double>::infinity();
    for (double u : utilities)
        top = std::max(top, beta * u);
    double total = 0.0;
    for (std::size_t h = 0; h < n.size(); ++h) {
        n[h] = std::exp(beta * utilities[h] - top);
        total += n[h];
    }
    for (double& v : n)
        v /= total;
    return n;
}

inline double bh_utility(double x_t, double x_tm1, double x_tm2, double g_h, double b_h, double R) {
    return (x_t - R * x_tm1) * (g_h * x_tm2 + b_h - R * x_tm1);
}

/// Simulates `t_obs` new prices x_1..x_T. Noise comes from the stream
/// (seed, Purpose::Simulation). Trajectories leaving |x| <= 1e12 are
/// truncated before the offending value and flagged diverged.
inline BhRun bh_simulate(const BhConfig& cfg, std::size_t t_obs, std::uint64_t seed) {
    cfg.validate();
    if (t_obs < 1)
        throw ConfigError("bh_simulate: T_obs must be >= 1");

    const std::size_t H = cfg.types();
    const double R = 1.0 + cfg.r;
    Rng rng = rng_stream(seed, Purpose::Simulation);

    double x2 = cfg.x_init[0], x1 = cfg.x_init[1], x0 = cfg.x_init[2];
    std::vector<double> out;
    out.reserve(t_obs);
    std::vector<double> U(H);
    bool diverged = false;
    for (std::size_t t = 0; t < t_obs; ++t) {
        for (std::size_t h = 0; h < H; ++h)
            U[h] = bh_utility(x0, x1, x2, cfg.g[h], cfg.b[h], R);
        const auto n = bh_fractions(U, cfg.beta);
        double agg = 0.0;
        for (std::size_t h = 0; h < H; ++h)
            agg += n[h] * (cfg.g[h] * x0 + cfg.b[h]);
        const double eps = cfg.sigma > 0.0 ? cfg.sigma * rng.normal() : 0.0;
        const double next = (agg + eps) / R;
        if (!std::isfinite(next) || std::abs(next) > kDivergenceBound) {
            diverged = true;
            break;
        }
        out.push_back(next);
        x2 = x1;
        x1 = x0;
        x0 = next;
    }
    // A run that diverges on its very first step still yields one sample so
    // that downstream padding sees a nonempty series.
    if (out.empty())
        out.push_back(kDivergenceBound);
    return {TimeSeries(std::move(out)), diverged};
}

/// Calibrated coordinates: d=2 -> (g2, b2), d=4 -> (g2, b2, g3, b3).
/// Type 1 is the fundamentalist (g1 = b1 = 0).
inline SpacePtr bh_space(std::size_t dim) {
    if (dim == 2)
        return make_space({0.0, 0.0}, {1.0, 1.0}, {"g2", "b2"});
    if (dim == 4)
        return make_space({0.0, 0.0, 0.0, -1.0}, {1.0, 1.0, 1.0, 1.0}, {"g2", "b2", "g3", "b3"});
    throw ConfigError("bh_space: supported dimensions are 2 and 4, got " + std::to_string(dim));
}

/// Builds a full configuration from a calibrated vector, keeping the fixed
/// constants (r, beta, sigma, x_init) from `base`.
inline BhConfig bh_config_for(const ParamVector& theta, const BhConfig& base) {
    BhConfig cfg = base;
    const auto phys = theta.physical();
    if (phys.size() == 2) {
        cfg.g = {0.0, phys[0]};
        cfg.b = {0.0, phys[1]};
    } else if (phys.size() == 4) {
        cfg.g = {0.0, phys[0], phys[2]};
        cfg.b = {0.0, phys[1], phys[3]};
    } else {
        throw ConfigError("bh_config_for: unsupported dimension " + std::to_string(phys.size()));
    }
    return cfg;
}

} // namespace antr::bh
