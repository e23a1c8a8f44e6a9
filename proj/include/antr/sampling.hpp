#pragma once

// Latin hypercube designs and pretraining-set generation.

#include "antr/dataset.hpp"
#include "antr/parallel.hpp"
#include "antr/simulator.hpp"

namespace antr {

/// n stratified points in [0,1)^d: per dimension, a random permutation of
/// the strata k/n .. (k+1)/n with uniform jitter inside each stratum.
inline std::vector<std::vector<double>> lhs_unit(std::size_t n, std::size_t d, Rng& rng) {
    if (n < 1 || d < 1)
        throw ConfigError("lhs: need n >= 1 and d >= 1");
    std::vector<std::vector<double>> pts(n, std::vector<double>(d));
    std::vector<std::size_t> perm(n);
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < n; ++i)
            perm[i] = i;
        rng.shuffle(perm);
        for (std::size_t i = 0; i < n; ++i) {
            double v = (static_cast<double>(perm[i]) + rng.uniform()) * inv;
            // keep the point inside its stratum despite rounding
            const double hi = std::nextafter(static_cast<double>(perm[i] + 1) * inv, 0.0);
            pts[i][k] = std::min(v, hi);
        }
    }
    return pts;
}

inline std::vector<ParamVector> lhs_sample(std::size_t n, const SpacePtr& space, std::uint64_t seed) {
    Rng rng = rng_stream(seed, Purpose::Sampling);
    auto pts = lhs_unit(n, space->dim(), rng);
    std::vector<ParamVector> out;
    out.reserve(n);
    for (auto& p : pts)
        out.emplace_back(std::move(p), space);
    return out;
}

struct GenPlan {
    std::size_t n_params = 50;
    std::vector<std::size_t> lengths{100, 200, 300, 400, 500, 600, 700, 800, 900};
    std::size_t t_max = 1000;
    std::uint64_t seed = 1;

    void validate() const {
        if (n_params < 1)
            throw ConfigError("generate.n_params must be >= 1");
        if (lengths.empty())
            throw ConfigError("generate.lengths must be nonempty");
        if (t_max < 1)
            throw ConfigError("generate.t_max must be >= 1");
        for (auto len : lengths)
            if (len < 1 || len > t_max)
                throw ConfigError("generate.lengths: " + std::to_string(len) + " not in [1, t_max=" +
                                  std::to_string(t_max) + "]");
    }
};

/// Seed of record `index` of a plan.
inline std::uint64_t record_seed(std::uint64_t plan_seed, std::uint64_t index) {
    return mix_seed({plan_seed, static_cast<std::uint64_t>(Purpose::Simulation), index});
}

/// Draws a fresh LHS design per length and simulates each point once.
/// Records are appended in (length, design index) order.
inline Dataset generate_dataset(const GenPlan& plan, const SimulatorSpec& sim, std::size_t jobs = 1) {
    plan.validate();
    const auto space = sim.space();
    Dataset ds(space, sim.id, plan.t_max, to_json(sim));

    struct Job {
        ParamVector theta;
        std::size_t length;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    work.reserve(plan.n_params * plan.lengths.size());
    for (std::size_t li = 0; li < plan.lengths.size(); ++li) {
        auto design = lhs_sample(plan.n_params, space, mix_seed({plan.seed, li}));
        for (auto& theta : design) {
            const auto idx = work.size();
            work.push_back({std::move(theta), plan.lengths[li], record_seed(plan.seed, idx)});
        }
    }

    std::vector<SimOutput> outputs(work.size());
    parallel_for(work.size(), jobs, [&](std::size_t i) {
        outputs[i] = sim.simulate(work[i].theta, work[i].length, work[i].seed);
    });
    for (std::size_t i = 0; i < work.size(); ++i)
        ds.append({work[i].theta, std::move(outputs[i].series), work[i].seed, sim.id, outputs[i].diverged});
    return ds;
}

} // namespace antr
