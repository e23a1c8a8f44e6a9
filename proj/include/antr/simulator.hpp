#pragma once

// Uniform front end over the two market simulators: maps a unit-cube
// parameter vector to a price series, and round-trips its fixed
// configuration through JSON so datasets carry their simulator settings.

#include "antr/sim_bh.hpp"
#include "antr/sim_pgps.hpp"

#include <nlohmann/json.hpp>

namespace antr {

struct SimOutput {
    TimeSeries series;
    bool diverged = false;
};

struct SimulatorSpec {
    std::string id = "bh"; // "bh" | "pgps"
    std::size_t dim = 2;
    bh::BhConfig bh;
    pgps::PgpsSettings pgps;

    SpacePtr space() const {
        if (id == "bh")
            return bh::bh_space(dim);
        if (id == "pgps") {
            if (dim != 6)
                throw ConfigError("pgps simulator has dimension 6");
            return pgps::pgps_space();
        }
        throw ConfigError("unknown simulator id '" + id + "'");
    }

    SimOutput simulate(const ParamVector& theta, std::size_t t_obs, std::uint64_t seed) const {
        if (id == "bh") {
            auto run = bh::bh_simulate(bh::bh_config_for(theta, bh), t_obs, seed);
            return {std::move(run.series), run.diverged};
        }
        if (id == "pgps") {
            auto run = pgps::pgps_simulate(pgps::pgps_params_from(theta), t_obs, seed, pgps);
            return {std::move(run.series), false};
        }
        throw ConfigError("unknown simulator id '" + id + "'");
    }
};

inline nlohmann::json to_json(const SimulatorSpec& s) {
    nlohmann::json j;
    j["id"] = s.id;
    j["dim"] = s.dim;
    if (s.id == "bh") {
        j["bh"] = {{"r", s.bh.r},
                   {"beta", s.bh.beta},
                   {"sigma", s.bh.sigma},
                   {"x_init", std::vector<double>(s.bh.x_init.begin(), s.bh.x_init.end())}};
    } else {
        j["pgps"] = {{"n_providers", s.pgps.n_providers},
                     {"n_takers", s.pgps.n_takers},
                     {"p0", s.pgps.p0},
                     {"warmup", s.pgps.warmup},
                     {"cancel_owner", s.pgps.cancel_owner == pgps::CancelOwner::Provider ? "provider" : "taker"},
                     {"placement", s.pgps.placement == pgps::PlacementRule::AsPrinted ? "as_printed" : "opposite_anchored"}};
    }
    return j;
}

namespace detail {

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object())
        throw ConfigError(where + ": expected an object");
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            ok = ok || key == a;
        if (!ok)
            throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

} // namespace detail

inline SimulatorSpec simulator_from_json(const nlohmann::json& j) {
    detail::reject_unknown(j, {"id", "dim", "bh", "pgps"}, "simulator");
    SimulatorSpec s;
    s.id = j.value("id", std::string("bh"));
    if (s.id != "bh" && s.id != "pgps")
        throw ConfigError("simulator: unknown key value id='" + s.id + "'");
    s.dim = j.value("dim", s.id == "pgps" ? std::size_t{6} : std::size_t{2});
    if (j.contains("bh")) {
        const auto& b = j.at("bh");
        detail::reject_unknown(b, {"r", "beta", "sigma", "x_init"}, "simulator.bh");
        s.bh.r = b.value("r", s.bh.r);
        s.bh.beta = b.value("beta", s.bh.beta);
        s.bh.sigma = b.value("sigma", s.bh.sigma);
        if (b.contains("x_init")) {
            auto x = b.at("x_init").get<std::vector<double>>();
            if (x.size() != 3)
                throw ConfigError("simulator.bh.x_init: expected three values");
            std::copy(x.begin(), x.end(), s.bh.x_init.begin());
        }
        bh::BhConfig probe = s.bh;
        probe.validate();
    }
    if (j.contains("pgps")) {
        const auto& p = j.at("pgps");
        detail::reject_unknown(p, {"n_providers", "n_takers", "p0", "warmup", "cancel_owner", "placement"}, "simulator.pgps");
        s.pgps.n_providers = p.value("n_providers", s.pgps.n_providers);
        s.pgps.n_takers = p.value("n_takers", s.pgps.n_takers);
        s.pgps.p0 = p.value("p0", s.pgps.p0);
        s.pgps.warmup = p.value("warmup", s.pgps.warmup);
        const auto owner = p.value("cancel_owner", std::string("provider"));
        if (owner != "provider" && owner != "taker")
            throw ConfigError("simulator.pgps.cancel_owner must be 'provider' or 'taker'");
        s.pgps.cancel_owner = owner == "provider" ? pgps::CancelOwner::Provider : pgps::CancelOwner::Taker;
        const auto placement = p.value("placement", std::string("opposite_anchored"));
        if (placement != "as_printed" && placement != "opposite_anchored")
            throw ConfigError("simulator.pgps.placement must be 'as_printed' or 'opposite_anchored'");
        s.pgps.placement =
            placement == "as_printed" ? pgps::PlacementRule::AsPrinted : pgps::PlacementRule::OppositeAnchored;
    }
    (void)s.space(); // validates id/dim
    return s;
}

} // namespace antr
