#pragma once

// Run configuration: one JSON file per run with a global part (seed, output
// directory, jobs, simulator) and one section per command. Every key is
// checked before any work starts; errors carry the line of the offending key.

#include "antr/engine.hpp"
#include "antr/sampling.hpp"

#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>

namespace antr::config {

using nlohmann::json;

struct Problem {
    std::string name;
    std::vector<double> theta; // physical coordinates
};

struct GenerateSection {
    GenPlan plan;
};

struct PretrainSection {
    std::string dataset;
    std::string resume_from;
    std::optional<std::vector<std::size_t>> widths;
    std::size_t components = 8;
    TrainConfig train;
};

struct CalibrateSection {
    std::string label;
    std::string model;
    std::string dataset;
    std::vector<Problem> problems;
    std::size_t t_obs = 900;
    std::uint64_t obs_seed = 1000;
    std::size_t repeats = 10;
    bool crn = true;
    double success_radius = 0.1;
    CalibrationTask task; // template: sim, mode, budget, regions, ... (no observation or model yet)
};

struct RunConfig {
    std::filesystem::path source;
    std::string text;
    json root;
    std::uint64_t seed = 1;
    std::string output_dir;
    std::size_t jobs = 1;
    bool has_simulator = false;
    SimulatorSpec sim;
    std::optional<GenerateSection> generate;
    std::optional<PretrainSection> pretrain;
    std::optional<CalibrateSection> calibrate;

    /// Resolves a path from the config relative to the config file's directory.
    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path q(p);
        if (q.is_absolute() || source.empty())
            return q;
        return source.parent_path() / q;
    }
};

namespace detail {

/// 1-based line of the first quoted occurrence of `key`, or 0.
inline std::size_t line_of(const std::string& text, const std::string& key) {
    const auto pos = text.find('"' + key + '"');
    if (pos == std::string::npos)
        return 0;
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

class Reader {
public:
    Reader(const json& j, std::string where, const std::string& text) : j_(j), where_(std::move(where)), text_(text) {
        if (!j_.is_object())
            fail(where_, "expected an object");
    }

    [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
        const auto leaf = key.substr(key.rfind('.') == std::string::npos ? 0 : key.rfind('.') + 1);
        const auto line = line_of(text_, leaf);
        throw ConfigError((line ? "line " + std::to_string(line) + ": " : std::string()) + key + ": " + msg);
    }

    void allow(std::initializer_list<const char*> keys) const {
        for (const auto& [key, value] : j_.items()) {
            bool ok = false;
            for (const char* k : keys)
                ok = ok || key == k;
            if (!ok)
                fail(path(key), "unknown key");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <class T>
    T get(const char* key, T fallback) const {
        if (!j_.contains(key))
            return fallback;
        return read<T>(key);
    }

    template <class T>
    T need(const char* key) const {
        if (!j_.contains(key))
            fail(path(key), "missing required key");
        return read<T>(key);
    }

    Reader sub(const char* key) const { return Reader(j_.at(key), path(key), text_); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }
    const std::string& where() const { return where_; }

private:
    template <class T>
    T read(const char* key) const {
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean())
                fail(path(key), "expected true or false");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
                fail(path(key), "expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number())
                fail(path(key), "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string())
                fail(path(key), "expected a string");
        }
        try {
            return v.get<T>();
        } catch (const json::exception& e) {
            fail(path(key), e.what());
        }
    }

    const json& j_;
    std::string where_;
    const std::string& text_;
};

inline TrainConfig read_train(const Reader& r, TrainConfig c) {
    r.allow({"epochs", "batch_size", "step_size", "clip_norm", "val_fraction", "patience", "frozen_layers"});
    c.epochs = r.get("epochs", c.epochs);
    c.batch_size = r.get("batch_size", c.batch_size);
    c.step_size = r.get("step_size", c.step_size);
    c.clip_norm = r.get("clip_norm", c.clip_norm);
    c.val_fraction = r.get("val_fraction", c.val_fraction);
    c.patience = r.get("patience", c.patience);
    if (r.has("frozen_layers")) {
        const json& v = r.raw("frozen_layers");
        if (v == "all")
            c.frozen_layers = CalibrationTask::kFrozenAll;
        else if (v == "all_but_last")
            c.frozen_layers = CalibrationTask::kFrozenAllButLast;
        else
            c.frozen_layers = r.get<std::size_t>("frozen_layers", 0);
    }
    try {
        c.validate();
    } catch (const ConfigError& e) {
        r.fail(r.where(), e.what());
    }
    return c;
}

inline std::vector<double> read_vector(const Reader& r, const char* key) {
    const json& v = r.raw(key);
    if (!v.is_array() || v.empty())
        r.fail(r.path(key), "expected a nonempty array of numbers");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number())
            r.fail(r.path(key), "expected a nonempty array of numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

inline std::string problem_name(const std::vector<double>& theta) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < theta.size(); ++i)
        os << (i ? ", " : "") << theta[i];
    os << ')';
    return os.str();
}

} // namespace detail

/// Parses an already loaded document. `text` is used only for line numbers.
inline RunConfig parse(const json& root, const std::string& text = {}, const std::filesystem::path& source = {}) {
    RunConfig rc;
    rc.root = root;
    rc.text = text;
    rc.source = source;
    detail::Reader top(root, "", text);
    top.allow({"seed", "output_dir", "jobs", "simulator", "generate", "pretrain", "calibrate"});
    rc.seed = top.get<std::uint64_t>("seed", 1);
    rc.output_dir = top.get<std::string>("output_dir", "");
    rc.jobs = top.get<std::size_t>("jobs", 1);
    if (rc.jobs < 1)
        top.fail("jobs", "must be >= 1");
    if (top.has("simulator")) {
        rc.has_simulator = true;
        try {
            rc.sim = simulator_from_json(root.at("simulator"));
        } catch (const ConfigError& e) {
            top.fail("simulator", e.what());
        } catch (const json::exception& e) {
            top.fail("simulator", e.what());
        }
    }

    if (top.has("generate")) {
        auto r = top.sub("generate");
        r.allow({"n_params", "lengths", "t_max"});
        GenerateSection g;
        g.plan.seed = rc.seed;
        g.plan.n_params = r.get("n_params", g.plan.n_params);
        g.plan.t_max = r.get("t_max", rc.sim.id == "pgps" ? std::size_t{3600} : g.plan.t_max);
        if (r.has("lengths"))
            g.plan.lengths = r.need<std::vector<std::size_t>>("lengths");
        else if (rc.sim.id == "pgps")
            g.plan.lengths = {600, 1200, 1800, 2400, 3000, 3600};
        try {
            g.plan.validate();
        } catch (const ConfigError& e) {
            r.fail("generate", e.what());
        }
        rc.generate = g;
    }

    if (top.has("pretrain")) {
        auto r = top.sub("pretrain");
        r.allow({"dataset", "resume_from", "widths", "components", "train"});
        PretrainSection p;
        p.dataset = r.need<std::string>("dataset");
        p.resume_from = r.get<std::string>("resume_from", "");
        if (r.has("widths"))
            p.widths = r.need<std::vector<std::size_t>>("widths");
        p.components = r.get("components", p.components);
        if (p.components < 1)
            r.fail(r.path("components"), "must be >= 1");
        p.train.seed = rc.seed;
        if (r.has("train"))
            p.train = detail::read_train(r.sub("train"), p.train);
        rc.pretrain = p;
    }

    if (top.has("calibrate")) {
        auto r = top.sub("calibrate");
        r.allow({"label", "model", "dataset", "problems", "theta_true", "t_obs", "obs_seed", "repeats", "crn",
                 "success_radius", "mode", "budget", "regions", "candidates", "replicates", "trust", "search",
                 "local_train", "local_min_records"});
        CalibrateSection c;
        auto& t = c.task;
        t.sim = rc.sim;
        try {
            t.mode = parse_mode(r.get<std::string>("mode", "ANTR"));
        } catch (const ConfigError& e) {
            r.fail(r.path("mode"), e.what());
        }
        c.label = r.get<std::string>("label", mode_name(t.mode));
        c.model = r.get<std::string>("model", "");
        c.dataset = r.get<std::string>("dataset", "");
        if (t.mode != Mode::NCS_DIRECT && (c.model.empty() || c.dataset.empty()))
            r.fail(r.path("model"), std::string("mode ") + mode_name(t.mode) + " needs both 'model' and 'dataset'");
        if (r.has("problems")) {
            const json& ps = r.raw("problems");
            if (!ps.is_array() || ps.empty())
                r.fail(r.path("problems"), "expected a nonempty array");
            for (std::size_t i = 0; i < ps.size(); ++i) {
                detail::Reader pr(ps[i], r.path("problems[" + std::to_string(i) + "]"), text);
                pr.allow({"name", "theta"});
                Problem p;
                p.theta = detail::read_vector(pr, "theta");
                p.name = pr.get<std::string>("name", detail::problem_name(p.theta));
                c.problems.push_back(std::move(p));
            }
        } else {
            const auto theta = detail::read_vector(r, "theta_true");
            c.problems.push_back({detail::problem_name(theta), theta});
        }
        for (std::size_t i = 0; i < c.problems.size(); ++i)
            for (std::size_t j = 0; j < i; ++j)
                if (c.problems[i].name == c.problems[j].name)
                    r.fail(r.path("problems"), "duplicate problem name '" + c.problems[i].name + "'");
        c.t_obs = r.get("t_obs", c.t_obs);
        if (c.t_obs < 1)
            r.fail(r.path("t_obs"), "must be >= 1");
        c.obs_seed = r.get("obs_seed", c.obs_seed);
        c.repeats = r.get("repeats", c.repeats);
        if (c.repeats < 1)
            r.fail(r.path("repeats"), "must be >= 1");
        c.crn = r.get("crn", c.crn);
        c.success_radius = r.get("success_radius", c.success_radius);
        if (!(c.success_radius > 0.0))
            r.fail(r.path("success_radius"), "must be positive");
        t.budget = r.get("budget", t.budget);
        t.regions = r.get("regions", t.regions);
        t.candidates = r.get("candidates", t.candidates);
        t.replicates = r.get("replicates", t.replicates);
        t.local_min_records = r.get("local_min_records", t.local_min_records);
        if (t.regions < 1)
            r.fail(r.path("regions"), "must be >= 1");
        if (r.has("trust")) {
            auto tr = r.sub("trust");
            tr.allow({"L_init", "L_min", "L_max", "success_tol", "init_samples"});
            t.trust.L_init = tr.get("L_init", t.trust.L_init);
            t.trust.L_min = tr.get("L_min", t.trust.L_min);
            t.trust.L_max = tr.get("L_max", t.trust.L_max);
            t.trust.success_tol = tr.get("success_tol", t.trust.success_tol);
            t.trust.init_samples = tr.get("init_samples", t.trust.init_samples);
        }
        t.trust.regions = t.regions;
        if (r.has("search")) {
            auto sr = r.sub("search");
            sr.allow({"iterations", "epoch", "lambda0", "lambda_sd", "atr_pool"});
            t.search.iterations = sr.get("iterations", t.search.iterations);
            t.search.epoch = sr.get("epoch", t.search.epoch);
            t.search.lambda0 = sr.get("lambda0", t.search.lambda0);
            t.search.lambda_sd = sr.get("lambda_sd", t.search.lambda_sd);
            t.search.atr_pool = sr.get("atr_pool", t.search.atr_pool);
        }
        if (r.has("local_train"))
            t.local_train = detail::read_train(r.sub("local_train"), t.local_train);
        t.x_obs = TimeSeries(std::vector<double>(c.t_obs, 1.0));
        try {
            // model-dependent checks run once the model is loaded
            const bool direct = t.mode == Mode::NCS_DIRECT;
            if (direct)
                t.validate();
            else {
                t.trust.validate();
                if (t.candidates < 1 || t.replicates < 1)
                    throw ConfigError("candidates and replicates must be >= 1");
                if (t.budget < t.wave_cost())
                    throw ConfigError("budget " + std::to_string(t.budget) + " is below one full iteration (" +
                                      std::to_string(t.wave_cost()) + " simulations)");
            }
        } catch (const ConfigError& e) {
            r.fail(r.path("budget"), e.what());
        }
        rc.calibrate = c;
    }
    return rc;
}

/// Checks every problem's theta against the simulator the run resolves to.
inline void check_problems(const CalibrateSection& c, const SimulatorSpec& sim) {
    const auto space = sim.space();
    for (const auto& p : c.problems) {
        try {
            (void)to_unit(p.theta, space);
        } catch (const Error& e) {
            throw ConfigError("calibrate.problems: '" + p.name + "': " + e.what());
        }
    }
}

/// Reads and parses a config file. Syntax errors report line and column.
inline RunConfig load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw IoError("cannot open config '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        const std::size_t byte = e.byte == 0 ? 0 : e.byte - 1;
        const auto upto = text.substr(0, std::min(byte, text.size()));
        const std::size_t line = 1 + static_cast<std::size_t>(std::count(upto.begin(), upto.end(), '\n'));
        const std::size_t col = upto.size() - (upto.rfind('\n') == std::string::npos ? 0 : upto.rfind('\n') + 1) + 1;
        throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": malformed JSON");
    }
    try {
        return parse(root, text, path);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

} // namespace antr::config
