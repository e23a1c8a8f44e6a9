#pragma once

// Calibration driver. ANTR keeps M trust regions over the unit cube; every
// iteration each region fine-tunes a local surrogate on the records inside
// its box, proposes N candidates by searching the local posterior density
// for the observation, and spends N true simulations on them. ATR proposes
// posterior samples instead of searching, and NCS_DIRECT runs the search
// straight on simulated fitness with no surrogate at all.

#include "antr/metrics.hpp"
#include "antr/ncs.hpp"
#include "antr/parallel.hpp"
#include "antr/simulator.hpp"
#include "antr/train.hpp"
#include "antr/trust.hpp"

#include <chrono>
#include <optional>
#include <ostream>

namespace antr {

inline constexpr double kDivergedFitness = -1e30;

/// Negative MSE over the overlapping prefix of the two series.
inline double fitness(std::span<const double> x_obs, std::span<const double> sim, bool diverged = false) {
    if (diverged)
        return kDivergedFitness;
    const std::size_t n = std::min(x_obs.size(), sim.size());
    if (n == 0)
        throw Error("fitness: simulated and observed series do not overlap");
    return -metrics::mse(x_obs.first(n), sim.first(n));
}

inline double fitness(const TimeSeries& x_obs, const SimOutput& out) {
    return fitness(x_obs.values(), out.series.values(), out.diverged);
}

enum class Mode { ANTR, ATR, NCS_DIRECT };

inline const char* mode_name(Mode m) {
    switch (m) {
    case Mode::ANTR: return "ANTR";
    case Mode::ATR: return "ATR";
    case Mode::NCS_DIRECT: return "NCS_DIRECT";
    }
    return "?";
}

inline Mode parse_mode(const std::string& s) {
    if (s == "ANTR")
        return Mode::ANTR;
    if (s == "ATR")
        return Mode::ATR;
    if (s == "NCS_DIRECT")
        return Mode::NCS_DIRECT;
    throw ConfigError("unknown mode '" + s + "' (expected ANTR, ATR or NCS_DIRECT)");
}

struct SearchSettings {
    std::size_t iterations = 200; // surrogate NCS iterations per region per round
    std::size_t epoch = 10;
    double lambda0 = 1.0;
    double lambda_sd = 0.1;
    std::size_t atr_pool = 10;    // ATR samples pool_factor * N points and keeps the N densest
};

struct CalibrationTask {
    SimulatorSpec sim;
    TimeSeries x_obs;
    std::size_t budget = 900;
    Mode mode = Mode::ANTR;
    std::size_t regions = 3;    // M
    std::size_t candidates = 10; // N
    std::size_t replicates = 1; // simulations averaged per candidate
    std::uint64_t seed = 1;
    /// When set, every candidate simulation reuses this noise seed (common
    /// random numbers). Otherwise each call draws a fresh seed.
    std::optional<std::uint64_t> noise_seed;
    const PosteriorModel* model = nullptr;
    const Dataset* data = nullptr;
    TrustConfig trust;
    SearchSettings search;
    TrainConfig local_train = default_local_train();
    std::size_t local_min_records = 20;
    std::size_t jobs = 1;

    // Sentinels resolved against the model's embedding depth: every layer,
    // or every layer except the last.
    static constexpr std::size_t kFrozenAll = std::numeric_limits<std::size_t>::max();
    static constexpr std::size_t kFrozenAllButLast = kFrozenAll - 1;

    static TrainConfig default_local_train() {
        TrainConfig c;
        c.epochs = 300;
        c.batch_size = 64;
        c.step_size = 3e-3;
        c.patience = 30;
        c.frozen_layers = kFrozenAllButLast;
        return c;
    }

    static std::size_t resolve_frozen(std::size_t frozen, std::size_t depth) {
        if (frozen == kFrozenAllButLast)
            return depth > 0 ? depth - 1 : 0;
        return std::min(frozen, depth);
    }

    std::size_t wave_cost() const {
        return (mode == Mode::NCS_DIRECT ? 1 : regions) * candidates * replicates;
    }

    void validate() const {
        trust.validate();
        local_train.validate();
        if (candidates < 1 || replicates < 1)
            throw ConfigError("calibrate: candidates and replicates must be >= 1");
        if (mode == Mode::NCS_DIRECT && candidates < 2)
            throw ConfigError("calibrate: NCS_DIRECT needs at least two searchers");
        if (budget < wave_cost())
            throw ConfigError("calibrate: budget " + std::to_string(budget) + " is below one full iteration (" +
                              std::to_string(wave_cost()) + " simulations)");
        if (mode != Mode::NCS_DIRECT) {
            if (!model || !data)
                throw ConfigError(std::string("calibrate: mode ") + mode_name(mode) + " needs a pretrained model and its dataset");
            if (!same_space(model->space(), data->space()))
                throw ConfigError("calibrate: model and dataset spaces differ");
            if (data->sim_id() != sim.id)
                throw ConfigError("calibrate: dataset was produced by '" + data->sim_id() + "', task uses '" + sim.id + "'");
            if (*model->space() != *sim.space())
                throw ConfigError("calibrate: model space differs from the simulator space");
            if (x_obs.length() > model->t_max())
                throw ConfigError("calibrate: observation longer than the model horizon");
        }
        if (search.iterations < 1 || search.epoch < 1 || search.atr_pool < 1)
            throw ConfigError("calibrate: search settings must be >= 1");
    }
};

struct TraceRow {
    std::size_t index = 0; // 0-based evaluation index
    std::size_t iteration = 0;
    std::size_t region = 0;
    std::vector<double> theta; // unit coordinates
    double fitness = 0.0;
    double running_best = 0.0;
};

struct RegionTelemetry {
    std::size_t iteration = 0;
    std::size_t region = 0;
    double L = 0.0;
    std::size_t c_s = 0;
    std::size_t c_f = 0;
    double best_fitness = 0.0;
    std::size_t local_records = 0;
    bool fallback = false;
    RegionEvent event = RegionEvent::None;
};

inline const char* event_name(RegionEvent e) {
    switch (e) {
    case RegionEvent::None: return "none";
    case RegionEvent::Expanded: return "expanded";
    case RegionEvent::Shrunk: return "shrunk";
    case RegionEvent::Restarted: return "restarted";
    }
    return "?";
}

struct CalibrationResult {
    Mode mode = Mode::ANTR;
    std::vector<double> best_theta; // unit coordinates
    double best_fitness = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::vector<double>, double>> region_best;
    std::vector<double> mode_estimate; // global posterior mode estimate (surrogate modes)
    std::vector<TraceRow> trace;
    std::vector<RegionTelemetry> telemetry;
    std::size_t calls = 0;
    std::size_t iterations = 0;
    std::size_t dataset_records = 0;
    bool partial = false;
    double wall_seconds = 0.0;

    std::vector<double> running_best() const {
        std::vector<double> out;
        out.reserve(trace.size());
        for (const auto& r : trace)
            out.push_back(r.running_best);
        return out;
    }

    /// Running best after the first `calls` simulations.
    double best_after(std::size_t n) const {
        double b = -std::numeric_limits<double>::infinity();
        for (const auto& r : trace)
            if (r.index < n)
                b = std::max(b, r.fitness);
        return b;
    }
};

inline void write_trace_csv(std::ostream& os, const CalibrationResult& res) {
    const std::size_t d = res.best_theta.size();
    os << "eval,iteration,region";
    for (std::size_t i = 0; i < d; ++i)
        os << ",u" << (i + 1);
    os << ",fitness,running_best\n";
    for (const auto& r : res.trace) {
        os << r.index << ',' << r.iteration << ',' << r.region;
        for (double u : r.theta)
            os << ',' << detail::fmt_double(u);
        os << ',' << detail::fmt_double(r.fitness) << ',' << detail::fmt_double(r.running_best) << '\n';
    }
}

inline void write_telemetry_csv(std::ostream& os, const CalibrationResult& res) {
    os << "iteration,region,L,c_s,c_f,best_fitness,local_records,fallback,event\n";
    for (const auto& t : res.telemetry) {
        os << t.iteration << ',' << t.region << ',' << detail::fmt_double(t.L) << ',' << t.c_s << ',' << t.c_f << ','
           << detail::fmt_double(t.best_fitness) << ',' << t.local_records << ',' << (t.fallback ? 1 : 0) << ',' << event_name(t.event) << '\n';
    }
}

namespace detail {

/// Keeps the first occurrence of points closer than `tol` (max-norm) to an
/// earlier one.
inline std::vector<std::vector<double>> dedupe(const std::vector<std::vector<double>>& pts, double tol = 1e-6) {
    std::vector<std::vector<double>> out;
    for (const auto& p : pts) {
        bool dup = false;
        for (const auto& q : out) {
            double m = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i)
                m = std::max(m, std::abs(p[i] - q[i]));
            if (m < tol) {
                dup = true;
                break;
            }
        }
        if (!dup)
            out.push_back(p);
    }
    return out;
}

class Evaluator {
public:
    Evaluator(const CalibrationTask& task, Dataset* ds, CalibrationResult* res)
        : task_(task), ds_(ds), res_(res), space_(task.sim.space()) {}

    std::size_t remaining() const { return task_.budget - res_->calls; }
    std::size_t cost() const { return task_.replicates; }

    /// Simulates every point (budget permitting, in order), appends the
    /// records and returns one fitness per evaluated point.
    std::vector<double> run(const std::vector<std::vector<double>>& pts, std::span<const std::size_t> region,
                            std::size_t iteration) {
        const std::size_t affordable = std::min(pts.size(), remaining() / cost());
        const std::size_t R = task_.replicates;
        const std::size_t base = res_->calls;
        std::vector<SimOutput> outs(affordable * R);
        std::vector<std::uint64_t> seeds(affordable * R);
        for (std::size_t c = 0; c < affordable * R; ++c)
            seeds[c] = seed_for(base + c, c % R);
        const std::size_t T = task_.x_obs.length();
        parallel_for(outs.size(), task_.jobs, [&](std::size_t c) {
            outs[c] = task_.sim.simulate(ParamVector(pts[c / R], space_), T, seeds[c]);
        });
        std::vector<double> fit(affordable, 0.0);
        for (std::size_t i = 0; i < affordable; ++i) {
            double f = 0.0;
            for (std::size_t r = 0; r < R; ++r) {
                const std::size_t c = i * R + r;
                f += fitness(task_.x_obs, outs[c]);
                if (ds_) {
                    SimRecord rec{ParamVector(pts[i], space_), outs[c].series, seeds[c], task_.sim.id, outs[c].diverged};
                    ds_->append(std::move(rec));
                }
            }
            fit[i] = f / static_cast<double>(R);
            const double prev = res_->trace.empty() ? -std::numeric_limits<double>::infinity() : res_->trace.back().running_best;
            res_->trace.push_back({res_->calls, iteration, region[i], pts[i], fit[i], std::max(prev, fit[i])});
            res_->calls += R;
            if (fit[i] > res_->best_fitness) {
                res_->best_fitness = fit[i];
                res_->best_theta = pts[i];
            }
        }
        if (affordable < pts.size())
            res_->partial = true;
        return fit;
    }

private:
    std::uint64_t seed_for(std::size_t call, std::size_t replicate) const {
        if (task_.noise_seed)
            return replicate == 0 ? *task_.noise_seed : mix_seed({*task_.noise_seed, replicate});
        return mix_seed({task_.seed, 0xca11, call});
    }

    const CalibrationTask& task_;
    Dataset* ds_;
    CalibrationResult* res_;
    SpacePtr space_;
};

inline CalibrationResult calibrate_direct(const CalibrationTask& task) {
    CalibrationResult res;
    res.mode = task.mode;
    const std::size_t d = task.sim.space()->dim();
    Evaluator eval(task, nullptr, &res);

    ncs::NcsConfig cfg;
    cfg.searchers = task.candidates;
    const std::size_t per_iter = task.candidates * task.replicates;
    cfg.iterations = (task.budget + per_iter - 1) / per_iter;
    cfg.epoch = task.search.epoch;
    cfg.lambda0 = task.search.lambda0;
    cfg.lambda_sd = task.search.lambda_sd;
    cfg.box = Box::unit(d);
    cfg.seed = task.seed;
    Rng rng = rng_stream(task.seed, Purpose::Search);
    const std::vector<std::size_t> region(task.candidates, 0);
    std::size_t iteration = 0;
    ncs::ncs_run(
        [&](const std::vector<std::vector<double>>& pts) {
            ++iteration;
            auto f = eval.run(pts, region, iteration);
            // Points past the budget were never simulated; they can never be accepted.
            f.resize(pts.size(), -std::numeric_limits<double>::infinity());
            return f;
        },
        cfg, rng);
    res.iterations = iteration;
    res.region_best.emplace_back(res.best_theta, res.best_fitness);
    return res;
}

} // namespace detail

/// Runs one calibration. The pretraining dataset is copied and grows by one
/// record per simulation charged to the budget.
inline CalibrationResult calibrate(const CalibrationTask& task, Dataset* working_out = nullptr) {
    task.validate();
    const auto t0 = std::chrono::steady_clock::now();
    CalibrationResult res;
    if (task.mode == Mode::NCS_DIRECT) {
        res = detail::calibrate_direct(task);
        res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return res;
    }

    res.mode = task.mode;
    const PosteriorModel& global = *task.model;
    const std::size_t d = global.dim();
    const std::size_t M = task.regions, N = task.candidates;
    Dataset ds = *task.data;
    detail::Evaluator eval(task, &ds, &res);

    // Frozen layers are shared by every local fit, so their activations are
    // computed once per record and once for the observation.
    TrainConfig local_cfg = task.local_train;
    local_cfg.frozen_layers = CalibrationTask::resolve_frozen(local_cfg.frozen_layers, global.depth());
    const std::size_t frozen = local_cfg.frozen_layers;
    Eigen::MatrixXd cache;
    if (frozen > 0)
        cache = dataset_features(global, ds, frozen);
    const Eigen::MatrixXd h_obs = global.forward_layers(global.input_vector(task.x_obs), 0, frozen);
    auto local_mixture = [&](const PosteriorModel& m) {
        return m.mixture(Eigen::VectorXd(m.forward_layers(h_obs, frozen, m.depth()).col(0)));
    };
    const Mixture global_post = local_mixture(global);

    TrustConfig trust = task.trust;
    trust.regions = M;
    Rng region_rng = rng_stream(task.seed, Purpose::Regions);
    auto init = init_regions(global_post, trust, region_rng);
    auto regions = std::move(init.regions);
    res.mode_estimate = init.mode_estimate;
    Archive archive;
    const std::size_t fail_tol = fail_tolerance(N, d);
    auto draw_center = [&] { return sample_mixture(global_post, 1, region_rng, Box::unit(d)).points.front(); };

    std::size_t iteration = 0;
    while (eval.remaining() >= eval.cost()) {
        ++iteration;
        std::vector<std::vector<double>> wave;
        std::vector<std::size_t> owner;
        std::vector<std::size_t> wave_size(M, 0);
        std::vector<std::pair<std::size_t, bool>> local_info(M);

        for (std::size_t j = 0; j < M; ++j) {
            const Box box = regions[j].box();
            TrainConfig tc = local_cfg;
            tc.seed = mix_seed({task.seed, iteration, j});
            auto fit = train_local(global, ds, box, tc, task.local_min_records, frozen > 0 ? &cache : nullptr);
            local_info[j] = {fit.subset_size, fit.fallback};
            const Mixture post = local_mixture(fit.model);
            Rng rng = rng_stream(mix_seed({task.seed, iteration, j}), Purpose::Search);

            std::vector<std::vector<double>> cand;
            if (task.mode == Mode::ANTR) {
                ncs::NcsConfig nc;
                nc.searchers = std::max<std::size_t>(N, 2);
                nc.iterations = task.search.iterations;
                nc.epoch = task.search.epoch;
                nc.lambda0 = task.search.lambda0;
                nc.lambda_sd = task.search.lambda_sd;
                nc.box = box;
                nc.seed = tc.seed;
                auto out = ncs::ncs_run([&](std::span<const double> x) { return post.log_prob(x); }, nc, rng);
                std::vector<std::pair<double, std::vector<double>>> bests;
                for (const auto& s : out.searchers)
                    bests.emplace_back(s.best_value, s.best);
                std::stable_sort(bests.begin(), bests.end(),
                                 [](const auto& a, const auto& b) { return a.first > b.first; });
                for (auto& b : bests)
                    cand.push_back(std::move(b.second));
                for (const auto& e : out.ranked)
                    cand.push_back(e.theta);
            } else {
                auto pool = sample_mixture(post, task.search.atr_pool * N, rng, box).points;
                std::vector<std::pair<double, std::size_t>> scored(pool.size());
                for (std::size_t i = 0; i < pool.size(); ++i)
                    scored[i] = {post.log_prob(pool[i]), i};
                std::stable_sort(scored.begin(), scored.end(),
                                 [](const auto& a, const auto& b) { return a.first > b.first; });
                for (const auto& s : scored)
                    cand.push_back(pool[s.second]);
            }
            cand = detail::dedupe(cand);
            // a collapsed region can yield fewer than N distinct points; top
            // up from the local posterior, then uniformly inside the box
            for (int round = 0; cand.size() < N && round < 3; ++round) {
                auto extra = sample_mixture(post, N - cand.size(), rng, box).points;
                cand.insert(cand.end(), extra.begin(), extra.end());
                cand = detail::dedupe(cand);
            }
            for (std::size_t tries = 0; cand.size() < N; ++tries) {
                std::vector<double> u(d);
                for (std::size_t i = 0; i < d; ++i)
                    u[i] = rng.uniform(box.lo[i], box.hi[i]);
                cand.push_back(std::move(u));
                if (tries < 100 * N) // boxes narrower than the tolerance keep repeats
                    cand = detail::dedupe(cand);
            }
            if (cand.size() > N)
                cand.resize(N);
            wave_size[j] = cand.size();
            for (auto& c : cand) {
                wave.push_back(std::move(c));
                owner.push_back(j);
            }
        }

        const auto fit = eval.run(wave, owner, iteration);
        if (frozen > 0 && ds.size() > static_cast<std::size_t>(cache.cols())) {
            const std::size_t old = static_cast<std::size_t>(cache.cols());
            std::vector<std::size_t> fresh(ds.size() - old);
            std::iota(fresh.begin(), fresh.end(), old);
            Eigen::MatrixXd Fn = global.forward_layers(input_matrix(global, ds, fresh), 0, frozen);
            cache.conservativeResize(Eigen::NoChange, static_cast<Eigen::Index>(ds.size()));
            cache.rightCols(Fn.cols()) = Fn;
        }

        std::size_t k = 0;
        for (std::size_t j = 0; j < M; ++j) {
            const std::size_t begin = k;
            const std::size_t end = std::min(begin + wave_size[j], fit.size());
            k += wave_size[j];
            if (begin >= end)
                continue; // budget ran out before this region's wave
            std::size_t arg = begin;
            for (std::size_t i = begin; i < end; ++i)
                if (fit[i] > fit[arg])
                    arg = i;
            auto& region = regions[j];
            const bool improved = fit[arg] > region.best_fitness;
            if (improved)
                region.set_best(wave[arg], fit[arg]);
            archive.offer(region.best, region.best_fitness);
            const auto ev = record_outcome(region, improved, fail_tol, trust, draw_center, &archive);
            res.telemetry.push_back({iteration, j, region.L, region.c_s, region.c_f, region.best_fitness,
                                     local_info[j].first, local_info[j].second, ev});
        }
        if (fit.size() < wave.size())
            break;
    }

    res.iterations = iteration;
    for (const auto& r : regions)
        res.region_best.emplace_back(r.best, r.best_fitness);
    res.dataset_records = ds.size();
    if (working_out)
        *working_out = std::move(ds);
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

/// Calibrates each task against the one shared pretrained model.
inline std::vector<CalibrationResult> batch_calibrate(const std::vector<CalibrationTask>& tasks, std::size_t jobs = 1) {
    if (tasks.empty())
        return {};
    const auto space = tasks.front().sim.space();
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (tasks[i].sim.id != tasks.front().sim.id || *tasks[i].sim.space() != *space)
            throw ConfigError("batch_calibrate: task " + std::to_string(i) + " uses a different simulator or space");
        if (tasks[i].model != tasks.front().model)
            throw ConfigError("batch_calibrate: task " + std::to_string(i) + " uses a different model");
    }
    std::vector<CalibrationResult> out(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t i) { out[i] = calibrate(tasks[i]); });
    return out;
}

} // namespace antr
