#pragma once

// Command implementations behind the `antr` binary. Each command validates
// its whole configuration first, stages outputs in a temporary directory and
// renames it into place only after everything was written, so a failed run
// leaves nothing behind.

#include "antr/config.hpp"
#include "antr/report.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdlib>
#include <iostream>

namespace antr::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Options {
    fs::path config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> jobs;
    std::optional<std::string> resume; // pretrain only
    std::vector<fs::path> result_dirs; // report only
    std::ostream* log = &std::cerr;
    std::ostream* out_stream = &std::cout;
};

/// Git-style blob hash: sha1("blob <size>\0" + content), lowercase hex.
inline std::string git_blob_sha1(const std::string& content) {
    const std::string data = "blob " + std::to_string(content.size()) + '\0' + content;
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha1(), nullptr) != 1)
        throw IoError("sha1 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is)
        throw IoError("cannot open '" + p.string() + "'");
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

/// Splits one CSV line, honouring double-quoted fields.
inline std::vector<std::string> parse_csv_line(const std::string& line) {
    std::vector<std::string> out(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"')
                out.back() += line[++i];
            else if (c == '"')
                quoted = false;
            else
                out.back() += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.emplace_back();
        } else if (c != '\r') {
            out.back() += c;
        }
    }
    return out;
}

/// Collects the files of one command run in a staging directory and moves
/// them to a fresh versioned directory when committed.
class OutputDir {
public:
    explicit OutputDir(fs::path target) : target_(std::move(target)) {}
    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;

    ~OutputDir() {
        if (!staging_.empty()) {
            std::error_code ec;
            fs::remove_all(staging_, ec);
        }
    }

    void write(const std::string& rel, const std::string& content) {
        open();
        const fs::path p = staging_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::binary);
        if (!os || !os.write(content.data(), static_cast<std::streamsize>(content.size())))
            throw IoError("cannot write '" + p.string() + "'");
        artifacts_.push_back({rel, content.size(), git_blob_sha1(content)});
    }

    fs::path staged(const std::string& rel) {
        open();
        return staging_ / rel;
    }

    /// Registers a file produced directly in the staging directory.
    void adopt(const std::string& rel) {
        const auto content = read_file(staging_ / rel);
        artifacts_.push_back({rel, content.size(), git_blob_sha1(content)});
    }

    json artifacts() const {
        json a = json::array();
        for (const auto& x : artifacts_)
            a.push_back({{"path", x.path}, {"bytes", x.bytes}, {"sha1", x.sha1}});
        return a;
    }

    /// Moves the staged files to `target`, or `target-1`, `target-2`, ...
    /// if it exists, and returns the final path.
    fs::path commit() {
        open();
        fs::path dest = target_;
        for (std::size_t k = 1; fs::exists(dest); ++k)
            dest = fs::path(target_.string() + "-" + std::to_string(k));
        std::error_code ec;
        fs::rename(staging_, dest, ec);
        if (ec)
            throw IoError("cannot move results to '" + dest.string() + "': " + ec.message());
        staging_.clear();
        return dest;
    }

private:
    struct Artifact {
        std::string path;
        std::size_t bytes;
        std::string sha1;
    };

    void open() {
        if (!staging_.empty())
            return;
        const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
        std::error_code ec;
        fs::create_directories(parent, ec);
        if (ec)
            throw IoError("cannot create '" + parent.string() + "': " + ec.message());
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        fs::path s = parent / ("." + target_.filename().string() + ".staging-" + std::to_string(stamp));
        if (!fs::create_directory(s, ec) || ec)
            throw IoError("cannot create staging directory '" + s.string() + "'");
        staging_ = s;
    }

    fs::path target_;
    fs::path staging_;
    std::vector<Artifact> artifacts_;
};

namespace detail {

inline std::size_t env_jobs() {
    const char* v = std::getenv("ANTR_JOBS");
    if (!v || !*v)
        return 0;
    char* end = nullptr;
    const unsigned long long n = std::strtoull(v, &end, 10);
    if (*end != '\0' || n == 0)
        throw ConfigError(std::string("ANTR_JOBS must be a positive integer, got '") + v + "'");
    return static_cast<std::size_t>(n);
}

inline std::size_t resolve_jobs(const Options& o, const config::RunConfig& rc) {
    if (o.jobs) {
        if (*o.jobs == 0)
            throw ConfigError("--jobs must be >= 1");
        return *o.jobs;
    }
    if (auto e = env_jobs())
        return e;
    return rc.jobs;
}

inline fs::path resolve_output(const std::string& configured, const std::string& fallback) {
    fs::path p(configured.empty() ? fallback : configured);
    if (p.is_relative())
        if (const char* root = std::getenv("ANTR_OUTPUT_ROOT"); root && *root)
            p = fs::path(root) / p;
    return p;
}

/// Loads the config with command-line overrides folded into the document,
/// so the echoed config in the manifest reproduces the run on its own.
inline config::RunConfig load_config(const Options& o, const char* section) {
    auto rc = config::load(o.config);
    if (o.seed || o.out) {
        json root = rc.root;
        if (o.seed)
            root["seed"] = *o.seed;
        if (o.out)
            root["output_dir"] = *o.out;
        auto text = rc.text;
        auto src = rc.source;
        rc = config::parse(root, text, src);
    }
    if (!rc.root.contains(section))
        throw ConfigError(o.config.string() + ": missing '" + section + "' section");
    return rc;
}

inline std::string fmt(double v) { return antr::detail::fmt_double(v); }

inline json manifest(const std::string& command, const config::RunConfig& rc, const OutputDir& out, double wall,
                     json extra = json::object()) {
    json m;
    m["command"] = command;
    m["config"] = rc.root;
    m["config_path"] = rc.source.string();
    m["seed"] = rc.seed;
    m["artifacts"] = out.artifacts();
    m["wall_seconds"] = wall;
    for (auto& [k, v] : extra.items())
        m[k] = v;
    return m;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

inline fs::path cmd_generate(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rc = detail::load_config(o, "generate");
    const std::size_t jobs = detail::resolve_jobs(o, rc);
    OutputDir out(detail::resolve_output(rc.output_dir, "antr-generate"));
    const auto& plan = rc.generate->plan;
    *o.log << "generate: " << plan.n_params << " points x " << plan.lengths.size() << " lengths (" << rc.sim.id
           << ", seed " << plan.seed << ")\n";
    const Dataset ds = generate_dataset(plan, rc.sim, jobs);
    std::ostringstream os;
    write_dataset(os, ds);
    out.write("dataset.ds", os.str());
    out.write("manifest.json",
              detail::manifest("generate", rc, out, detail::seconds_since(t0), {{"records", ds.size()}}).dump(2) + "\n");
    return out.commit();
}

inline fs::path cmd_pretrain(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rc = detail::load_config(o, "pretrain");
    const auto& p = *rc.pretrain;
    (void)detail::resolve_jobs(o, rc);
    const std::string resume = o.resume ? *o.resume : (p.resume_from.empty() ? "" : rc.resolve(p.resume_from).string());
    const Dataset ds = load_dataset(rc.resolve(p.dataset).string());
    OutputDir out(detail::resolve_output(rc.output_dir, "antr-pretrain"));

    PosteriorModel model;
    if (!resume.empty()) {
        model = load_model(resume);
        if (!same_space(model.space(), ds.space()) || model.t_max() < ds.t_max())
            throw ConfigError("pretrain: model '" + resume + "' does not fit the dataset (space or horizon differ)");
        if (p.widths && *p.widths != model.arch().widths)
            throw ConfigError("pretrain.widths differs from the resumed model's architecture");
        *o.log << "pretrain: resuming from '" << resume << "' after " << model.meta().epochs << " epochs\n";
    } else {
        Architecture arch = ds.sim_id() == "pgps" ? Architecture::pgps_default() : Architecture::bh_default(ds.space()->dim());
        arch.t_max = ds.t_max();
        arch.dim = ds.space()->dim();
        arch.components = p.components;
        if (p.widths)
            arch.widths = *p.widths;
        model = PosteriorModel(arch, ds.space(), rc.seed);
        fit_input_normalization(model, ds);
    }
    *o.log << "pretrain: " << ds.size() << " records, up to " << p.train.epochs << " epochs\n";
    const auto rep = train(model, ds, p.train);
    *o.log << "pretrain: stopped after " << rep.epochs_run << " epochs, best epoch " << rep.best_epoch << "\n";

    std::ostringstream ms;
    save_model(ms, model);
    out.write("model.bin", ms.str());
    std::ostringstream loss;
    loss << "epoch,train_loss,val_loss\n";
    const auto& meta = model.meta();
    for (std::size_t e = 0; e < meta.train_loss.size(); ++e)
        loss << (e + 1) << ',' << detail::fmt(meta.train_loss[e]) << ',' << detail::fmt(meta.val_loss[e]) << '\n';
    out.write("loss.csv", loss.str());
    json extra = {{"epochs_run", rep.epochs_run}, {"best_epoch", rep.best_epoch}, {"total_epochs", meta.epochs}};
    if (!resume.empty())
        extra["resumed_from"] = resume;
    out.write("manifest.json", detail::manifest("pretrain", rc, out, detail::seconds_since(t0), extra).dump(2) + "\n");
    return out.commit();
}

inline fs::path cmd_calibrate(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rc = detail::load_config(o, "calibrate");
    const auto& c = *rc.calibrate;
    const std::size_t jobs = detail::resolve_jobs(o, rc);

    std::optional<Dataset> data;
    std::optional<PosteriorModel> model;
    SimulatorSpec sim = rc.sim;
    if (!c.dataset.empty()) {
        data = load_dataset(rc.resolve(c.dataset).string());
        const SimulatorSpec from_data = simulator_from_json(data->sim_config());
        if (rc.has_simulator && to_json(from_data) != to_json(rc.sim))
            throw ConfigError("calibrate: the simulator section differs from the dataset's simulator");
        sim = from_data;
    }
    if (!c.model.empty())
        model = load_model(rc.resolve(c.model).string());
    config::check_problems(c, sim);

    CalibrationTask base = c.task;
    base.sim = sim;
    base.jobs = 1;
    base.model = model ? &*model : nullptr;
    base.data = data ? &*data : nullptr;

    const std::size_t P = c.problems.size(), R = c.repeats;
    std::vector<CalibrationTask> tasks;
    std::vector<ParamVector> truths;
    std::vector<TimeSeries> observations;
    for (std::size_t pi = 0; pi < P; ++pi) {
        truths.push_back(to_unit(c.problems[pi].theta, sim.space()));
        for (std::size_t r = 0; r < R; ++r) {
            const std::uint64_t obs_seed = c.obs_seed + r;
            auto obs = sim.simulate(truths.back(), c.t_obs, obs_seed);
            if (obs.diverged)
                throw NumericError("calibrate: observation for '" + c.problems[pi].name + "' repeat " + std::to_string(r) +
                                   " diverged");
            observations.push_back(obs.series);
            CalibrationTask t = base;
            t.x_obs = std::move(obs.series);
            t.seed = rc.seed + r;
            if (c.crn)
                t.noise_seed = obs_seed;
            t.validate();
            tasks.push_back(std::move(t));
        }
    }
    OutputDir out(detail::resolve_output(rc.output_dir, "antr-calibrate"));
    *o.log << "calibrate: " << mode_name(base.mode) << ", " << P << " problem(s) x " << R << " repeat(s), budget "
           << base.budget << ", " << jobs << " job(s)\n";
    const auto results = batch_calibrate(tasks, jobs);

    const auto space = sim.space();
    const std::size_t d = space->dim();
    const double eps = metrics::success_threshold(d, c.success_radius);
    std::ostringstream runs;
    runs << "problem,repeat,seed,obs_seed,mode,budget,calls,iterations,best_fitness,mse,distance,success";
    for (std::size_t i = 0; i < d; ++i)
        runs << ",true_" << space->names()[i];
    for (std::size_t i = 0; i < d; ++i)
        runs << ",hat_" << space->names()[i];
    for (std::size_t i = 0; i < d; ++i)
        runs << ",hat_u_" << space->names()[i];
    runs << '\n';
    report::ResultSet set{c.label, {}};
    for (std::size_t pi = 0; pi < P; ++pi)
        for (std::size_t r = 0; r < R; ++r) {
            const std::size_t k = pi * R + r;
            const auto& res = results[k];
            const std::string tag = "p" + std::to_string(pi) + "_r" + std::to_string(r);
            std::ostringstream tr, te, ob;
            write_trace_csv(tr, res);
            write_telemetry_csv(te, res);
            ob << "t,value\n";
            for (std::size_t t = 0; t < observations[k].length(); ++t)
                ob << t << ',' << detail::fmt(observations[k].values()[t]) << '\n';
            out.write("traces/" + tag + ".csv", tr.str());
            out.write("telemetry/" + tag + ".csv", te.str());
            out.write("observations/" + tag + ".csv", ob.str());

            const auto outcome = metrics::make_outcome(res.best_theta, truths[pi].unit(), -res.best_fitness, eps);
            const auto hat = ParamVector(res.best_theta, space).physical();
            runs << report::detail::csv_field(c.problems[pi].name) << ',' << r << ',' << tasks[k].seed << ','
                 << c.obs_seed + r << ',' << mode_name(res.mode) << ',' << base.budget << ',' << res.calls << ','
                 << res.iterations << ',' << detail::fmt(res.best_fitness) << ',' << detail::fmt(outcome.mse) << ','
                 << detail::fmt(outcome.distance) << ',' << (outcome.success ? 1 : 0);
            for (double v : c.problems[pi].theta)
                runs << ',' << detail::fmt(v);
            for (double v : hat)
                runs << ',' << detail::fmt(v);
            for (double v : res.best_theta)
                runs << ',' << detail::fmt(v);
            runs << '\n';
            set.runs.push_back({c.problems[pi].name, r, outcome.mse, outcome.distance, outcome.success,
                                res.best_fitness, base.budget, {}});
        }
    out.write("runs.csv", runs.str());

    const auto rep = report::build({set});
    std::ostringstream summary;
    summary << "problem,runs,mse_mean,mse_sd,distance_mean,distance_sd,successes\n";
    for (std::size_t pi = 0; pi < P; ++pi)
        summary << report::detail::csv_field(rep.problems[pi]) << ',' << R << ',' << detail::fmt(rep.mse[pi][0].mean)
                << ',' << detail::fmt(rep.mse[pi][0].sd) << ',' << detail::fmt(rep.distance[pi][0].mean) << ','
                << detail::fmt(rep.distance[pi][0].sd) << ',' << rep.successes[pi][0] << '\n';
    out.write("summary.csv", summary.str());
    std::ostringstream text;
    text << c.label << ": " << mode_name(base.mode) << ", budget " << base.budget << ", " << R
         << " repeat(s), success radius " << c.success_radius << " (eps " << eps << ")\n\n"
         << report::render_text(rep);
    out.write("summary.txt", text.str());
    *o.out_stream << text.str();
    out.write("manifest.json", detail::manifest("calibrate", rc, out, detail::seconds_since(t0),
                                                {{"label", c.label}, {"mode", mode_name(base.mode)}})
                                       .dump(2) +
                                   "\n");
    return out.commit();
}

/// Reads one calibrate result directory back into a report input.
inline report::ResultSet load_result_dir(const fs::path& dir) {
    if (!fs::is_directory(dir))
        throw IoError("'" + dir.string() + "' is not a directory");
    const json m = json::parse(read_file(dir / "manifest.json"), nullptr, false);
    if (m.is_discarded() || m.value("command", "") != "calibrate")
        throw ConfigError("'" + dir.string() + "' is not a calibrate result directory");
    report::ResultSet set;
    set.label = m.value("label", dir.filename().string());

    std::istringstream is(read_file(dir / "runs.csv"));
    std::string line;
    std::getline(is, line);
    const auto head = parse_csv_line(line);
    auto col = [&](const std::string& name) {
        auto it = std::find(head.begin(), head.end(), name);
        if (it == head.end())
            throw IoError(dir.string() + "/runs.csv: missing column '" + name + "'");
        return static_cast<std::size_t>(it - head.begin());
    };
    const std::size_t c_problem = col("problem"), c_repeat = col("repeat"), c_budget = col("budget"),
                      c_best = col("best_fitness"), c_mse = col("mse"), c_dist = col("distance"),
                      c_succ = col("success");
    std::map<std::string, std::size_t> problem_index;
    std::size_t ln = 1;
    while (std::getline(is, line)) {
        ++ln;
        if (line.empty())
            continue;
        const auto f = parse_csv_line(line);
        if (f.size() != head.size())
            throw IoError(dir.string() + "/runs.csv line " + std::to_string(ln) + ": wrong field count");
        report::RunRow row;
        row.problem = f[c_problem];
        row.repeat = antr::detail::parse_u64(f[c_repeat], ln);
        row.budget = antr::detail::parse_u64(f[c_budget], ln);
        row.best_fitness = antr::detail::parse_double(f[c_best], ln);
        row.mse = antr::detail::parse_double(f[c_mse], ln);
        row.distance = antr::detail::parse_double(f[c_dist], ln);
        row.success = f[c_succ] == "1";
        const std::size_t pi = problem_index.emplace(row.problem, problem_index.size()).first->second;

        std::istringstream ts(read_file(dir / "traces" / ("p" + std::to_string(pi) + "_r" + std::to_string(row.repeat) + ".csv")));
        std::string tl;
        std::getline(ts, tl);
        std::size_t tln = 1;
        std::vector<std::pair<std::size_t, double>> pts;
        while (std::getline(ts, tl)) {
            ++tln;
            const auto tf = parse_csv_line(tl);
            pts.emplace_back(antr::detail::parse_u64(tf.front(), tln), antr::detail::parse_double(tf.back(), tln));
        }
        if (pts.empty())
            throw IoError(dir.string() + ": empty trace for '" + row.problem + "'");
        // expand to one entry per simulator call (replicates share a row)
        for (std::size_t k = 0; k < pts.size(); ++k) {
            const std::size_t stop = k + 1 < pts.size() ? pts[k + 1].first : std::max(pts[k].first + 1, row.budget);
            while (row.running_best.size() < stop)
                row.running_best.push_back(pts[k].second);
        }
        set.runs.push_back(std::move(row));
    }
    return set;
}

inline fs::path cmd_report(const Options& o) {
    if (o.result_dirs.empty())
        throw ConfigError("report: at least one result directory is required");
    std::vector<report::ResultSet> sets;
    for (const auto& d : o.result_dirs)
        sets.push_back(load_result_dir(d));
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (sets[i].label == sets[j].label)
                sets[i].label += "#" + std::to_string(i + 1);
    const auto rep = report::build(sets);
    const auto text = report::render_text(rep);
    OutputDir out(detail::resolve_output(o.out.value_or(""), "antr-report"));
    out.write("report.txt", text);
    for (const auto& [stem, body] : report::render_csv(rep))
        out.write(stem + ".csv", body);
    json m;
    m["command"] = "report";
    m["inputs"] = json::array();
    for (const auto& d : o.result_dirs)
        m["inputs"].push_back(d.string());
    m["artifacts"] = out.artifacts();
    out.write("manifest.json", m.dump(2) + "\n");
    *o.out_stream << text;
    return out.commit();
}

/// Maps an exception to the documented exit code.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const IoError*>(&e))
        return kIo;
    if (dynamic_cast<const NumericError*>(&e))
        return kNumeric;
    if (dynamic_cast<const fs::filesystem_error*>(&e))
        return kIo;
    return kConfig;
}

} // namespace antr::cli
