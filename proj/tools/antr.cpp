// antr: dataset generation, surrogate pretraining, calibration runs and
// comparison reports for the BH and PGPS market simulators.

#include "antr/cli.hpp"

#include <CLI11.hpp>

int main(int argc, char** argv) {
    using namespace antr::cli;
    CLI::App app{"ANTR calibration toolkit"};
    app.require_subcommand(1);

    Options opt;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t jobs = 0;
    std::string resume;
    std::vector<std::string> dirs;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", opt.config, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "override the global seed");
        sub->add_option("--out", out, "override the output directory");
        sub->add_option("--jobs", jobs, "worker threads (overrides ANTR_JOBS and the config)");
    };
    auto* gen = app.add_subcommand("generate", "simulate an LHS training dataset");
    add_common(gen);
    auto* pre = app.add_subcommand("pretrain", "train the amortized posterior surrogate");
    add_common(pre);
    pre->add_option("--resume", resume, "warm-start from an existing model file");
    auto* cal = app.add_subcommand("calibrate", "run repeated calibrations against synthetic observations");
    add_common(cal);
    auto* rep = app.add_subcommand("report", "compare calibrate result directories");
    rep->add_option("dirs", dirs, "result directories; the first is the reference")->required();
    rep->add_option("--out", out, "output directory for the report files");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfig;
    }

    auto* sub = app.get_subcommands().front();
    if (sub != rep && sub->count("--seed"))
        opt.seed = seed;
    if (sub->count("--out"))
        opt.out = out;
    if (sub != rep && sub->count("--jobs"))
        opt.jobs = jobs;
    if (sub == pre && pre->count("--resume"))
        opt.resume = resume;
    for (const auto& d : dirs)
        opt.result_dirs.emplace_back(d);

    try {
        std::filesystem::path where;
        if (sub == gen)
            where = cmd_generate(opt);
        else if (sub == pre)
            where = cmd_pretrain(opt);
        else if (sub == cal)
            where = cmd_calibrate(opt);
        else
            where = cmd_report(opt);
        std::cerr << "wrote " << where.string() << '\n';
        return kOk;
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        std::cerr << "antr " << sub->get_name() << ": "
                  << (code == kIo ? "I/O error: " : code == kNumeric ? "numeric failure: " : "configuration error: ")
                  << e.what() << '\n';
        return code;
    }
}
