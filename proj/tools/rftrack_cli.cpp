#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rftrack/pipeline.hpp"

namespace pl = rftrack::pipeline;

int main(int argc, char** argv) {
    CLI::App app{"rftrack: TDoA localization and segment-wise EKF tracking of a UAV"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    pl::Overrides ov;
    std::uint64_t seed = 0;
    unsigned parallel = 1;
    std::string r_mode;
    double threshold_m = 0.0;
    std::int64_t tol_ms = 0;

    struct Command {
        const char* name;
        const char* help;
        pl::CommandResult (*run)(pl::RunConfig, const std::filesystem::path&);
    };
    const Command commands[] = {
        {"simulate", "Generate a synthetic flight, RF log and segment file", &pl::cmd_simulate},
        {"track", "Align, clean, run the per-segment EKF and write reports", &pl::cmd_track},
        {"evaluate", "Error statistics of an estimate log against the ground truth", &pl::cmd_evaluate},
        {"align", "Match RF estimates to ground-truth timestamps", &pl::cmd_align},
        {"clean", "Drop aligned pairs with error above the threshold", &pl::cmd_clean},
        {"convert", "Convert geodetic logs into the local east/north frame", &pl::cmd_convert},
    };

    std::vector<CLI::App*> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
        sub->add_option("--seed", seed, "Override sim.seed");
        sub->add_flag("--raw", ov.raw, "Skip the cleaning step");
        sub->add_option("--parallel", parallel, "Worker threads for per-segment filtering");
        sub->add_option("--r-mode", r_mode, "Measurement covariance mode")
            ->check(CLI::IsMember({"mean", "mse"}));
        sub->add_option("--threshold-m", threshold_m, "Cleaning threshold in meters");
        sub->add_option("--tol-ms", tol_ms, "Timestamp matching tolerance in milliseconds");
        subs.push_back(sub);
    }

    CLI11_PARSE(app, argc, argv);

    for (std::size_t i = 0; i < subs.size(); ++i) {
        auto* sub = subs[i];
        if (!sub->parsed()) continue;
        if (sub->count("--seed")) ov.seed = seed;
        if (sub->count("--parallel")) ov.parallel = parallel;
        if (sub->count("--r-mode")) ov.r_mode = r_mode;
        if (sub->count("--threshold-m")) ov.threshold_m = threshold_m;
        if (sub->count("--tol-ms")) ov.tol_ms = tol_ms;

        const std::string name = commands[i].name;
        try {
            pl::RunConfig cfg = config_path.empty() ? pl::RunConfig{} : pl::load_config(config_path);
            pl::apply(cfg, ov);
            const auto result = commands[i].run(std::move(cfg), out_dir);
            if (!result.text.empty()) std::cout << result.text;
            for (const auto& w : result.diag.warnings) std::cerr << "warning: " << w << '\n';
            std::cerr << name << ": done, " << result.diag.count() << " warning(s), outputs in "
                      << out_dir << '\n';
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "error: " << name << ": " << e.what() << '\n';
            pl::write_failure(name, out_dir, e.what());
            return 1;
        }
    }
    return 1;
}
