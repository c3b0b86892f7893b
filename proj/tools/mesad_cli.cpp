#include "mesad/harness.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace mesad;

namespace {

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw harness::ConfigError("cannot open " + path.string());
    return nlohmann::json::parse(in);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"mesad: hybrid smoothing/recurrent anomaly detection with explanations"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
    std::string synth_config, synth_profile = "desk", synth_out;
    std::uint64_t synth_seed = 0;
    synth->add_option("--config", synth_config, "synth JSON object, or a run config with dataset.synth");
    synth->add_option("--profile", synth_profile, "desk, full or default (ignored with --config)")
        ->check(CLI::IsMember({"desk", "full", "default"}));
    synth->add_option("--seed", synth_seed, "generator seed");
    synth->add_option("--out", synth_out, "output directory")->required();

    // run
    auto* run = app.add_subcommand("run", "run the evaluation protocol");
    std::string run_config, run_out;
    std::optional<std::uint64_t> run_seed;
    std::optional<std::size_t> run_trials, run_workers;
    run->add_option("--config", run_config, "run config JSON")->required()->check(CLI::ExistingFile);
    run->add_option("--seed", run_seed, "base seed (overrides the config)");
    run->add_option("--trials", run_trials, "number of trials (overrides the config)");
    run->add_option("--out", run_out, "report directory (overrides the config)");
    run->add_option("--workers", run_workers, "trial pool size (default: MESAD_WORKERS or all cores)");

    // explain
    auto* expl = app.add_subcommand("explain", "rank channels for one flagged step");
    harness::ExplainRequest req;
    std::string expl_out;
    expl->add_option("--artifacts", req.artifacts, "directory with mes.json, model.json, calibration.json")
        ->required()
        ->check(CLI::ExistingDirectory);
    expl->add_option("--series", req.series, "series CSV")->required()->check(CLI::ExistingFile);
    expl->add_option("--step", req.step, "time index to explain")->required();
    expl->add_option("--seed", req.seed, "explainer seed");
    expl->add_option("--out", expl_out, "write the ranking CSV here");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "auROC/auPR over an existing score file");
    std::string eval_scores, eval_out = ".";
    eval->add_option("--scores", eval_scores, "CSV with score and label columns")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help and version exit 0; every usage error maps to EX_USAGE.
        return app.exit(e) == 0 ? 0 : 64;
    }

    try {
        if (*synth) {
            SynthConfig cfg = synth_profile == "full"     ? SynthConfig::full_profile()
                              : synth_profile == "default" ? SynthConfig{}
                                                           : SynthConfig::desk_profile();
            if (!synth_config.empty()) {
                const auto j = read_json_file(synth_config);
                if (j.contains("dataset")) cfg = harness::load_config(synth_config).synth;
                else cfg = harness::parse_synth_config(j);
            }
            const auto digest = harness::cmd_synth(cfg, synth_seed, synth_out);
            std::printf("%016llx\n", static_cast<unsigned long long>(digest));
            return 0;
        }
        if (*run) {
            auto cfg = harness::load_config(run_config);
            if (run_seed) cfg.seed = *run_seed;
            if (run_trials) cfg.trials = *run_trials;
            if (!run_out.empty()) cfg.out = run_out;
            if (run_workers) cfg.workers = *run_workers;
            cfg.validate();
            return harness::cmd_run(cfg, std::cerr);
        }
        if (*expl) {
            if (!expl_out.empty()) req.out = expl_out;
            harness::cmd_explain(req, std::cout);
            return 0;
        }
        if (*eval) return harness::cmd_evaluate(eval_scores, eval_out, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
