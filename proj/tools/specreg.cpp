#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "specreg/cli/commands.hpp"

using namespace specreg::cli;

int main(int argc, char** argv) {
    CLI::App app{"Spectral norm regularization experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    auto* train = app.add_subcommand("train", "Train a network and write metrics.csv plus checkpoints");
    train->add_option("--config", config_path, "key=value config file")->required();
    train->add_option("--set", overrides, "Override one key (key=value), repeatable");

    AnalyzeArgs analyze;
    auto* an = app.add_subcommand("analyze", "Measure a checkpoint; prints CSV");
    an->add_option("command", analyze.command, "spectrum | sensitivity | hessian | gap | lipschitz")
        ->required()
        ->check(CLI::IsMember({"spectrum", "sensitivity", "hessian", "gap", "lipschitz"}));
    an->add_option("--checkpoint", analyze.checkpoint)->required();
    an->add_option("--data", analyze.data, "gen-data directory (default: the run's own data)");
    an->add_option("--alpha", analyze.alpha, "gap threshold");
    an->add_option("--split", analyze.split, "train or test")->capture_default_str();
    an->add_option("--iters", analyze.iters, "Hessian power iterations")->capture_default_str();
    an->add_option("--fd-step", analyze.fd_step, "Hessian finite-difference step (0 = automatic)");
    an->add_option("--max-samples", analyze.max_samples, "Hessian evaluation subset")->capture_default_str();
    an->add_option("--trials", analyze.trials, "Lipschitz directions per sample")->capture_default_str();
    an->add_option("--xi-norm", analyze.xi_norm, "Lipschitz perturbation size")->capture_default_str();
    an->add_option("--samples", analyze.samples, "Lipschitz samples")->capture_default_str();

    std::string spec_path, out_dir;
    auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset as IDX files");
    gen->add_option("--spec", spec_path, "synthetic spec file")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (*train) {
            std::optional<std::string> env_seed;
            if (const char* s = std::getenv("SPECREG_SEED")) env_seed = s;
            const RunConfig config = load_config(config_path, overrides, env_seed);
            const TrainResult r = cmd_train(config, std::cerr);
            std::cerr << "wrote " << r.csv.string() << " and " << r.checkpoint.string() << "\n";
        } else if (*an) {
            cmd_analyze(analyze, std::cout);
        } else if (*gen) {
            cmd_gen_data(spec_path, out_dir);
        }
    } catch (...) {
        return report_exception(std::cerr);
    }
    return exit_ok;
}
