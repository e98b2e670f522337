#ifndef SPECREG_CLI_COMMANDS_HPP
#define SPECREG_CLI_COMMANDS_HPP

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "specreg/cli/checkpoint.hpp"
#include "specreg/cli/config.hpp"
#include "specreg/data.hpp"

namespace specreg::cli {

enum ExitCode { exit_ok = 0, exit_runtime = 1, exit_config = 2 };

// Maps the exception in flight to an exit code and writes "error: ..." to err.
int report_exception(std::ostream& err);

// File names inside a gen-data output directory.
inline constexpr const char* train_images_file = "train-images.idx";
inline constexpr const char* train_labels_file = "train-labels.idx";
inline constexpr const char* test_images_file = "test-images.idx";
inline constexpr const char* test_labels_file = "test-labels.idx";

// Train and test sets of a run, GCN applied when configured.
DatasetPair load_run_data(const RunConfig& config);
DatasetPair load_data_dir(const std::filesystem::path& dir, int num_classes, bool gcn);

std::string metrics_csv_header(const Network& net);
std::string metrics_csv_row(const MetricsRecord& r);
std::string metrics_csv(const Network& net, const std::vector<MetricsRecord>& records);

struct TrainResult {
    Network net;
    TrainingState state;
    std::filesystem::path checkpoint; // final checkpoint
    std::filesystem::path csv;
};

// Writes <out_dir>/metrics.csv after every epoch, <out_dir>/epoch-<N>.ckpt
// every checkpoint_every epochs and <out_dir>/final.ckpt at the end.
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

struct AnalyzeArgs {
    std::string command{}; // spectrum | sensitivity | hessian | gap | lipschitz
    std::filesystem::path checkpoint{};
    std::filesystem::path data{}; // gen-data directory; empty = the run's own data
    std::optional<double> alpha{};
    std::string split = "test";
    int iters = 100;
    double fd_step = 0.0;
    std::size_t max_samples = 2048;
    int trials = 200;
    double xi_norm = 1e-6;
    std::size_t samples = 10;
};

// Writes one CSV table to `out`.
void cmd_analyze(const AnalyzeArgs& args, std::ostream& out);

// Writes the four IDX files of a synthetic spec into out_dir.
void cmd_gen_data(const std::filesystem::path& spec, const std::filesystem::path& out_dir);

} // namespace specreg::cli

#endif // SPECREG_CLI_COMMANDS_HPP
