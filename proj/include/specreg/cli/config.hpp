#ifndef SPECREG_CLI_CONFIG_HPP
#define SPECREG_CLI_CONFIG_HPP

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "specreg/data.hpp"
#include "specreg/error.hpp"
#include "specreg/optim.hpp"

namespace specreg::cli {

// Invalid configuration; maps to exit status 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

enum class DataKind { synthetic, idx };

struct IdxPaths {
    std::filesystem::path train_images;
    std::filesystem::path train_labels;
    std::filesystem::path test_images;
    std::filesystem::path test_labels;
    int num_classes = 0; // <= 0 infers from the labels

    friend bool operator==(const IdxPaths&, const IdxPaths&) = default;
};

struct RunConfig {
    TrainConfig train;
    std::string arch;
    DataKind data = DataKind::synthetic;
    SyntheticSpec synthetic;
    IdxPaths idx;
    bool gcn = false;

    // Run control; never stored in checkpoints.
    std::filesystem::path out_dir = "run";
    std::filesystem::path resume;
    std::size_t checkpoint_every = 0;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

using KeyValue = std::pair<std::string, std::string>;

// Sets one key. Throws ConfigError naming the key for unknown keys and bad values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

// Flat "key = value" lines, '#' starts a comment. `origin` prefixes diagnostics
// ("<origin>:<line>: ...").
std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view origin);

RunConfig parse_config(std::string_view text, std::string_view origin);

// Config file, then SPECREG_SEED (if given), then --set overrides.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      const std::optional<std::string>& env_seed);

// Cross-field checks (architecture parses, data source complete, ...).
void validate(const RunConfig& config);

// Every setting that shapes the trajectory, in a fixed order, with reals in
// shortest round-trip form. Run-control keys are omitted.
std::vector<KeyValue> canonical_settings(const RunConfig& config);

// Synthetic spec files for gen-data use the synthetic.* keys without the prefix.
SyntheticSpec parse_synthetic_spec(std::string_view text, std::string_view origin);

// Shortest decimal text that parses back to the same double.
std::string format_real(double x);

} // namespace specreg::cli

#endif // SPECREG_CLI_CONFIG_HPP
