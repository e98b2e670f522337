#ifndef SPECREG_CLI_CHECKPOINT_HPP
#define SPECREG_CLI_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "specreg/cli/config.hpp"
#include "specreg/nn.hpp"
#include "specreg/optim.hpp"

namespace specreg::cli {

inline constexpr int checkpoint_version = 1;

enum class CheckpointErrorKind { io, bad_magic, bad_version, truncated, checksum, malformed };

std::string_view to_string(CheckpointErrorKind kind);

class CheckpointError : public Error {
public:
    CheckpointError(CheckpointErrorKind kind, const std::string& what)
        : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
    CheckpointErrorKind kind() const { return kind_; }

private:
    CheckpointErrorKind kind_;
};

// A resumable snapshot. All randomness is drawn from streams keyed by the
// seed and the counters in state.opt, so those fully position the streams.
struct Checkpoint {
    int version = checkpoint_version;
    std::vector<KeyValue> settings; // canonical_settings of the run
    Network net;
    TrainingState state;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// Layout: "SPECREG1", u64 manifest length, text manifest, little-endian f64
// payload, u64 FNV-1a checksum of every preceding byte.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

// Atomic: writes a sibling temp file, then renames it over `path`.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rebuilds the run configuration recorded in the checkpoint.
RunConfig checkpoint_config(const Checkpoint& ckpt);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// Writes `content` to a temp file next to `path` and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> content);

} // namespace specreg::cli

#endif // SPECREG_CLI_CHECKPOINT_HPP
