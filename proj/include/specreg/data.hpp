#ifndef SPECREG_DATA_HPP
#define SPECREG_DATA_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specreg/error.hpp"
#include "specreg/rng.hpp"
#include "specreg/tensor.hpp"

namespace specreg {

enum class Split { train, test };

struct Dataset {
    Tensor inputs; // (K, feature dims...)
    std::vector<int> labels;
    int num_classes = 0;
    Split split = Split::train;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const { return inputs.sample_shape(); }

    // Throws ValueError when labels, shapes or values break the invariants.
    void validate() const;
    Dataset subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

enum class SyntheticKind { gaussian_mixture, two_spirals };

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::gaussian_mixture;
    int num_classes = 2;
    std::size_t samples_per_class = 100;
    // 0 means "same as samples_per_class".
    std::size_t test_samples_per_class = 0;
    // Feature dimension (gaussian-mixture only; spirals are 2-D).
    std::size_t input_dim = 2;
    // Gaussian components per class and the spread of their centers
    // (gaussian-mixture only).
    std::size_t modes_per_class = 1;
    double center_scale = 1.0;
    double noise_stddev = 0.1;
    double label_noise = 0.0;
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const SyntheticSpec&, const SyntheticSpec&) = default;
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

// Train and test drawn i.i.d. from one distribution. Label noise replaces a
// label by a uniformly chosen other class with probability label_noise.
DatasetPair generate_synthetic(const SyntheticSpec& spec);

// Raised for malformed IDX content.
class FormatError : public Error {
public:
    using Error::Error;
};

enum class IdxType : std::uint8_t { u8 = 0x08, f64 = 0x0E };

struct IdxArray {
    IdxType type = IdxType::u8;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> bytes;  // payload for u8
    std::vector<double> reals;        // payload for f64

    std::size_t element_count() const;
    friend bool operator==(const IdxArray&, const IdxArray&) = default;
};

// Parses a big-endian IDX file (magic 0x00 0x00 <type> <ndims>, dims, payload).
IdxArray parse_idx(std::span<const std::uint8_t> bytes);
IdxArray read_idx(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_idx(const IdxArray& array);
void write_idx(const std::filesystem::path& path, const IdxArray& array);

// Images as reals (u8 payloads scaled to [0,1]); leading dim is the sample count.
Tensor idx_to_images(const IdxArray& array);
std::vector<int> idx_to_labels(const IdxArray& array);

// Pairs an image file with a label file. A 3-D image array (K, H, W) becomes
// (K, 1, H, W); other ranks are kept. num_classes <= 0 infers max label + 1.
Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes,
                         Split split);
// Writes f64 images (lossless) and u8 labels.
void save_idx_dataset(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels);

// Per sample: subtract its mean, divide by max(stddev, eps).
Dataset global_contrast_normalize(const Dataset& ds, double eps = 1e-8);

struct AugmentOptions {
    bool flip = false;
    std::size_t crop_pad = 0;

    bool enabled() const { return flip || crop_pad > 0; }
    friend bool operator==(const AugmentOptions&, const AugmentOptions&) = default;
};

// One (C, H, W) image: optional horizontal flip, then the crop at offset
// (dy, dx) in [0, 2 crop_pad] of the zero-padded image.
void augment_sample(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, bool flip,
                    std::size_t dy, std::size_t dx, std::size_t crop_pad);

// Batch (N, C, H, W): each image flipped with probability 1/2 (if enabled)
// and randomly cropped. Throws ValueError when crop_pad >= width.
Tensor augment(const Tensor& batch, const AugmentOptions& options, Rng& rng);

} // namespace specreg

#endif // SPECREG_DATA_HPP
