#include "specreg/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

namespace specreg {

void Dataset::validate() const {
    if (labels.empty()) throw ValueError("dataset: no samples");
    if (num_classes <= 0) throw ValueError("dataset: num_classes must be positive");
    if (inputs.batch() != labels.size()) {
        throw ValueError("dataset: " + std::to_string(inputs.batch()) + " inputs but " + std::to_string(labels.size()) +
                         " labels");
    }
    if (inputs.data.size() != shape_size(inputs.shape)) throw ValueError("dataset: input tensor size mismatch");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) {
            throw ValueError("dataset: label " + std::to_string(y) + " outside [0," + std::to_string(num_classes) + ")");
        }
    }
    for (double x : inputs.data) {
        if (!std::isfinite(x)) throw ValueError("dataset: non-finite input value");
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.num_classes = num_classes;
    out.split = split;
    out.inputs.shape = inputs.shape;
    out.inputs.shape[0] = indices.size();
    const std::size_t n = inputs.sample_size();
    out.inputs.data.reserve(indices.size() * n);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) {
        auto s = inputs.sample(i);
        out.inputs.data.insert(out.inputs.data.end(), s.begin(), s.end());
        out.labels.push_back(labels.at(i));
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (num_classes < 2) throw ValueError("synthetic: num_classes must be >= 2");
    if (samples_per_class == 0) throw ValueError("synthetic: samples_per_class must be positive");
    if (input_dim == 0) throw ValueError("synthetic: input_dim must be positive");
    if (!(noise_stddev >= 0.0)) throw ValueError("synthetic: noise stddev must be >= 0");
    if (modes_per_class == 0) throw ValueError("synthetic: modes_per_class must be positive");
    if (!(center_scale >= 0.0)) throw ValueError("synthetic: center_scale must be >= 0");
    if (!(label_noise >= 0.0 && label_noise < 1.0)) throw ValueError("synthetic: label noise must lie in [0, 1)");
}

namespace {

Dataset draw_split(const SyntheticSpec& spec, const std::vector<std::vector<double>>& centers, std::size_t per_class,
                   Split split, Rng& rng) {
    const std::size_t dim = spec.kind == SyntheticKind::two_spirals ? 2 : spec.input_dim;
    const std::size_t k = static_cast<std::size_t>(spec.num_classes);
    Dataset ds;
    ds.num_classes = spec.num_classes;
    ds.split = split;
    ds.inputs = Tensor(Shape{k * per_class, dim});
    ds.labels.resize(k * per_class);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> other(0, spec.num_classes - 2);
    std::uniform_int_distribution<std::size_t> mode(0, spec.modes_per_class - 1);
    std::size_t idx = 0;
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < per_class; ++i, ++idx) {
            auto x = ds.inputs.sample(idx);
            if (spec.kind == SyntheticKind::gaussian_mixture) {
                const std::size_t m = spec.modes_per_class > 1 ? mode(rng) : 0;
                const auto& center = centers[c * spec.modes_per_class + m];
                for (std::size_t d = 0; d < dim; ++d) x[d] = center[d] + spec.noise_stddev * normal(rng);
            } else {
                const double t = unit(rng);
                const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k) +
                                     3.0 * std::numbers::pi * t;
                const double r = 0.1 + t;
                x[0] = r * std::cos(theta) + spec.noise_stddev * normal(rng);
                x[1] = r * std::sin(theta) + spec.noise_stddev * normal(rng);
            }
            int label = static_cast<int>(c);
            if (spec.label_noise > 0.0 && unit(rng) < spec.label_noise) {
                const int o = other(rng);
                label = o >= label ? o + 1 : o;
            }
            ds.labels[idx] = label;
        }
    }
    return ds;
}

std::string hex_bytes(std::span<const std::uint8_t> b) {
    std::string s;
    char buf[4];
    for (auto x : b) {
        std::snprintf(buf, sizeof buf, "%02X", x);
        if (!s.empty()) s += ' ';
        s += buf;
    }
    return s;
}

std::uint32_t read_be32(const std::uint8_t* p) {
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

std::size_t element_size(IdxType t) { return t == IdxType::u8 ? 1 : 8; }

} // namespace

DatasetPair generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t dim = spec.kind == SyntheticKind::two_spirals ? 2 : spec.input_dim;
    std::vector<std::vector<double>> centers(static_cast<std::size_t>(spec.num_classes) * spec.modes_per_class,
                                             std::vector<double>(dim));
    Rng center_rng = make_stream(spec.seed, Stream::data, {0});
    for (auto& c : centers) {
        fill_gaussian(center_rng, c);
        for (double& v : c) v *= spec.center_scale;
    }
    Rng train_rng = make_stream(spec.seed, Stream::data, {1});
    Rng test_rng = make_stream(spec.seed, Stream::data, {2});
    const std::size_t test_per_class = spec.test_samples_per_class ? spec.test_samples_per_class : spec.samples_per_class;
    return {draw_split(spec, centers, spec.samples_per_class, Split::train, train_rng),
            draw_split(spec, centers, test_per_class, Split::test, test_rng)};
}

std::size_t IdxArray::element_count() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

IdxArray parse_idx(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) {
        throw FormatError("idx: file too short for a header (" + std::to_string(bytes.size()) + " bytes)");
    }
    const auto type = bytes[2];
    const auto ndims = bytes[3];
    if (bytes[0] != 0 || bytes[1] != 0 || (type != 0x08 && type != 0x0E) || ndims == 0) {
        throw FormatError("idx: bad magic " + hex_bytes(bytes.first(4)) +
                          " (expected 00 00 08 <ndims> or 00 00 0E <ndims>)");
    }
    const std::size_t header = 4 + 4 * std::size_t{ndims};
    if (bytes.size() < header) {
        throw FormatError("idx: truncated header: expected " + std::to_string(header) + " bytes, got " +
                          std::to_string(bytes.size()));
    }
    IdxArray out;
    out.type = static_cast<IdxType>(type);
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        const std::uint32_t dim = read_be32(bytes.data() + 4 + 4 * d);
        out.dims.push_back(dim);
        if (__builtin_mul_overflow(count, std::size_t{dim}, &count)) {
            throw FormatError("idx: dimension product overflows");
        }
    }
    std::size_t payload = 0;
    if (__builtin_mul_overflow(count, element_size(out.type), &payload)) {
        throw FormatError("idx: payload size overflows");
    }
    const std::size_t actual = bytes.size() - header;
    if (actual != payload) {
        throw FormatError("idx: payload size mismatch: expected " + std::to_string(payload) + " bytes, got " +
                          std::to_string(actual) + (actual < payload ? " (truncated)" : " (trailing bytes)"));
    }
    const auto body = bytes.subspan(header);
    if (out.type == IdxType::u8) {
        out.bytes.assign(body.begin(), body.end());
    } else {
        out.reals.resize(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            for (std::size_t b = 0; b < 8; ++b) bits = (bits << 8) | body[i * 8 + b];
            out.reals[i] = std::bit_cast<double>(bits);
        }
    }
    return out;
}

IdxArray read_idx(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("idx: cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_idx(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_idx(const IdxArray& array) {
    if (array.dims.empty() || array.dims.size() > 255) throw ValueError("idx: rank must be in [1, 255]");
    std::vector<std::uint8_t> out{0, 0, static_cast<std::uint8_t>(array.type), static_cast<std::uint8_t>(array.dims.size())};
    for (auto d : array.dims) write_be32(out, d);
    const std::size_t n = array.element_count();
    if (array.type == IdxType::u8) {
        if (array.bytes.size() != n) throw ValueError("idx: payload does not match dims");
        out.insert(out.end(), array.bytes.begin(), array.bytes.end());
    } else {
        if (array.reals.size() != n) throw ValueError("idx: payload does not match dims");
        for (double v : array.reals) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int s = 56; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(bits >> s));
        }
    }
    return out;
}

void write_idx(const std::filesystem::path& path, const IdxArray& array) {
    const auto bytes = encode_idx(array);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("idx: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("idx: write failed for " + path.string());
}

Tensor idx_to_images(const IdxArray& array) {
    Shape shape(array.dims.begin(), array.dims.end());
    std::vector<double> data;
    if (array.type == IdxType::u8) {
        data.reserve(array.bytes.size());
        for (auto b : array.bytes) data.push_back(static_cast<double>(b) / 255.0);
    } else {
        data = array.reals;
    }
    return Tensor(std::move(shape), std::move(data));
}

std::vector<int> idx_to_labels(const IdxArray& array) {
    if (array.type != IdxType::u8 || array.dims.size() != 1) throw FormatError("idx: labels must be a 1-D u8 array");
    return std::vector<int>(array.bytes.begin(), array.bytes.end());
}

Dataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels, int num_classes,
                         Split split) {
    Dataset ds;
    ds.inputs = idx_to_images(read_idx(images));
    if (ds.inputs.shape.size() == 3) ds.inputs.shape.insert(ds.inputs.shape.begin() + 1, 1);
    ds.labels = idx_to_labels(read_idx(labels));
    ds.num_classes = num_classes > 0 ? num_classes
                                     : (ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
    ds.split = split;
    ds.validate();
    return ds;
}

void save_idx_dataset(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
    if (ds.num_classes > 256) throw ValueError("idx: labels above 255 do not fit the u8 label format");
    IdxArray img{IdxType::f64, {}, {}, ds.inputs.data};
    for (auto d : ds.inputs.shape) img.dims.push_back(static_cast<std::uint32_t>(d));
    IdxArray lab{IdxType::u8, {static_cast<std::uint32_t>(ds.labels.size())}, {}, {}};
    for (int y : ds.labels) lab.bytes.push_back(static_cast<std::uint8_t>(y));
    write_idx(images, img);
    write_idx(labels, lab);
}

Dataset global_contrast_normalize(const Dataset& ds, double eps) {
    if (!(eps > 0.0)) throw ValueError("global_contrast_normalize: eps must be > 0");
    Dataset out = ds;
    const std::size_t n = ds.inputs.sample_size();
    for (std::size_t i = 0; i < ds.inputs.batch(); ++i) {
        auto x = out.inputs.sample(i);
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double& v : x) {
            v -= mean;
            var += v * v;
        }
        const double sd = std::max(std::sqrt(var / static_cast<double>(n)), eps);
        for (double& v : x) v /= sd;
    }
    return out;
}

void augment_sample(std::span<double> image, std::size_t channels, std::size_t height, std::size_t width, bool flip,
                    std::size_t dy, std::size_t dx, std::size_t crop_pad) {
    if (crop_pad >= width || crop_pad >= height) {
        throw ValueError("augment: crop_pad " + std::to_string(crop_pad) + " must be below the image size " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    if (dy > 2 * crop_pad || dx > 2 * crop_pad) throw ValueError("augment: crop offset outside the padded image");
    if (flip) {
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t y = 0; y < height; ++y) {
                auto row = image.subspan((c * height + y) * width, width);
                std::reverse(row.begin(), row.end());
            }
    }
    if (crop_pad == 0) return;
    const std::vector<double> src(image.begin(), image.end());
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < height; ++y) {
            for (std::size_t x = 0; x < width; ++x) {
                // (y + dy, x + dx) in padded coordinates.
                const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(crop_pad);
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(crop_pad);
                const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(height) &&
                                    sx < static_cast<std::ptrdiff_t>(width);
                image[(c * height + y) * width + x] =
                    inside ? src[(c * height + static_cast<std::size_t>(sy)) * width + static_cast<std::size_t>(sx)] : 0.0;
            }
        }
    }
}

Tensor augment(const Tensor& batch, const AugmentOptions& options, Rng& rng) {
    if (batch.shape.size() != 4) {
        throw ValueError("augment: expected (N,C,H,W) batch, got " + shape_to_string(batch.shape));
    }
    const std::size_t c = batch.shape[1], h = batch.shape[2], w = batch.shape[3];
    if (options.crop_pad >= w || options.crop_pad >= h) {
        throw ValueError("augment: crop_pad " + std::to_string(options.crop_pad) + " must be below the image size");
    }
    Tensor out = batch;
    std::bernoulli_distribution coin(0.5);
    std::uniform_int_distribution<std::size_t> offset(0, 2 * options.crop_pad);
    for (std::size_t i = 0; i < batch.batch(); ++i) {
        const bool flip = options.flip && coin(rng);
        std::size_t dy = options.crop_pad, dx = options.crop_pad;
        if (options.crop_pad > 0) {
            dy = offset(rng);
            dx = offset(rng);
        }
        augment_sample(out.sample(i), c, h, w, flip, dy, dx, options.crop_pad);
    }
    return out;
}

} // namespace specreg
