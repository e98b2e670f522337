#include "specreg/cli/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace specreg::cli {

namespace {

constexpr std::string_view magic = "SPECREG1";
constexpr std::size_t header_size = 16; // magic + manifest length
constexpr std::size_t metric_fields = 8;

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> b) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
    return v;
}

std::string shape_text(const Shape& s) {
    if (s.empty()) return "scalar";
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

[[noreturn]] void malformed(const std::string& what) { throw CheckpointError(CheckpointErrorKind::malformed, what); }

std::uint64_t parse_u64(std::string_view s, std::string_view what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
        malformed("bad " + std::string(what) + " '" + std::string(s) + "'");
    }
    return v;
}

Shape parse_shape(std::string_view s) {
    Shape out;
    if (s == "scalar") return out;
    while (true) {
        const auto x = s.find('x');
        out.push_back(parse_u64(s.substr(0, x), "shape"));
        if (x == std::string_view::npos) break;
        s = s.substr(x + 1);
    }
    return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        lines.push_back(text.substr(0, nl));
        if (nl == std::string_view::npos) break;
        text = text.substr(nl + 1);
    }
    return lines;
}

struct TensorEntry {
    std::string name;
    Shape shape;
    std::uint64_t offset = 0; // bytes into the payload
    std::uint64_t count = 0;
};

// "tensor <name> <shape> <offset> <count>"
TensorEntry parse_tensor_line(std::string_view line) {
    std::istringstream in{std::string(line)};
    std::string tag, name, shape, offset, count, extra;
    if (!(in >> tag >> name >> shape >> offset >> count) || (in >> extra)) {
        malformed("bad tensor line '" + std::string(line) + "'");
    }
    TensorEntry e{name, parse_shape(shape), parse_u64(offset, "offset"), parse_u64(count, "count")};
    if (e.count > (std::uint64_t{1} << 56) || e.offset > (std::uint64_t{1} << 60)) malformed("tensor " + name + ": size out of range");
    if (shape_size(e.shape) != e.count) malformed("tensor " + name + ": shape does not match count");
    return e;
}

class Writer {
public:
    void add(const std::string& name, const Shape& shape, std::span<const double> values) {
        manifest_ += "tensor " + name + " " + shape_text(shape) + " " + std::to_string(payload_.size()) + " " +
                     std::to_string(values.size()) + "\n";
        for (double v : values) put_u64(payload_, std::bit_cast<std::uint64_t>(v));
    }
    void line(const std::string& text) { manifest_ += text + "\n"; }

    std::vector<std::uint8_t> finish() const {
        std::vector<std::uint8_t> out(magic.begin(), magic.end());
        put_u64(out, manifest_.size());
        out.insert(out.end(), manifest_.begin(), manifest_.end());
        out.insert(out.end(), payload_.begin(), payload_.end());
        put_u64(out, fnv1a64(out));
        return out;
    }

private:
    std::string manifest_;
    std::vector<std::uint8_t> payload_;
};

void add_states(Writer& w, const std::string& prefix, const SpectralStates& states) {
    for (const auto& [name, st] : states) {
        w.add(prefix + ":" + name + ":u", {st.u.size()}, st.u);
        w.add(prefix + ":" + name + ":v", {st.v.size()}, st.v);
        w.add(prefix + ":" + name + ":sigma", {}, std::span<const double>(&st.sigma, 1));
    }
}

} // namespace

std::string_view to_string(CheckpointErrorKind kind) {
    switch (kind) {
    case CheckpointErrorKind::io: return "io error";
    case CheckpointErrorKind::bad_magic: return "bad magic";
    case CheckpointErrorKind::bad_version: return "unsupported version";
    case CheckpointErrorKind::truncated: return "truncated";
    case CheckpointErrorKind::checksum: return "checksum mismatch";
    case CheckpointErrorKind::malformed: return "malformed";
    }
    return "unknown";
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.line("version " + std::to_string(ckpt.version));
    w.line("input_shape " + shape_text(ckpt.net.input_shape()));
    w.line("arch " + architecture_to_string(ckpt.net.layers()));
    w.line("step_count " + std::to_string(ckpt.state.opt.step_count));
    w.line("epoch " + std::to_string(ckpt.state.opt.epoch));
    for (const auto& [k, v] : ckpt.settings) w.line("setting " + k + "=" + v);

    const auto& params = ckpt.net.params();
    if (ckpt.state.opt.velocity.size() != params.size()) throw ValueError("checkpoint: velocity count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        w.add("param:" + params[i].name, params[i].shape, params[i].values);
        w.add("velocity:" + params[i].name, params[i].shape, ckpt.state.opt.velocity[i]);
    }
    add_states(w, "spectral", ckpt.state.spectral);
    add_states(w, "monitor", ckpt.state.monitor);

    const std::size_t sigmas = ckpt.state.metrics.empty() ? 0 : ckpt.state.metrics.front().per_layer_sigma.size();
    std::vector<double> rows;
    for (const auto& r : ckpt.state.metrics) {
        if (r.per_layer_sigma.size() != sigmas) throw ValueError("checkpoint: ragged per-layer sigma");
        rows.insert(rows.end(), {static_cast<double>(r.epoch), r.train_loss, r.test_loss, r.train_acc, r.test_acc,
                                 r.grad_norm_train, r.grad_norm_test, r.penalty});
        rows.insert(rows.end(), r.per_layer_sigma.begin(), r.per_layer_sigma.end());
    }
    w.add("metrics", {ckpt.state.metrics.size(), metric_fields + sigmas}, rows);
    return w.finish();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    using K = CheckpointErrorKind;
    if (bytes.size() < magic.size()) {
        throw CheckpointError(K::truncated, std::to_string(bytes.size()) + " bytes, shorter than the magic");
    }
    if (!std::equal(magic.begin(), magic.end(), bytes.begin())) {
        throw CheckpointError(K::bad_magic, "expected \"SPECREG1\"");
    }
    if (bytes.size() < header_size + 8) throw CheckpointError(K::truncated, "header incomplete");
    const std::uint64_t manifest_len = get_u64(bytes.subspan(8, 8));
    if (manifest_len > bytes.size() - header_size - 8) {
        throw CheckpointError(K::truncated, "manifest of " + std::to_string(manifest_len) + " bytes exceeds the file");
    }
    const auto checksum_ok = [&](std::uint64_t len) {
        return fnv1a64(bytes.first(len - 8)) == get_u64(bytes.subspan(len - 8, 8));
    };
    const std::string_view manifest(reinterpret_cast<const char*>(bytes.data() + header_size), manifest_len);
    const auto lines = split_lines(manifest);

    // Expected payload size, from a lenient scan; a corrupted manifest is
    // reported as a checksum failure when the checksum disagrees.
    std::uint64_t payload_len = 0;
    std::vector<TensorEntry> tensors;
    try {
        for (auto line : lines) {
            if (line.starts_with("tensor ")) {
                tensors.push_back(parse_tensor_line(line));
                payload_len = std::max(payload_len, tensors.back().offset + 8 * tensors.back().count);
            }
        }
    } catch (const CheckpointError&) {
        if (!checksum_ok(bytes.size())) throw CheckpointError(K::checksum, "stored checksum does not match contents");
        throw;
    }
    const std::uint64_t expected = header_size + manifest_len + payload_len + 8;
    if (bytes.size() < expected) {
        throw CheckpointError(K::truncated, "expected " + std::to_string(expected) + " bytes, found " +
                                                std::to_string(bytes.size()));
    }
    // Checksum position follows from the manifest, so trailing garbage is told apart from corruption.
    if (!checksum_ok(expected)) throw CheckpointError(K::checksum, "stored checksum does not match contents");
    if (bytes.size() > expected) {
        malformed(std::to_string(bytes.size() - expected) + " trailing bytes after the checksum");
    }

    Checkpoint ck;
    if (lines.empty() || !lines[0].starts_with("version ")) malformed("first manifest line must be the version");
    const std::uint64_t version = parse_u64(lines[0].substr(8), "version");
    if (version != static_cast<std::uint64_t>(checkpoint_version)) {
        throw CheckpointError(K::bad_version, "file has version " + std::to_string(version) +
                                                  ", this build reads version " + std::to_string(checkpoint_version));
    }
    ck.version = static_cast<int>(version);

    std::optional<Shape> input_shape;
    std::optional<std::string> arch;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const std::string_view line = lines[i];
        const auto sp = line.find(' ');
        const std::string_view tag = line.substr(0, sp);
        const std::string_view rest = sp == std::string_view::npos ? std::string_view{} : line.substr(sp + 1);
        if (tag == "input_shape") input_shape = parse_shape(rest);
        else if (tag == "arch") arch = std::string(rest);
        else if (tag == "step_count") ck.state.opt.step_count = parse_u64(rest, "step_count");
        else if (tag == "epoch") ck.state.opt.epoch = parse_u64(rest, "epoch");
        else if (tag == "setting") {
            const auto eq = rest.find('=');
            if (eq == std::string_view::npos) malformed("bad setting line '" + std::string(line) + "'");
            ck.settings.emplace_back(std::string(rest.substr(0, eq)), std::string(rest.substr(eq + 1)));
        } else if (tag != "tensor") {
            malformed("unknown manifest entry '" + std::string(tag) + "'");
        }
    }
    if (!input_shape || !arch) malformed("manifest lacks input_shape or arch");
    try {
        ck.net = Network(*input_shape, parse_architecture(*arch, *input_shape));
    } catch (const ValueError& e) {
        malformed(std::string("architecture: ") + e.what());
    }

    const std::uint8_t* payload = bytes.data() + header_size + manifest_len;
    std::map<std::string, TensorEntry> by_name;
    for (auto& t : tensors) {
        if (!by_name.emplace(t.name, t).second) malformed("duplicate tensor " + t.name);
    }
    const auto take = [&](const std::string& name, std::optional<Shape> shape = std::nullopt) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) malformed("missing tensor " + name);
        const TensorEntry& e = it->second;
        if (shape && e.shape != *shape) {
            malformed("tensor " + name + " has shape " + shape_text(e.shape) + ", expected " + shape_text(*shape));
        }
        std::vector<double> out(e.count);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] = std::bit_cast<double>(get_u64(std::span<const std::uint8_t>(payload + e.offset + 8 * i, 8)));
        }
        Shape found = e.shape;
        by_name.erase(it);
        return std::pair{std::move(found), std::move(out)};
    };

    for (auto& p : ck.net.params()) {
        p.values = take("param:" + p.name, p.shape).second;
        ck.state.opt.velocity.push_back(take("velocity:" + p.name, p.shape).second);
    }
    for (auto* states : {&ck.state.spectral, &ck.state.monitor}) {
        const std::string prefix = states == &ck.state.spectral ? "spectral:" : "monitor:";
        for (std::size_t pi : ck.net.weight_params()) {
            const std::string& name = ck.net.params()[pi].name;
            const MatrixView w = ck.net.weight_matrix(pi);
            PowerIterState st;
            st.u = take(prefix + name + ":u", Shape{w.rows}).second;
            st.v = take(prefix + name + ":v", Shape{w.cols}).second;
            st.sigma = take(prefix + name + ":sigma", Shape{}).second[0];
            states->emplace(name, std::move(st));
        }
    }
    const auto [mshape, mvals] = take("metrics");
    if (mshape.size() != 2 || mshape[1] < metric_fields) malformed("metrics tensor must be (records, >= 8)");
    for (std::size_t r = 0; r < mshape[0]; ++r) {
        const double* row = mvals.data() + r * mshape[1];
        MetricsRecord m;
        m.epoch = static_cast<std::size_t>(row[0]);
        m.train_loss = row[1];
        m.test_loss = row[2];
        m.train_acc = row[3];
        m.test_acc = row[4];
        m.grad_norm_train = row[5];
        m.grad_norm_test = row[6];
        m.penalty = row[7];
        m.per_layer_sigma.assign(row + metric_fields, row + mshape[1]);
        ck.state.metrics.push_back(std::move(m));
    }
    if (!by_name.empty()) malformed("unexpected tensor " + by_name.begin()->first);
    return ck;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(content.data()), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw CheckpointError(CheckpointErrorKind::io, "write to " + tmp.string() + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw CheckpointError(CheckpointErrorKind::io, "rename to " + path.string() + ": " + ec.message());
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw CheckpointError(CheckpointErrorKind::io, "read of " + path.string() + " failed");
    try {
        return decode_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(e.kind(), path.string() + ": " + std::string(e.what()).substr(to_string(e.kind()).size() + 2));
    }
}

RunConfig checkpoint_config(const Checkpoint& ckpt) {
    RunConfig c;
    for (const auto& [k, v] : ckpt.settings) {
        try {
            apply_setting(c, k, v);
        } catch (const ConfigError& e) {
            malformed(std::string("stored setting: ") + e.what());
        }
    }
    return c;
}

} // namespace specreg::cli
