#include "specreg/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace specreg::cli {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ConfigError("key '" + std::string(key) + "': invalid value '" + std::string(value) + "' (expected " +
                      std::string(expected) + ")");
}

template <class Int>
Int to_int(std::string_view key, std::string_view v) {
    Int out{};
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty()) bad_value(key, v, "an integer");
    return out;
}

double to_real(std::string_view key, std::string_view v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size() || v.empty() || !std::isfinite(out)) {
        bad_value(key, v, "a finite real");
    }
    return out;
}

bool to_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad_value(key, v, "true or false");
}

template <class T>
std::string int_text(T v) {
    return std::to_string(v);
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <class Config>
struct Field {
    std::string key;
    std::function<void(Config&, std::string_view key, std::string_view value)> set;
    std::function<std::string(const Config&)> get;
    bool stored = true;
};

const std::vector<Field<SyntheticSpec>>& synthetic_fields() {
    using S = SyntheticSpec;
    static const std::vector<Field<S>> fields = {
        {"kind",
         [](S& s, auto k, auto v) {
             if (v == "gaussian-mixture") s.kind = SyntheticKind::gaussian_mixture;
             else if (v == "two-spirals") s.kind = SyntheticKind::two_spirals;
             else bad_value(k, v, "gaussian-mixture or two-spirals");
         },
         [](const S& s) -> std::string {
             return s.kind == SyntheticKind::gaussian_mixture ? "gaussian-mixture" : "two-spirals";
         }},
        {"classes", [](S& s, auto k, auto v) { s.num_classes = to_int<int>(k, v); },
         [](const S& s) { return int_text(s.num_classes); }},
        {"samples_per_class", [](S& s, auto k, auto v) { s.samples_per_class = to_int<std::size_t>(k, v); },
         [](const S& s) { return int_text(s.samples_per_class); }},
        {"test_samples_per_class", [](S& s, auto k, auto v) { s.test_samples_per_class = to_int<std::size_t>(k, v); },
         [](const S& s) { return int_text(s.test_samples_per_class); }},
        {"dim", [](S& s, auto k, auto v) { s.input_dim = to_int<std::size_t>(k, v); },
         [](const S& s) { return int_text(s.input_dim); }},
        {"modes", [](S& s, auto k, auto v) { s.modes_per_class = to_int<std::size_t>(k, v); },
         [](const S& s) { return int_text(s.modes_per_class); }},
        {"center_scale", [](S& s, auto k, auto v) { s.center_scale = to_real(k, v); },
         [](const S& s) { return format_real(s.center_scale); }},
        {"noise", [](S& s, auto k, auto v) { s.noise_stddev = to_real(k, v); },
         [](const S& s) { return format_real(s.noise_stddev); }},
        {"label_noise", [](S& s, auto k, auto v) { s.label_noise = to_real(k, v); },
         [](const S& s) { return format_real(s.label_noise); }},
        {"seed", [](S& s, auto k, auto v) { s.seed = to_int<std::uint64_t>(k, v); },
         [](const S& s) { return int_text(s.seed); }},
    };
    return fields;
}

const std::vector<Field<RunConfig>>& run_fields() {
    using R = RunConfig;
    static const std::vector<Field<R>> fields = [] {
        std::vector<Field<R>> f = {
            {"seed", [](R& c, auto k, auto v) { c.train.seed = to_int<std::uint64_t>(k, v); },
             [](const R& c) { return int_text(c.train.seed); }},
            {"epochs", [](R& c, auto k, auto v) { c.train.epochs = to_int<std::size_t>(k, v); },
             [](const R& c) { return int_text(c.train.epochs); }},
            {"batch_size", [](R& c, auto k, auto v) { c.train.batch_size = to_int<std::size_t>(k, v); },
             [](const R& c) { return int_text(c.train.batch_size); }},
            {"lr", [](R& c, auto k, auto v) { c.train.base_lr = to_real(k, v); },
             [](const R& c) { return format_real(c.train.base_lr); }},
            {"momentum", [](R& c, auto k, auto v) { c.train.momentum = to_real(k, v); },
             [](const R& c) { return format_real(c.train.momentum); }},
            {"eval_every", [](R& c, auto k, auto v) { c.train.eval_every = to_int<std::size_t>(k, v); },
             [](const R& c) { return int_text(c.train.eval_every); }},
            {"chunk_size", [](R& c, auto k, auto v) { c.train.chunk_size = to_int<std::size_t>(k, v); },
             [](const R& c) { return int_text(c.train.chunk_size); }},
            {"monitor_iters", [](R& c, auto k, auto v) { c.train.monitor_iters = to_int<int>(k, v); },
             [](const R& c) { return int_text(c.train.monitor_iters); }},
            {"regularizer",
             [](R& c, auto k, auto v) {
                 try {
                     c.train.regularizer.kind = parse_regularizer_kind(v);
                 } catch (const ValueError&) {
                     bad_value(k, v, "vanilla, decay, adversarial or spectral");
                 }
             },
             [](const R& c) { return std::string(to_string(c.train.regularizer.kind)); }},
            {"lambda", [](R& c, auto k, auto v) { c.train.regularizer.lambda = to_real(k, v); },
             [](const R& c) { return format_real(c.train.regularizer.lambda); }},
            {"alpha", [](R& c, auto k, auto v) { c.train.regularizer.alpha = to_real(k, v); },
             [](const R& c) { return format_real(c.train.regularizer.alpha); }},
            {"epsilon", [](R& c, auto k, auto v) { c.train.regularizer.epsilon = to_real(k, v); },
             [](const R& c) { return format_real(c.train.regularizer.epsilon); }},
            {"power_iters", [](R& c, auto k, auto v) { c.train.regularizer.power_iters = to_int<int>(k, v); },
             [](const R& c) { return int_text(c.train.regularizer.power_iters); }},
            {"augment.flip", [](R& c, auto k, auto v) { c.train.augment.flip = to_bool(k, v); },
             [](const R& c) { return bool_text(c.train.augment.flip); }},
            {"augment.crop_pad", [](R& c, auto k, auto v) { c.train.augment.crop_pad = to_int<std::size_t>(k, v); },
             [](const R& c) { return int_text(c.train.augment.crop_pad); }},
            {"arch", [](R& c, auto, auto v) { c.arch = std::string(v); }, [](const R& c) { return c.arch; }},
            {"data",
             [](R& c, auto k, auto v) {
                 if (v == "synthetic") c.data = DataKind::synthetic;
                 else if (v == "idx") c.data = DataKind::idx;
                 else bad_value(k, v, "synthetic or idx");
             },
             [](const R& c) -> std::string { return c.data == DataKind::synthetic ? "synthetic" : "idx"; }},
            {"gcn", [](R& c, auto k, auto v) { c.gcn = to_bool(k, v); }, [](const R& c) { return bool_text(c.gcn); }},
            {"idx.train_images", [](R& c, auto, auto v) { c.idx.train_images = std::string(v); },
             [](const R& c) { return c.idx.train_images.string(); }},
            {"idx.train_labels", [](R& c, auto, auto v) { c.idx.train_labels = std::string(v); },
             [](const R& c) { return c.idx.train_labels.string(); }},
            {"idx.test_images", [](R& c, auto, auto v) { c.idx.test_images = std::string(v); },
             [](const R& c) { return c.idx.test_images.string(); }},
            {"idx.test_labels", [](R& c, auto, auto v) { c.idx.test_labels = std::string(v); },
             [](const R& c) { return c.idx.test_labels.string(); }},
            {"idx.classes", [](R& c, auto k, auto v) { c.idx.num_classes = to_int<int>(k, v); },
             [](const R& c) { return int_text(c.idx.num_classes); }},
            {"out_dir", [](R& c, auto, auto v) { c.out_dir = std::string(v); },
             [](const R& c) { return c.out_dir.string(); }, false},
            {"resume", [](R& c, auto, auto v) { c.resume = std::string(v); },
             [](const R& c) { return c.resume.string(); }, false},
            {"checkpoint_every", [](R& c, auto k, auto v) { c.checkpoint_every = to_int<std::size_t>(k, v); },
             [](const R& c) { return int_text(c.checkpoint_every); }, false},
        };
        for (const auto& s : synthetic_fields()) {
            f.push_back({"synthetic." + s.key, [set = s.set](R& c, auto k, auto v) { set(c.synthetic, k, v); },
                         [get = s.get](const R& c) { return get(c.synthetic); }});
        }
        return f;
    }();
    return fields;
}

template <class Config>
void set_field(const std::vector<Field<Config>>& fields, Config& c, std::string_view key, std::string_view value) {
    for (const auto& f : fields) {
        if (f.key == key) {
            f.set(c, key, value);
            return;
        }
    }
    throw ConfigError("unknown key '" + std::string(key) + "'");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::string format_real(double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, p);
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value) {
    set_field(run_fields(), config, key, value);
}

std::vector<KeyValue> parse_key_values(std::string_view text, std::string_view origin) {
    std::vector<KeyValue> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = std::string(origin) + ":" + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value, got '" + std::string(line) + "'");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError(where + "empty key");
        out.emplace_back(where + std::string(key), std::string(trim(line.substr(eq + 1))));
    }
    return out;
}

namespace {

// parse_key_values prefixes each key with its location; split it back off.
template <class Config>
void apply_located(const std::vector<Field<Config>>& fields, Config& c, const KeyValue& kv) {
    const auto cut = kv.first.rfind(": ");
    const std::string where = kv.first.substr(0, cut + 2);
    const std::string key = kv.first.substr(cut + 2);
    try {
        set_field(fields, c, key, kv.second);
    } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
    }
}

} // namespace

RunConfig parse_config(std::string_view text, std::string_view origin) {
    RunConfig c;
    for (const auto& kv : parse_key_values(text, origin)) apply_located(run_fields(), c, kv);
    return c;
}

SyntheticSpec parse_synthetic_spec(std::string_view text, std::string_view origin) {
    SyntheticSpec s;
    for (const auto& kv : parse_key_values(text, origin)) apply_located(synthetic_fields(), s, kv);
    try {
        s.validate();
    } catch (const ValueError& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    }
    return s;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides,
                      const std::optional<std::string>& env_seed) {
    RunConfig c = parse_config(read_text(path), path.string());
    if (env_seed) {
        try {
            apply_setting(c, "seed", trim(*env_seed));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("SPECREG_SEED: ") + e.what());
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError("--set " + o + ": expected key=value");
        try {
            apply_setting(c, trim(std::string_view(o).substr(0, eq)), trim(std::string_view(o).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError("--set " + o + ": " + e.what());
        }
    }
    validate(c);
    return c;
}

void validate(const RunConfig& c) {
    try {
        c.train.validate();
        if (c.arch.empty()) throw ConfigError("key 'arch' is required");
        if (c.data == DataKind::synthetic) {
            c.synthetic.validate();
        } else {
            const IdxPaths& p = c.idx;
            if (p.train_images.empty() || p.train_labels.empty() || p.test_images.empty() || p.test_labels.empty()) {
                throw ConfigError("data = idx needs idx.train_images, idx.train_labels, idx.test_images, idx.test_labels");
            }
        }
    } catch (const ValueError& e) {
        throw ConfigError(e.what());
    }
}

std::vector<KeyValue> canonical_settings(const RunConfig& config) {
    std::vector<KeyValue> out;
    for (const auto& f : run_fields()) {
        if (f.stored) out.emplace_back(std::string(f.key), f.get(config));
    }
    return out;
}

} // namespace specreg::cli
