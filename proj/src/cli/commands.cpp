#include "specreg/cli/commands.hpp"

#include <fstream>
#include <sstream>

namespace specreg::cli {

namespace fs = std::filesystem;

int report_exception(std::ostream& err) {
    try {
        throw;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_runtime;
    }
}

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

DatasetPair load_idx_pair(const fs::path& ti, const fs::path& tl, const fs::path& vi, const fs::path& vl,
                          int num_classes) {
    DatasetPair d;
    d.train = load_idx_dataset(ti, tl, num_classes, Split::train);
    d.test = load_idx_dataset(vi, vl, d.train.num_classes, Split::test);
    if (d.train.sample_shape() != d.test.sample_shape()) {
        throw FormatError("train samples are " + shape_to_string(d.train.sample_shape()) + " but test samples are " +
                          shape_to_string(d.test.sample_shape()));
    }
    return d;
}

void maybe_gcn(DatasetPair& d, bool gcn) {
    if (!gcn) return;
    d.train = global_contrast_normalize(d.train);
    d.test = global_contrast_normalize(d.test);
}

Network build_network(const RunConfig& config, const Shape& input_shape) {
    try {
        return Network(input_shape, parse_architecture(config.arch, input_shape));
    } catch (const ValueError& e) {
        throw ConfigError(std::string("key 'arch': ") + e.what());
    }
}

std::string first_difference(const std::vector<KeyValue>& a, const std::vector<KeyValue>& b) {
    for (std::size_t i = 0; i < std::max(a.size(), b.size()); ++i) {
        if (i >= a.size()) return b[i].first;
        if (i >= b.size() || a[i] != b[i]) return a[i].first;
    }
    return {};
}

const Dataset& pick_split(const DatasetPair& d, const std::string& split) {
    if (split == "train") return d.train;
    if (split == "test") return d.test;
    throw ConfigError("--split must be train or test, got '" + split + "'");
}

} // namespace

DatasetPair load_run_data(const RunConfig& config) {
    DatasetPair d;
    if (config.data == DataKind::synthetic) {
        d = generate_synthetic(config.synthetic);
    } else {
        const IdxPaths& p = config.idx;
        d = load_idx_pair(p.train_images, p.train_labels, p.test_images, p.test_labels, p.num_classes);
    }
    maybe_gcn(d, config.gcn);
    return d;
}

DatasetPair load_data_dir(const fs::path& dir, int num_classes, bool gcn) {
    DatasetPair d = load_idx_pair(dir / train_images_file, dir / train_labels_file, dir / test_images_file,
                                  dir / test_labels_file, num_classes);
    maybe_gcn(d, gcn);
    return d;
}

std::string metrics_csv_header(const Network& net) {
    std::string h = "epoch,train_loss,test_loss,train_acc,test_acc,grad_norm_train,grad_norm_test,penalty";
    for (std::size_t pi : net.weight_params()) h += ",sigma_" + net.params()[pi].name;
    return h;
}

std::string metrics_csv_row(const MetricsRecord& r) {
    std::string row = std::to_string(r.epoch);
    for (double v : {r.train_loss, r.test_loss, r.train_acc, r.test_acc, r.grad_norm_train, r.grad_norm_test, r.penalty}) {
        row += "," + format_real(v);
    }
    for (double s : r.per_layer_sigma) row += "," + format_real(s);
    return row;
}

std::string metrics_csv(const Network& net, const std::vector<MetricsRecord>& records) {
    std::string out = metrics_csv_header(net) + "\n";
    for (const auto& r : records) out += metrics_csv_row(r) + "\n";
    return out;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
    validate(config);
    const DatasetPair data = load_run_data(config);
    TrainResult res;
    res.net = build_network(config, data.train.sample_shape());
    const std::vector<KeyValue> settings = canonical_settings(config);

    if (!config.resume.empty()) {
        Checkpoint ck = load_checkpoint(config.resume);
        if (ck.settings != settings) {
            throw ConfigError("resume: " + config.resume.string() + " was written with a different value for '" +
                              first_difference(ck.settings, settings) + "'");
        }
        res.net = std::move(ck.net);
        res.state = std::move(ck.state);
        log << "resuming from " << config.resume.string() << " at epoch " << res.state.opt.epoch << "\n";
    } else {
        Rng init = make_stream(config.train.seed, Stream::init);
        res.net.init_parameters(init);
        res.state = init_training_state(res.net, config.train);
    }

    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw CheckpointError(CheckpointErrorKind::io, "cannot create " + config.out_dir.string() + ": " + ec.message());
    res.csv = config.out_dir / "metrics.csv";
    res.checkpoint = config.out_dir / "final.ckpt";

    fs::path last_good;
    const auto hook = [&](const Network& net, const TrainingState& st) {
        write_text_atomic(res.csv, metrics_csv(net, st.metrics));
        if (config.checkpoint_every > 0 && st.opt.epoch % config.checkpoint_every == 0) {
            last_good = config.out_dir / ("epoch-" + std::to_string(st.opt.epoch) + ".ckpt");
            save_checkpoint(last_good, {checkpoint_version, settings, net, st});
        }
        if (!st.metrics.empty() && st.metrics.back().epoch == st.opt.epoch) {
            const MetricsRecord& r = st.metrics.back();
            log << "epoch " << r.epoch << " train_acc " << format_real(r.train_acc) << " test_acc "
                << format_real(r.test_acc) << "\n";
        }
    };
    try {
        run_training(res.net, data.train, data.test, config.train, res.state, hook);
    } catch (const TrainingError& e) {
        throw TrainingError(std::string(e.what()) + (last_good.empty() ? "; no checkpoint was written"
                                                                       : "; last good checkpoint: " + last_good.string()));
    }
    write_text_atomic(res.csv, metrics_csv(res.net, res.state.metrics));
    save_checkpoint(res.checkpoint, {checkpoint_version, settings, res.net, res.state});
    return res;
}

void cmd_analyze(const AnalyzeArgs& args, std::ostream& out) {
    const Checkpoint ck = load_checkpoint(args.checkpoint);
    const Network& net = ck.net;
    const RunConfig config = checkpoint_config(ck);
    const auto data = [&] {
        DatasetPair d = args.data.empty() ? load_run_data(config) : load_data_dir(args.data, 0, config.gcn);
        if (d.train.sample_shape() != net.input_shape()) {
            throw ConfigError("data samples are " + shape_to_string(d.train.sample_shape()) + " but the network expects " +
                              shape_to_string(net.input_shape()));
        }
        return d;
    };

    if (args.command == "spectrum") {
        const auto spectra = singular_spectrum(net);
        std::size_t width = 0;
        for (const auto& s : spectra) width = std::max(width, s.singular_values.size());
        out << "layer,flatness";
        for (std::size_t i = 0; i < width; ++i) out << ",sv_" << i;
        out << "\n";
        for (const auto& s : spectra) {
            out << s.name << "," << format_real(spectrum_flatness(s.singular_values));
            for (std::size_t i = 0; i < width; ++i) {
                out << ",";
                if (i < s.singular_values.size()) out << format_real(s.singular_values[i]);
            }
            out << "\n";
        }
    } else if (args.command == "sensitivity") {
        const DatasetPair d = data();
        out << "split,input_grad_norm\n";
        out << "train," << format_real(input_grad_norm(net, d.train)) << "\n";
        out << "test," << format_real(input_grad_norm(net, d.test)) << "\n";
    } else if (args.command == "hessian") {
        const DatasetPair d = data();
        HessianOptions opts{args.iters, args.fd_step, args.max_samples, config.train.seed};
        const double eig = hessian_max_eig(net, pick_split(d, args.split), opts);
        out << "split,iters,max_eig\n" << args.split << "," << args.iters << "," << format_real(eig) << "\n";
    } else if (args.command == "gap") {
        if (!args.alpha) throw ConfigError("gap needs --alpha");
        if (!(*args.alpha >= 0.0 && *args.alpha <= 1.0)) throw ConfigError("--alpha must lie in [0, 1]");
        if (ck.state.metrics.empty()) throw ValueError("gap: checkpoint holds no metrics records");
        const auto gap = generalization_gap(ck.state.metrics, *args.alpha);
        out << "alpha,gap,status\n" << format_real(*args.alpha) << ",";
        if (gap) out << format_real(*gap) << ",ok\n";
        else out << ",undefined\n";
    } else if (args.command == "lipschitz") {
        const DatasetPair d = data();
        const Dataset& ds = pick_split(d, args.split);
        out << "sample,empirical_max_ratio,jacobian_sigma,sigma_product\n";
        for (std::size_t i = 0; i < std::min(args.samples, ds.size()); ++i) {
            Rng rng = make_stream(config.train.seed, Stream::probe, {i});
            const LipschitzProbe p = lipschitz_probe(net, ds.inputs.sample(i), args.trials, args.xi_norm, rng);
            out << i << "," << format_real(p.empirical_max_ratio) << "," << format_real(p.jacobian_sigma) << ","
                << format_real(p.sigma_product) << "\n";
        }
    } else {
        throw ConfigError("unknown analysis '" + args.command + "'");
    }
}

void cmd_gen_data(const fs::path& spec, const fs::path& out_dir) {
    const SyntheticSpec s = parse_synthetic_spec(read_text(spec), spec.string());
    const DatasetPair d = generate_synthetic(s);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());
    save_idx_dataset(d.train, out_dir / train_images_file, out_dir / train_labels_file);
    save_idx_dataset(d.test, out_dir / test_images_file, out_dir / test_labels_file);
}

} // namespace specreg::cli
