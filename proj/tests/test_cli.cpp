#include "doctest.h"
#include "support.hpp"

#include "specreg/cli/commands.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace specreg;
using namespace specreg::cli;
using namespace testing;
namespace fs = std::filesystem;

namespace {

const fs::path tmp_root = fs::path(SPECREG_TEST_TMP) / "cli";

fs::path fresh_dir(const std::string& name) {
    const fs::path d = tmp_root / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

const std::string small_config = R"(# tiny smoke configuration
seed = 3
epochs = 4
batch_size = 16
lr = 0.05
regularizer = spectral   # the method under study
lambda = 0.01
arch = dense:12,relu,dense:3
data = synthetic
synthetic.classes = 3
synthetic.samples_per_class = 20
synthetic.dim = 5
synthetic.label_noise = 0.2
synthetic.seed = 7
gcn = true
)";

RunConfig small(const fs::path& out) {
    RunConfig c = parse_config(small_config, "small");
    c.out_dir = out;
    return c;
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + " \"" + std::string(SPECREG_CLI_PATH) + "\" " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config parsing") {
    const RunConfig c = parse_config(small_config, "small");
    CHECK(c.train.seed == 3);
    CHECK(c.train.regularizer.kind == RegularizerKind::spectral);
    CHECK(c.train.regularizer.lambda == 0.01);
    CHECK(c.synthetic.input_dim == 5);
    CHECK(c.gcn);
    CHECK_NOTHROW(validate(c));

    try {
        parse_config("epochs = 3\n\nlearning_rate = 0.1\n", "cfg");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string w = e.what();
        CHECK(w.find("learning_rate") != std::string::npos);
        CHECK(w.find("cfg:3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("epochs = three\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config("just words\n", "cfg"), ConfigError);
    CHECK_THROWS_AS(parse_config("regularizer = jacobian\n", "cfg"), ConfigError);

    RunConfig bad = c;
    bad.arch.clear();
    CHECK_THROWS_AS(validate(bad), ConfigError);
    bad = c;
    bad.train.momentum = 1.0;
    CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("overrides and SPECREG_SEED") {
    const fs::path dir = fresh_dir("overrides");
    spit(dir / "c.cfg", small_config);
    const RunConfig a = load_config(dir / "c.cfg", {"epochs=9", "lambda = 0.5"}, std::nullopt);
    CHECK(a.train.epochs == 9);
    CHECK(a.train.regularizer.lambda == 0.5);
    CHECK(load_config(dir / "c.cfg", {}, std::string("77")).train.seed == 77);
    CHECK(load_config(dir / "c.cfg", {"seed=5"}, std::string("77")).train.seed == 5);
    CHECK_THROWS_AS(load_config(dir / "c.cfg", {}, std::string("x")), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "c.cfg", {"nokey"}, std::nullopt), ConfigError);
}

TEST_CASE("canonical settings round-trip and exclude run control") {
    RunConfig c = small("somewhere");
    c.checkpoint_every = 3;
    c.train.base_lr = 0.1 + 0.2;
    const auto kv = canonical_settings(c);
    RunConfig back;
    for (const auto& [k, v] : kv) {
        CHECK(k != "out_dir");
        CHECK(k != "resume");
        CHECK(k != "checkpoint_every");
        apply_setting(back, k, v);
    }
    back.out_dir = c.out_dir;
    back.checkpoint_every = c.checkpoint_every;
    CHECK(back == c);
}

TEST_CASE("format_real is shortest round-trip") {
    Rng rng(1);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 2000; ++i) {
        const double x = u(rng) * std::pow(10.0, double(i % 40) - 20.0);
        const std::string s = format_real(x);
        double y = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), y);
        CHECK(y == x);
    }
    CHECK(format_real(0.1) == "0.1");
    CHECK(format_real(1.0) == "1");
}

TEST_CASE("checkpoint container") {
    const fs::path dir = fresh_dir("ckpt");
    RunConfig cfg = small(dir / "run");
    cfg.train.epochs = 2;
    std::ostringstream log;
    const TrainResult r = cmd_train(cfg, log);
    const Checkpoint ck = load_checkpoint(r.checkpoint);

    SUBCASE("save then load is deep equal") {
        CHECK(ck.net == r.net);
        CHECK(ck.state == r.state);
        CHECK(ck.settings == canonical_settings(cfg));
        save_checkpoint(dir / "again.ckpt", ck);
        CHECK(load_checkpoint(dir / "again.ckpt") == ck);
        CHECK(slurp(dir / "again.ckpt") == slurp(r.checkpoint));
        CHECK_FALSE(fs::exists(dir / "again.ckpt.tmp"));
        CHECK(checkpoint_config(ck).train == cfg.train);
    }
    const auto bytes = encode_checkpoint(ck);
    const auto kind_of = [](const std::vector<std::uint8_t>& b) {
        try {
            decode_checkpoint(b);
        } catch (const CheckpointError& e) {
            return std::optional(e.kind());
        }
        return std::optional<CheckpointErrorKind>();
    };
    SUBCASE("flipped payload byte") {
        auto b = bytes;
        b[b.size() - 100] ^= 0x10;
        CHECK(kind_of(b) == CheckpointErrorKind::checksum);
    }
    SUBCASE("flipped manifest byte") {
        auto b = bytes;
        b[30] ^= 0x01;
        CHECK(kind_of(b) == CheckpointErrorKind::checksum);
    }
    SUBCASE("truncation") {
        CHECK(kind_of({bytes.begin(), bytes.end() - 9}) == CheckpointErrorKind::truncated);
        CHECK(kind_of({bytes.begin(), bytes.begin() + 5}) == CheckpointErrorKind::truncated);
        CHECK(kind_of({bytes.begin(), bytes.begin() + 40}) == CheckpointErrorKind::truncated);
    }
    SUBCASE("bad magic") {
        auto b = bytes;
        b[0] = 'X';
        CHECK(kind_of(b) == CheckpointErrorKind::bad_magic);
    }
    SUBCASE("trailing bytes") {
        auto b = bytes;
        b.push_back(0);
        CHECK(kind_of(b) == CheckpointErrorKind::malformed);
    }
    SUBCASE("version mismatch names both versions") {
        Checkpoint future = ck;
        future.version = 7;
        try {
            decode_checkpoint(encode_checkpoint(future));
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointErrorKind::bad_version);
            const std::string w = e.what();
            CHECK(w.find("7") != std::string::npos);
            CHECK(w.find(std::to_string(checkpoint_version)) != std::string::npos);
        }
    }
    SUBCASE("missing file") {
        try {
            load_checkpoint(dir / "nope.ckpt");
            FAIL("expected CheckpointError");
        } catch (const CheckpointError& e) {
            CHECK(e.kind() == CheckpointErrorKind::io);
        }
    }
}

TEST_CASE("train writes CSV rows and a final checkpoint") {
    const fs::path dir = fresh_dir("smoke");
    RunConfig cfg = small(dir);
    cfg.train.epochs = 2;
    cfg.train.regularizer.kind = RegularizerKind::vanilla;
    std::ostringstream log;
    const TrainResult r = cmd_train(cfg, log);
    CHECK(fs::exists(r.checkpoint));
    const std::string csv = slurp(r.csv);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    CHECK(csv.starts_with("epoch,train_loss,test_loss,train_acc,test_acc,grad_norm_train,grad_norm_test,penalty,"
                          "sigma_layer0.weight,sigma_layer2.weight\n"));
    // Every real field parses back to the stored record exactly.
    std::istringstream rows(csv);
    std::string line;
    std::getline(rows, line);
    std::getline(rows, line);
    CHECK(line == metrics_csv_row(r.state.metrics[0]));
    const auto comma = line.find(',', line.find(',') + 1);
    const std::string field = line.substr(line.find(',') + 1, comma - line.find(',') - 1);
    double v = 0.0;
    std::from_chars(field.data(), field.data() + field.size(), v);
    CHECK(v == r.state.metrics[0].train_loss);
}

TEST_CASE("resume reproduces the uninterrupted run bitwise") {
    const fs::path full = fresh_dir("resume_full"), part = fresh_dir("resume_part");
    RunConfig a = small(full);
    a.checkpoint_every = 2;
    std::ostringstream log;
    cmd_train(a, log);
    RunConfig b = small(part);
    b.resume = full / "epoch-2.ckpt";
    cmd_train(b, log);
    CHECK(slurp(full / "final.ckpt") == slurp(part / "final.ckpt"));
    CHECK(slurp(full / "metrics.csv") == slurp(part / "metrics.csv"));

    RunConfig other = small(fresh_dir("resume_other"));
    other.train.regularizer.lambda = 0.02;
    other.resume = full / "epoch-2.ckpt";
    CHECK_THROWS_AS(cmd_train(other, log), ConfigError);
}

TEST_CASE("analyze subcommands") {
    const fs::path dir = fresh_dir("analyze");
    RunConfig cfg = small(dir);
    std::ostringstream log;
    const TrainResult r = cmd_train(cfg, log);
    const DatasetPair data = load_run_data(cfg);

    SUBCASE("spectrum of a fresh net") {
        RunConfig z = small(fresh_dir("analyze_fresh"));
        z.train.epochs = 0;
        const TrainResult f = cmd_train(z, log);
        std::ostringstream out;
        cmd_analyze({.command = "spectrum", .checkpoint = f.checkpoint}, out);
        std::istringstream in(out.str());
        std::string line;
        std::getline(in, line);
        CHECK(line.starts_with("layer,flatness,sv_0,sv_1,"));
        int rows = 0;
        while (std::getline(in, line)) {
            ++rows;
            std::vector<double> vals;
            std::istringstream cells(line);
            std::string cell;
            std::getline(cells, cell, ',');
            std::getline(cells, cell, ',');
            while (std::getline(cells, cell, ','))
                if (!cell.empty()) vals.push_back(std::stod(cell));
            CHECK(std::is_sorted(vals.rbegin(), vals.rend()));
        }
        CHECK(rows == 2);
    }
    SUBCASE("sensitivity equals input_grad_norm") {
        std::ostringstream out;
        cmd_analyze({.command = "sensitivity", .checkpoint = r.checkpoint}, out);
        CHECK(out.str() == "split,input_grad_norm\ntrain," + format_real(input_grad_norm(r.net, data.train)) + "\ntest," +
                               format_real(input_grad_norm(r.net, data.test)) + "\n");
    }
    SUBCASE("gap") {
        std::ostringstream out;
        cmd_analyze({.command = "gap", .checkpoint = r.checkpoint, .alpha = 1.0}, out);
        CHECK(out.str() == "alpha,gap,status\n1,,undefined\n");
        std::ostringstream ok;
        cmd_analyze({.command = "gap", .checkpoint = r.checkpoint, .alpha = 0.0}, ok);
        CHECK(ok.str() == "alpha,gap,status\n0," + format_real(*generalization_gap(r.state.metrics, 0.0)) + ",ok\n");
        CHECK_THROWS_AS(cmd_analyze({.command = "gap", .checkpoint = r.checkpoint}, out), ConfigError);
    }
    SUBCASE("hessian and lipschitz") {
        std::ostringstream h;
        cmd_analyze({.command = "hessian", .checkpoint = r.checkpoint, .split = "train", .iters = 20}, h);
        CHECK(h.str().starts_with("split,iters,max_eig\ntrain,20,"));
        std::ostringstream l;
        cmd_analyze({.command = "lipschitz", .checkpoint = r.checkpoint, .samples = 3}, l);
        std::istringstream in(l.str());
        std::string line;
        std::getline(in, line);
        CHECK(line == "sample,empirical_max_ratio,jacobian_sigma,sigma_product");
        int rows = 0;
        while (std::getline(in, line)) {
            ++rows;
            std::istringstream cells(line);
            std::string c0, c1, c2, c3;
            std::getline(cells, c0, ',');
            std::getline(cells, c1, ',');
            std::getline(cells, c2, ',');
            std::getline(cells, c3, ',');
            CHECK(std::stod(c1) <= std::stod(c2) + 1e-8);
            CHECK(std::stod(c2) <= std::stod(c3) + 1e-8);
        }
        CHECK(rows == 3);
    }
}

TEST_CASE("gen-data output trains through the idx path") {
    const fs::path dir = fresh_dir("gendata");
    spit(dir / "spec.txt", "kind = gaussian-mixture\nclasses = 3\nsamples_per_class = 20\ndim = 5\nlabel_noise = 0.2\nseed = 7\n");
    cmd_gen_data(dir / "spec.txt", dir / "data");
    RunConfig idx = small(dir / "idx_run");
    idx.data = DataKind::idx;
    idx.idx = {dir / "data" / train_images_file, dir / "data" / train_labels_file, dir / "data" / test_images_file,
               dir / "data" / test_labels_file, 0};
    std::ostringstream log;
    const TrainResult a = cmd_train(idx, log);
    const TrainResult b = cmd_train(small(dir / "syn_run"), log);
    // Same samples either way, so the trajectories agree.
    CHECK(a.net == b.net);

    std::ostringstream via_dir, via_run;
    cmd_analyze({.command = "sensitivity", .checkpoint = b.checkpoint, .data = dir / "data"}, via_dir);
    cmd_analyze({.command = "sensitivity", .checkpoint = b.checkpoint}, via_run);
    CHECK(via_dir.str() == via_run.str());
    CHECK_THROWS_AS(cmd_gen_data(dir / "missing.txt", dir / "x"), ConfigError);
}

TEST_CASE("command-line exit codes and two-process determinism") {
    const fs::path dir = fresh_dir("process");
    spit(dir / "c.cfg", small_config + "checkpoint_every = 2\n");
    spit(dir / "bad.cfg", "epochs = 2\nwarmup = 5\n");
    CHECK(run_cli("train --config " + (dir / "bad.cfg").string()) == exit_config);
    CHECK(run_cli("train --config " + (dir / "c.cfg").string() + " --set out_dir=" + (dir / "a").string()) == exit_ok);
    CHECK(run_cli("train --config " + (dir / "c.cfg").string() + " --set out_dir=" + (dir / "b").string()) == exit_ok);
    CHECK(slurp(dir / "a" / "final.ckpt") == slurp(dir / "b" / "final.ckpt"));
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));

    // Resume in a fresh process from the first process's mid-run checkpoint.
    CHECK(run_cli("train --config " + (dir / "c.cfg").string() + " --set out_dir=" + (dir / "c").string() +
                  " --set resume=" + (dir / "a" / "epoch-2.ckpt").string()) == exit_ok);
    CHECK(slurp(dir / "a" / "final.ckpt") == slurp(dir / "c" / "final.ckpt"));
    CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "c" / "metrics.csv"));

    CHECK(run_cli("train --config " + (dir / "c.cfg").string() + " --set out_dir=" + (dir / "d").string(),
                  "SPECREG_SEED=99") == exit_ok);
    CHECK(load_checkpoint(dir / "d" / "final.ckpt").settings[0] == KeyValue{"seed", "99"});

    CHECK(run_cli("analyze gap --checkpoint " + (dir / "a" / "final.ckpt").string() + " --alpha 0.5") == exit_ok);
    CHECK(run_cli("analyze spectrum --checkpoint " + (dir / "missing.ckpt").string()) == exit_runtime);
    CHECK(run_cli("analyze gap --checkpoint " + (dir / "a" / "final.ckpt").string()) == exit_config);
    CHECK(run_cli("frobnicate") == exit_config);
}
