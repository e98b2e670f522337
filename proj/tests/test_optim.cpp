#include "doctest.h"
#include "support.hpp"

#include "specreg/optim.hpp"

#include <cmath>
#include <limits>
#include <set>

using namespace specreg;
using namespace testing;

TEST_CASE("lr_at schedule") {
    TrainConfig c;
    c.epochs = 100;
    c.base_lr = 0.1;
    CHECK(lr_at(c, 0) == 0.1);
    CHECK(lr_at(c, 49) == 0.1);
    CHECK(lr_at(c, 50) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(lr_at(c, 74) == doctest::Approx(0.01).epsilon(1e-15));
    CHECK(lr_at(c, 75) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK(lr_at(c, 99) == doctest::Approx(0.001).epsilon(1e-15));
    CHECK_THROWS_AS(lr_at(c, 100), ValueError);

    c.epochs = 4;
    c.base_lr = 1.0;
    CHECK(lr_at(c, 0) == 1.0);
    CHECK(lr_at(c, 1) == 1.0);
    CHECK(lr_at(c, 2) == 0.1);
    CHECK(lr_at(c, 3) == 0.01);

    c.epochs = 1;
    CHECK(lr_at(c, 0) == 1.0);
}

TEST_CASE("lr_at has exactly three plateaus for epochs >= 4") {
    for (std::size_t e = 4; e < 60; ++e) {
        TrainConfig c;
        c.epochs = e;
        std::set<double> levels;
        int changes = 0;
        for (std::size_t k = 0; k < e; ++k) {
            levels.insert(lr_at(c, k));
            if (k > 0 && lr_at(c, k) != lr_at(c, k - 1)) ++changes;
        }
        CHECK(levels.size() == 3);
        CHECK(changes == 2);
    }
}

namespace {

// One scalar parameter theta with loss theta^2 / 2, so g = theta.
Network scalar_net(double theta) {
    Network net({1}, {LayerSpec::dense(1, 1)});
    net.params()[0].values = {theta};
    return net;
}

GradientBundle grad_of(const Network& net) {
    return {{{net.params()[0].values[0]}, {0.0}}, {}, 0.0, 0.0};
}

} // namespace

TEST_CASE("nesterov two-step recurrence on theta^2/2") {
    Network net = scalar_net(1.0);
    OptState st = init_opt_state(net);
    // Hand-rolled: v1 = -0.1; theta1 = 1 + 0.9(-0.1) - 0.1 = 0.81.
    // v2 = 0.9(-0.1) - 0.1(0.81) = -0.171; theta2 = 0.81 + 0.9(-0.171) - 0.081 = 0.5751.
    nesterov_step(net, grad_of(net), st, 0.1, 0.9);
    CHECK(net.params()[0].values[0] == doctest::Approx(0.81).epsilon(1e-15));
    CHECK(st.velocity[0][0] == doctest::Approx(-0.1).epsilon(1e-15));
    nesterov_step(net, grad_of(net), st, 0.1, 0.9);
    CHECK(net.params()[0].values[0] == doctest::Approx(0.5751).epsilon(1e-14));
    CHECK(st.velocity[0][0] == doctest::Approx(-0.171).epsilon(1e-14));
    CHECK(st.step_count == 2);
}

TEST_CASE("nesterov degenerate cases") {
    SUBCASE("momentum 0 is plain SGD") {
        Network net = scalar_net(2.0);
        OptState st = init_opt_state(net);
        nesterov_step(net, grad_of(net), st, 0.25, 0.0);
        CHECK(net.params()[0].values[0] == 1.5);
    }
    SUBCASE("zero gradient keeps parameters") {
        Network net = mlp(3, {4}, 2, 1);
        const Network before = net;
        OptState st = init_opt_state(net);
        GradientBundle g;
        for (const auto& p : net.params()) g.param_grads.emplace_back(p.values.size(), 0.0);
        for (int i = 0; i < 10; ++i) nesterov_step(net, g, st, 0.1, 0.9);
        CHECK(net == before);
    }
    SUBCASE("non-finite gradient aborts with diagnostics") {
        Network net = scalar_net(1.0);
        const Network before = net;
        OptState st = init_opt_state(net);
        GradientBundle g{{{std::numeric_limits<double>::quiet_NaN()}, {0.0}}, {}, 0.0, 0.0};
        try {
            nesterov_step(net, g, st, 0.1, 0.9);
            FAIL("expected TrainingError");
        } catch (const TrainingError& e) {
            CHECK(std::string(e.what()).find("layer0.weight") != std::string::npos);
        }
        CHECK(net == before);
    }
}

TEST_CASE("epoch permutation visits every sample once") {
    for (std::size_t n : {1, 7, 64, 65, 200}) {
        for (std::size_t epoch = 0; epoch < 3; ++epoch) {
            auto p = epoch_permutation(42, epoch, n);
            CHECK(p == epoch_permutation(42, epoch, n));
            std::sort(p.begin(), p.end());
            for (std::size_t i = 0; i < n; ++i) CHECK(p[i] == i);
        }
    }
    CHECK(epoch_permutation(42, 0, 100) != epoch_permutation(42, 1, 100));
}

namespace {

DatasetPair separable_2d(std::uint64_t seed) {
    SyntheticSpec s;
    s.num_classes = 2;
    s.samples_per_class = 100;
    s.input_dim = 2;
    s.center_scale = 3.0;
    s.noise_stddev = 0.3;
    s.seed = seed;
    return generate_synthetic(s);
}

} // namespace

TEST_CASE("run_training") {
    const DatasetPair d = separable_2d(3);
    TrainConfig c;
    c.epochs = 30;
    c.batch_size = 16;
    c.base_lr = 0.05;
    c.seed = 5;
    const auto fresh = [&] {
        Network net({2}, parse_architecture("dense:16,relu,dense:2", {2}));
        Rng r = make_stream(c.seed, Stream::init);
        net.init_parameters(r);
        return net;
    };

    SUBCASE("zero epochs leaves everything untouched") {
        Network net = fresh();
        const Network before = net;
        TrainConfig z = c;
        z.epochs = 0;
        TrainingState st = init_training_state(net, z);
        run_training(net, d.train, d.test, z, st);
        CHECK(net == before);
        CHECK(st.metrics.empty());
    }
    SUBCASE("separable data is fit") {
        Network net = fresh();
        TrainingState st = init_training_state(net, c);
        run_training(net, d.train, d.test, c, st);
        CHECK(st.metrics.size() == 30);
        CHECK(st.metrics.back().train_acc >= 0.99);
        CHECK(st.opt.step_count == 30 * ((200 + 15) / 16));
    }
    SUBCASE("identical seeds are bitwise identical for every objective") {
        for (auto kind : {RegularizerKind::vanilla, RegularizerKind::decay, RegularizerKind::adversarial,
                          RegularizerKind::spectral}) {
            TrainConfig k = c;
            k.epochs = 3;
            k.regularizer.kind = kind;
            k.regularizer.lambda = 0.01;
            Network a = fresh(), b = fresh();
            TrainingState sa = init_training_state(a, k), sb = init_training_state(b, k);
            run_training(a, d.train, d.test, k, sa);
            run_training(b, d.train, d.test, k, sb);
            CHECK(a == b);
            CHECK(sa == sb);
        }
    }
    SUBCASE("chunk size does not change the trajectory") {
        TrainConfig k = c;
        k.epochs = 2;
        k.regularizer.kind = RegularizerKind::adversarial;
        Network a = fresh(), b = fresh();
        TrainingState sa = init_training_state(a, k), sb = init_training_state(b, k);
        run_training(a, d.train, d.test, k, sa);
        k.chunk_size = 3;
        run_training(b, d.train, d.test, k, sb);
        CHECK(a == b);
    }
    SUBCASE("stopping and continuing equals one run") {
        Network a = fresh(), b = fresh();
        TrainConfig k = c;
        k.epochs = 6;
        k.regularizer.kind = RegularizerKind::spectral;
        k.regularizer.lambda = 0.01;
        TrainingState sa = init_training_state(a, k), sb = init_training_state(b, k);
        run_training(a, d.train, d.test, k, sa);
        // Interrupt b after epoch 3 by throwing from the hook, then continue.
        struct Stop {};
        try {
            run_training(b, d.train, d.test, k, sb, [](const Network&, const TrainingState& s) {
                if (s.opt.epoch == 3) throw Stop{};
            });
        } catch (const Stop&) {
        }
        CHECK(sb.opt.epoch == 3);
        run_training(b, d.train, d.test, k, sb);
        CHECK(a == b);
        CHECK(sa == sb);
    }
    SUBCASE("eval_every thins the metrics but keeps the last epoch") {
        Network net = fresh();
        TrainConfig k = c;
        k.epochs = 7;
        k.eval_every = 3;
        TrainingState st = init_training_state(net, k);
        run_training(net, d.train, d.test, k, st);
        REQUIRE(st.metrics.size() == 3);
        CHECK(st.metrics[0].epoch == 3);
        CHECK(st.metrics[1].epoch == 6);
        CHECK(st.metrics[2].epoch == 7);
    }
    SUBCASE("divergence raises TrainingError") {
        Network net = fresh();
        TrainConfig k = c;
        k.base_lr = 1e200;
        TrainingState st = init_training_state(net, k);
        CHECK_THROWS_AS(run_training(net, d.train, d.test, k, st), TrainingError);
    }
}
