#include "specreg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace specreg {

void TrainConfig::validate() const {
    if (batch_size == 0) throw ValueError("train: batch_size must be positive");
    if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ValueError("train: base_lr must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValueError("train: momentum must lie in [0, 1)");
    if (eval_every == 0) throw ValueError("train: eval_every must be positive");
    if (monitor_iters < 1) throw ValueError("train: monitor_iters must be >= 1");
    regularizer.validate();
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
    if (epoch >= config.epochs) {
        throw ValueError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
    }
    const std::size_t half = config.epochs / 2;
    const std::size_t three_quarters = 3 * config.epochs / 4;
    // A boundary at epoch 0 has not been "passed" by any training; it is ignored.
    if (three_quarters > 0 && epoch >= three_quarters) return config.base_lr / 100.0;
    if (half > 0 && epoch >= half) return config.base_lr / 10.0;
    return config.base_lr;
}

OptState init_opt_state(const Network& net) {
    OptState s;
    for (const auto& p : net.params()) s.velocity.emplace_back(p.values.size(), 0.0);
    return s;
}

void nesterov_step(Network& net, const GradientBundle& grads, OptState& state, double lr, double momentum) {
    auto& params = net.params();
    if (grads.param_grads.size() != params.size() || state.velocity.size() != params.size()) {
        throw DimensionError("nesterov_step: gradient/velocity count does not match parameters");
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (grads.param_grads[p].size() != params[p].values.size() ||
            state.velocity[p].size() != params[p].values.size()) {
            throw DimensionError("nesterov_step: shape mismatch for " + params[p].name);
        }
        for (std::size_t i = 0; i < grads.param_grads[p].size(); ++i) {
            if (!std::isfinite(grads.param_grads[p][i])) {
                throw TrainingError("nesterov_step: non-finite gradient in " + params[p].name + "[" + std::to_string(i) +
                                    "] at step " + std::to_string(state.step_count));
            }
        }
    }
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& theta = params[p].values;
        auto& v = state.velocity[p];
        const auto& g = grads.param_grads[p];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            v[i] = momentum * v[i] - lr * g[i];
            theta[i] += momentum * v[i] - lr * g[i];
        }
    }
    ++state.step_count;
}

TrainingState init_training_state(const Network& net, const TrainConfig& config) {
    TrainingState st;
    st.opt = init_opt_state(net);
    Rng srng = make_stream(config.seed, Stream::spectral_init);
    st.spectral = init_spectral_states(net, srng);
    Rng mrng = make_stream(config.seed, Stream::monitor_init);
    st.monitor = init_spectral_states(net, mrng);
    return st;
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng = make_stream(seed, Stream::shuffle, {epoch});
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

MetricsRecord evaluate_metrics(const Network& net, const Dataset& train, const Dataset& test,
                               const TrainConfig& config, TrainingState& state, std::size_t epoch) {
    const EvalStats tr = evaluate(net, train);
    const EvalStats te = evaluate(net, test);
    MetricsRecord r;
    r.epoch = epoch;
    r.train_loss = tr.loss;
    r.test_loss = te.loss;
    r.train_acc = tr.accuracy;
    r.test_acc = te.accuracy;
    r.grad_norm_train = tr.grad_norm;
    r.grad_norm_test = te.grad_norm;
    r.penalty = penalty_value(net, config.regularizer, state.spectral);
    Rng rng = make_stream(config.seed, Stream::monitor_init, {epoch});
    for (std::size_t pi : net.weight_params()) {
        auto& st = state.monitor.at(net.params()[pi].name);
        r.per_layer_sigma.push_back(spectral_norm(net.weight_matrix(pi), config.monitor_iters, st, rng).sigma);
    }
    return r;
}

void run_training(Network& net, const Dataset& train, const Dataset& test, const TrainConfig& config,
                  TrainingState& state, const EpochHook& on_epoch) {
    config.validate();
    const std::size_t n = train.size();
    if (n == 0) throw ValueError("run_training: empty training set");
    const bool images = train.inputs.shape.size() == 4;
    if (config.augment.enabled() && !images) throw ValueError("run_training: augmentation needs (N,C,H,W) inputs");

    std::vector<std::size_t> idx;
    for (std::size_t epoch = state.opt.epoch; epoch < config.epochs; ++epoch) {
        const double lr = lr_at(config, epoch);
        const std::vector<std::size_t> perm = epoch_permutation(config.seed, epoch, n);
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(begin), perm.begin() + static_cast<std::ptrdiff_t>(end));
            const Dataset part = train.subset(idx);
            Rng step_rng = make_stream(config.seed, Stream::step, {state.opt.step_count});
            Batch batch{config.augment.enabled() ? augment(part.inputs, config.augment, step_rng) : part.inputs,
                        part.labels};
            GradientBundle g;
            try {
                g = objective_grad(net, batch, config.regularizer, state.spectral, step_rng, config.chunk_size);
            } catch (const ValueError& e) {
                throw TrainingError("epoch " + std::to_string(epoch) + ", step " + std::to_string(state.opt.step_count) +
                                    ": " + e.what());
            }
            if (!std::isfinite(g.loss)) {
                throw TrainingError("epoch " + std::to_string(epoch) + ", step " + std::to_string(state.opt.step_count) +
                                    ": non-finite loss");
            }
            nesterov_step(net, g, state.opt, lr, config.momentum);
        }
        state.opt.epoch = epoch + 1;
        if ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs) {
            state.metrics.push_back(evaluate_metrics(net, train, test, config, state, epoch + 1));
        }
        if (on_epoch) on_epoch(net, state);
    }
}

} // namespace specreg
