#include "specreg/regularize.hpp"

#include <cmath>

#include "specreg/error.hpp"

namespace specreg {

std::string_view to_string(RegularizerKind kind) {
    switch (kind) {
    case RegularizerKind::vanilla: return "vanilla";
    case RegularizerKind::decay: return "decay";
    case RegularizerKind::adversarial: return "adversarial";
    case RegularizerKind::spectral: return "spectral";
    }
    return "?";
}

RegularizerKind parse_regularizer_kind(std::string_view name) {
    for (auto k : {RegularizerKind::vanilla, RegularizerKind::decay, RegularizerKind::adversarial,
                   RegularizerKind::spectral}) {
        if (to_string(k) == name) return k;
    }
    throw ValueError("unknown regularizer '" + std::string(name) + "' (expected vanilla|decay|adversarial|spectral)");
}

void RegularizerConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValueError("regularizer: lambda must be finite and >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("regularizer: alpha must lie in [0, 1]");
    if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ValueError("regularizer: epsilon must be finite and >= 0");
    if (power_iters < 1) throw ValueError("regularizer: power_iters must be >= 1");
}

SpectralStates init_spectral_states(const Network& net, Rng& rng) {
    SpectralStates states;
    for (std::size_t pi : net.weight_params()) {
        const MatrixView w = net.weight_matrix(pi);
        states.emplace(net.params()[pi].name, random_power_iter_state(w.rows, w.cols, rng));
    }
    return states;
}

void apply_weight_decay(GradientBundle& bundle, const Network& net, double lambda) {
    if (!(lambda >= 0.0)) throw ValueError("apply_weight_decay: lambda must be >= 0");
    double sq = 0.0;
    for (std::size_t pi : net.weight_params()) {
        const auto& w = net.params()[pi].values;
        sq += frobenius_norm_sq(net.weight_matrix(pi));
        if (lambda == 0.0) continue;
        auto& g = bundle.param_grads.at(pi);
        for (std::size_t i = 0; i < w.size(); ++i) g[i] += lambda * w[i];
    }
    bundle.penalty += 0.5 * lambda * sq;
}

void apply_spectral(GradientBundle& bundle, const Network& net, double lambda, SpectralStates& states,
                    int power_iters, Rng& rng) {
    if (!(lambda >= 0.0)) throw ValueError("apply_spectral: lambda must be >= 0");
    double sq = 0.0;
    for (std::size_t pi : net.weight_params()) {
        const std::string& name = net.params()[pi].name;
        auto it = states.find(name);
        if (it == states.end()) throw ValueError("apply_spectral: no power-iteration state for " + name);
        const MatrixView w = net.weight_matrix(pi);
        const double sigma = spectral_norm(w, power_iters, it->second, rng).sigma;
        sq += sigma * sigma;
        if (lambda == 0.0) continue;
        // Kernel storage is the matricization, so the flat layouts coincide.
        const Matrix grad = spectral_sq_grad(w, it->second);
        auto& g = bundle.param_grads.at(pi);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += lambda * grad.data()[i];
    }
    bundle.penalty += 0.5 * lambda * sq;
}

AdversarialBatch adversarial_batch(const Network& net, const Batch& batch, double epsilon, std::size_t chunk_size) {
    if (!(epsilon >= 0.0)) throw ValueError("adversarial_batch: epsilon must be >= 0");
    // Summed loss: row i of the input gradient is exactly sample i's own g_i.
    const GradientBundle g = loss_and_grad(net, batch.inputs, batch.labels,
                                           {.reduction = Reduction::sum, .chunk_size = chunk_size, .param_grads = false});
    AdversarialBatch out{batch, std::vector<bool>(batch.labels.size(), false)};
    for (std::size_t i = 0; i < batch.inputs.batch(); ++i) {
        auto gi = g.input_grad.sample(i);
        const double n = norm2(gi);
        if (n == 0.0) {
            out.unperturbed[i] = true;
            continue;
        }
        auto xi = out.batch.inputs.sample(i);
        for (std::size_t k = 0; k < xi.size(); ++k) xi[k] += epsilon * (gi[k] / n);
    }
    return out;
}

GradientBundle objective_grad(const Network& net, const Batch& batch, const RegularizerConfig& config,
                              SpectralStates& states, Rng& rng, std::size_t chunk_size) {
    const LossOptions opts{.reduction = Reduction::mean, .chunk_size = chunk_size, .param_grads = true};
    GradientBundle bundle = loss_and_grad(net, batch.inputs, batch.labels, opts);
    switch (config.kind) {
    case RegularizerKind::vanilla:
        break;
    case RegularizerKind::decay:
        apply_weight_decay(bundle, net, config.lambda);
        break;
    case RegularizerKind::spectral:
        apply_spectral(bundle, net, config.lambda, states, config.power_iters, rng);
        break;
    case RegularizerKind::adversarial: {
        if (config.alpha == 1.0) break;
        const AdversarialBatch adv = adversarial_batch(net, batch, config.epsilon, chunk_size);
        const GradientBundle pert = loss_and_grad(net, adv.batch.inputs, adv.batch.labels, opts);
        const double a = config.alpha, b = 1.0 - config.alpha;
        for (std::size_t p = 0; p < bundle.param_grads.size(); ++p) {
            auto& g = bundle.param_grads[p];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] = a * g[i] + b * pert.param_grads[p][i];
        }
        for (std::size_t i = 0; i < bundle.input_grad.data.size(); ++i) {
            bundle.input_grad.data[i] = a * bundle.input_grad.data[i] + b * pert.input_grad.data[i];
        }
        bundle.loss = a * bundle.loss + b * pert.loss;
        break;
    }
    }
    return bundle;
}

double penalty_value(const Network& net, const RegularizerConfig& config, const SpectralStates& states) {
    double sq = 0.0;
    switch (config.kind) {
    case RegularizerKind::decay:
        for (std::size_t pi : net.weight_params()) sq += frobenius_norm_sq(net.weight_matrix(pi));
        break;
    case RegularizerKind::spectral:
        for (const auto& [name, st] : states) sq += st.sigma * st.sigma;
        break;
    default:
        return 0.0;
    }
    return 0.5 * config.lambda * sq;
}

} // namespace specreg
