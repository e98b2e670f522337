#ifndef SPECREG_REGULARIZE_HPP
#define SPECREG_REGULARIZE_HPP

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "specreg/linalg.hpp"
#include "specreg/nn.hpp"

namespace specreg {

enum class RegularizerKind { vanilla, decay, adversarial, spectral };

std::string_view to_string(RegularizerKind kind);
// Throws ValueError on an unknown name.
RegularizerKind parse_regularizer_kind(std::string_view name);

struct RegularizerConfig {
    RegularizerKind kind = RegularizerKind::vanilla;
    double lambda = 0.0;  // decay, spectral
    double alpha = 0.5;   // adversarial: weight of the clean loss
    double epsilon = 1.0; // adversarial: perturbation radius
    int power_iters = 1;  // spectral: power-iteration steps per SGD step

    // Throws ValueError naming the offending field.
    void validate() const;

    friend bool operator==(const RegularizerConfig&, const RegularizerConfig&) = default;
};

// Warm-started singular pair per regularized matrix, keyed by parameter name.
using SpectralStates = std::map<std::string, PowerIterState>;

// Fresh Gaussian v (and u) for every weight matrix of the network.
SpectralStates init_spectral_states(const Network& net, Rng& rng);

// Adds lambda W to every weight gradient and (lambda/2) sum |W|_F^2 to the
// penalty. Biases are untouched.
void apply_weight_decay(GradientBundle& bundle, const Network& net, double lambda);

// Advances each matrix's power iteration `power_iters` steps and adds
// lambda sigma u v^T to its gradient (conv kernels through the matricization).
// Adds (lambda/2) sum sigma^2 to the penalty. Throws ValueError naming a
// matrix without state.
void apply_spectral(GradientBundle& bundle, const Network& net, double lambda, SpectralStates& states,
                    int power_iters, Rng& rng);

struct Batch {
    Tensor inputs;
    std::vector<int> labels;
};

struct AdversarialBatch {
    Batch batch;
    // Samples whose input gradient was exactly zero and were left as is.
    std::vector<bool> unperturbed;
};

// x_i + epsilon g_i / |g_i| with g_i the gradient of sample i's own loss at x_i.
AdversarialBatch adversarial_batch(const Network& net, const Batch& batch, double epsilon,
                                   std::size_t chunk_size = 0);

// Gradient of the configured objective on one minibatch. Adversarial is
// alpha * clean + (1 - alpha) * perturbed, with the perturbation held fixed.
GradientBundle objective_grad(const Network& net, const Batch& batch, const RegularizerConfig& config,
                              SpectralStates& states, Rng& rng, std::size_t chunk_size = 0);

// Penalty value of the current parameters without touching gradients or
// states: exact for decay, (lambda/2) sum sigma^2 with the states' sigma for
// spectral, 0 otherwise.
double penalty_value(const Network& net, const RegularizerConfig& config, const SpectralStates& states);

} // namespace specreg

#endif // SPECREG_REGULARIZE_HPP
