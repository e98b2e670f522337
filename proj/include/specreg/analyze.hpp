#ifndef SPECREG_ANALYZE_HPP
#define SPECREG_ANALYZE_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "specreg/data.hpp"
#include "specreg/nn.hpp"

namespace specreg {

struct MetricsRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double grad_norm_train = 0.0; // mean per-sample |d loss / d x|
    double grad_norm_test = 0.0;
    double penalty = 0.0;
    std::vector<double> per_layer_sigma;

    friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// min(train_acc - test_acc) over records whose test_acc exceeds alpha;
// nullopt when none qualifies. Throws ValueError on an empty list.
std::optional<double> generalization_gap(std::span<const MetricsRecord> metrics, double alpha);

struct EvalStats {
    double loss = 0.0;      // mean cross-entropy
    double accuracy = 0.0;
    double grad_norm = 0.0; // mean over samples of |grad_x loss_i|
};

// One pass over the dataset in chunks; no parameter gradients.
EvalStats evaluate(const Network& net, const Dataset& ds, std::size_t chunk_size = 1024);

// Mean over samples of |grad_x L(f(x_i), y_i)|_2.
double input_grad_norm(const Network& net, const Dataset& ds);

std::vector<double> flatten_params(const Network& net);
void set_flat_params(Network& net, std::span<const double> theta);

using GradientFn = std::function<std::vector<double>(std::span<const double>)>;

// Dominant-magnitude Hessian eigenvalue by power iteration, with
// H v ~ (grad(theta + h v) - grad(theta - h v)) / (2 h) for unit v.
// Throws ValueError on a non-finite product.
double hessian_max_eig(const GradientFn& grad, std::span<const double> theta, int iters, double fd_step, Rng& rng);

// 1e-4 * (1 + |theta|_inf)
double default_fd_step(std::span<const double> theta);

struct HessianOptions {
    int iters = 100;
    double fd_step = 0.0;          // <= 0 selects default_fd_step
    std::size_t max_samples = 2048; // seeded evaluation subset
    std::uint64_t seed = 0;
};

// On the mean loss over min(max_samples, |ds|) seeded samples of `ds`.
double hessian_max_eig(const Network& net, const Dataset& ds, const HessianOptions& options = {});

struct LayerSpectrum {
    std::string name;
    std::vector<double> singular_values; // nonincreasing
};

// Exact singular values of every dense weight and matricized conv kernel.
std::vector<LayerSpectrum> singular_spectrum(const Network& net);

// sigma_max / (smallest sigma above 1e-12).
double spectrum_flatness(std::span<const double> singular_values);
// sigma_max / median sigma.
double spectrum_max_over_median(std::span<const double> singular_values);
// Spectrum divided by its largest value.
std::vector<double> normalized_spectrum(std::span<const double> singular_values);

struct LipschitzProbe {
    double empirical_max_ratio = 0.0;
    double jacobian_sigma = 0.0;
    double sigma_product = 0.0;
};

// Max over `trials` random directions of |f(x + xi) - f(x)| / |xi| with
// |xi| = xi_norm, next to sigma(local Jacobian) and prod sigma(W_l).
// Dense piecewise-linear nets only (ValueError otherwise).
LipschitzProbe lipschitz_probe(const Network& net, std::span<const double> x, int trials, double xi_norm, Rng& rng);

// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

} // namespace specreg

#endif // SPECREG_ANALYZE_HPP
