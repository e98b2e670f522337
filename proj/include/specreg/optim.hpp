#ifndef SPECREG_OPTIM_HPP
#define SPECREG_OPTIM_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "specreg/analyze.hpp"
#include "specreg/data.hpp"
#include "specreg/error.hpp"
#include "specreg/nn.hpp"
#include "specreg/regularize.hpp"

namespace specreg {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 1;
    double base_lr = 0.1;
    double momentum = 0.9;
    RegularizerConfig regularizer;
    std::uint64_t seed = 0;
    std::size_t eval_every = 1;
    // Samples per forward/backward chunk inside one minibatch; 0 = whole batch.
    std::size_t chunk_size = 0;
    // Applied online to (N, C, H, W) inputs.
    AugmentOptions augment;
    // Warm power-iteration steps per evaluation for MetricsRecord::per_layer_sigma.
    int monitor_iters = 5;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// base_lr, then base_lr/10 from floor(epochs/2), then base_lr/100 from
// floor(3 epochs/4). Throws ValueError when epoch is outside [0, epochs).
double lr_at(const TrainConfig& config, std::size_t epoch);

struct OptState {
    std::vector<std::vector<double>> velocity;
    std::uint64_t step_count = 0;
    std::size_t epoch = 0; // completed epochs

    friend bool operator==(const OptState&, const OptState&) = default;
};

OptState init_opt_state(const Network& net);

// Thrown when training produces non-finite values.
class TrainingError : public Error {
public:
    using Error::Error;
};

// Nesterov momentum in the form where stored parameters are the lookahead
// point: v <- mu v - lr g;  theta <- theta + mu v - lr g.
// Throws TrainingError on a non-finite gradient entry.
void nesterov_step(Network& net, const GradientBundle& grads, OptState& state, double lr, double momentum);

// Everything a run carries between epochs; together with the network and the
// config this determines the rest of the trajectory.
struct TrainingState {
    OptState opt;
    SpectralStates spectral;
    // Separate warm states used only to report per-layer sigma.
    SpectralStates monitor;
    std::vector<MetricsRecord> metrics;

    friend bool operator==(const TrainingState&, const TrainingState&) = default;
};

TrainingState init_training_state(const Network& net, const TrainConfig& config);

// Called after each completed epoch.
using EpochHook = std::function<void(const Network&, const TrainingState&)>;

// Minibatch order of one epoch, from a stream keyed by (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t epoch, std::size_t n);

// Trains from state.opt.epoch up to config.epochs. Each step draws the next
// minibatch of the epoch permutation (the last one may be short), computes
// objective_grad and applies nesterov_step. A MetricsRecord is appended every
// eval_every epochs and after the final epoch.
void run_training(Network& net, const Dataset& train, const Dataset& test, const TrainConfig& config,
                  TrainingState& state, const EpochHook& on_epoch = {});

MetricsRecord evaluate_metrics(const Network& net, const Dataset& train, const Dataset& test,
                               const TrainConfig& config, TrainingState& state, std::size_t epoch);

} // namespace specreg

#endif // SPECREG_OPTIM_HPP
