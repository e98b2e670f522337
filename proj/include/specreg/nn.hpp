#ifndef SPECREG_NN_HPP
#define SPECREG_NN_HPP

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "specreg/linalg.hpp"
#include "specreg/rng.hpp"
#include "specreg/tensor.hpp"

namespace specreg {

enum class LayerKind { dense, conv2d, relu, flatten };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    // dense
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    // conv2d: a input channels, b output channels, kernel_h x kernel_w
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 0;
    std::size_t kernel_w = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                            std::size_t kernel_w, std::size_t stride = 1, std::size_t padding = 0);
    static LayerSpec relu();
    static LayerSpec flatten();

    bool has_weight() const { return kind == LayerKind::dense || kind == LayerKind::conv2d; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Parses "dense:128,relu,conv:8:3:1:1,flatten,..." against an input sample
// shape, filling in the input-side dimensions of every layer. Conv tokens are
// conv:OUT:K[:STRIDE[:PAD]] with a square kernel, or conv:OUT:KHxKW:STRIDE:PAD.
std::vector<LayerSpec> parse_architecture(std::string_view desc, const Shape& input_shape);
// Inverse of parse_architecture (input-side dimensions are implied).
std::string architecture_to_string(std::span<const LayerSpec> layers);

struct Parameter {
    std::string name;
    Shape shape;
    std::vector<double> values;
    // Dense weight matrices and conv kernels; biases are never regularized.
    bool is_weight = false;

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

// Ordered layer stack with a flat parameter registry. Parameters are named
// "layer<i>.weight" / "layer<i>.bias"; a dense weight has shape (out, in), a
// conv kernel (b, a, kh, kw). The last layer produces the logits fed to the
// softmax cross-entropy head.
class Network {
public:
    Network() = default;
    // Validates layer compatibility; parameters start at zero.
    Network(Shape input_shape, std::vector<LayerSpec> layers);

    // Weights ~ N(0, 2 / fan_in), biases zero.
    void init_parameters(Rng& rng);

    const Shape& input_shape() const { return input_shape_; }
    const Shape& output_shape(std::size_t layer) const { return output_shapes_[layer]; }
    const Shape& layer_input_shape(std::size_t layer) const;
    std::size_t num_outputs() const;

    const std::vector<LayerSpec>& layers() const { return layers_; }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }

    // Indices into params(); nullopt when the layer has no such parameter.
    std::optional<std::size_t> weight_param(std::size_t layer) const { return layer_weight_[layer]; }
    std::optional<std::size_t> bias_param(std::size_t layer) const { return layer_bias_[layer]; }
    std::size_t layer_of_param(std::size_t param) const { return param_layer_[param]; }
    std::optional<std::size_t> find_param(std::string_view name) const;

    // Indices of all weight parameters, in layer order.
    std::vector<std::size_t> weight_params() const;
    // The matrix that spectral operations see: dense W, or the b x (a kh kw)
    // matricized kernel (a reshape of the row-major kernel storage).
    MatrixView weight_matrix(std::size_t param) const;

    std::size_t parameter_count() const;

    friend bool operator==(const Network&, const Network&) = default;

private:
    Shape input_shape_;
    std::vector<LayerSpec> layers_;
    std::vector<Shape> output_shapes_;
    std::vector<Parameter> params_;
    std::vector<std::optional<std::size_t>> layer_weight_;
    std::vector<std::optional<std::size_t>> layer_bias_;
    std::vector<std::size_t> param_layer_;
};

// Input of each layer recorded during forward. The ReLU masks are the signs
// of the relu layers' inputs.
struct ForwardCache {
    std::vector<Tensor> layer_inputs;
};

struct ForwardResult {
    Tensor logits;
    ForwardCache cache;
};

// x has shape (N, input_shape...). Throws DimensionError naming the layer.
ForwardResult forward(const Network& net, const Tensor& x);

struct GradientBundle {
    std::vector<std::vector<double>> param_grads; // aligned with net.params()
    Tensor input_grad;
    double loss = 0.0;
    // Regularizer value (lambda/2 * sum ...) added by the regularize module;
    // reported, never differentiated here.
    double penalty = 0.0;

    friend bool operator==(const GradientBundle&, const GradientBundle&) = default;
};

// Reverse pass from a cotangent on the logits. Parameter gradients are
// accumulated in sample order and returned only when requested.
GradientBundle backward(const Network& net, const ForwardCache& cache, const Tensor& dlogits, bool param_grads = true);

enum class Reduction { mean, sum };

struct LossOptions {
    Reduction reduction = Reduction::mean;
    // Process at most this many samples per forward/backward; 0 = all at once.
    // Results are bitwise identical for every chunk size.
    std::size_t chunk_size = 0;
    bool param_grads = true;
};

// Per-sample softmax cross-entropy pieces for a (N, C) logits tensor.
struct CrossEntropy {
    std::vector<double> losses;
    std::vector<bool> correct;
    Tensor dlogits; // d(loss_i)/d(logits_i), unscaled
};

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Cross-entropy over the batch (mean or sum) with exact reverse-mode
// gradients for every parameter and for the inputs.
GradientBundle loss_and_grad(const Network& net, const Tensor& inputs, std::span<const int> labels,
                             const LossOptions& options = {});

// b x (a kh kw) matricization of a conv kernel: row r is output channel r,
// columns ordered channel-major, then kernel row, then kernel column.
Matrix kernel_as_matrix(const LayerSpec& spec, std::span<const double> kernel);
std::vector<double> matrix_as_kernel(const LayerSpec& spec, MatrixView m);

inline constexpr std::size_t jacobian_size_limit = 1'000'000;

// d logits / d x at a single sample (n_L x n_0), one reverse pass per output.
// Exact on the linear region containing x.
Matrix local_jacobian(const Network& net, std::span<const double> x);

} // namespace specreg

#endif // SPECREG_NN_HPP
