#include "specreg/nn.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>

#include "specreg/error.hpp"

namespace specreg {

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_dim = in;
    s.out_dim = out;
    return s;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel_h,
                            std::size_t kernel_w, std::size_t stride, std::size_t padding) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in_channels;
    s.out_channels = out_channels;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::flatten;
    return s;
}

namespace {

std::string layer_prefix(std::size_t layer) { return "layer " + std::to_string(layer) + ": "; }

// Output sample shape of `spec` applied to `in`; throws on incompatibility.
Shape infer_output_shape(const LayerSpec& spec, const Shape& in, std::size_t layer) {
    switch (spec.kind) {
    case LayerKind::dense:
        if (spec.in_dim == 0 || spec.out_dim == 0) throw DimensionError(layer_prefix(layer) + "dense dims must be positive");
        if (in.size() != 1 || in[0] != spec.in_dim) {
            throw DimensionError(layer_prefix(layer) + "dense expects input (" + std::to_string(spec.in_dim) + "), got " +
                                 shape_to_string(in));
        }
        return {spec.out_dim};
    case LayerKind::conv2d: {
        if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel_h == 0 || spec.kernel_w == 0 ||
            spec.stride == 0) {
            throw DimensionError(layer_prefix(layer) + "conv2d dims must be positive");
        }
        if (in.size() != 3 || in[0] != spec.in_channels) {
            throw DimensionError(layer_prefix(layer) + "conv2d expects (" + std::to_string(spec.in_channels) +
                                 ",H,W) input, got " + shape_to_string(in));
        }
        const std::size_t h = in[1] + 2 * spec.padding;
        const std::size_t w = in[2] + 2 * spec.padding;
        if (h < spec.kernel_h || w < spec.kernel_w) {
            throw DimensionError(layer_prefix(layer) + "conv2d kernel larger than padded input " + shape_to_string(in));
        }
        return {spec.out_channels, (h - spec.kernel_h) / spec.stride + 1, (w - spec.kernel_w) / spec.stride + 1};
    }
    case LayerKind::relu:
        return in;
    case LayerKind::flatten:
        return {shape_size(in)};
    }
    throw DimensionError(layer_prefix(layer) + "unknown layer kind");
}

std::size_t parse_size(std::string_view tok, std::string_view what) {
    std::size_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size() || v == 0) {
        throw ValueError("architecture: bad " + std::string(what) + " '" + std::string(tok) + "'");
    }
    return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

Tensor slice_batch(const Tensor& t, std::size_t begin, std::size_t end) {
    Tensor out;
    out.shape = t.shape;
    out.shape[0] = end - begin;
    const std::size_t n = t.sample_size();
    out.data.assign(t.data.begin() + static_cast<std::ptrdiff_t>(begin * n),
                    t.data.begin() + static_cast<std::ptrdiff_t>(end * n));
    return out;
}

// Patch matrix (a kh kw) x (oh ow) for one (a, h, w) image.
void im2col(const LayerSpec& s, std::span<const double> img, std::size_t h, std::size_t w, std::size_t oh,
            std::size_t ow, std::vector<double>& cols) {
    const std::size_t p = oh * ow;
    cols.assign(s.in_channels * s.kernel_h * s.kernel_w * p, 0.0);
    std::size_t k = 0;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
        for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < s.kernel_w; ++kj, ++k) {
                double* row = cols.data() + k * p;
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s.stride + ki) -
                                              static_cast<std::ptrdiff_t>(s.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(s.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        row[y * ow + x] = img[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

// Adds the patch-matrix gradient back onto the image gradient.
void col2im(const LayerSpec& s, std::span<const double> cols, std::size_t h, std::size_t w, std::size_t oh,
            std::size_t ow, std::span<double> img) {
    const std::size_t p = oh * ow;
    std::size_t k = 0;
    for (std::size_t c = 0; c < s.in_channels; ++c) {
        for (std::size_t ki = 0; ki < s.kernel_h; ++ki) {
            for (std::size_t kj = 0; kj < s.kernel_w; ++kj, ++k) {
                const double* row = cols.data() + k * p;
                for (std::size_t y = 0; y < oh; ++y) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * s.stride + ki) -
                                              static_cast<std::ptrdiff_t>(s.padding);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                    for (std::size_t x = 0; x < ow; ++x) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * s.stride + kj) -
                                                  static_cast<std::ptrdiff_t>(s.padding);
                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                        img[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[y * ow + x];
                    }
                }
            }
        }
    }
}

Tensor dense_forward(const LayerSpec& s, std::span<const double> w, std::span<const double> b, const Tensor& in) {
    const std::size_t n = in.batch();
    Tensor out(Shape{n, s.out_dim});
    for (std::size_t i = 0; i < n; ++i) {
        auto x = in.sample(i);
        auto y = out.sample(i);
        for (std::size_t o = 0; o < s.out_dim; ++o) y[o] = b[o] + dot(w.subspan(o * s.in_dim, s.in_dim), x);
    }
    return out;
}

Tensor conv_forward(const LayerSpec& s, std::span<const double> w, std::span<const double> b, const Tensor& in,
                    const Shape& out_sample) {
    const std::size_t n = in.batch();
    const std::size_t h = in.shape[2], wd = in.shape[3];
    const std::size_t oh = out_sample[1], ow = out_sample[2], p = oh * ow;
    const std::size_t kdim = s.in_channels * s.kernel_h * s.kernel_w;
    Tensor out(Shape{n, s.out_channels, oh, ow});
    std::vector<double> cols;
    for (std::size_t i = 0; i < n; ++i) {
        im2col(s, in.sample(i), h, wd, oh, ow, cols);
        auto y = out.sample(i);
        for (std::size_t r = 0; r < s.out_channels; ++r) {
            double* yr = y.data() + r * p;
            std::fill(yr, yr + p, b[r]);
            for (std::size_t k = 0; k < kdim; ++k) {
                const double wk = w[r * kdim + k];
                const double* ck = cols.data() + k * p;
                for (std::size_t q = 0; q < p; ++q) yr[q] += wk * ck[q];
            }
        }
    }
    return out;
}

// Reverse pass into existing accumulators (sample order), returning the input gradient.
Tensor backward_into(const Network& net, const ForwardCache& cache, Tensor grad,
                     std::vector<std::vector<double>>* param_grads) {
    const auto& layers = net.layers();
    const auto& params = net.params();
    for (std::size_t li = layers.size(); li-- > 0;) {
        const LayerSpec& s = layers[li];
        const Tensor& in = cache.layer_inputs[li];
        const std::size_t n = in.batch();
        switch (s.kind) {
        case LayerKind::relu:
            for (std::size_t i = 0; i < grad.data.size(); ++i) {
                if (!(in.data[i] > 0.0)) grad.data[i] = 0.0;
            }
            break;
        case LayerKind::flatten:
            grad.shape = in.shape;
            break;
        case LayerKind::dense: {
            const std::size_t wi = *net.weight_param(li), bi = *net.bias_param(li);
            const auto& w = params[wi].values;
            Tensor dx(in.shape);
            for (std::size_t i = 0; i < n; ++i) {
                auto dy = grad.sample(i);
                auto x = in.sample(i);
                auto gx = dx.sample(i);
                for (std::size_t o = 0; o < s.out_dim; ++o) {
                    const double g = dy[o];
                    if (g == 0.0) continue;
                    const double* wr = w.data() + o * s.in_dim;
                    for (std::size_t k = 0; k < s.in_dim; ++k) gx[k] += g * wr[k];
                    if (param_grads != nullptr) {
                        double* gw = (*param_grads)[wi].data() + o * s.in_dim;
                        for (std::size_t k = 0; k < s.in_dim; ++k) gw[k] += g * x[k];
                        (*param_grads)[bi][o] += g;
                    }
                }
            }
            grad = std::move(dx);
            break;
        }
        case LayerKind::conv2d: {
            const std::size_t wi = *net.weight_param(li), bi = *net.bias_param(li);
            const auto& w = params[wi].values;
            const std::size_t h = in.shape[2], wd = in.shape[3];
            const std::size_t oh = grad.shape[2], ow = grad.shape[3], p = oh * ow;
            const std::size_t kdim = s.in_channels * s.kernel_h * s.kernel_w;
            Tensor dx(in.shape);
            std::vector<double> cols, dcols;
            for (std::size_t i = 0; i < n; ++i) {
                auto dy = grad.sample(i);
                if (param_grads != nullptr) {
                    im2col(s, in.sample(i), h, wd, oh, ow, cols);
                    for (std::size_t r = 0; r < s.out_channels; ++r) {
                        std::span<const double> dyr(dy.data() + r * p, p);
                        double* gw = (*param_grads)[wi].data() + r * kdim;
                        for (std::size_t k = 0; k < kdim; ++k) gw[k] += dot(dyr, std::span<const double>(cols.data() + k * p, p));
                        double sb = 0.0;
                        for (double v : dyr) sb += v;
                        (*param_grads)[bi][r] += sb;
                    }
                }
                dcols.assign(kdim * p, 0.0);
                for (std::size_t r = 0; r < s.out_channels; ++r) {
                    const double* dyr = dy.data() + r * p;
                    for (std::size_t k = 0; k < kdim; ++k) {
                        const double wk = w[r * kdim + k];
                        double* dk = dcols.data() + k * p;
                        for (std::size_t q = 0; q < p; ++q) dk[q] += wk * dyr[q];
                    }
                }
                col2im(s, dcols, h, wd, oh, ow, dx.sample(i));
            }
            grad = std::move(dx);
            break;
        }
        }
    }
    return grad;
}

std::vector<std::vector<double>> zero_grads(const Network& net) {
    std::vector<std::vector<double>> g;
    g.reserve(net.params().size());
    for (const auto& p : net.params()) g.emplace_back(p.values.size(), 0.0);
    return g;
}

} // namespace

std::vector<LayerSpec> parse_architecture(std::string_view desc, const Shape& input_shape) {
    std::vector<LayerSpec> layers;
    Shape cur = input_shape;
    for (std::string_view raw : split(desc, ',')) {
        const std::string_view tok = trim(raw);
        if (tok.empty()) continue;
        const auto parts = split(tok, ':');
        const std::string_view kind = parts[0];
        LayerSpec spec;
        if (kind == "dense") {
            if (parts.size() != 2) throw ValueError("architecture: expected dense:OUT, got '" + std::string(tok) + "'");
            if (cur.size() != 1) {
                throw ValueError("architecture: dense layer needs a flat input, got " + shape_to_string(cur) +
                                 " (insert flatten)");
            }
            spec = LayerSpec::dense(cur[0], parse_size(parts[1], "dense width"));
        } else if (kind == "conv") {
            if (parts.size() < 3 || parts.size() > 5) {
                throw ValueError("architecture: expected conv:OUT:K[:STRIDE[:PAD]], got '" + std::string(tok) + "'");
            }
            if (cur.size() != 3) throw ValueError("architecture: conv layer needs (C,H,W) input, got " + shape_to_string(cur));
            std::size_t kh = 0, kw = 0;
            if (auto x = parts[2].find('x'); x != std::string_view::npos) {
                kh = parse_size(parts[2].substr(0, x), "kernel height");
                kw = parse_size(parts[2].substr(x + 1), "kernel width");
            } else {
                kh = kw = parse_size(parts[2], "kernel size");
            }
            const std::size_t stride = parts.size() > 3 ? parse_size(parts[3], "stride") : 1;
            std::size_t pad = 0;
            if (parts.size() > 4 && parts[4] != "0") pad = parse_size(parts[4], "padding");
            spec = LayerSpec::conv2d(cur[0], parse_size(parts[1], "output channels"), kh, kw, stride, pad);
        } else if (kind == "relu" && parts.size() == 1) {
            spec = LayerSpec::relu();
        } else if (kind == "flatten" && parts.size() == 1) {
            spec = LayerSpec::flatten();
        } else {
            throw ValueError("architecture: unknown layer '" + std::string(tok) + "'");
        }
        cur = infer_output_shape(spec, cur, layers.size());
        layers.push_back(spec);
    }
    if (layers.empty()) throw ValueError("architecture: no layers");
    return layers;
}

std::string architecture_to_string(std::span<const LayerSpec> layers) {
    std::string out;
    for (const auto& s : layers) {
        if (!out.empty()) out += ",";
        switch (s.kind) {
        case LayerKind::dense:
            out += "dense:" + std::to_string(s.out_dim);
            break;
        case LayerKind::conv2d:
            out += "conv:" + std::to_string(s.out_channels) + ":" + std::to_string(s.kernel_h) + "x" +
                   std::to_string(s.kernel_w) + ":" + std::to_string(s.stride) + ":" + std::to_string(s.padding);
            break;
        case LayerKind::relu:
            out += "relu";
            break;
        case LayerKind::flatten:
            out += "flatten";
            break;
        }
    }
    return out;
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
    if (layers_.empty()) throw ValueError("network: no layers");
    for (auto d : input_shape_) {
        if (d == 0) throw DimensionError("network: input shape " + shape_to_string(input_shape_) + " has a zero dim");
    }
    Shape cur = input_shape_;
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const LayerSpec& s = layers_[li];
        cur = infer_output_shape(s, cur, li);
        output_shapes_.push_back(cur);
        layer_weight_.emplace_back();
        layer_bias_.emplace_back();
        if (s.kind == LayerKind::dense) {
            layer_weight_.back() = params_.size();
            params_.push_back({"layer" + std::to_string(li) + ".weight", {s.out_dim, s.in_dim},
                               std::vector<double>(s.out_dim * s.in_dim, 0.0), true});
            layer_bias_.back() = params_.size();
            params_.push_back({"layer" + std::to_string(li) + ".bias", {s.out_dim}, std::vector<double>(s.out_dim, 0.0), false});
        } else if (s.kind == LayerKind::conv2d) {
            const Shape ks{s.out_channels, s.in_channels, s.kernel_h, s.kernel_w};
            layer_weight_.back() = params_.size();
            params_.push_back({"layer" + std::to_string(li) + ".weight", ks, std::vector<double>(shape_size(ks), 0.0), true});
            layer_bias_.back() = params_.size();
            params_.push_back({"layer" + std::to_string(li) + ".bias", {s.out_channels},
                               std::vector<double>(s.out_channels, 0.0), false});
        }
        if (layer_weight_.back()) {
            param_layer_.push_back(li);
            param_layer_.push_back(li);
        }
    }
    if (cur.size() != 1) {
        throw DimensionError("network: final layer must produce flat logits, got " + shape_to_string(cur));
    }
}

void Network::init_parameters(Rng& rng) {
    for (auto& p : params_) {
        if (p.is_weight) {
            const double fan_in = static_cast<double>(shape_size(p.shape) / p.shape[0]);
            const double stddev = std::sqrt(2.0 / fan_in);
            fill_gaussian(rng, p.values);
            for (double& v : p.values) v *= stddev;
        } else {
            std::fill(p.values.begin(), p.values.end(), 0.0);
        }
    }
}

const Shape& Network::layer_input_shape(std::size_t layer) const {
    return layer == 0 ? input_shape_ : output_shapes_[layer - 1];
}

std::size_t Network::num_outputs() const { return output_shapes_.back()[0]; }

std::optional<std::size_t> Network::find_param(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].name == name) return i;
    }
    return std::nullopt;
}

std::vector<std::size_t> Network::weight_params() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].is_weight) out.push_back(i);
    }
    return out;
}

MatrixView Network::weight_matrix(std::size_t param) const {
    const auto& p = params_.at(param);
    if (!p.is_weight) throw ValueError("network: " + p.name + " is not a weight matrix");
    return MatrixView(p.values, p.shape[0], p.values.size() / p.shape[0]);
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.values.size();
    return n;
}

ForwardResult forward(const Network& net, const Tensor& x) {
    if (x.shape.empty() || x.sample_shape() != net.input_shape()) {
        throw DimensionError(layer_prefix(0) + "expected input (N," + shape_to_string(net.input_shape()).substr(1) +
                             ", got " + shape_to_string(x.shape));
    }
    ForwardResult result;
    result.cache.layer_inputs.reserve(net.layers().size());
    Tensor cur = x;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        const LayerSpec& s = net.layers()[li];
        Tensor next;
        switch (s.kind) {
        case LayerKind::dense:
            next = dense_forward(s, net.params()[*net.weight_param(li)].values, net.params()[*net.bias_param(li)].values, cur);
            break;
        case LayerKind::conv2d:
            next = conv_forward(s, net.params()[*net.weight_param(li)].values, net.params()[*net.bias_param(li)].values, cur,
                                net.output_shape(li));
            break;
        case LayerKind::relu:
            next = cur;
            for (double& v : next.data) v = v > 0.0 ? v : 0.0;
            break;
        case LayerKind::flatten:
            next = cur;
            next.shape = {cur.batch(), cur.sample_size()};
            break;
        }
        result.cache.layer_inputs.push_back(std::move(cur));
        cur = std::move(next);
    }
    result.logits = std::move(cur);
    return result;
}

GradientBundle backward(const Network& net, const ForwardCache& cache, const Tensor& dlogits, bool param_grads) {
    GradientBundle out;
    if (param_grads) out.param_grads = zero_grads(net);
    out.input_grad = backward_into(net, cache, dlogits, param_grads ? &out.param_grads : nullptr);
    return out;
}

CrossEntropy softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    const std::size_t n = logits.batch();
    const std::size_t c = logits.sample_size();
    if (labels.size() != n) {
        throw DimensionError("cross entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " samples");
    }
    CrossEntropy ce;
    ce.losses.resize(n);
    ce.correct.resize(n);
    ce.dlogits = Tensor(logits.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw ValueError("cross entropy: label " + std::to_string(y) + " outside [0," + std::to_string(c) + ")");
        }
        auto z = logits.sample(i);
        auto g = ce.dlogits.sample(i);
        const auto argmax = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        const double m = z[argmax];
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            g[k] = std::exp(z[k] - m);
            s += g[k];
        }
        for (std::size_t k = 0; k < c; ++k) g[k] /= s;
        g[static_cast<std::size_t>(y)] -= 1.0;
        ce.losses[i] = -(z[static_cast<std::size_t>(y)] - m - std::log(s));
        ce.correct[i] = argmax == static_cast<std::size_t>(y);
    }
    return ce;
}

GradientBundle loss_and_grad(const Network& net, const Tensor& inputs, std::span<const int> labels,
                             const LossOptions& options) {
    const std::size_t n = inputs.batch();
    if (n == 0) throw ValueError("loss_and_grad: empty batch");
    if (labels.size() != n) {
        throw DimensionError("loss_and_grad: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                             " samples");
    }
    const double scale = options.reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
    const std::size_t chunk = options.chunk_size == 0 ? n : options.chunk_size;

    GradientBundle out;
    if (options.param_grads) out.param_grads = zero_grads(net);
    out.input_grad = Tensor(inputs.shape);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < n; begin += chunk) {
        const std::size_t end = std::min(n, begin + chunk);
        const bool whole = begin == 0 && end == n;
        ForwardResult fr = forward(net, whole ? inputs : slice_batch(inputs, begin, end));
        CrossEntropy ce = softmax_cross_entropy(fr.logits, labels.subspan(begin, end - begin));
        for (double l : ce.losses) loss_sum += l;
        if (scale != 1.0) {
            for (double& g : ce.dlogits.data) g *= scale;
        }
        Tensor gx = backward_into(net, fr.cache, std::move(ce.dlogits), options.param_grads ? &out.param_grads : nullptr);
        std::copy(gx.data.begin(), gx.data.end(),
                  out.input_grad.data.begin() + static_cast<std::ptrdiff_t>(begin * inputs.sample_size()));
    }
    out.loss = options.reduction == Reduction::mean ? loss_sum / static_cast<double>(n) : loss_sum;
    if (!std::isfinite(out.loss)) throw ValueError("loss_and_grad: non-finite loss");
    return out;
}

Matrix kernel_as_matrix(const LayerSpec& spec, std::span<const double> kernel) {
    if (spec.kind != LayerKind::conv2d) throw ValueError("kernel_as_matrix: layer is not conv2d");
    const std::size_t cols = spec.in_channels * spec.kernel_h * spec.kernel_w;
    if (kernel.size() != spec.out_channels * cols) {
        throw DimensionError("kernel_as_matrix: kernel has " + std::to_string(kernel.size()) + " values, expected " +
                             std::to_string(spec.out_channels * cols));
    }
    // Row-major (b, a, kh, kw) storage already is the b x (a kh kw) matrix.
    return Matrix(spec.out_channels, cols, std::vector<double>(kernel.begin(), kernel.end()));
}

std::vector<double> matrix_as_kernel(const LayerSpec& spec, MatrixView m) {
    if (spec.kind != LayerKind::conv2d) throw ValueError("matrix_as_kernel: layer is not conv2d");
    if (m.rows != spec.out_channels || m.cols != spec.in_channels * spec.kernel_h * spec.kernel_w) {
        throw DimensionError("matrix_as_kernel: matrix shape does not match kernel");
    }
    return std::vector<double>(m.data.begin(), m.data.end());
}

Matrix local_jacobian(const Network& net, std::span<const double> x) {
    const std::size_t n0 = shape_size(net.input_shape());
    const std::size_t nl = net.num_outputs();
    if (x.size() != n0) {
        throw DimensionError("local_jacobian: sample has " + std::to_string(x.size()) + " values, expected " +
                             std::to_string(n0));
    }
    if (n0 * nl > jacobian_size_limit) {
        throw SizeLimitError("local_jacobian: " + std::to_string(nl) + "x" + std::to_string(n0) + " exceeds limit of " +
                             std::to_string(jacobian_size_limit) + " entries");
    }
    Shape shape{1};
    shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
    const ForwardResult fr = forward(net, Tensor(shape, std::vector<double>(x.begin(), x.end())));
    Matrix jac(nl, n0);
    for (std::size_t k = 0; k < nl; ++k) {
        Tensor cot(Shape{1, nl});
        cot.data[k] = 1.0;
        const Tensor gx = backward_into(net, fr.cache, std::move(cot), nullptr);
        std::copy(gx.data.begin(), gx.data.end(), jac.row(k).begin());
    }
    return jac;
}

} // namespace specreg
