#include "specreg/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "specreg/error.hpp"

namespace specreg {

std::optional<double> generalization_gap(std::span<const MetricsRecord> metrics, double alpha) {
    if (metrics.empty()) throw ValueError("generalization_gap: no metrics records");
    std::optional<double> gap;
    for (const auto& r : metrics) {
        if (!(r.test_acc > alpha)) continue;
        const double d = r.train_acc - r.test_acc;
        if (!gap || d < *gap) gap = d;
    }
    return gap;
}

EvalStats evaluate(const Network& net, const Dataset& ds, std::size_t chunk_size) {
    const std::size_t n = ds.size();
    if (n == 0) throw ValueError("evaluate: empty dataset");
    if (chunk_size == 0) chunk_size = n;
    double loss = 0.0, norm_sum = 0.0;
    std::size_t correct = 0;
    std::vector<std::size_t> idx;
    for (std::size_t begin = 0; begin < n; begin += chunk_size) {
        const std::size_t end = std::min(n, begin + chunk_size);
        idx.resize(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Dataset part = ds.subset(idx);
        ForwardResult fr = forward(net, part.inputs);
        CrossEntropy ce = softmax_cross_entropy(fr.logits, part.labels);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            loss += ce.losses[i];
            correct += ce.correct[i] ? 1 : 0;
        }
        // Unscaled cotangents: row i of the input gradient is grad_x loss_i.
        const GradientBundle g = backward(net, fr.cache, ce.dlogits, false);
        for (std::size_t i = 0; i < idx.size(); ++i) norm_sum += norm2(g.input_grad.sample(i));
    }
    const double dn = static_cast<double>(n);
    return {loss / dn, static_cast<double>(correct) / dn, norm_sum / dn};
}

double input_grad_norm(const Network& net, const Dataset& ds) { return evaluate(net, ds).grad_norm; }

std::vector<double> flatten_params(const Network& net) {
    std::vector<double> theta;
    theta.reserve(net.parameter_count());
    for (const auto& p : net.params()) theta.insert(theta.end(), p.values.begin(), p.values.end());
    return theta;
}

void set_flat_params(Network& net, std::span<const double> theta) {
    if (theta.size() != net.parameter_count()) {
        throw DimensionError("set_flat_params: " + std::to_string(theta.size()) + " values for " +
                             std::to_string(net.parameter_count()) + " parameters");
    }
    std::size_t off = 0;
    for (auto& p : net.params()) {
        std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(off), p.values.size(), p.values.begin());
        off += p.values.size();
    }
}

double default_fd_step(std::span<const double> theta) {
    double m = 0.0;
    for (double t : theta) m = std::max(m, std::abs(t));
    return 1e-4 * (1.0 + m);
}

double hessian_max_eig(const GradientFn& grad, std::span<const double> theta, int iters, double fd_step, Rng& rng) {
    if (iters < 1) throw ValueError("hessian_max_eig: iters must be >= 1");
    if (!(fd_step > 0.0)) throw ValueError("hessian_max_eig: fd_step must be > 0");
    const std::size_t n = theta.size();
    std::vector<double> v(n), plus(n), minus(n);
    do fill_gaussian(rng, v); while (normalize(v) == 0.0);

    double eig = 0.0;
    for (int it = 0; it < iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            plus[i] = theta[i] + fd_step * v[i];
            minus[i] = theta[i] - fd_step * v[i];
        }
        const std::vector<double> gp = grad(plus);
        const std::vector<double> gm = grad(minus);
        std::vector<double> hv(n);
        for (std::size_t i = 0; i < n; ++i) {
            hv[i] = (gp[i] - gm[i]) / (2.0 * fd_step);
            if (!std::isfinite(hv[i])) throw ValueError("hessian_max_eig: non-finite Hessian-vector product");
        }
        eig = dot(v, hv);
        if (normalize(hv) == 0.0) return 0.0;
        v = std::move(hv);
    }
    return eig;
}

double hessian_max_eig(const Network& net, const Dataset& ds, const HessianOptions& options) {
    if (ds.size() == 0) throw ValueError("hessian_max_eig: empty dataset");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (idx.size() > options.max_samples) {
        Rng pick = make_stream(options.seed, Stream::hessian, {0});
        std::shuffle(idx.begin(), idx.end(), pick);
        idx.resize(options.max_samples);
        std::sort(idx.begin(), idx.end());
    }
    const Dataset eval = ds.subset(idx);
    Network work = net;
    const GradientFn grad = [&](std::span<const double> theta) {
        set_flat_params(work, theta);
        const GradientBundle g = loss_and_grad(work, eval.inputs, eval.labels, {.chunk_size = 1024});
        std::vector<double> flat;
        flat.reserve(theta.size());
        for (const auto& pg : g.param_grads) flat.insert(flat.end(), pg.begin(), pg.end());
        return flat;
    };
    const std::vector<double> theta = flatten_params(net);
    const double h = options.fd_step > 0.0 ? options.fd_step : default_fd_step(theta);
    Rng rng = make_stream(options.seed, Stream::hessian, {1});
    return hessian_max_eig(grad, theta, options.iters, h, rng);
}

std::vector<LayerSpectrum> singular_spectrum(const Network& net) {
    std::vector<LayerSpectrum> out;
    for (std::size_t pi : net.weight_params()) {
        out.push_back({net.params()[pi].name, singular_values(net.weight_matrix(pi))});
    }
    return out;
}

double spectrum_flatness(std::span<const double> sv) {
    if (sv.empty()) return 0.0;
    const double smax = *std::max_element(sv.begin(), sv.end());
    double smin = 0.0;
    for (double s : sv) {
        if (s > 1e-12 && (smin == 0.0 || s < smin)) smin = s;
    }
    return smin > 0.0 ? smax / smin : 0.0;
}

double spectrum_max_over_median(std::span<const double> sv) {
    if (sv.empty()) return 0.0;
    std::vector<double> s(sv.begin(), sv.end());
    std::sort(s.begin(), s.end());
    const std::size_t k = s.size();
    const double median = k % 2 ? s[k / 2] : 0.5 * (s[k / 2 - 1] + s[k / 2]);
    return median > 0.0 ? s.back() / median : 0.0;
}

std::vector<double> normalized_spectrum(std::span<const double> sv) {
    std::vector<double> out(sv.begin(), sv.end());
    if (out.empty()) return out;
    const double smax = *std::max_element(out.begin(), out.end());
    if (smax > 0.0) {
        for (double& s : out) s /= smax;
    }
    return out;
}

LipschitzProbe lipschitz_probe(const Network& net, std::span<const double> x, int trials, double xi_norm, Rng& rng) {
    for (const auto& l : net.layers()) {
        if (l.kind == LayerKind::conv2d) throw ValueError("lipschitz_probe: only dense networks are supported");
    }
    if (trials < 1) throw ValueError("lipschitz_probe: trials must be >= 1");
    if (!(xi_norm > 0.0)) throw ValueError("lipschitz_probe: xi_norm must be > 0");
    const std::size_t n0 = x.size();

    Shape shape{static_cast<std::size_t>(trials) + 1};
    shape.insert(shape.end(), net.input_shape().begin(), net.input_shape().end());
    Tensor batch(shape);
    std::copy(x.begin(), x.end(), batch.sample(0).begin());
    std::vector<double> norms(static_cast<std::size_t>(trials));
    std::vector<double> dir(n0);
    for (std::size_t t = 0; t < norms.size(); ++t) {
        do fill_gaussian(rng, dir); while (normalize(dir) == 0.0);
        auto s = batch.sample(t + 1);
        for (std::size_t i = 0; i < n0; ++i) s[i] = x[i] + xi_norm * dir[i];
        double nn = 0.0;
        for (std::size_t i = 0; i < n0; ++i) nn += (s[i] - x[i]) * (s[i] - x[i]);
        norms[t] = std::sqrt(nn);
    }
    const Tensor y = forward(net, batch).logits;
    auto y0 = y.sample(0);

    LipschitzProbe out;
    for (std::size_t t = 0; t < norms.size(); ++t) {
        auto yt = y.sample(t + 1);
        double d = 0.0;
        for (std::size_t k = 0; k < yt.size(); ++k) d += (yt[k] - y0[k]) * (yt[k] - y0[k]);
        out.empirical_max_ratio = std::max(out.empirical_max_ratio, std::sqrt(d) / norms[t]);
    }
    out.jacobian_sigma = singular_values(local_jacobian(net, x))[0];
    out.sigma_product = 1.0;
    for (std::size_t pi : net.weight_params()) out.sigma_product *= singular_values(net.weight_matrix(pi))[0];
    return out;
}

namespace {

std::vector<double> ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

} // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ValueError("spearman: need two equal-length series of >= 2 values");
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

} // namespace specreg
