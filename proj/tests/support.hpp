// Shared oracles and fixtures for the unit tests.
#ifndef SPECREG_TESTS_SUPPORT_HPP
#define SPECREG_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "specreg/error.hpp"
#include "specreg/linalg.hpp"
#include "specreg/nn.hpp"
#include "specreg/rng.hpp"

namespace testing {

using namespace specreg;

inline double rel_err(double got, double want, double floor = 1e-300) {
    return std::abs(got - want) / std::max(std::abs(want), floor);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    Rng rng(seed);
    return Matrix::gaussian(rows, cols, rng);
}

// n x k with orthonormal columns, by modified Gram-Schmidt on Gaussian columns.
inline Matrix orthonormal_columns(std::size_t n, std::size_t k, Rng& rng) {
    Matrix q(n, k);
    std::vector<double> col(n);
    for (std::size_t j = 0; j < k; ++j) {
        double nrm = 0.0;
        do {
            fill_gaussian(rng, col);
            for (std::size_t p = 0; p < j; ++p) {
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d += q(i, p) * col[i];
                for (std::size_t i = 0; i < n; ++i) col[i] -= d * q(i, p);
            }
            nrm = 0.0;
            for (double x : col) nrm += x * x;
            nrm = std::sqrt(nrm);
        } while (nrm < 1e-6);
        for (std::size_t i = 0; i < n; ++i) q(i, j) = col[i] / nrm;
    }
    return q;
}

// U diag(sv) V^T with random orthonormal U, V.
inline Matrix matrix_with_singular_values(std::size_t rows, std::size_t cols, const std::vector<double>& sv, Rng& rng) {
    const std::size_t k = sv.size();
    const Matrix u = orthonormal_columns(rows, k, rng);
    const Matrix v = orthonormal_columns(cols, k, rng);
    Matrix a(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            for (std::size_t p = 0; p < k; ++p) a(i, j) += u(i, p) * sv[p] * v(j, p);
    return a;
}

// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations.
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
    const std::size_t n = a.rows();
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-30) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

// Central difference of f along coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
                                 std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    return (fp - fm) / (2.0 * h);
}

inline Network mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::uint64_t seed) {
    std::string arch;
    for (std::size_t h : hidden) arch += "dense:" + std::to_string(h) + ",relu,";
    arch += "dense:" + std::to_string(out);
    Network net({in}, parse_architecture(arch, {in}));
    Rng rng(seed);
    net.init_parameters(rng);
    // Nonzero biases so that every parameter has a generic gradient.
    for (auto& p : net.params()) {
        if (!p.is_weight) {
            std::vector<double> b(p.values.size());
            fill_gaussian(rng, b);
            for (std::size_t i = 0; i < b.size(); ++i) p.values[i] = 0.1 * b[i];
        }
    }
    return net;
}

inline Tensor gaussian_tensor(Shape shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    fill_gaussian(rng, t.data);
    return t;
}

} // namespace testing

#endif // SPECREG_TESTS_SUPPORT_HPP
