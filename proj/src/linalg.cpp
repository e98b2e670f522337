#include "specreg/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "specreg/error.hpp"

namespace specreg {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

void require_same_shape(MatrixView a, MatrixView b, const char* op) {
    if (a.rows != b.rows || a.cols != b.cols) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.rows, a.cols) + " vs " +
                             shape_str(b.rows, b.cols));
    }
}

// W v with |W v| at or below this is treated as the zero vector.
constexpr double vanishing_norm = 1e-300;

} // namespace

MatrixView::MatrixView(std::span<const double> d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {
    if (d.size() != r * c) {
        throw DimensionError("matrix view: " + std::to_string(d.size()) + " values for shape " + shape_str(r, c));
    }
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw DimensionError("matrix: " + std::to_string(data_.size()) + " values for shape " + shape_str(rows, cols));
    }
    for (double x : data_) {
        if (!std::isfinite(x)) throw ValueError("matrix: non-finite entry");
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
    Matrix m(values.size(), values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return m;
}

Matrix Matrix::from_view(MatrixView view) {
    return Matrix(view.rows, view.cols, std::vector<double>(view.data.begin(), view.data.end()));
}

Matrix Matrix::gaussian(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    fill_gaussian(rng, m.data());
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix operator*(MatrixView a, MatrixView b) {
    if (a.cols != b.rows) {
        throw DimensionError("matmul: " + shape_str(a.rows, a.cols) + " * " + shape_str(b.rows, b.cols));
    }
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        auto orow = out.row(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            auto brow = b.row(k);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix operator+(MatrixView a, MatrixView b) {
    require_same_shape(a, b, "add");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data()[i] = a.data[i] + b.data[i];
    return out;
}

Matrix operator-(MatrixView a, MatrixView b) {
    require_same_shape(a, b, "sub");
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data()[i] = a.data[i] - b.data[i];
    return out;
}

Matrix operator*(double s, MatrixView a) {
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.data.size(); ++i) out.data()[i] = s * a.data[i];
    return out;
}

std::vector<double> matvec(MatrixView a, std::span<const double> x) {
    if (x.size() != a.cols) {
        throw DimensionError("matvec: matrix " + shape_str(a.rows, a.cols) + ", vector length " +
                             std::to_string(x.size()));
    }
    std::vector<double> y(a.rows);
    for (std::size_t r = 0; r < a.rows; ++r) y[r] = dot(a.row(r), x);
    return y;
}

std::vector<double> matvec_transposed(MatrixView a, std::span<const double> x) {
    if (x.size() != a.rows) {
        throw DimensionError("matvec_transposed: matrix " + shape_str(a.rows, a.cols) + ", vector length " +
                             std::to_string(x.size()));
    }
    std::vector<double> y(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        const double xr = x[r];
        auto row = a.row(r);
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += xr * row[c];
    }
    return y;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double normalize(std::span<double> x) {
    const double n = norm2(x);
    if (n > 0.0) {
        for (double& v : x) v /= n;
    }
    return n;
}

double frobenius_norm_sq(MatrixView a) { return dot(a.data, a.data); }

PowerIterState random_power_iter_state(std::size_t rows, std::size_t cols, Rng& rng) {
    PowerIterState s;
    s.u.resize(rows);
    s.v.resize(cols);
    // A Gaussian draw is zero with probability 0; retry for the degenerate 1-element case.
    do fill_gaussian(rng, s.v); while (normalize(s.v) == 0.0);
    do fill_gaussian(rng, s.u); while (normalize(s.u) == 0.0);
    return s;
}

PowerIterStatus power_iter_step(MatrixView w, PowerIterState& state, Rng& rng) {
    if (state.v.size() != w.cols) {
        throw DimensionError("power_iter_step: v has length " + std::to_string(state.v.size()) + ", matrix is " +
                             shape_str(w.rows, w.cols));
    }
    if (norm2(state.v) == 0.0) throw ValueError("power_iter_step: v is the zero vector");

    std::vector<double> u = matvec(w, state.v);
    if (!(norm2(u) > vanishing_norm)) {
        // Direction unidentifiable (W v = 0): start over from a fresh draw.
        state = random_power_iter_state(w.rows, w.cols, rng);
        state.sigma = 0.0;
        return PowerIterStatus::rerandomized;
    }
    normalize(u);
    std::vector<double> v = matvec_transposed(w, u);
    // |W^T u| = u^T W v_new once v_new = W^T u / |W^T u|.
    const double sigma = normalize(v);
    state.u = std::move(u);
    state.v = std::move(v);
    state.sigma = sigma;
    return PowerIterStatus::ok;
}

SpectralNormResult spectral_norm(MatrixView w, int iters, PowerIterState& state, Rng& rng) {
    if (iters < 1) throw ValueError("spectral_norm: iters must be >= 1");
    SpectralNormResult result;
    for (int i = 0; i < iters; ++i) {
        if (power_iter_step(w, state, rng) == PowerIterStatus::rerandomized) result.rerandomized = true;
    }
    result.sigma = state.sigma;
    return result;
}

int spectral_norm_until(MatrixView w, double rel_tol, int max_iters, PowerIterState& state, Rng& rng) {
    double prev = -1.0;
    int it = 0;
    while (it < max_iters) {
        const auto status = power_iter_step(w, state, rng);
        ++it;
        if (status == PowerIterStatus::rerandomized) {
            // Only a zero matrix keeps annihilating fresh Gaussian draws.
            if (frobenius_norm_sq(w) == 0.0) break;
            prev = -1.0;
            continue;
        }
        if (prev >= 0.0 && state.sigma - prev <= rel_tol * state.sigma) break;
        prev = state.sigma;
    }
    return it;
}

Matrix spectral_sq_grad(MatrixView w, const PowerIterState& state) {
    if (state.u.size() != w.rows || state.v.size() != w.cols) {
        throw DimensionError("spectral_sq_grad: state vectors (" + std::to_string(state.u.size()) + ", " +
                             std::to_string(state.v.size()) + ") do not match matrix " + shape_str(w.rows, w.cols));
    }
    const double nu = norm2(state.u);
    const double nv = norm2(state.v);
    if (std::abs(nu - 1.0) > 1e-8 || std::abs(nv - 1.0) > 1e-8) {
        throw ValueError("spectral_sq_grad: singular vector estimates are not unit length (|u|=" +
                         std::to_string(nu) + ", |v|=" + std::to_string(nv) + "); run power_iter_step first");
    }
    Matrix g(w.rows, w.cols);
    for (std::size_t r = 0; r < w.rows; ++r) {
        const double su = state.sigma * state.u[r];
        auto row = g.row(r);
        for (std::size_t c = 0; c < w.cols; ++c) row[c] = su * state.v[c];
    }
    return g;
}

namespace {

// One-sided Jacobi on the columns of a tall (m >= n) matrix held column-major
// in `cols`. Rotations are mirrored into `v` (n x n column-major) when given.
void jacobi_orthogonalize(std::vector<double>& cols, std::size_t m, std::size_t n, std::vector<double>* v) {
    const double tol = static_cast<double>(std::max<std::size_t>(m, 1)) * std::numeric_limits<double>::epsilon();
    constexpr int max_sweeps = 80;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            double* gp = cols.data() + p * m;
            for (std::size_t q = p + 1; q < n; ++q) {
                double* gq = cols.data() + q * m;
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += gp[i] * gp[i];
                    beta += gq[i] * gq[i];
                    gamma += gp[i] * gq[i];
                }
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double a = gp[i], b = gq[i];
                    gp[i] = c * a - s * b;
                    gq[i] = s * a + c * b;
                }
                if (v != nullptr) {
                    double* vp = v->data() + p * n;
                    double* vq = v->data() + q * n;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double a = vp[i], b = vq[i];
                        vp[i] = c * a - s * b;
                        vq[i] = s * a + c * b;
                    }
                }
            }
        }
        if (!rotated) return;
    }
}

void check_svd_size(MatrixView a) {
    if (std::min(a.rows, a.cols) > svd_size_limit) {
        throw SizeLimitError("svd_exact: " + shape_str(a.rows, a.cols) + " exceeds the exact-SVD limit of " +
                             std::to_string(svd_size_limit) + "; use spectral_norm (power iteration) instead");
    }
}

// Column-major copy of A (or of A^T when A is wide) so that m >= n.
std::vector<double> tall_columns(MatrixView a, bool transpose, std::size_t m, std::size_t n) {
    std::vector<double> cols(m * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < m; ++i) cols[j * m + i] = transpose ? a(j, i) : a(i, j);
    return cols;
}

// Fills columns [first, k) of the m x k column-major basis with unit vectors
// orthogonal to all earlier columns.
void complete_basis(std::vector<double>& basis, std::size_t m, std::size_t first, std::size_t k) {
    std::vector<double> cand(m);
    for (std::size_t j = first; j < k; ++j) {
        double best_norm = -1.0;
        std::vector<double> best;
        for (std::size_t e = 0; e < m; ++e) {
            std::fill(cand.begin(), cand.end(), 0.0);
            cand[e] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < j; ++c) {
                    const double* col = basis.data() + c * m;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < m; ++i) proj += col[i] * cand[i];
                    for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * col[i];
                }
            }
            const double nrm = norm2(cand);
            if (nrm > best_norm) {
                best_norm = nrm;
                best = cand;
            }
            if (nrm > 0.5) break;
        }
        for (std::size_t i = 0; i < m; ++i) basis[j * m + i] = best[i] / best_norm;
    }
}

} // namespace

SvdResult svd_exact(MatrixView a) {
    check_svd_size(a);
    const bool transpose = a.rows < a.cols;
    const std::size_t m = transpose ? a.cols : a.rows;
    const std::size_t n = transpose ? a.rows : a.cols;

    std::vector<double> g = tall_columns(a, transpose, m, n);
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    jacobi_orthogonalize(g, m, n, &v);

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = norm2(std::span<const double>(g.data() + j * m, m));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    const double smax = n > 0 ? norms[order[0]] : 0.0;
    const double rank_floor = smax * static_cast<double>(m) * std::numeric_limits<double>::epsilon();

    std::vector<double> sv(n);
    std::vector<double> ubasis(m * n, 0.0); // tall-side vectors, column-major
    std::vector<double> vbasis(n * n, 0.0);
    std::size_t rank = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        sv[k] = norms[j];
        if (norms[j] > rank_floor && norms[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i) ubasis[k * m + i] = g[j * m + i] / norms[j];
            rank = k + 1;
        }
        for (std::size_t i = 0; i < n; ++i) vbasis[k * n + i] = v[j * n + i];
    }
    complete_basis(ubasis, m, rank, n);

    Matrix tall(m, n), narrow(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < m; ++i) tall(i, k) = ubasis[k * m + i];
        for (std::size_t i = 0; i < n; ++i) narrow(i, k) = vbasis[k * n + i];
    }
    SvdResult out;
    out.singular_values = std::move(sv);
    if (transpose) {
        out.left_vectors = std::move(narrow);
        out.right_vectors = std::move(tall);
    } else {
        out.left_vectors = std::move(tall);
        out.right_vectors = std::move(narrow);
    }
    return out;
}

std::vector<double> singular_values(MatrixView a) {
    check_svd_size(a);
    const bool transpose = a.rows < a.cols;
    const std::size_t m = transpose ? a.cols : a.rows;
    const std::size_t n = transpose ? a.rows : a.cols;
    std::vector<double> g = tall_columns(a, transpose, m, n);
    jacobi_orthogonalize(g, m, n, nullptr);
    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) sv[j] = norm2(std::span<const double>(g.data() + j * m, m));
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

} // namespace specreg
