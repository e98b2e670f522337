#ifndef SPECREG_LINALG_HPP
#define SPECREG_LINALG_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "specreg/rng.hpp"

namespace specreg {

// Read-only row-major view over rows*cols doubles.
struct MatrixView {
    std::span<const double> data;
    std::size_t rows = 0;
    std::size_t cols = 0;

    MatrixView() = default;
    MatrixView(std::span<const double> d, std::size_t r, std::size_t c);

    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return data.subspan(r * cols, cols); }
};

// Dense row-major matrix of finite doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    // Throws ValueError on non-finite entries, DimensionError on size mismatch.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> values);
    static Matrix from_view(MatrixView view);
    static Matrix gaussian(std::size_t rows, std::size_t cols, Rng& rng);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }
    std::span<const double> row(std::size_t r) const { return std::span<const double>(data_).subspan(r * cols_, cols_); }

    MatrixView view() const { return {data_, rows_, cols_}; }
    operator MatrixView() const { return view(); }

    Matrix transposed() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator*(MatrixView a, MatrixView b);
Matrix operator+(MatrixView a, MatrixView b);
Matrix operator-(MatrixView a, MatrixView b);
Matrix operator*(double s, MatrixView a);

// y = A x
std::vector<double> matvec(MatrixView a, std::span<const double> x);
// y = A^T x
std::vector<double> matvec_transposed(MatrixView a, std::span<const double> x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> x);
// Scales x to unit length in place and returns the original norm.
double normalize(std::span<double> x);

double frobenius_norm_sq(MatrixView a);

// Largest-singular-pair estimate carried across calls (warm start).
struct PowerIterState {
    std::vector<double> u; // length rows
    std::vector<double> v; // length cols
    double sigma = 0.0;

    friend bool operator==(const PowerIterState&, const PowerIterState&) = default;
};

enum class PowerIterStatus {
    ok,
    // W v vanished; v was redrawn from the rng and sigma reported as 0.
    rerandomized,
};

// State with v drawn from a standard Gaussian and normalized; u likewise.
PowerIterState random_power_iter_state(std::size_t rows, std::size_t cols, Rng& rng);

// One normalized power-iteration step:
//   u <- W v / |W v|,  v <- W^T u / |W^T u|,  sigma <- u^T W v.
// sigma never exceeds sigma_1(W) beyond rounding.
PowerIterStatus power_iter_step(MatrixView w, PowerIterState& state, Rng& rng);

struct SpectralNormResult {
    double sigma = 0.0;
    bool rerandomized = false;
};

// Applies `iters` power-iteration steps, warm-started from `state`.
SpectralNormResult spectral_norm(MatrixView w, int iters, PowerIterState& state, Rng& rng);

// Runs power iteration until the relative increase of sigma in one step falls
// below `rel_tol` (or `max_iters` is reached). Returns the number of steps.
int spectral_norm_until(MatrixView w, double rel_tol, int max_iters, PowerIterState& state, Rng& rng);

// Gradient of sigma(W)^2 / 2, i.e. sigma u v^T. Requires unit u and v (within
// 1e-8); run power_iter_step first.
Matrix spectral_sq_grad(MatrixView w, const PowerIterState& state);

struct SvdResult {
    std::vector<double> singular_values; // nonincreasing, length min(rows, cols)
    Matrix left_vectors;                 // rows x k, orthonormal columns
    Matrix right_vectors;                // cols x k, orthonormal columns
};

inline constexpr std::size_t svd_size_limit = 512;

// Thin SVD by one-sided Jacobi rotations. Throws SizeLimitError when
// min(rows, cols) > svd_size_limit.
SvdResult svd_exact(MatrixView a);

// Singular values only (same algorithm, skips vector accumulation).
std::vector<double> singular_values(MatrixView a);

} // namespace specreg

#endif // SPECREG_LINALG_HPP
