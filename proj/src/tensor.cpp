#include "specreg/tensor.hpp"

#include <cmath>

#include "specreg/error.hpp"

namespace specreg {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_to_string(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

Tensor::Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0) {}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_size(shape)) {
        throw DimensionError("tensor: " + std::to_string(data.size()) + " values for shape " + shape_to_string(shape));
    }
    for (double x : data) {
        if (!std::isfinite(x)) throw ValueError("tensor: non-finite entry");
    }
}

std::size_t Tensor::sample_size() const {
    if (shape.empty() || shape[0] == 0) return 0;
    return data.size() / shape[0];
}

std::span<double> Tensor::sample(std::size_t i) {
    const std::size_t n = sample_size();
    return std::span<double>(data).subspan(i * n, n);
}

std::span<const double> Tensor::sample(std::size_t i) const {
    const std::size_t n = sample_size();
    return std::span<const double>(data).subspan(i * n, n);
}

} // namespace specreg
