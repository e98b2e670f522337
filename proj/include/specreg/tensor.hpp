#ifndef SPECREG_TENSOR_HPP
#define SPECREG_TENSOR_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace specreg {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Row-major real array. The first dimension is the batch dimension wherever
// a tensor carries a batch.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s);
    // Throws DimensionError when data.size() != product(shape), ValueError on
    // non-finite entries.
    Tensor(Shape s, std::vector<double> d);

    std::size_t size() const { return data.size(); }
    std::size_t batch() const { return shape.empty() ? 0 : shape[0]; }
    // Elements per batch entry.
    std::size_t sample_size() const;
    Shape sample_shape() const { return shape.empty() ? Shape{} : Shape(shape.begin() + 1, shape.end()); }

    std::span<double> sample(std::size_t i);
    std::span<const double> sample(std::size_t i) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

} // namespace specreg

#endif // SPECREG_TENSOR_HPP
