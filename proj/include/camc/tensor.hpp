#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace camc {

// Tensor scalar. Single precision normally; the double build exists so
// finite-difference checks of large graphs are not limited by round-off.
#ifdef CAMC_DOUBLE
using real = double;
#else
using real = float;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of `real`. Value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, real fill = 0.0f);
    Tensor(Shape shape, std::vector<real> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor scalar(real v) { return Tensor(Shape{}, std::vector<real>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<real> values);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const;
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // Rows/cols of the 2-D view: leading extents collapse into rows.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<real> data() { return data_; }
    std::span<const real> data() const { return data_; }
    real* ptr() { return data_.data(); }
    const real* ptr() const { return data_.data(); }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }
    real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    real item() const;

    Tensor reshaped(Shape shape) const;
    std::span<const real> row(std::size_t r) const;
    std::span<real> row(std::size_t r);

    bool all_finite() const;
    // Bitwise equality of shape and payload.
    bool identical(const Tensor& other) const;

private:
    Shape shape_;
    std::vector<real> data_;
};

}  // namespace camc
