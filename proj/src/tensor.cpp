#include "camc/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "camc/errors.hpp"

namespace camc {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, real fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<real> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw DimensionError("tensor payload of " + std::to_string(data_.size()) + " elements does not match shape " +
                             shape_str(shape_));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<real> values) {
    return Tensor({rows, cols}, std::vector<real>(values));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape_));
    return shape_[i];
}

std::size_t Tensor::cols() const { return shape_.empty() ? 1 : shape_.back(); }

std::size_t Tensor::rows() const {
    const auto c = cols();
    return c == 0 ? 0 : data_.size() / c;
}

real Tensor::item() const {
    if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size())
        throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

std::span<const real> Tensor::row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }
std::span<real> Tensor::row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }

bool Tensor::all_finite() const {
    for (real v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

bool Tensor::identical(const Tensor& other) const {
    return shape_ == other.shape_ &&
           (data_.empty() || std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(real)) == 0);
}

}  // namespace camc
