#include "metadet/tensor.hpp"

#include <cmath>
#include <sstream>

namespace metadet {

int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw numeric_error("tensor shape has non-positive dimension " + std::to_string(d));
        n *= d;
    }
    return n;
}

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Precision promote(Precision a, Precision b) {
    return (a == Precision::kDouble || b == Precision::kDouble) ? Precision::kDouble
                                                                : Precision::kSingle;
}

Tensor::Tensor(std::vector<int64_t> shape, Precision prec)
    : shape_(std::move(shape)), prec_(prec) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> data, Precision prec)
    : shape_(std::move(shape)), data_(std::move(data)), prec_(prec) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw numeric_error("tensor data length " + std::to_string(data_.size()) +
                            " does not match shape " + shape_to_string(shape_));
    finalize();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, Precision prec) {
    return Tensor(std::move(shape), prec);
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, Precision prec) {
    Tensor t(std::move(shape), prec);
    for (auto& v : t.data_) v = value;
    t.finalize();
    return t;
}

Tensor Tensor::scalar(double value, Precision prec) {
    return Tensor({1}, {value}, prec);
}

void Tensor::set(int64_t i, double v) {
    data_[static_cast<size_t>(i)] =
        prec_ == Precision::kSingle ? static_cast<double>(static_cast<float>(v)) : v;
}

void Tensor::finalize() {
    if (prec_ == Precision::kSingle)
        for (auto& v : data_) v = static_cast<double>(static_cast<float>(v));
}

Tensor Tensor::with_precision(Precision p) const {
    Tensor t = *this;
    t.prec_ = p;
    t.finalize();
    return t;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (shape_numel(new_shape) != numel())
        throw numeric_error("reshape " + shape_to_string(shape_) + " -> " +
                            shape_to_string(new_shape) + " changes element count");
    Tensor t = *this;
    t.shape_ = std::move(new_shape);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

}  // namespace metadet
