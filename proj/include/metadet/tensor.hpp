#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace metadet {

enum class Precision : uint8_t { kSingle = 0, kDouble = 1 };

// Dense n-dimensional array, row-major. Values are held as doubles; tensors
// tagged kSingle are quantized through float after every mutation so that
// single-precision arithmetic is reproducible regardless of storage.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int64_t> shape, Precision prec = Precision::kDouble);
    Tensor(std::vector<int64_t> shape, std::vector<double> data,
           Precision prec = Precision::kDouble);

    static Tensor zeros(std::vector<int64_t> shape, Precision prec = Precision::kDouble);
    static Tensor full(std::vector<int64_t> shape, double value,
                       Precision prec = Precision::kDouble);
    static Tensor scalar(double value, Precision prec = Precision::kDouble);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    Precision precision() const { return prec_; }

    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }
    void set(int64_t i, double v);

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& mutable_data() { return data_; }

    // Re-applies the single-precision quantization after bulk writes
    // through mutable_data().
    void finalize();

    Tensor with_precision(Precision p) const;
    Tensor reshaped(std::vector<int64_t> new_shape) const;

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
    Precision prec_ = Precision::kDouble;
};

int64_t shape_numel(const std::vector<int64_t>& shape);
std::string shape_to_string(const std::vector<int64_t>& shape);
Precision promote(Precision a, Precision b);

// Raised when an operation would produce or consume invalid numeric state.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace metadet
