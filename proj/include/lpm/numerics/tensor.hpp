#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lpm/error.hpp"

namespace lpm {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ')';
    return os.str();
}

/// Dense row-major array of doubles. Images are (C,H,W) or batched (N,C,H,W).
///
/// Values must be finite; the checked constructors reject NaN/Inf. Debug builds
/// additionally re-check after every arithmetic helper below.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        if (!std::isfinite(fill)) throw NumericError("Tensor: non-finite fill value");
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size())
            throw ShapeError("Tensor: shape " + shape_string(shape_) + " holds " +
                             std::to_string(shape_size(shape_)) + " values, got " +
                             std::to_string(data_.size()));
        require_finite("Tensor");
    }

    Tensor(Shape shape, std::initializer_list<double> values)
        : Tensor(std::move(shape), std::vector<double>(values)) {}

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    /// Same data under a new shape with the same element count.
    Tensor reshaped(Shape shape) const {
        if (shape_size(shape) != data_.size())
            throw ShapeError("reshape " + shape_string(shape_) + " -> " + shape_string(shape));
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    /// Copy of the `index`-th slice along the leading axis.
    Tensor slice(std::size_t index) const {
        if (shape_.empty() || index >= shape_[0]) throw ShapeError("slice index out of range");
        Shape inner(shape_.begin() + 1, shape_.end());
        const std::size_t n = shape_size(inner);
        Tensor t(inner);
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index * n), n, t.data_.begin());
        return t;
    }

    void set_slice(std::size_t index, const Tensor& part) {
        const std::size_t n = part.size();
        if (shape_.empty() || index >= shape_[0] || n * shape_[0] != data_.size())
            throw ShapeError("set_slice: incompatible part " + shape_string(part.shape()));
        std::copy(part.data_.begin(), part.data_.end(),
                  data_.begin() + static_cast<std::ptrdiff_t>(index * n));
    }

    /// Stack equally-shaped tensors along a new leading axis.
    static Tensor stack(std::span<const Tensor> parts) {
        if (parts.empty()) throw ShapeError("stack: no tensors");
        Shape shape{parts.size()};
        shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
        Tensor t(shape);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (parts[i].shape() != parts[0].shape()) throw ShapeError("stack: shape mismatch");
            t.set_slice(i, parts[i]);
        }
        return t;
    }

    bool all_finite() const noexcept {
        constexpr std::uint64_t exponent = 0x7ff0000000000000ULL;
        std::uint64_t bad = 0;
        for (double v : data_) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            bad |= static_cast<std::uint64_t>((bits & exponent) == exponent);
        }
        return bad == 0;
    }

    void require_finite(const std::string& context) const {
        if (!all_finite()) throw NumericError(context + ": non-finite value");
    }

    void debug_check([[maybe_unused]] const char* context) const {
#ifndef NDEBUG
        require_finite(context);
#endif
    }

    double max_abs() const noexcept {
        double m = 0.0;
        for (double v : data_) m = std::max(m, std::abs(v));
        return m;
    }

    double sum() const noexcept { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    Tensor& operator+=(const Tensor& o) {
        check_same(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        debug_check("+=");
        return *this;
    }

    Tensor& operator-=(const Tensor& o) {
        check_same(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        debug_check("-=");
        return *this;
    }

    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        debug_check("*=");
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    /// Bitwise equality of shape and values.
    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    void check_same(const Tensor& o, const char* op) const {
        if (o.shape_ != shape_)
            throw ShapeError(std::string("Tensor ") + op + ": " + shape_string(shape_) + " vs " +
                             shape_string(o.shape_));
    }

    Shape shape_;
    std::vector<double> data_;
};

}  // namespace lpm
