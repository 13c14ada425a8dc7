#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "advml/errors.hpp"
#include "advml/rng.hpp"

namespace advml {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline void check_shape_valid(const Shape& s) {
    if (s.empty()) throw ConfigError("tensor shape must have at least one dimension");
    for (std::size_t d : s)
        if (d == 0) throw ConfigError("tensor dimensions must be >= 1, got " + shape_str(s));
}

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

// Dense n-dimensional array, row-major, value semantics. Scalar is float in
// the default pipeline and double where gradient checks need the headroom.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape_valid(shape_);
        data_.assign(shape_numel(shape_), Scalar(0));
    }

    Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape_valid(shape_);
        if (shape_numel(shape_) != data_.size())
            throw ShapeError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        validate_finite("tensor construction");
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }

    Scalar& operator[](std::size_t i) { return data_[i]; }
    const Scalar& operator[](std::size_t i) const { return data_[i]; }

    Scalar& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const Scalar& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    // Same data, new shape; element count must match.
    Tensor reshaped(Shape shape) const {
        check_shape_valid(shape);
        if (shape_numel(shape) != data_.size())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        Tensor out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    void validate_finite(const char* context) const {
        for (const Scalar& v : data_)
            if (!std::isfinite(v))
                throw NumericError(std::string("non-finite value in ") + context);
    }

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<Scalar> data_;
};

template <typename Scalar>
Tensor<Scalar> zeros(const Shape& shape) {
    return Tensor<Scalar>(shape);
}

// Gaussian tensor: mean + stddev * BoxMuller draw, filled in row-major order.
template <typename Scalar>
Tensor<Scalar> randn(const Shape& shape, RngState& rng, double mean = 0.0, double stddev = 1.0) {
    if (!(stddev > 0.0)) throw ConfigError("randn stddev must be positive");
    Tensor<Scalar> out(shape);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<Scalar>(mean + stddev * rng.next_gaussian());
    out.validate_finite("randn");
    return out;
}

namespace detail {
template <typename Scalar>
void check_same_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}
} // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::check_same_shape(a, b, "add");
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
    out.validate_finite("add");
    return out;
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::check_same_shape(a, b, "sub");
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
    out.validate_finite("sub");
    return out;
}

template <typename Scalar>
Tensor<Scalar> mul_elementwise(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::check_same_shape(a, b, "mul_elementwise");
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
    out.validate_finite("mul_elementwise");
    return out;
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar c) {
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * c;
    out.validate_finite("scale");
    return out;
}

// [M,K] x [K,N] -> [M,N]. The k-sum runs left to right, nothing fancier, so
// results are bit-identical to a naive triple loop on every platform.
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul expects rank-2 tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    const std::size_t k2 = b.shape()[0], n = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<Scalar> out(Shape{m, n});
    const Scalar* pa = a.data();
    const Scalar* pb = b.data();
    Scalar* po = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            Scalar acc = 0;
            for (std::size_t p = 0; p < k; ++p) acc += pa[i * k + p] * pb[p * n + j];
            po[i * n + j] = acc;
        }
    }
    out.validate_finite("matmul");
    return out;
}

// Elementwise sign: -1, 0 or +1. Signed zeros both map to 0.
template <typename Scalar>
Tensor<Scalar> sign(const Tensor<Scalar>& a) {
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a[i] > Scalar(0) ? Scalar(1) : (a[i] < Scalar(0) ? Scalar(-1) : Scalar(0));
    return out;
}

template <typename Scalar>
Tensor<Scalar> clip(const Tensor<Scalar>& a, Scalar lo, Scalar hi) {
    if (lo > hi) throw ConfigError("clip: lo > hi");
    Tensor<Scalar> out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = a[i] < lo ? lo : (a[i] > hi ? hi : a[i]);
    return out;
}

// Index of the maximum along `axis`; ties break toward the lowest index.
// Rank-1 with axis 0 gives one index, rank-2 with axis 1 gives one per row.
template <typename Scalar>
std::vector<std::size_t> argmax(const Tensor<Scalar>& a, std::size_t axis = 0) {
    if (a.rank() == 1) {
        if (axis != 0) throw ConfigError("argmax: axis out of range for rank-1 tensor");
        std::size_t best = 0;
        for (std::size_t i = 1; i < a.size(); ++i)
            if (a[i] > a[best]) best = i;
        return {best};
    }
    if (a.rank() == 2 && axis == 1) {
        const std::size_t n = a.shape()[0], k = a.shape()[1];
        std::vector<std::size_t> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j)
                if (a.at(i, j) > a.at(i, best)) best = j;
            out[i] = best;
        }
        return out;
    }
    throw ConfigError("argmax: unsupported rank/axis combination");
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

} // namespace advml
