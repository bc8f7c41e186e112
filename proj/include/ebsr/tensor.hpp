#ifndef EBSR_TENSOR_HPP
#define EBSR_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ebsr/error.hpp"
#include "ebsr/rng.hpp"

namespace ebsr {

// (batch, channels, height, width), row-major, channel-major within batch.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

// Dense rank-4 real tensor. T is float in normal builds; double instantiations
// exist for the finite-difference gradient checks.
template <typename T = float>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape s, T fill = T(0))
        : shape_(s), data_(static_cast<std::size_t>(s.numel()), fill) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw DimensionError("negative tensor dimension " + s.str());
    }

    Tensor(int n, int c, int h, int w, T fill = T(0))
        : Tensor(Shape{n, c, h, w}, fill) {}

    static Tensor from(Shape s, std::vector<T> values) {
        if (static_cast<std::int64_t>(values.size()) != s.numel())
            throw DimensionError("value count " + std::to_string(values.size()) +
                                 " does not match shape " + s.str());
        Tensor t;
        t.shape_ = s;
        t.data_ = std::move(values);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    bool empty() const { return data_.empty(); }

    T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
    const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    std::int64_t index(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void add_(const Tensor& o) {
        require_same_shape(o, "add");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    }
    void sub_(const Tensor& o) {
        require_same_shape(o, "sub");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    }
    void mul_(const Tensor& o) {
        require_same_shape(o, "mul");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] *= o.data_[i];
    }
    void scale_(T s) {
        for (auto& v : data_) v *= s;
    }
    // this += s * o
    void axpy_(T s, const Tensor& o) {
        require_same_shape(o, "axpy");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    }

    double sum() const {
        double acc = 0;
        for (auto v : data_) acc += static_cast<double>(v);
        return acc;
    }

    double mean_abs() const {
        if (data_.empty()) return 0;
        double acc = 0;
        for (auto v : data_) acc += std::abs(static_cast<double>(v));
        return acc / static_cast<double>(data_.size());
    }

    double max_abs() const {
        double m = 0;
        for (auto v : data_) m = std::max(m, std::abs(static_cast<double>(v)));
        return m;
    }

    bool all_finite() const {
        for (auto v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (auto& v : data_) v = static_cast<T>(rng.uniform(lo, hi));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < size(); ++i)
            out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    void require_same_shape(const Tensor& o, const char* op) const {
        if (shape_ != o.shape_)
            throw DimensionError(std::string(op) + ": shape mismatch " + shape_.str() +
                                 " vs " + o.shape_.str());
    }

    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = a;
    out.add_(b);
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> out = a;
    out.mul_(b);
    return out;
}

template <typename T>
Tensor<T> scaled(const Tensor<T>& a, T s) {
    Tensor<T> out = a;
    out.scale_(s);
    return out;
}

// Grow spatial dims by 2*pad; padded entries exactly zero.
template <typename T>
Tensor<T> zero_pad(const Tensor<T>& t, int pad) {
    if (pad < 0) throw DimensionError("zero_pad: negative pad");
    if (pad == 0) return t;
    const Shape s = t.shape();
    Tensor<T> out(s.n, s.c, s.h + 2 * pad, s.w + 2 * pad);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < s.h; ++h) {
                const T* src = t.data() + t.index(n, c, h, 0);
                T* dst = out.data() + out.index(n, c, h + pad, pad);
                std::copy(src, src + s.w, dst);
            }
    return out;
}

// Spatial window [y0, y0+height) x [x0, x0+width) of every image/channel.
template <typename T>
Tensor<T> slice_spatial(const Tensor<T>& t, int y0, int x0, int height, int width) {
    const Shape s = t.shape();
    if (y0 < 0 || x0 < 0 || y0 + height > s.h || x0 + width > s.w)
        throw DimensionError("slice_spatial: window out of range for " + s.str());
    Tensor<T> out(s.n, s.c, height, width);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < height; ++h) {
                const T* src = t.data() + t.index(n, c, y0 + h, x0);
                std::copy(src, src + width, out.data() + out.index(n, c, h, 0));
            }
    return out;
}

// Single image n of a batch, kept as a 1-batch tensor.
template <typename T>
Tensor<T> slice_batch(const Tensor<T>& t, int n) {
    const Shape s = t.shape();
    if (n < 0 || n >= s.n) throw DimensionError("slice_batch: index out of range");
    Tensor<T> out(1, s.c, s.h, s.w);
    const T* src = t.data() + t.index(n, 0, 0, 0);
    std::copy(src, src + out.size(), out.data());
    return out;
}

}  // namespace ebsr

#endif  // EBSR_TENSOR_HPP
