#ifndef EBSR_RESIZE_HPP
#define EBSR_RESIZE_HPP

#include <cmath>
#include <vector>

#include "ebsr/tensor.hpp"

namespace ebsr {

// Keys cubic convolution kernel, a = -0.5.
inline double cubic_kernel(double t) {
    const double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

namespace detail {

struct TapSet {
    int start = 0;
    std::vector<double> weights;
};

// Sampling plan for one axis. When downscaling the kernel support widens by
// the scale factor (antialias); taps are edge-clamped and normalized.
inline std::vector<TapSet> resize_taps(int in_size, int out_size) {
    const double scale = static_cast<double>(in_size) / out_size;
    const double support_scale = std::max(1.0, scale);
    const double radius = 2.0 * support_scale;
    std::vector<TapSet> taps(static_cast<std::size_t>(out_size));
    for (int o = 0; o < out_size; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        const int lo = static_cast<int>(std::floor(center - radius + 1e-9));
        const int hi = static_cast<int>(std::ceil(center + radius - 1e-9));
        TapSet& t = taps[static_cast<std::size_t>(o)];
        t.start = lo;
        t.weights.resize(static_cast<std::size_t>(hi - lo + 1));
        double sum = 0;
        for (int i = lo; i <= hi; ++i) {
            const double w = cubic_kernel((i - center) / support_scale) / support_scale;
            t.weights[static_cast<std::size_t>(i - lo)] = w;
            sum += w;
        }
        for (auto& w : t.weights) w /= sum;
    }
    return taps;
}

inline int clamp_index(int i, int size) { return std::min(size - 1, std::max(0, i)); }

}  // namespace detail

// Bicubic resample to an explicit output geometry. Separable passes, edge
// clamp, double accumulation.
template <typename T>
Tensor<T> bicubic_resize_to(const Tensor<T>& img, int out_h, int out_w) {
    const Shape s = img.shape();
    if (out_h < 1 || out_w < 1) throw DimensionError("bicubic: non-positive output size");
    const auto row_taps = detail::resize_taps(s.w, out_w);
    const auto col_taps = detail::resize_taps(s.h, out_h);

    Tensor<double> horiz(s.n, s.c, s.h, out_w);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < s.h; ++h)
                for (int o = 0; o < out_w; ++o) {
                    const auto& t = row_taps[static_cast<std::size_t>(o)];
                    double acc = 0;
                    for (std::size_t i = 0; i < t.weights.size(); ++i)
                        acc += t.weights[i] *
                               img.at(n, c, h, detail::clamp_index(t.start + static_cast<int>(i), s.w));
                    horiz.at(n, c, h, o) = acc;
                }

    Tensor<T> out(s.n, s.c, out_h, out_w);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int o = 0; o < out_h; ++o) {
                const auto& t = col_taps[static_cast<std::size_t>(o)];
                for (int w = 0; w < out_w; ++w) {
                    double acc = 0;
                    for (std::size_t i = 0; i < t.weights.size(); ++i)
                        acc += t.weights[i] *
                               horiz.at(n, c, detail::clamp_index(t.start + static_cast<int>(i), s.h), w);
                    out.at(n, c, o, w) = static_cast<T>(acc);
                }
            }
    return out;
}

// factor > 1 upscales, factor < 1 downscales (antialiased), factor 1 is the
// identity within float rounding.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, double factor) {
    if (factor <= 0) throw DimensionError("bicubic: non-positive factor");
    const Shape s = img.shape();
    const int out_h = std::max(1, static_cast<int>(std::round(s.h * factor)));
    const int out_w = std::max(1, static_cast<int>(std::round(s.w * factor)));
    return bicubic_resize_to(img, out_h, out_w);
}

// HR -> LR by an integer scale; trims the image to a multiple of the scale
// first (the standard SR dataset protocol).
template <typename T>
Tensor<T> bicubic_downscale(const Tensor<T>& hr, int scale) {
    const Shape s = hr.shape();
    const int th = s.h - s.h % scale;
    const int tw = s.w - s.w % scale;
    Tensor<T> trimmed = (th == s.h && tw == s.w) ? hr : slice_spatial(hr, 0, 0, th, tw);
    return bicubic_resize_to(trimmed, th / scale, tw / scale);
}

}  // namespace ebsr

#endif  // EBSR_RESIZE_HPP
