#ifndef EBSR_METRICS_HPP
#define EBSR_METRICS_HPP

#include <cmath>
#include <limits>

#include "ebsr/tensor.hpp"

namespace ebsr {

struct MetricConfig {
    int shave = 0;          // border pixels removed before metrics (= scale)
    bool y_only = true;
    int ssim_window = 11;   // Gaussian window
    double ssim_sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 255.0;
    double psnr_cap_db = 100.0;
};

// Round [0,1] values onto the 8-bit grid k/255 (the convention benchmark
// tables are produced with).
template <typename T>
Tensor<T> quantize8(const Tensor<T>& img) {
    Tensor<T> out(img.shape());
    for (std::int64_t i = 0; i < img.size(); ++i) {
        const double v = std::min(1.0, std::max(0.0, static_cast<double>(img[i])));
        out[i] = static_cast<T>(std::round(v * 255.0) / 255.0);
    }
    return out;
}

// ITU-R BT.601 luma on the 0-255 scale: Y = 16 + 65.481R + 128.553G + 24.966B
// with RGB in [0,1].
template <typename T>
Tensor<double> rgb_to_y(const Tensor<T>& img) {
    const Shape s = img.shape();
    if (s.c != 3) throw DimensionError("rgb_to_y: expected 3 channels, got " + s.str());
    Tensor<double> y(s.n, 1, s.h, s.w);
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w)
                y.at(n, 0, h, w) = 16.0 + 65.481 * img.at(n, 0, h, w) +
                                   128.553 * img.at(n, 1, h, w) + 24.966 * img.at(n, 2, h, w);
    return y;
}

inline Tensor<double> shave_border(const Tensor<double>& t, int shave) {
    if (shave <= 0) return t;
    const Shape s = t.shape();
    if (2 * shave >= s.h || 2 * shave >= s.w)
        throw DimensionError("shave: border " + std::to_string(shave) + " too large for " + s.str());
    return slice_spatial(t, shave, shave, s.h - 2 * shave, s.w - 2 * shave);
}

// PSNR between two single-channel images on the 0-255 scale. Identical
// images return +inf (tables cap it).
inline double psnr_y(const Tensor<double>& a, const Tensor<double>& b,
                     const MetricConfig& cfg = {}) {
    if (a.shape() != b.shape())
        throw DimensionError("psnr: shapes " + a.shape().str() + " vs " + b.shape().str());
    double mse = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(cfg.dynamic_range * cfg.dynamic_range / mse);
}

inline double cap_psnr(double psnr, const MetricConfig& cfg = {}) {
    return std::min(psnr, cfg.psnr_cap_db);
}

// Full pipeline: 8-bit quantize, Y conversion, border shave, PSNR.
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, const MetricConfig& cfg) {
    return psnr_y(shave_border(rgb_to_y(quantize8(a)), cfg.shave),
                  shave_border(rgb_to_y(quantize8(b)), cfg.shave), cfg);
}

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
    std::vector<double> w(static_cast<std::size_t>(size));
    const double c = (size - 1) / 2.0;
    double sum = 0;
    for (int i = 0; i < size; ++i) {
        w[static_cast<std::size_t>(i)] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Valid-region separable correlation with a 1-D window in both directions.
inline Tensor<double> window_filter(const Tensor<double>& img, const std::vector<double>& win) {
    const Shape s = img.shape();
    const int k = static_cast<int>(win.size());
    Tensor<double> tmp(s.n, 1, s.h, s.w - k + 1);
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w + k <= s.w; ++w) {
                double acc = 0;
                for (int i = 0; i < k; ++i)
                    acc += win[static_cast<std::size_t>(i)] * img.at(n, 0, h, w + i);
                tmp.at(n, 0, h, w) = acc;
            }
    Tensor<double> out(s.n, 1, s.h - k + 1, s.w - k + 1);
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h + k <= s.h; ++h)
            for (int w = 0; w < s.w - k + 1; ++w) {
                double acc = 0;
                for (int i = 0; i < k; ++i)
                    acc += win[static_cast<std::size_t>(i)] * tmp.at(n, 0, h + i, w);
                out.at(n, 0, h, w) = acc;
            }
    return out;
}

}  // namespace detail

// Mean local SSIM with Gaussian weighting over the valid region, on
// single-channel 0-255 images.
inline double ssim_y(const Tensor<double>& a, const Tensor<double>& b,
                     const MetricConfig& cfg = {}) {
    if (a.shape() != b.shape())
        throw DimensionError("ssim: shapes " + a.shape().str() + " vs " + b.shape().str());
    if (a.shape().h < cfg.ssim_window || a.shape().w < cfg.ssim_window)
        throw DimensionError("ssim: image smaller than the window");
    const auto win = detail::gaussian_window(cfg.ssim_window, cfg.ssim_sigma);
    const double c1 = (cfg.k1 * cfg.dynamic_range) * (cfg.k1 * cfg.dynamic_range);
    const double c2 = (cfg.k2 * cfg.dynamic_range) * (cfg.k2 * cfg.dynamic_range);

    Tensor<double> mu_a = detail::window_filter(a, win);
    Tensor<double> mu_b = detail::window_filter(b, win);
    Tensor<double> aa = mul(a, a), bb = mul(b, b), ab = mul(a, b);
    Tensor<double> s_aa = detail::window_filter(aa, win);
    Tensor<double> s_bb = detail::window_filter(bb, win);
    Tensor<double> s_ab = detail::window_filter(ab, win);

    double acc = 0;
    for (std::int64_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = s_aa[i] - ma * ma;
        const double vb = s_bb[i] - mb * mb;
        const double cov = s_ab[i] - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
               ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const MetricConfig& cfg) {
    return ssim_y(shave_border(rgb_to_y(quantize8(a)), cfg.shave),
                  shave_border(rgb_to_y(quantize8(b)), cfg.shave), cfg);
}

}  // namespace ebsr

#endif  // EBSR_METRICS_HPP
