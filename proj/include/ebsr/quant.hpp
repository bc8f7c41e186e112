#ifndef EBSR_QUANT_HPP
#define EBSR_QUANT_HPP

#include <cmath>
#include <vector>

#include "ebsr/tensor.hpp"

namespace ebsr {

// Which form the alpha gradient takes. `printed` is the default: the four
// branch values as published. `analytic` is F(u) - u*F'(u) for the piecewise
// polynomial surrogate F; the two disagree on the middle branches (printed
// -2u^2-2u-1 vs analytic -u^2 on (-1,0]), so the switch exists for
// experiments.
enum class RsignAlphaGrad { printed, analytic };

template <typename T>
struct RsignCache {
    Tensor<T> u;  // (x - threshold) / alpha
    T alpha = 1;
};

// Activation binarization: xhat = alpha * sign(x - threshold). Thresholds are
// per-channel (N=1) or per-image per-channel (N=batch); the channel-shift
// path feeds the latter. sign(0) = +1.
template <typename T>
Tensor<T> rsign_forward(const Tensor<T>& x, T alpha, const Tensor<T>& threshold,
                        RsignCache<T>* cache = nullptr) {
    if (!(alpha > T(0))) throw ContractError("rsign: alpha must be positive");
    const Shape s = x.shape();
    const Shape ts = threshold.shape();
    if (ts.c != s.c || (ts.n != 1 && ts.n != s.n) || ts.h != 1 || ts.w != 1)
        throw DimensionError("rsign: threshold shape " + ts.str() + " for input " + s.str());

    Tensor<T> xhat(s);
    Tensor<T> u(s);
    const T inv_alpha = T(1) / alpha;
    for (int n = 0; n < s.n; ++n) {
        const int tn = ts.n == 1 ? 0 : n;
        for (int c = 0; c < s.c; ++c) {
            const T th = threshold.at(tn, c, 0, 0);
            const std::int64_t base = x.index(n, c, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(s.h) * s.w; ++i) {
                const T ui = (x[base + i] - th) * inv_alpha;
                u[base + i] = ui;
                xhat[base + i] = ui >= T(0) ? alpha : -alpha;
            }
        }
    }
    if (cache) {
        cache->u = std::move(u);
        cache->alpha = alpha;
    }
    return xhat;
}

namespace ste {

// d xhat / d alpha, published branch values over u = (x - beta)/alpha.
template <typename T>
inline T dalpha_printed(T u) {
    if (u <= T(-1)) return T(-1);
    if (u <= T(0)) return -2 * u * u - 2 * u - 1;
    if (u <= T(1)) return 2 * u * u - 2 * u + 1;
    return T(1);
}

// Analytic alternative F(u) - u*F'(u) for the same surrogate.
template <typename T>
inline T dalpha_analytic(T u) {
    if (u <= T(-1)) return T(-1);
    if (u <= T(0)) return -u * u;
    if (u <= T(1)) return u * u;
    return T(1);
}

// d xhat / d beta, published branch values.
template <typename T>
inline T dbeta(T u) {
    if (u > T(-1) && u <= T(0)) return -2 - 2 * u;
    if (u > T(0) && u <= T(1)) return -2 + 2 * u;
    return T(0);
}

// d xhat / d x: slope of the piecewise-polynomial straight-through estimator.
template <typename T>
inline T dx(T u) {
    if (u > T(-1) && u <= T(0)) return 2 + 2 * u;
    if (u > T(0) && u <= T(1)) return 2 - 2 * u;
    return T(0);
}

}  // namespace ste

template <typename T>
struct RsignGrads {
    Tensor<T> grad_x;
    T grad_alpha = 0;
    Tensor<T> grad_threshold;  // same shape as the forward threshold
};

// Per-element local derivatives applied exactly as published: grad_alpha sums
// over all elements, grad_threshold sums over each (image, channel) slot of
// the threshold tensor that produced the forward.
template <typename T>
RsignGrads<T> rsign_backward(const Tensor<T>& grad_out, const RsignCache<T>& cache,
                             Shape threshold_shape,
                             RsignAlphaGrad mode = RsignAlphaGrad::printed) {
    const Shape s = cache.u.shape();
    if (grad_out.shape() != s)
        throw DimensionError("rsign_backward: grad shape " + grad_out.shape().str());

    RsignGrads<T> g;
    g.grad_x = Tensor<T>(s);
    g.grad_threshold = Tensor<T>(threshold_shape);
    double galpha = 0;
    for (int n = 0; n < s.n; ++n) {
        const int tn = threshold_shape.n == 1 ? 0 : n;
        for (int c = 0; c < s.c; ++c) {
            double gth = 0;
            const std::int64_t base = cache.u.index(n, c, 0, 0);
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(s.h) * s.w; ++i) {
                const T u = cache.u[base + i];
                const T go = grad_out[base + i];
                g.grad_x[base + i] = go * ste::dx(u);
                galpha += static_cast<double>(go) *
                          (mode == RsignAlphaGrad::printed ? ste::dalpha_printed(u)
                                                           : ste::dalpha_analytic(u));
                gth += static_cast<double>(go) * ste::dbeta(u);
            }
            g.grad_threshold.at(tn, c, 0, 0) += static_cast<T>(gth);
        }
    }
    g.grad_alpha = static_cast<T>(galpha);
    return g;
}

// Per-filter scale: mean absolute value of the filter (the l1-norm average).
template <typename T>
std::vector<T> weight_scales(const Tensor<T>& w) {
    const Shape s = w.shape();
    const std::int64_t per_filter = static_cast<std::int64_t>(s.c) * s.h * s.w;
    std::vector<T> scales(static_cast<std::size_t>(s.n));
    for (int o = 0; o < s.n; ++o) {
        double acc = 0;
        const T* p = w.data() + w.index(o, 0, 0, 0);
        for (std::int64_t i = 0; i < per_filter; ++i) acc += std::abs(static_cast<double>(p[i]));
        scales[static_cast<std::size_t>(o)] = static_cast<T>(acc / static_cast<double>(per_filter));
    }
    return scales;
}

// what[o] = scales[o] * sign(w[o]), sign(0) = +1.
template <typename T>
Tensor<T> binarize_weights(const Tensor<T>& w, std::vector<T>* scales_out = nullptr) {
    const std::vector<T> scales = weight_scales(w);
    const Shape s = w.shape();
    Tensor<T> what(s);
    const std::int64_t per_filter = static_cast<std::int64_t>(s.c) * s.h * s.w;
    for (int o = 0; o < s.n; ++o) {
        const T sc = scales[static_cast<std::size_t>(o)];
        const std::int64_t base = w.index(o, 0, 0, 0);
        for (std::int64_t i = 0; i < per_filter; ++i)
            what[base + i] = w[base + i] >= T(0) ? sc : -sc;
    }
    if (scales_out) *scales_out = scales;
    return what;
}

// Straight-through identity gated by |w| <= 1; the scale term is treated as
// constant.
template <typename T>
Tensor<T> weight_ste_backward(const Tensor<T>& grad_what, const Tensor<T>& w) {
    if (grad_what.shape() != w.shape())
        throw DimensionError("weight_ste_backward: shape mismatch");
    Tensor<T> g(w.shape());
    for (std::int64_t i = 0; i < w.size(); ++i)
        g[i] = std::abs(w[i]) <= T(1) ? grad_what[i] : T(0);
    return g;
}

// ---------------------------------------------------------------------------
// Learned-step-size quantizer for the low-bit spatial-rescale variant.

struct LsqSpec {
    int bits = 8;
    bool signed_range = true;

    void validate() const {
        if (bits != 1 && bits != 2 && bits != 4 && bits != 8)
            throw ConfigError("lsq: unsupported bit-width " + std::to_string(bits));
    }
    // 1-bit signed uses the symmetric {-1,+1} grid (round = sign); the
    // two's-complement grid would degenerate to {-1,0}.
    double qmin() const {
        if (!signed_range) return 0;
        return bits == 1 ? -1 : -std::pow(2.0, bits - 1);
    }
    double qmax() const {
        if (!signed_range) return std::pow(2.0, bits) - 1;
        return bits == 1 ? 1 : std::pow(2.0, bits - 1) - 1;
    }
};

template <typename T>
struct LsqCache {
    Tensor<T> ratio;   // x / step before rounding
    LsqSpec spec;
    T step = 1;
};

template <typename T>
Tensor<T> lsq_quantize(const Tensor<T>& x, T step, const LsqSpec& spec,
                       LsqCache<T>* cache = nullptr) {
    spec.validate();
    if (!(step > T(0))) throw ContractError("lsq: step must be positive");
    const T qmin = static_cast<T>(spec.qmin());
    const T qmax = static_cast<T>(spec.qmax());
    Tensor<T> xq(x.shape());
    Tensor<T> ratio(x.shape());
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const T r = x[i] / step;
        ratio[i] = r;
        T q;
        if (spec.bits == 1 && spec.signed_range) {
            q = r >= T(0) ? T(1) : T(-1);
        } else {
            q = std::round(r);
        }
        q = std::min(qmax, std::max(qmin, q));
        xq[i] = q * step;
    }
    if (cache) {
        cache->ratio = std::move(ratio);
        cache->spec = spec;
        cache->step = step;
    }
    return xq;
}

template <typename T>
struct LsqGrads {
    Tensor<T> grad_x;
    T grad_step = 0;
};

// Pass-through inside the clamp range for x; step gradient per the
// learned-step-size scheme, scaled by 1/sqrt(count * qmax).
template <typename T>
LsqGrads<T> lsq_backward(const Tensor<T>& grad_out, const LsqCache<T>& cache) {
    if (grad_out.shape() != cache.ratio.shape())
        throw DimensionError("lsq_backward: shape mismatch");
    const T qmin = static_cast<T>(cache.spec.qmin());
    const T qmax = static_cast<T>(cache.spec.qmax());
    const double gscale =
        1.0 / std::sqrt(static_cast<double>(cache.ratio.size()) * std::abs(cache.spec.qmax()));

    LsqGrads<T> g;
    g.grad_x = Tensor<T>(grad_out.shape());
    double gstep = 0;
    for (std::int64_t i = 0; i < grad_out.size(); ++i) {
        const T r = cache.ratio[i];
        if (r <= qmin) {
            gstep += static_cast<double>(grad_out[i]) * qmin;
        } else if (r >= qmax) {
            gstep += static_cast<double>(grad_out[i]) * qmax;
        } else {
            g.grad_x[i] = grad_out[i];
            const T q = (cache.spec.bits == 1 && cache.spec.signed_range)
                            ? (r >= T(0) ? T(1) : T(-1))
                            : std::round(r);
            gstep += static_cast<double>(grad_out[i]) * (q - r);
        }
    }
    g.grad_step = static_cast<T>(gstep * gscale);
    return g;
}

}  // namespace ebsr

#endif  // EBSR_QUANT_HPP
