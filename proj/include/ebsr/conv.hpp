#ifndef EBSR_CONV_HPP
#define EBSR_CONV_HPP

#include <Eigen/Dense>

#include "ebsr/parallel.hpp"
#include "ebsr/tensor.hpp"

namespace ebsr {

// Same-padding, stride-1 convolution geometry used throughout the network.
// Convolution means cross-correlation (no kernel flip).
struct ConvSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 3;

    int pad() const { return (kernel - 1) / 2; }

    void validate() const {
        if (kernel != 1 && kernel != 3)
            throw DimensionError("conv: kernel must be 1 or 3, got " + std::to_string(kernel));
        if (in_channels <= 0 || out_channels <= 0)
            throw DimensionError("conv: non-positive channel count");
    }
};

namespace detail {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Receptive-field matrix for one sample: row (c*k+ky)*k+kx, column oh*W+ow.
// Row-major so each (c,ky,kx) row is a contiguous sweep over output pixels.
template <typename T>
void im2col(const Tensor<T>& a, int n, int kernel, int pad, T* col) {
    const Shape s = a.shape();
    const int hw = s.h * s.w;
    for (int c = 0; c < s.c; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                T* row = col + ((static_cast<std::int64_t>(c) * kernel + ky) * kernel + kx) * hw;
                for (int oh = 0; oh < s.h; ++oh) {
                    const int ih = oh + ky - pad;
                    T* dst = row + static_cast<std::int64_t>(oh) * s.w;
                    if (ih < 0 || ih >= s.h) {
                        std::fill(dst, dst + s.w, T(0));
                        continue;
                    }
                    const int ow_lo = std::max(0, pad - kx);
                    const int ow_hi = std::min(s.w, s.w + pad - kx);
                    std::fill(dst, dst + ow_lo, T(0));
                    const T* src = a.data() + a.index(n, c, ih, ow_lo + kx - pad);
                    std::copy(src, src + (ow_hi - ow_lo), dst + ow_lo);
                    std::fill(dst + ow_hi, dst + s.w, T(0));
                }
            }
        }
    }
}

// Scatter-add of a col-shaped gradient back onto the input image.
template <typename T>
void col2im_add(const T* col, int n, int kernel, int pad, Tensor<T>& da) {
    const Shape s = da.shape();
    const int hw = s.h * s.w;
    for (int c = 0; c < s.c; ++c) {
        for (int ky = 0; ky < kernel; ++ky) {
            for (int kx = 0; kx < kernel; ++kx) {
                const T* row = col + ((static_cast<std::int64_t>(c) * kernel + ky) * kernel + kx) * hw;
                for (int oh = 0; oh < s.h; ++oh) {
                    const int ih = oh + ky - pad;
                    if (ih < 0 || ih >= s.h) continue;
                    const int ow_lo = std::max(0, pad - kx);
                    const int ow_hi = std::min(s.w, s.w + pad - kx);
                    T* dst = da.data() + da.index(n, c, ih, ow_lo + kx - pad);
                    const T* src = row + static_cast<std::int64_t>(oh) * s.w + ow_lo;
                    for (int i = 0; i < ow_hi - ow_lo; ++i) dst[i] += src[i];
                }
            }
        }
    }
}

}  // namespace detail

// Real-valued cross-correlation with zero padding. w has shape
// (out_ch, in_ch, k, k); bias is per output channel or empty.
template <typename T>
Tensor<T> fp_conv2d(const Tensor<T>& a, const Tensor<T>& w, const std::vector<T>& bias,
                    const ConvSpec& spec) {
    spec.validate();
    const Shape s = a.shape();
    const Shape ws = w.shape();
    if (s.c != spec.in_channels || ws.n != spec.out_channels || ws.c != spec.in_channels ||
        ws.h != spec.kernel || ws.w != spec.kernel)
        throw DimensionError("fp_conv2d: input " + s.str() + " / weights " + ws.str() +
                             " do not match spec");
    if (!bias.empty() && static_cast<int>(bias.size()) != spec.out_channels)
        throw DimensionError("fp_conv2d: bias length mismatch");

    const int ck = spec.in_channels * spec.kernel * spec.kernel;
    const int hw = s.h * s.w;
    Tensor<T> out(s.n, spec.out_channels, s.h, s.w);

    Eigen::Map<const detail::MatRM<T>> wmat(w.data(), spec.out_channels, ck);
    parallel_for(s.n, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<T> col(static_cast<std::size_t>(ck) * hw);
        for (std::int64_t n = lo; n < hi; ++n) {
            detail::im2col(a, static_cast<int>(n), spec.kernel, spec.pad(), col.data());
            Eigen::Map<const detail::MatRM<T>> colmat(col.data(), ck, hw);
            Eigen::Map<detail::MatRM<T>> outmat(out.data() + n * spec.out_channels * hw,
                                                spec.out_channels, hw);
            outmat.noalias() = wmat * colmat;
            if (!bias.empty()) {
                for (int o = 0; o < spec.out_channels; ++o)
                    outmat.row(o).array() += bias[static_cast<std::size_t>(o)];
            }
        }
    });
    return out;
}

// Gradients of fp_conv2d. Any of da/dw/db may be null to skip. dw/db are
// accumulated over the batch in fixed chunk order so results are reproducible
// for a fixed thread count.
template <typename T>
void fp_conv2d_backward(const Tensor<T>& a, const Tensor<T>& w, const Tensor<T>& dout,
                        const ConvSpec& spec, Tensor<T>* da, Tensor<T>* dw, std::vector<T>* db) {
    spec.validate();
    const Shape s = a.shape();
    const int ck = spec.in_channels * spec.kernel * spec.kernel;
    const int hw = s.h * s.w;
    if (dout.shape().n != s.n || dout.shape().c != spec.out_channels ||
        dout.shape().h != s.h || dout.shape().w != s.w)
        throw DimensionError("fp_conv2d_backward: grad shape " + dout.shape().str() +
                             " does not match");

    if (da) *da = Tensor<T>(s);
    const int nthreads = ThreadPool::instance().size();
    const std::int64_t chunk = (s.n + nthreads - 1) / nthreads;
    const int nchunks = static_cast<int>((s.n + chunk - 1) / chunk);
    std::vector<std::vector<T>> dw_parts;
    std::vector<std::vector<T>> db_parts;
    if (dw) dw_parts.assign(static_cast<std::size_t>(nchunks),
                            std::vector<T>(static_cast<std::size_t>(spec.out_channels) * ck, T(0)));
    if (db) db_parts.assign(static_cast<std::size_t>(nchunks),
                            std::vector<T>(static_cast<std::size_t>(spec.out_channels), T(0)));

    Eigen::Map<const detail::MatRM<T>> wmat(w.data(), spec.out_channels, ck);
    parallel_for(s.n, [&](std::int64_t lo, std::int64_t hi) {
        const int ci = static_cast<int>(lo / chunk);
        std::vector<T> col(static_cast<std::size_t>(ck) * hw);
        std::vector<T> dcol(da ? static_cast<std::size_t>(ck) * hw : 0);
        for (std::int64_t n = lo; n < hi; ++n) {
            Eigen::Map<const detail::MatRM<T>> doutmat(
                dout.data() + n * spec.out_channels * hw, spec.out_channels, hw);
            if (da) {
                Eigen::Map<detail::MatRM<T>> dcolmat(dcol.data(), ck, hw);
                dcolmat.noalias() = wmat.transpose() * doutmat;
                detail::col2im_add(dcol.data(), static_cast<int>(n), spec.kernel, spec.pad(), *da);
            }
            if (dw) {
                detail::im2col(a, static_cast<int>(n), spec.kernel, spec.pad(), col.data());
                Eigen::Map<const detail::MatRM<T>> colmat(col.data(), ck, hw);
                Eigen::Map<detail::MatRM<T>> dwmat(dw_parts[static_cast<std::size_t>(ci)].data(),
                                                   spec.out_channels, ck);
                dwmat.noalias() += doutmat * colmat.transpose();
            }
            if (db) {
                // serial fixed-order sum: Eigen's SIMD reduction splits lanes
                // by pointer alignment, which breaks bitwise reproducibility
                // across allocations
                for (int o = 0; o < spec.out_channels; ++o) {
                    const T* row = dout.data() + (n * spec.out_channels + o) * hw;
                    T acc = 0;
                    for (int i = 0; i < hw; ++i) acc += row[i];
                    db_parts[static_cast<std::size_t>(ci)][static_cast<std::size_t>(o)] += acc;
                }
            }
        }
    });

    if (dw) {
        *dw = Tensor<T>(Shape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel});
        for (int ci = 0; ci < nchunks; ++ci)
            for (std::int64_t i = 0; i < dw->size(); ++i)
                (*dw)[i] += dw_parts[static_cast<std::size_t>(ci)][static_cast<std::size_t>(i)];
    }
    if (db) {
        db->assign(static_cast<std::size_t>(spec.out_channels), T(0));
        for (int ci = 0; ci < nchunks; ++ci)
            for (int o = 0; o < spec.out_channels; ++o)
                (*db)[static_cast<std::size_t>(o)] +=
                    db_parts[static_cast<std::size_t>(ci)][static_cast<std::size_t>(o)];
    }
}

// Brute-force signed convolution: the oracle the bitwise kernel is checked
// against. Inputs must be exactly +-1 inside the image (padding is zero).
// Deliberately naive, with no shared machinery with xnor_conv2d.
template <typename T>
Tensor<T> reference_signed_conv2d(const Tensor<T>& a, const Tensor<T>& w, const ConvSpec& spec) {
    spec.validate();
    const Shape s = a.shape();
    const Shape ws = w.shape();
    if (s.c != spec.in_channels || ws.n != spec.out_channels || ws.c != spec.in_channels ||
        ws.h != spec.kernel || ws.w != spec.kernel)
        throw DimensionError("reference_signed_conv2d: shape mismatch");
    for (std::int64_t i = 0; i < a.size(); ++i)
        if (a[i] != T(1) && a[i] != T(-1))
            throw ContractError("reference_signed_conv2d: non-sign input value");
    for (std::int64_t i = 0; i < w.size(); ++i)
        if (w[i] != T(1) && w[i] != T(-1))
            throw ContractError("reference_signed_conv2d: non-sign weight value");

    const int pad = spec.pad();
    Tensor<T> out(s.n, spec.out_channels, s.h, s.w);
    for (int n = 0; n < s.n; ++n)
        for (int o = 0; o < spec.out_channels; ++o)
            for (int oh = 0; oh < s.h; ++oh)
                for (int ow = 0; ow < s.w; ++ow) {
                    T acc = 0;
                    for (int c = 0; c < s.c; ++c)
                        for (int ky = 0; ky < spec.kernel; ++ky)
                            for (int kx = 0; kx < spec.kernel; ++kx) {
                                const int ih = oh + ky - pad;
                                const int iw = ow + kx - pad;
                                if (ih < 0 || ih >= s.h || iw < 0 || iw >= s.w) continue;
                                acc += a.at(n, c, ih, iw) * w.at(o, c, ky, kx);
                            }
                    out.at(n, o, oh, ow) = acc;
                }
    return out;
}

}  // namespace ebsr

#endif  // EBSR_CONV_HPP
