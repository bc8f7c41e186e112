#ifndef EBSR_XNOR_HPP
#define EBSR_XNOR_HPP

#include <bit>

#include "ebsr/bitpack.hpp"
#include "ebsr/conv.hpp"
#include "ebsr/parallel.hpp"

namespace ebsr {

// XNOR + popcount convolution. Output element (n,o,oh,ow) is the signed inner
// product sum(sign(a) * sign(w)) over the receptive field:
//
//   per word: 2*popcount(~(a_word ^ w_word) & mask) - popcount(mask)
//
// Kernel taps whose spatial position falls in the zero padding are excluded
// entirely; they contribute 0, matching zero-padded real convolution of +-1
// inputs. Result is integer-valued; exact equality with
// reference_signed_conv2d is the contract.
//
// The weight BitTensor uses its (n,c,h,w) slots as (out_ch, in_ch, ky, kx),
// packed along in_ch — i.e. pack_signs of the (O,I,k,k) weight tensor.
template <typename T = float>
Tensor<T> xnor_conv2d(const BitTensor& a, const BitTensor& w, const ConvSpec& spec) {
    spec.validate();
    const Shape s = a.shape();
    const Shape ws = w.shape();
    if (s.c != spec.in_channels)
        throw DimensionError("xnor_conv2d: input has " + std::to_string(s.c) +
                             " channels, spec wants " + std::to_string(spec.in_channels));
    if (ws.n != spec.out_channels || ws.c != spec.in_channels || ws.h != spec.kernel ||
        ws.w != spec.kernel)
        throw DimensionError("xnor_conv2d: weight shape " + ws.str() + " does not match spec");

    const int pad = spec.pad();
    const int wpp = a.words_per_pos();
    const int k = spec.kernel;
    const std::uint64_t last_mask = wpp > 0 ? a.channel_mask(wpp - 1) : 0;
    const int channels = s.c;

    Tensor<T> out(s.n, spec.out_channels, s.h, s.w);
    const std::int64_t rows = static_cast<std::int64_t>(s.n) * spec.out_channels * s.h;
    parallel_for(rows, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t row = lo; row < hi; ++row) {
            const int oh = static_cast<int>(row % s.h);
            const int o = static_cast<int>((row / s.h) % spec.out_channels);
            const int n = static_cast<int>(row / (static_cast<std::int64_t>(s.h) * spec.out_channels));
            T* dst = out.data() + out.index(n, o, oh, 0);
            for (int ow = 0; ow < s.w; ++ow) {
                int matches = 0;
                int taps = 0;
                for (int ky = 0; ky < k; ++ky) {
                    const int ih = oh + ky - pad;
                    if (ih < 0 || ih >= s.h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int iw = ow + kx - pad;
                        if (iw < 0 || iw >= s.w) continue;
                        const std::uint64_t* aw = a.words_at(n, ih, iw);
                        const std::uint64_t* ww = w.words_at(o, ky, kx);
                        for (int wi = 0; wi < wpp - 1; ++wi)
                            matches += std::popcount(~(aw[wi] ^ ww[wi]));
                        matches += std::popcount(~(aw[wpp - 1] ^ ww[wpp - 1]) & last_mask);
                        ++taps;
                    }
                }
                dst[ow] = static_cast<T>(2 * matches - taps * channels);
            }
        }
    });
    return out;
}

}  // namespace ebsr

#endif  // EBSR_XNOR_HPP
