#ifndef EBSR_BITPACK_HPP
#define EBSR_BITPACK_HPP

#include <cstdint>
#include <vector>

#include "ebsr/tensor.hpp"

namespace ebsr {

// Sign bits of a Tensor packed along the channel axis, 64 per word,
// little-endian bit order (bit i of word j holds channel 64*j + i).
// Bit 1 <-> +1, bit 0 <-> -1, sign(0) = +1. Bits above the channel count in
// the last word are zero and excluded by the mask.
//
// Word layout is position-major: all channel words of one spatial position
// are contiguous, which is what the xnor kernel's inner loop wants.
class BitTensor {
public:
    BitTensor() = default;

    BitTensor(Shape logical)
        : shape_(logical),
          words_per_pos_((logical.c + 63) / 64),
          words_(static_cast<std::size_t>(logical.n) * logical.h * logical.w * words_per_pos_, 0),
          mask_(words_per_pos_, ~0ULL) {
        const int rem = logical.c % 64;
        if (rem != 0 && words_per_pos_ > 0) mask_.back() = (1ULL << rem) - 1;
    }

    const Shape& shape() const { return shape_; }
    int words_per_pos() const { return words_per_pos_; }

    std::uint64_t* words_at(int n, int h, int w) {
        return words_.data() + pos_index(n, h, w) * words_per_pos_;
    }
    const std::uint64_t* words_at(int n, int h, int w) const {
        return words_.data() + pos_index(n, h, w) * words_per_pos_;
    }

    // Validity mask for word wi of any position (only the last word can be
    // partial).
    std::uint64_t channel_mask(int wi) const { return mask_[static_cast<std::size_t>(wi)]; }
    const std::vector<std::uint64_t>& channel_mask() const { return mask_; }

    bool get(int n, int c, int h, int w) const {
        return (words_at(n, h, w)[c >> 6] >> (c & 63)) & 1ULL;
    }

    const std::vector<std::uint64_t>& raw_words() const { return words_; }

private:
    std::int64_t pos_index(int n, int h, int w) const {
        return (static_cast<std::int64_t>(n) * shape_.h + h) * shape_.w + w;
    }

    Shape shape_;
    int words_per_pos_ = 0;
    std::vector<std::uint64_t> words_;
    std::vector<std::uint64_t> mask_;
};

// Packs sign(t - threshold) with per-channel thresholds. Bit set iff
// value - threshold >= 0.
template <typename T>
BitTensor pack_signs(const Tensor<T>& t, const std::vector<T>& threshold) {
    const Shape s = t.shape();
    if (static_cast<int>(threshold.size()) != s.c)
        throw DimensionError("pack_signs: " + std::to_string(threshold.size()) +
                             " thresholds for " + std::to_string(s.c) + " channels");
    BitTensor out(s);
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w) {
                std::uint64_t* words = out.words_at(n, h, w);
                for (int c = 0; c < s.c; ++c) {
                    if (t.at(n, c, h, w) - threshold[static_cast<std::size_t>(c)] >= T(0))
                        words[c >> 6] |= 1ULL << (c & 63);
                }
            }
    return out;
}

template <typename T>
BitTensor pack_signs(const Tensor<T>& t) {
    return pack_signs(t, std::vector<T>(static_cast<std::size_t>(t.shape().c), T(0)));
}

// Per-image thresholds, shape (N, C, 1, 1): the dynamic channel-shift case.
template <typename T>
BitTensor pack_signs(const Tensor<T>& t, const Tensor<T>& threshold) {
    const Shape s = t.shape();
    const Shape ts = threshold.shape();
    if (ts.c != s.c || (ts.n != s.n && ts.n != 1) || ts.h != 1 || ts.w != 1)
        throw DimensionError("pack_signs: threshold shape " + ts.str() +
                             " incompatible with input " + s.str());
    BitTensor out(s);
    for (int n = 0; n < s.n; ++n) {
        const int tn = ts.n == 1 ? 0 : n;
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w) {
                std::uint64_t* words = out.words_at(n, h, w);
                for (int c = 0; c < s.c; ++c) {
                    if (t.at(n, c, h, w) - threshold.at(tn, c, 0, 0) >= T(0))
                        words[c >> 6] |= 1ULL << (c & 63);
                }
            }
    }
    return out;
}

// Values in {-1, +1} matching the packed bits.
template <typename T = float>
Tensor<T> unpack_signs(const BitTensor& b) {
    const Shape s = b.shape();
    Tensor<T> out(s);
    for (int n = 0; n < s.n; ++n)
        for (int h = 0; h < s.h; ++h)
            for (int w = 0; w < s.w; ++w) {
                const std::uint64_t* words = b.words_at(n, h, w);
                for (int c = 0; c < s.c; ++c)
                    out.at(n, c, h, w) = ((words[c >> 6] >> (c & 63)) & 1ULL) ? T(1) : T(-1);
            }
    return out;
}

}  // namespace ebsr

#endif  // EBSR_BITPACK_HPP
