#ifndef EBSR_LOSS_HPP
#define EBSR_LOSS_HPP

#include "ebsr/tensor.hpp"

namespace ebsr {

template <typename T>
struct LossResult {
    double value = 0;
    Tensor<T> grad;
};

// Mean absolute difference. Subgradient at exact ties is 0.
template <typename T>
LossResult<T> l1_loss(const Tensor<T>& sr, const Tensor<T>& hr) {
    if (sr.shape() != hr.shape())
        throw DimensionError("l1_loss: shapes " + sr.shape().str() + " vs " + hr.shape().str());
    LossResult<T> res;
    res.grad = Tensor<T>(sr.shape());
    const T inv_count = T(1) / static_cast<T>(sr.size());
    double acc = 0;
    for (std::int64_t i = 0; i < sr.size(); ++i) {
        const T d = sr[i] - hr[i];
        acc += std::abs(static_cast<double>(d));
        res.grad[i] = d > T(0) ? inv_count : (d < T(0) ? -inv_count : T(0));
    }
    res.value = acc / static_cast<double>(sr.size());
    return res;
}

}  // namespace ebsr

#endif  // EBSR_LOSS_HPP
