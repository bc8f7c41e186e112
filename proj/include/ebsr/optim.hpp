#ifndef EBSR_OPTIM_HPP
#define EBSR_OPTIM_HPP

#include "ebsr/layers.hpp"

namespace ebsr {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    std::int64_t step = 0;

    void init(const ParamRefs<T>& params) {
        m.clear();
        v.clear();
        for (auto* p : params) {
            m.emplace_back(p->value.shape());
            v.emplace_back(p->value.shape());
        }
        step = 0;
    }
};

// Standard bias-corrected update, followed by the parameter re-projections
// the invariants require: RSign alpha stays positive, latent binary weights
// stay in [-1, 1] (outside it the STE gate would zero their gradients for
// good), LSQ steps stay positive.
template <typename T>
void adam_step(const ParamRefs<T>& params, AdamState<T>& state, double lr,
               const AdamConfig& cfg = {}) {
    if (state.m.size() != params.size())
        throw DimensionError("adam_step: state not initialized for these parameters");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param<T>& p = *params[pi];
        Tensor<T>& m = state.m[pi];
        Tensor<T>& v = state.v[pi];
        for (std::int64_t i = 0; i < p.value.size(); ++i) {
            const double g = static_cast<double>(p.grad[i]);
            const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * g;
            const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
            p.value[i] = static_cast<T>(static_cast<double>(p.value[i]) - update);
        }
        switch (p.kind) {
            case ParamKind::rsign_alpha:
                for (std::int64_t i = 0; i < p.value.size(); ++i)
                    p.value[i] = std::max(p.value[i], static_cast<T>(1e-4));
                break;
            case ParamKind::binary_latent:
                for (std::int64_t i = 0; i < p.value.size(); ++i)
                    p.value[i] = std::min(T(1), std::max(T(-1), p.value[i]));
                break;
            case ParamKind::lsq_step:
                for (std::int64_t i = 0; i < p.value.size(); ++i)
                    p.value[i] = std::max(p.value[i], static_cast<T>(1e-6));
                break;
            default:
                break;
        }
    }
}

// lr0 halved every `halve_every` epochs.
inline double lr_at_epoch(std::int64_t epoch, double lr0, int halve_every) {
    if (halve_every <= 0) return lr0;
    return lr0 * std::pow(0.5, static_cast<double>(epoch / halve_every));
}

}  // namespace ebsr

#endif  // EBSR_OPTIM_HPP
