#ifndef EBSR_GRADCHECK_HPP
#define EBSR_GRADCHECK_HPP

#include <functional>
#include <sstream>

#include "ebsr/blocks.hpp"

namespace ebsr {

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0;
    int checks = 0;
    std::string detail;
};

namespace detail {

// rel err with an absolute floor so that near-zero gradients don't divide by
// finite-difference noise.
inline double rel_err(double got, double want) {
    const double diff = std::abs(got - want);
    if (diff < 1e-8) return 0;
    return diff / std::max(std::abs(want), 1e-8);
}

template <typename LossFn>
double central_diff(Tensor<double>& value, std::int64_t i, const LossFn& loss, double eps = 1e-6) {
    const double keep = value[i];
    value[i] = keep + eps;
    const double up = loss();
    value[i] = keep - eps;
    const double dn = loss();
    value[i] = keep;
    return (up - dn) / (2 * eps);
}

}  // namespace detail

// Central finite differences vs. backward for the full-precision layers:
// plain convs (head/tail), the spatial-rescale conv+sigmoid, and the channel
// fc stack, all in 64-bit. `sabotage` (tests only) is added to the first
// computed gradient so a corrupted backward is provably flagged.
inline GradCheckReport grad_check_fp(std::uint64_t seed, int fragments = 5, double sabotage = 0.0) {
    GradCheckReport rep;
    std::ostringstream detail_os;
    double max_err = 0;
    int checks = 0;
    bool sabotaged = false;

    auto run_params = [&](ParamRefs<double>& params, const std::function<double()>& loss,
                          const std::function<void()>& backward, const std::string& tag) {
        for (auto* p : params) p->zero_grad();
        backward();
        if (sabotage != 0.0 && !sabotaged && !params.empty() && params[0]->grad.size() > 0) {
            params[0]->grad[0] += sabotage;
            sabotaged = true;
        }
        for (auto* p : params) {
            for (std::int64_t i = 0; i < p->value.size(); ++i) {
                const double fd = detail::central_diff(p->value, i, loss);
                const double err = detail::rel_err(p->grad[i], fd);
                ++checks;
                if (err > max_err) {
                    max_err = err;
                    if (err >= 1e-4)
                        detail_os << tag << " " << p->name << "[" << i << "]: backward " << p->grad[i]
                                  << " vs fd " << fd << "\n";
                }
            }
        }
    };

    for (int f = 0; f < fragments; ++f) {
        Rng rng(seed + static_cast<std::uint64_t>(f) * 7919);

        // plain conv (the head/tail layer type)
        {
            Conv2dLayer<double> conv("conv", ConvSpec{3, 2, 3}, true, rng);
            Tensor<double> x(2, 3, 5, 5);
            x.fill_uniform(rng, -1.0, 1.0);
            Tensor<double> probe(2, 2, 5, 5);
            probe.fill_uniform(rng, -1.0, 1.0);
            ParamRefs<double> params;
            conv.collect(params);
            auto loss = [&] {
                auto out = conv.forward(x, false);
                double acc = 0;
                for (std::int64_t i = 0; i < out.size(); ++i) acc += out[i] * probe[i];
                return acc;
            };
            auto backward = [&] {
                conv.forward(x, true);
                conv.backward(probe);
            };
            run_params(params, loss, backward, "conv");
        }

        // spatial-rescale conv (+ sigmoid)
        {
            SpatialRescale<double> sr("spatial", 4, rng);
            Tensor<double> x(1, 4, 6, 6);
            x.fill_uniform(rng, -1.0, 1.0);
            Tensor<double> probe(1, 1, 6, 6);
            probe.fill_uniform(rng, -1.0, 1.0);
            ParamRefs<double> params;
            sr.collect(params);
            auto loss = [&] {
                auto s = sr.forward(x, ForwardMode{});
                double acc = 0;
                for (std::int64_t i = 0; i < s.size(); ++i) acc += s[i] * probe[i];
                return acc;
            };
            auto backward = [&] {
                ForwardMode m;
                m.train = true;
                sr.forward(x, m);
                sr.backward(probe);
            };
            run_params(params, loss, backward, "spatial");
        }

        // channel fc stack (GAP -> fc -> relu -> fc -> split). Inputs are
        // redrawn until every relu pre-activation sits away from its kink so
        // that central differences are valid.
        {
            ChannelShiftRescale<double> ch("channel", 8, 4, rng);
            Tensor<double> x(2, 8, 4, 4);
            for (int attempt = 0; attempt < 64; ++attempt) {
                x.fill_uniform(rng, -1.0, 1.0);
                Tensor<double> g(x.shape().n, 8, 1, 1);
                const Shape s = x.shape();
                for (int n = 0; n < s.n; ++n)
                    for (int c = 0; c < s.c; ++c) {
                        double acc = 0;
                        for (int h = 0; h < s.h; ++h)
                            for (int w = 0; w < s.w; ++w) acc += x.at(n, c, h, w);
                        g.at(n, c, 0, 0) = acc / (s.h * s.w);
                    }
                auto h = ch.fc1().forward(g, false);
                double min_abs = 1e9;
                for (std::int64_t i = 0; i < h.size(); ++i)
                    min_abs = std::min(min_abs, std::abs(h[i]));
                if (min_abs > 1e-4) break;
            }
            Tensor<double> p1(2, 8, 1, 1), p2(2, 8, 1, 1);
            p1.fill_uniform(rng, -1.0, 1.0);
            p2.fill_uniform(rng, -1.0, 1.0);
            ParamRefs<double> params;
            ch.collect(params);
            auto loss = [&] {
                auto [cs, cr] = ch.forward(x, ForwardMode{});
                double acc = 0;
                for (std::int64_t i = 0; i < cs.size(); ++i) acc += cs[i] * p1[i] + cr[i] * p2[i];
                return acc;
            };
            auto backward = [&] {
                ForwardMode m;
                m.train = true;
                ch.forward(x, m);
                ch.backward(p1, p2);
            };
            run_params(params, loss, backward, "fc");
        }
    }

    rep.max_rel_err = max_err;
    rep.checks = checks;
    rep.pass = max_err < 1e-4;
    rep.detail = detail_os.str();
    return rep;
}

// Backward of RSign vs. direct evaluation of the published branch formulas.
inline GradCheckReport grad_check_ste(std::uint64_t seed, int points = 10000) {
    GradCheckReport rep;
    Rng rng(seed);
    double max_err = 0;

    auto direct_dalpha = [](double x, double alpha, double beta) {
        if (x <= beta - alpha) return -1.0;
        const double u = (x - beta) / alpha;
        if (x <= beta) return -2 * u * u - 2 * u - 1;
        if (x <= beta + alpha) return 2 * u * u - 2 * u + 1;
        return 1.0;
    };
    auto direct_dbeta = [](double x, double alpha, double beta) {
        const double u = (x - beta) / alpha;
        if (beta - alpha < x && x <= beta) return -2 - 2 * u;
        if (beta < x && x <= beta + alpha) return -2 + 2 * u;
        return 0.0;
    };
    auto direct_dx = [](double x, double alpha, double beta) {
        const double u = (x - beta) / alpha;
        if (beta - alpha < x && x <= beta) return 2 + 2 * u;
        if (beta < x && x <= beta + alpha) return 2 - 2 * u;
        return 0.0;
    };

    for (int i = 0; i < points; ++i) {
        const double alpha = rng.uniform(0.05, 3.0);
        const double beta = rng.uniform(-1.5, 1.5);
        double xv;
        switch (i % 4) {  // hit the branch boundaries exactly as well
            case 0: xv = rng.uniform(-5.0, 5.0); break;
            case 1: xv = beta - alpha; break;
            case 2: xv = beta; break;
            default: xv = beta + alpha; break;
        }
        auto x = Tensor<double>::from(Shape{1, 1, 1, 1}, {xv});
        auto th = Tensor<double>::from(Shape{1, 1, 1, 1}, {beta});
        RsignCache<double> cache;
        rsign_forward(x, alpha, th, &cache);
        auto ones = Tensor<double>::from(Shape{1, 1, 1, 1}, {1.0});
        auto g = rsign_backward(ones, cache, th.shape());
        max_err = std::max(max_err, std::abs(g.grad_alpha - direct_dalpha(xv, alpha, beta)));
        max_err = std::max(max_err,
                           std::abs(g.grad_threshold.at(0, 0, 0, 0) - direct_dbeta(xv, alpha, beta)));
        max_err = std::max(max_err, std::abs(g.grad_x.at(0, 0, 0, 0) - direct_dx(xv, alpha, beta)));
        rep.checks += 3;
    }

    // boundary agreement of the x-slope from both sides of u in {-1, 0, 1}
    for (double u0 : {-1.0, 0.0, 1.0}) {
        const double lo = ste::dx(u0 - 1e-9);
        const double hi = ste::dx(u0 + 1e-9);
        max_err = std::max(max_err, std::abs(hi - lo) - 4e-9 > 0 ? std::abs(hi - lo) : 0.0);
        rep.checks += 1;
    }

    rep.max_rel_err = max_err;
    rep.pass = max_err < 1e-6;
    return rep;
}

}  // namespace ebsr

#endif  // EBSR_GRADCHECK_HPP
