#include "doctest.h"

#include <cmath>

#include "ebsr/conv.hpp"
#include "ebsr/xnor.hpp"

using namespace ebsr;

namespace {

Tensor<float> random_signs(Rng& rng, Shape s) {
    Tensor<float> t(s);
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform() < 0.5 ? -1.f : 1.f;
    return t;
}

}  // namespace

TEST_CASE("xnor_conv2d reproduces the 1x1 four-channel toy example") {
    // signs [+, -, -, +] against an all-+ filter: 1 - 1 - 1 + 1 = 0
    auto a = Tensor<float>::from(Shape{1, 4, 1, 1}, {1, -1, -1, 1});
    Tensor<float> w(1, 4, 1, 1, 1.f);
    ConvSpec spec{4, 1, 1};
    auto out = xnor_conv2d(pack_signs(a), pack_signs(w), spec);
    CHECK(out.at(0, 0, 0, 0) == 0.f);
}

TEST_CASE("all-ones 3x3 interior gives 9*C, borders give (9-m)*C") {
    const int C = 10;
    Tensor<float> a(1, C, 5, 5, 1.f);
    Tensor<float> w(1, C, 3, 3, 1.f);
    ConvSpec spec{C, 1, 3};
    auto out = xnor_conv2d(pack_signs(a), pack_signs(w), spec);
    CHECK(out.at(0, 0, 2, 2) == 9.f * C);
    // corner: 5 taps in padding -> 4*C, edge: 3 taps in padding -> 6*C
    CHECK(out.at(0, 0, 0, 0) == 4.f * C);
    CHECK(out.at(0, 0, 0, 2) == 6.f * C);
}

TEST_CASE("xnor_conv2d equals the signed reference exactly") {
    Rng rng(42);
    const int kernels[] = {1, 3};
    const int channels[] = {1, 3, 63, 64, 65, 128, 130};
    for (int k : kernels) {
        for (int c : channels) {
            const int n = 1 + static_cast<int>(rng.below(3));
            const int h = 1 + static_cast<int>(rng.below(8));
            const int w = 1 + static_cast<int>(rng.below(8));
            const int oc = 1 + static_cast<int>(rng.below(5));
            auto a = random_signs(rng, Shape{n, c, h, w});
            auto wt = random_signs(rng, Shape{oc, c, k, k});
            ConvSpec spec{c, oc, k};
            auto fast = xnor_conv2d(pack_signs(a), pack_signs(wt), spec);
            auto ref = reference_signed_conv2d(a, wt, spec);
            REQUIRE(fast.shape() == ref.shape());
            for (std::int64_t i = 0; i < fast.size(); ++i) REQUIRE(fast[i] == ref[i]);
        }
    }
}

TEST_CASE("xnor_conv2d rejects channel mismatch") {
    Tensor<float> a(1, 4, 2, 2, 1.f);
    Tensor<float> w(1, 8, 1, 1, 1.f);
    CHECK_THROWS_AS(xnor_conv2d(pack_signs(a), pack_signs(w), ConvSpec{8, 1, 1}), DimensionError);
}

TEST_CASE("reference kernel contract and symmetry") {
    Rng rng(5);
    auto a = random_signs(rng, Shape{1, 2, 4, 4});
    auto w = random_signs(rng, Shape{2, 2, 3, 3});
    ConvSpec spec{2, 2, 3};

    // identity 1x1 kernel reproduces the input
    Tensor<float> id(1, 1, 1, 1, 1.f);
    auto a1 = random_signs(rng, Shape{1, 1, 3, 3});
    auto out_id = reference_signed_conv2d(a1, id, ConvSpec{1, 1, 1});
    for (std::int64_t i = 0; i < a1.size(); ++i) CHECK(out_id[i] == a1[i]);

    // conv(-a, w) = -conv(a, w)
    auto neg = scaled(a, -1.f);
    auto pos_out = reference_signed_conv2d(a, w, spec);
    auto neg_out = reference_signed_conv2d(neg, w, spec);
    for (std::int64_t i = 0; i < pos_out.size(); ++i) CHECK(neg_out[i] == -pos_out[i]);

    // non-sign interior value violates the contract
    auto bad = a;
    bad[3] = 0.5f;
    CHECK_THROWS_AS(reference_signed_conv2d(bad, w, spec), ContractError);
}

TEST_CASE("fp_conv2d scalar kernel and linearity") {
    Rng rng(9);
    Tensor<float> a(2, 3, 4, 4);
    a.fill_uniform(rng, -1.0, 1.0);

    // 1x1 kernel of value 2 per matching channel doubles the input
    Tensor<float> w(3, 3, 1, 1, 0.f);
    for (int c = 0; c < 3; ++c) w.at(c, c, 0, 0) = 2.f;
    auto out = fp_conv2d(a, w, {}, ConvSpec{3, 3, 1});
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(out[i] == doctest::Approx(2.f * a[i]));

    // linearity within 1e-5
    Tensor<float> b(2, 3, 4, 4);
    b.fill_uniform(rng, -1.0, 1.0);
    Tensor<float> w3(4, 3, 3, 3);
    w3.fill_uniform(rng, -0.5, 0.5);
    ConvSpec spec{3, 4, 3};
    auto lhs = fp_conv2d(add(a, b), w3, {}, spec);
    auto r1 = fp_conv2d(a, w3, {}, spec);
    auto r2 = fp_conv2d(b, w3, {}, spec);
    for (std::int64_t i = 0; i < lhs.size(); ++i)
        CHECK(lhs[i] == doctest::Approx(r1[i] + r2[i]).epsilon(1e-5));
}

TEST_CASE("fp_conv2d impulse response reproduces the kernel footprint") {
    // cross-correlation: out(y,x) = sum_k in(y+ky-p, x+kx-p) w(ky,kx), so a
    // delta at the center copies the kernel flipped around that center.
    Tensor<float> delta(1, 1, 5, 5, 0.f);
    delta.at(0, 0, 2, 2) = 1.f;
    Tensor<float> w(1, 1, 3, 3);
    for (int i = 0; i < 9; ++i) w[i] = static_cast<float>(i + 1);
    auto out = fp_conv2d(delta, w, {}, ConvSpec{1, 1, 3});
    for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx)
            CHECK(out.at(0, 0, 2 + 1 - ky, 2 + 1 - kx) == w.at(0, 0, ky, kx));
    CHECK(out.at(0, 0, 0, 0) == 0.f);
}

TEST_CASE("fp_conv2d bias and shape errors") {
    Tensor<float> a(1, 2, 3, 3, 1.f);
    Tensor<float> w(2, 2, 1, 1, 1.f);
    auto out = fp_conv2d(a, w, std::vector<float>{0.5f, -0.5f}, ConvSpec{2, 2, 1});
    CHECK(out.at(0, 0, 0, 0) == doctest::Approx(2.5f));
    CHECK(out.at(0, 1, 0, 0) == doctest::Approx(1.5f));

    CHECK_THROWS_AS(fp_conv2d(a, w, {}, ConvSpec{3, 2, 1}), DimensionError);
    CHECK_THROWS_AS(fp_conv2d(a, w, std::vector<float>{1.f}, ConvSpec{2, 2, 1}), DimensionError);
}

TEST_CASE("fp_conv2d backward matches central finite differences in 64-bit") {
    Rng rng(17);
    Tensor<double> a(2, 3, 4, 4);
    a.fill_uniform(rng, -1.0, 1.0);
    Tensor<double> w(2, 3, 3, 3);
    w.fill_uniform(rng, -0.5, 0.5);
    std::vector<double> bias{0.1, -0.2};
    ConvSpec spec{3, 2, 3};

    // loss = sum(out * probe), a fixed random probe
    Tensor<double> probe(2, 2, 4, 4);
    probe.fill_uniform(rng, -1.0, 1.0);
    auto loss = [&](const Tensor<double>& ai, const Tensor<double>& wi,
                    const std::vector<double>& bi) {
        auto out = fp_conv2d(ai, wi, bi, spec);
        double acc = 0;
        for (std::int64_t i = 0; i < out.size(); ++i) acc += out[i] * probe[i];
        return acc;
    };

    Tensor<double> da, dw;
    std::vector<double> db;
    fp_conv2d_backward(a, w, probe, spec, &da, &dw, &db);

    const double eps = 1e-6;
    auto check_rel = [](double got, double want) {
        const double denom = std::max(1e-8, std::abs(want));
        REQUIRE(std::abs(got - want) / denom < 1e-6);
    };
    for (int trial = 0; trial < 12; ++trial) {
        const std::int64_t ia = static_cast<std::int64_t>(rng.below(a.size()));
        auto ap = a; ap[ia] += eps;
        auto am = a; am[ia] -= eps;
        check_rel(da[ia], (loss(ap, w, bias) - loss(am, w, bias)) / (2 * eps));

        const std::int64_t iw = static_cast<std::int64_t>(rng.below(w.size()));
        auto wp = w; wp[iw] += eps;
        auto wm = w; wm[iw] -= eps;
        check_rel(dw[iw], (loss(a, wp, bias) - loss(a, wm, bias)) / (2 * eps));
    }
    for (std::size_t o = 0; o < bias.size(); ++o) {
        auto bp = bias; bp[o] += eps;
        auto bm = bias; bm[o] -= eps;
        check_rel(db[o], (loss(a, w, bp) - loss(a, w, bm)) / (2 * eps));
    }
}
