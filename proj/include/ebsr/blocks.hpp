#ifndef EBSR_BLOCKS_HPP
#define EBSR_BLOCKS_HPP

#include "ebsr/bitpack.hpp"
#include "ebsr/layers.hpp"
#include "ebsr/xnor.hpp"

namespace ebsr {

// Whether the dynamic channel shift adds to the static RSign threshold or
// replaces it.
enum class ThresholdMode { additive, replace };

struct ForwardMode {
    bool train = false;
    // One-shot data-driven initialization of RSign alpha (3*mean|x|) and the
    // LSQ steps, run on the first training batch.
    bool calibrate = false;
};

// Pixel-wise scaling factor predictor: 3x3 conv C->1 plus sigmoid. In the
// quantized variant both the conv weights and its input activations pass
// through learned-step-size quantizers first.
template <typename T>
class SpatialRescale {
public:
    SpatialRescale() = default;

    SpatialRescale(const std::string& name, int channels, Rng& rng, int w_bits = 0, int a_bits = 0)
        : conv_(name + ".conv", ConvSpec{channels, 1, 3}, true, rng), quantized_(w_bits > 0) {
        if (quantized_) {
            wspec_ = LsqSpec{w_bits, true};
            aspec_ = LsqSpec{a_bits, true};
            wspec_.validate();
            aspec_.validate();
            step_w_.init(name + ".step_w", ParamKind::lsq_step, Shape{1, 1, 1, 1});
            step_a_.init(name + ".step_a", ParamKind::lsq_step, Shape{1, 1, 1, 1});
            step_w_.value.fill(T(1));
            step_a_.value.fill(T(1));
        }
    }

    Tensor<T> forward(const Tensor<T>& a, const ForwardMode& mode) {
        Tensor<T> logits;
        if (quantized_) {
            if (mode.calibrate) {
                step_w_.value.fill(lsq_init_step(conv_.weight().value, wspec_));
                step_a_.value.fill(lsq_init_step(a, aspec_));
            }
            Tensor<T> aq = lsq_quantize(a, step_a_.value[0], aspec_, mode.train ? &acache_ : nullptr);
            Tensor<T> wq =
                lsq_quantize(conv_.weight().value, step_w_.value[0], wspec_, mode.train ? &wcache_ : nullptr);
            if (mode.train) cached_aq_ = aq;
            cached_wq_ = wq;
            logits = fp_conv2d(aq, wq, conv_.bias_vec(), conv_.spec());
        } else {
            logits = conv_.forward(a, mode.train);
        }
        Tensor<T> s(logits.shape());
        for (std::int64_t i = 0; i < logits.size(); ++i) s[i] = stable_sigmoid(logits[i]);
        if (mode.train) cached_s_ = s;
        return s;
    }

    Tensor<T> backward(const Tensor<T>& ds) {
        Tensor<T> dlogit(ds.shape());
        for (std::int64_t i = 0; i < ds.size(); ++i) {
            const T s = cached_s_[i];
            dlogit[i] = ds[i] * s * (T(1) - s);
        }
        if (!quantized_) return conv_.backward(dlogit);

        Tensor<T> daq, dwq;
        std::vector<T> db;
        fp_conv2d_backward(cached_aq_, cached_wq_, dlogit, conv_.spec(), &daq, &dwq, &db);
        for (int o = 0; o < conv_.spec().out_channels; ++o) conv_.bias().grad.at(0, o, 0, 0) += db[o];
        auto wg = lsq_backward(dwq, wcache_);
        conv_.weight().grad.add_(wg.grad_x);
        step_w_.grad[0] += wg.grad_step;
        auto ag = lsq_backward(daq, acache_);
        step_a_.grad[0] += ag.grad_step;
        return ag.grad_x;
    }

    void collect(ParamRefs<T>& out) {
        conv_.collect(out);
        if (quantized_) {
            out.push_back(&step_w_);
            out.push_back(&step_a_);
        }
    }

    bool quantized() const { return quantized_; }
    Conv2dLayer<T>& conv() { return conv_; }
    const LsqSpec& weight_spec() const { return wspec_; }
    const LsqSpec& act_spec() const { return aspec_; }

    static T lsq_init_step(const Tensor<T>& x, const LsqSpec& spec) {
        const double s = 2.0 * x.mean_abs() / std::sqrt(std::abs(spec.qmax()));
        return static_cast<T>(std::max(s, 1e-4));
    }

private:
    Conv2dLayer<T> conv_;
    bool quantized_ = false;
    LsqSpec wspec_, aspec_;
    Param<T> step_w_, step_a_;
    LsqCache<T> wcache_, acache_;
    Tensor<T> cached_aq_, cached_wq_, cached_s_;
};

// GAP -> fc -> relu -> fc -> split into per-channel, per-image shift Cs and
// (sigmoid) re-scale Cr.
template <typename T>
class ChannelShiftRescale {
public:
    ChannelShiftRescale() = default;

    ChannelShiftRescale(const std::string& name, int channels, int reduction, Rng& rng)
        : channels_(channels),
          hidden_(std::max(1, channels / std::max(1, reduction))),
          fc1_(name + ".fc1", channels, hidden_, rng),
          fc2_(name + ".fc2", hidden_, 2 * channels, rng) {}

    // Returns (Cs, Cr), each (N, C, 1, 1).
    std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& a, const ForwardMode& mode) {
        const Shape s = a.shape();
        Tensor<T> g(s.n, s.c, 1, 1);
        const T inv_hw = T(1) / static_cast<T>(s.h * s.w);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const T* p = a.data() + a.index(n, c, 0, 0);
                T acc = 0;
                for (int i = 0; i < s.h * s.w; ++i) acc += p[i];
                g.at(n, c, 0, 0) = acc * inv_hw;
            }

        Tensor<T> h = fc1_.forward(g, mode.train);
        Tensor<T> hr(h.shape());
        for (std::int64_t i = 0; i < h.size(); ++i) hr[i] = h[i] > T(0) ? h[i] : T(0);
        Tensor<T> v = fc2_.forward(hr, mode.train);

        Tensor<T> cs(s.n, channels_, 1, 1), cr(s.n, channels_, 1, 1);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < channels_; ++c) {
                cs.at(n, c, 0, 0) = v.at(n, c, 0, 0);
                cr.at(n, c, 0, 0) = stable_sigmoid(v.at(n, channels_ + c, 0, 0));
            }
        if (mode.train) {
            cached_h_ = std::move(h);
            cached_cr_ = cr;
            in_shape_ = s;
        }
        return {std::move(cs), std::move(cr)};
    }

    Tensor<T> backward(const Tensor<T>& dcs, const Tensor<T>& dcr) {
        const Shape s = in_shape_;
        Tensor<T> dv(s.n, 2 * channels_, 1, 1);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < channels_; ++c) {
                dv.at(n, c, 0, 0) = dcs.at(n, c, 0, 0);
                const T cr = cached_cr_.at(n, c, 0, 0);
                dv.at(n, channels_ + c, 0, 0) = dcr.at(n, c, 0, 0) * cr * (T(1) - cr);
            }
        Tensor<T> dhr = fc2_.backward(dv);
        for (std::int64_t i = 0; i < dhr.size(); ++i)
            if (cached_h_[i] <= T(0)) dhr[i] = T(0);
        Tensor<T> dg = fc1_.backward(dhr);

        Tensor<T> da(s);
        const T inv_hw = T(1) / static_cast<T>(s.h * s.w);
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c) {
                const T v = dg.at(n, c, 0, 0) * inv_hw;
                T* p = da.data() + da.index(n, c, 0, 0);
                for (int i = 0; i < s.h * s.w; ++i) p[i] = v;
            }
        return da;
    }

    void collect(ParamRefs<T>& out) {
        fc1_.collect(out);
        fc2_.collect(out);
    }

    int hidden() const { return hidden_; }
    FcLayer<T>& fc1() { return fc1_; }
    FcLayer<T>& fc2() { return fc2_; }

private:
    int channels_ = 0, hidden_ = 0;
    FcLayer<T> fc1_, fc2_;
    Tensor<T> cached_h_, cached_cr_;
    Shape in_shape_;
};

struct EConvOptions {
    bool spatial = true;
    bool channel = true;
    int sq_w_bits = 0;  // 0 = full-precision predictor
    int sq_a_bits = 0;
    ThresholdMode threshold_mode = ThresholdMode::additive;
    RsignAlphaGrad alpha_grad = RsignAlphaGrad::printed;
};

// Enhanced binary convolution: RSign binarization with static + dynamic
// thresholds, xnor/popcount 3x3 conv of binarized weights, spatial and
// channel-wise re-scaling of the conv output, identity skip.
template <typename T>
class EConvLayer {
public:
    EConvLayer() = default;

    EConvLayer(const std::string& name, int channels, int reduction, const EConvOptions& opt,
               Rng& rng)
        : name_(name), channels_(channels), opt_(opt), spec_{channels, channels, 3} {
        alpha_.init(name + ".rsign.alpha", ParamKind::rsign_alpha, Shape{1, 1, 1, 1});
        alpha_.value.fill(T(1));
        beta_.init(name + ".rsign.beta", ParamKind::rsign_beta, Shape{1, channels, 1, 1});
        weight_.init(name + ".weight", ParamKind::binary_latent, Shape{channels, channels, 3, 3});
        const double bound = fanin_uniform_bound(static_cast<std::int64_t>(channels) * 9);
        weight_.value.fill_uniform(rng, -bound, bound);
        if (opt.spatial)
            spatial_ = std::make_unique<SpatialRescale<T>>(name + ".spatial", channels, rng,
                                                           opt.sq_w_bits, opt.sq_a_bits);
        if (opt.channel)
            channel_ = std::make_unique<ChannelShiftRescale<T>>(name + ".channel", channels,
                                                                reduction, rng);
    }

    Tensor<T> forward(const Tensor<T>& a, const ForwardMode& mode) {
        const Shape s = a.shape();
        if (s.c != channels_)
            throw DimensionError(name_ + ": input has " + std::to_string(s.c) + " channels, layer has " +
                                 std::to_string(channels_));

        Tensor<T> cs, cr;
        if (channel_) {
            auto pair = channel_->forward(a, mode);
            cs = std::move(pair.first);
            cr = std::move(pair.second);
        }
        Tensor<T> sfac;
        if (spatial_) sfac = spatial_->forward(a, mode);

        Tensor<T> threshold = make_threshold(cs, s.n);
        if (mode.calibrate)
            alpha_.value[0] = static_cast<T>(std::max(3.0 * a.mean_abs(), 1e-4));

        RsignCache<T> rcache;
        rsign_forward(a, alpha_.value[0], threshold, &rcache);

        // The xnor path and the float path agree exactly: the conv of +-1
        // values is integer, and the scale factors multiply in a fixed order
        // (filter scale, alpha, S, Cr).
        BitTensor abits = pack_signs(rcache.u);
        BitTensor wbits = pack_signs(weight_.value);
        std::vector<T> scales = weight_scales(weight_.value);
        Tensor<T> z = xnor_conv2d<T>(abits, wbits, spec_);
        const T alpha = alpha_.value[0];
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < channels_; ++c) {
                T* p = z.data() + z.index(n, c, 0, 0);
                const T f = scales[static_cast<std::size_t>(c)] * alpha;
                for (int i = 0; i < s.h * s.w; ++i) p[i] *= f;
            }

        Tensor<T> out = z;
        if (spatial_) {
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < channels_; ++c) {
                    T* p = out.data() + out.index(n, c, 0, 0);
                    const T* sp = sfac.data() + sfac.index(n, 0, 0, 0);
                    for (int i = 0; i < s.h * s.w; ++i) p[i] *= sp[i];
                }
        }
        if (channel_) {
            if (mode.train) cached_zs_ = out;  // z (.S) before Cr
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < channels_; ++c) {
                    T* p = out.data() + out.index(n, c, 0, 0);
                    const T f = cr.at(n, c, 0, 0);
                    for (int i = 0; i < s.h * s.w; ++i) p[i] *= f;
                }
        }

        if (mode.train) {
            rcache_ = std::move(rcache);
            cached_z_ = std::move(z);
            cached_s_ = sfac;
            cached_cr_ = cr;
            threshold_shape_ = threshold.shape();
            cached_in_ = a;
        }
        out.add_(a);
        return out;
    }

    Tensor<T> backward(const Tensor<T>& g) {
        const Shape s = cached_in_.shape();
        const int hw = s.h * s.w;

        Tensor<T> dcr, dzs;
        if (channel_) {
            dcr = Tensor<T>(s.n, channels_, 1, 1);
            dzs = g;
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < channels_; ++c) {
                    const T* gp = g.data() + g.index(n, c, 0, 0);
                    const T* zp = cached_zs_.data() + cached_zs_.index(n, c, 0, 0);
                    T acc = 0;
                    for (int i = 0; i < hw; ++i) acc += gp[i] * zp[i];
                    dcr.at(n, c, 0, 0) = acc;
                    T* dp = dzs.data() + dzs.index(n, c, 0, 0);
                    const T f = cached_cr_.at(n, c, 0, 0);
                    for (int i = 0; i < hw; ++i) dp[i] *= f;
                }
        } else {
            dzs = g;
        }

        Tensor<T> ds, dz;
        if (spatial_) {
            ds = Tensor<T>(s.n, 1, s.h, s.w);
            dz = dzs;
            for (int n = 0; n < s.n; ++n) {
                T* dsp = ds.data() + ds.index(n, 0, 0, 0);
                for (int c = 0; c < channels_; ++c) {
                    const T* gp = dzs.data() + dzs.index(n, c, 0, 0);
                    const T* zp = cached_z_.data() + cached_z_.index(n, c, 0, 0);
                    T* dzp = dz.data() + dz.index(n, c, 0, 0);
                    const T* sp = cached_s_.data() + cached_s_.index(n, 0, 0, 0);
                    for (int i = 0; i < hw; ++i) {
                        dsp[i] += gp[i] * zp[i];
                        dzp[i] = gp[i] * sp[i];
                    }
                }
            }
        } else {
            dz = dzs;
        }

        // Through the conv of binarized operands.
        Tensor<T> xhat = materialize_xhat();
        Tensor<T> what = binarize_weights(weight_.value);
        Tensor<T> dxhat, dwhat;
        fp_conv2d_backward(xhat, what, dz, spec_, &dxhat, &dwhat,
                           static_cast<std::vector<T>*>(nullptr));
        weight_.grad.add_(weight_ste_backward(dwhat, weight_.value));

        auto rg = rsign_backward(dxhat, rcache_, threshold_shape_, opt_.alpha_grad);
        alpha_.grad[0] += rg.grad_alpha;

        Tensor<T> da = std::move(rg.grad_x);
        if (channel_) {
            Tensor<T> dcs(s.n, channels_, 1, 1);
            if (opt_.threshold_mode == ThresholdMode::additive) {
                for (int n = 0; n < s.n; ++n)
                    for (int c = 0; c < channels_; ++c) {
                        const T v = rg.grad_threshold.at(n, c, 0, 0);
                        dcs.at(n, c, 0, 0) = v;
                        beta_.grad.at(0, c, 0, 0) += v;
                    }
            } else {
                dcs = rg.grad_threshold;
            }
            da.add_(channel_->backward(dcs, dcr));
        } else {
            beta_.grad.add_(rg.grad_threshold);
        }
        if (spatial_) da.add_(spatial_->backward(ds));
        da.add_(g);  // identity skip
        return da;
    }

    void collect(ParamRefs<T>& out) {
        out.push_back(&alpha_);
        out.push_back(&beta_);
        out.push_back(&weight_);
        if (spatial_) spatial_->collect(out);
        if (channel_) channel_->collect(out);
    }

    const std::string& name() const { return name_; }
    int channels() const { return channels_; }
    const EConvOptions& options() const { return opt_; }
    Param<T>& alpha() { return alpha_; }
    Param<T>& beta() { return beta_; }
    Param<T>& weight() { return weight_; }
    SpatialRescale<T>* spatial() { return spatial_.get(); }
    ChannelShiftRescale<T>* channel() { return channel_.get(); }

private:
    Tensor<T> make_threshold(const Tensor<T>& cs, int batch) const {
        if (!channel_) return beta_.value;
        if (opt_.threshold_mode == ThresholdMode::replace) return cs;
        Tensor<T> th(batch, channels_, 1, 1);
        for (int n = 0; n < batch; ++n)
            for (int c = 0; c < channels_; ++c)
                th.at(n, c, 0, 0) = beta_.value.at(0, c, 0, 0) + cs.at(n, c, 0, 0);
        return th;
    }

    Tensor<T> materialize_xhat() const {
        const T alpha = rcache_.alpha;
        Tensor<T> xhat(rcache_.u.shape());
        for (std::int64_t i = 0; i < xhat.size(); ++i)
            xhat[i] = rcache_.u[i] >= T(0) ? alpha : -alpha;
        return xhat;
    }

    std::string name_;
    int channels_ = 0;
    EConvOptions opt_;
    ConvSpec spec_;
    Param<T> alpha_, beta_, weight_;
    std::unique_ptr<SpatialRescale<T>> spatial_;
    std::unique_ptr<ChannelShiftRescale<T>> channel_;

    RsignCache<T> rcache_;
    Shape threshold_shape_;
    Tensor<T> cached_in_, cached_z_, cached_zs_, cached_s_, cached_cr_;
};

template <typename T>
class IBlock {
public:
    virtual ~IBlock() = default;
    virtual Tensor<T> forward(const Tensor<T>& a, const ForwardMode& mode) = 0;
    virtual Tensor<T> backward(const Tensor<T>& g) = 0;
    virtual void collect(ParamRefs<T>& out) = 0;
};

// Two E-Convs with a block-level residual, scaled by rho.
template <typename T>
class BasicBlock : public IBlock<T> {
public:
    BasicBlock(const std::string& name, int channels, int reduction, T rho,
               const EConvOptions& opt, Rng& rng)
        : rho_(rho),
          e1_(name + ".econv1", channels, reduction, opt, rng),
          e2_(name + ".econv2", channels, reduction, opt, rng) {}

    Tensor<T> forward(const Tensor<T>& a, const ForwardMode& mode) override {
        Tensor<T> y = e2_.forward(e1_.forward(a, mode), mode);
        if (rho_ == T(1)) return y;
        // out = a + rho*(y - a)
        y.sub_(a);
        y.scale_(rho_);
        y.add_(a);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& g) override {
        Tensor<T> dy = scaled(g, rho_);
        Tensor<T> da = e1_.backward(e2_.backward(dy));
        da.axpy_(T(1) - rho_, g);
        return da;
    }

    void collect(ParamRefs<T>& out) override {
        e1_.collect(out);
        e2_.collect(out);
    }

    EConvLayer<T>& econv1() { return e1_; }
    EConvLayer<T>& econv2() { return e2_; }
    T rho() const { return rho_; }

private:
    T rho_ = 1;
    EConvLayer<T> e1_, e2_;
};

// Full-precision residual block (conv-relu-conv): the unbinarized counterpart
// used by the fp model variant.
template <typename T>
class FpBlock : public IBlock<T> {
public:
    FpBlock(const std::string& name, int channels, T rho, Rng& rng)
        : rho_(rho),
          c1_(name + ".conv1", ConvSpec{channels, channels, 3}, true, rng),
          c2_(name + ".conv2", ConvSpec{channels, channels, 3}, true, rng) {}

    Tensor<T> forward(const Tensor<T>& a, const ForwardMode& mode) override {
        Tensor<T> h = c1_.forward(a, mode.train);
        if (mode.train) relu_mask_ = Tensor<T>(h.shape());
        for (std::int64_t i = 0; i < h.size(); ++i) {
            const bool pos = h[i] > T(0);
            if (mode.train) relu_mask_[i] = pos ? T(1) : T(0);
            if (!pos) h[i] = T(0);
        }
        Tensor<T> r = c2_.forward(h, mode.train);
        r.scale_(rho_);
        r.add_(a);
        return r;
    }

    Tensor<T> backward(const Tensor<T>& g) override {
        Tensor<T> dr = scaled(g, rho_);
        Tensor<T> dh = c2_.backward(dr);
        dh.mul_(relu_mask_);
        Tensor<T> da = c1_.backward(dh);
        da.add_(g);
        return da;
    }

    void collect(ParamRefs<T>& out) override {
        c1_.collect(out);
        c2_.collect(out);
    }

    Conv2dLayer<T>& conv1() { return c1_; }
    Conv2dLayer<T>& conv2() { return c2_; }

private:
    T rho_ = 1;
    Conv2dLayer<T> c1_, c2_;
    Tensor<T> relu_mask_;
};

}  // namespace ebsr

#endif  // EBSR_BLOCKS_HPP
