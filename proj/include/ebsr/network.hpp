#ifndef EBSR_NETWORK_HPP
#define EBSR_NETWORK_HPP

#include <map>
#include <memory>
#include <sstream>

#include "ebsr/blocks.hpp"

namespace ebsr {

enum class Variant { fp, baseline, ebsr, ebsr_sq };

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::fp: return "fp";
        case Variant::baseline: return "baseline";
        case Variant::ebsr: return "ebsr";
        case Variant::ebsr_sq: return "ebsr_sq";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "fp") return Variant::fp;
    if (s == "baseline") return Variant::baseline;
    if (s == "ebsr") return Variant::ebsr;
    if (s == "ebsr_sq") return Variant::ebsr_sq;
    throw ConfigError("unknown model variant '" + s + "'");
}

struct ModelConfig {
    int blocks = 16;
    int channels = 64;
    int scale = 4;
    Variant variant = Variant::ebsr;
    int sq_w_bits = 0;  // only for ebsr_sq
    int sq_a_bits = 0;
    int reduction = 16;
    float rho = 1.0f;
    ThresholdMode threshold_mode = ThresholdMode::additive;
    RsignAlphaGrad alpha_grad = RsignAlphaGrad::printed;
    std::uint64_t seed = 1;

    void validate() const {
        if (scale != 2 && scale != 3 && scale != 4)
            throw ConfigError("model.scale must be 2, 3 or 4, got " + std::to_string(scale));
        if (blocks < 1) throw ConfigError("model.blocks must be >= 1");
        if (channels < 8) throw ConfigError("model.channels must be >= 8");
        if (variant == Variant::ebsr_sq) {
            const bool ok = (sq_w_bits == 1 && sq_a_bits == 8) ||
                            (sq_w_bits == 2 && sq_a_bits == 4) ||
                            (sq_w_bits == 4 && sq_a_bits == 4);
            if (!ok)
                throw ConfigError("model.sq_bits must be one of W1A8, W2A4, W4A4, got W" +
                                  std::to_string(sq_w_bits) + "A" + std::to_string(sq_a_bits));
        }
        if (reduction < 1) throw ConfigError("model.reduction must be >= 1");
    }

    static std::string light_or_large(int blocks) { return blocks >= 32 ? "ebsr" : "ebsr-light"; }

    std::string to_text() const {
        std::ostringstream os;
        os << "alpha_grad=" << (alpha_grad == RsignAlphaGrad::printed ? "printed" : "analytic") << "\n"
           << "blocks=" << blocks << "\n"
           << "channels=" << channels << "\n"
           << "reduction=" << reduction << "\n"
           << "rho=" << rho << "\n"
           << "scale=" << scale << "\n"
           << "seed=" << seed << "\n"
           << "sq_a_bits=" << sq_a_bits << "\n"
           << "sq_w_bits=" << sq_w_bits << "\n"
           << "threshold_mode=" << (threshold_mode == ThresholdMode::additive ? "additive" : "replace")
           << "\n"
           << "variant=" << variant_name(variant) << "\n";
        return os.str();
    }

    static ModelConfig from_text(const std::string& text) {
        ModelConfig cfg;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("bad model config line '" + line + "'");
            const std::string key = line.substr(0, eq);
            const std::string val = line.substr(eq + 1);
            if (key == "blocks") cfg.blocks = std::stoi(val);
            else if (key == "channels") cfg.channels = std::stoi(val);
            else if (key == "scale") cfg.scale = std::stoi(val);
            else if (key == "variant") cfg.variant = variant_from_name(val);
            else if (key == "sq_w_bits") cfg.sq_w_bits = std::stoi(val);
            else if (key == "sq_a_bits") cfg.sq_a_bits = std::stoi(val);
            else if (key == "reduction") cfg.reduction = std::stoi(val);
            else if (key == "rho") cfg.rho = std::stof(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "threshold_mode")
                cfg.threshold_mode = val == "replace" ? ThresholdMode::replace : ThresholdMode::additive;
            else if (key == "alpha_grad")
                cfg.alpha_grad = val == "analytic" ? RsignAlphaGrad::analytic : RsignAlphaGrad::printed;
            else throw ConfigError("unknown model config key '" + key + "'");
        }
        return cfg;
    }
};

// Rearranges r^2*C channels into C channels at r-times spatial resolution:
// out(n, c, h*r+dy, w*r+dx) = in(n, (c*r + dy)*r + dx, h, w).
template <typename T>
Tensor<T> depth_to_space(const Tensor<T>& t, int r) {
    const Shape s = t.shape();
    if (s.c % (r * r) != 0)
        throw DimensionError("depth_to_space: " + std::to_string(s.c) +
                             " channels not divisible by r^2");
    const int oc = s.c / (r * r);
    Tensor<T> out(s.n, oc, s.h * r, s.w * r);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < oc; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int ic = (c * r + dy) * r + dx;
                    for (int h = 0; h < s.h; ++h) {
                        const T* src = t.data() + t.index(n, ic, h, 0);
                        for (int w = 0; w < s.w; ++w)
                            out.at(n, c, h * r + dy, w * r + dx) = src[w];
                    }
                }
    return out;
}

template <typename T>
Tensor<T> space_to_depth(const Tensor<T>& t, int r) {
    const Shape s = t.shape();
    if (s.h % r != 0 || s.w % r != 0)
        throw DimensionError("space_to_depth: spatial dims not divisible by r");
    Tensor<T> out(s.n, s.c * r * r, s.h / r, s.w / r);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int dy = 0; dy < r; ++dy)
                for (int dx = 0; dx < r; ++dx) {
                    const int oc = (c * r + dy) * r + dx;
                    for (int h = 0; h < s.h / r; ++h)
                        for (int w = 0; w < s.w / r; ++w)
                            out.at(n, oc, h, w) = t.at(n, c, h * r + dy, w * r + dx);
                }
    return out;
}

struct AuditRow {
    std::string layer;
    std::string precision;  // fp | binary | predictor
    std::int64_t params = 0;
};

// Head conv, binary (or fp) body with a global residual, pixel-shuffle tail.
template <typename T>
class Model {
public:
    Model() = default;

    explicit Model(ModelConfig cfg) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(cfg_.seed);
        const int C = cfg_.channels;
        head_ = Conv2dLayer<T>("head", ConvSpec{3, C, 3}, true, rng);

        EConvOptions opt;
        opt.spatial = cfg_.variant == Variant::ebsr || cfg_.variant == Variant::ebsr_sq;
        opt.channel = opt.spatial;
        opt.sq_w_bits = cfg_.variant == Variant::ebsr_sq ? cfg_.sq_w_bits : 0;
        opt.sq_a_bits = cfg_.variant == Variant::ebsr_sq ? cfg_.sq_a_bits : 0;
        opt.threshold_mode = cfg_.threshold_mode;
        opt.alpha_grad = cfg_.alpha_grad;
        for (int i = 0; i < cfg_.blocks; ++i) {
            const std::string name = "block" + std::to_string(i);
            if (cfg_.variant == Variant::fp)
                blocks_.push_back(std::make_unique<FpBlock<T>>(name, C, static_cast<T>(cfg_.rho), rng));
            else
                blocks_.push_back(std::make_unique<BasicBlock<T>>(name, C, cfg_.reduction,
                                                                  static_cast<T>(cfg_.rho), opt, rng));
        }

        if (cfg_.scale == 2 || cfg_.scale == 4) {
            const int stages = cfg_.scale == 2 ? 1 : 2;
            for (int i = 0; i < stages; ++i) {
                up_.emplace_back("tail.up" + std::to_string(i), ConvSpec{C, 4 * C, 3}, true, rng);
                up_factor_.push_back(2);
            }
        } else {
            up_.emplace_back("tail.up0", ConvSpec{C, 9 * C, 3}, true, rng);
            up_factor_.push_back(3);
        }
        final_ = Conv2dLayer<T>("tail.final", ConvSpec{C, 3, 3}, true, rng);
    }

    const ModelConfig& config() const { return cfg_; }

    // Raw forward: values unclamped (the training path). tap_selector picks a
    // named intermediate activation: "head", "blockN", "body".
    Tensor<T> forward(const Tensor<T>& x, const ForwardMode& mode,
                      const std::string* tap_selector = nullptr, Tensor<T>* tap_out = nullptr) {
        if (x.shape().c != 3)
            throw DimensionError("model: input must have 3 channels, got " + x.shape().str());
        Tensor<T> f = head_.forward(x, mode.train);
        maybe_tap("head", f, tap_selector, tap_out);
        Tensor<T> b = f;
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            b = blocks_[i]->forward(b, mode);
            maybe_tap("block" + std::to_string(i), b, tap_selector, tap_out);
        }
        b.add_(f);  // global residual
        maybe_tap("body", b, tap_selector, tap_out);
        for (std::size_t i = 0; i < up_.size(); ++i) {
            b = up_[i].forward(b, mode.train);
            b = depth_to_space(b, up_factor_[i]);
        }
        return final_.forward(b, mode.train);
    }

    // Inference: clamped to [0,1].
    Tensor<T> infer(const Tensor<T>& x) {
        Tensor<T> y = forward(x, ForwardMode{});
        for (std::int64_t i = 0; i < y.size(); ++i)
            y[i] = std::min(T(1), std::max(T(0), y[i]));
        return y;
    }

    // Accumulates parameter gradients; returns nothing (input grads unused).
    void backward(const Tensor<T>& dy) {
        Tensor<T> d = final_.backward(dy);
        for (std::size_t i = up_.size(); i-- > 0;) {
            d = up_[i].backward(space_to_depth(d, up_factor_[i]));
        }
        // d is the gradient at (body_out + head_out)
        Tensor<T> db = d;
        for (std::size_t i = blocks_.size(); i-- > 0;) db = blocks_[i]->backward(db);
        db.add_(d);  // global skip
        head_.backward(db);
    }

    ParamRefs<T> params() {
        ParamRefs<T> out;
        head_.collect(out);
        for (auto& b : blocks_) b->collect(out);
        for (auto& u : up_) u.collect(out);
        final_.collect(out);
        return out;
    }

    void zero_grads() {
        for (auto* p : params()) p->zero_grad();
    }

    std::vector<AuditRow> audit() {
        std::vector<AuditRow> rows;
        auto conv_params = [](Conv2dLayer<T>& c) {
            return c.weight().value.size() + (c.has_bias() ? c.bias().value.size() : 0);
        };
        rows.push_back({"head", "fp", conv_params(head_)});
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            const std::string bn = "block" + std::to_string(i);
            if (auto* bb = dynamic_cast<BasicBlock<T>*>(blocks_[i].get())) {
                for (auto* e : {&bb->econv1(), &bb->econv2()}) {
                    rows.push_back({e->name(), "binary",
                                    e->weight().value.size() + e->alpha().value.size() +
                                        e->beta().value.size()});
                    if (e->spatial()) {
                        ParamRefs<T> ps;
                        e->spatial()->collect(ps);
                        std::int64_t n = 0;
                        for (auto* p : ps) n += p->value.size();
                        rows.push_back({e->name() + ".spatial", "predictor", n});
                    }
                    if (e->channel()) {
                        ParamRefs<T> ps;
                        e->channel()->collect(ps);
                        std::int64_t n = 0;
                        for (auto* p : ps) n += p->value.size();
                        rows.push_back({e->name() + ".channel", "predictor", n});
                    }
                }
            } else if (auto* fb = dynamic_cast<FpBlock<T>*>(blocks_[i].get())) {
                rows.push_back({bn + ".conv1", "fp", conv_params(fb->conv1())});
                rows.push_back({bn + ".conv2", "fp", conv_params(fb->conv2())});
            }
        }
        for (std::size_t i = 0; i < up_.size(); ++i)
            rows.push_back({"tail.up" + std::to_string(i), "fp", conv_params(up_[i])});
        rows.push_back({"tail.final", "fp", conv_params(final_)});
        return rows;
    }

    Conv2dLayer<T>& head() { return head_; }
    std::vector<std::unique_ptr<IBlock<T>>>& blocks() { return blocks_; }
    std::vector<Conv2dLayer<T>>& upsample_convs() { return up_; }
    const std::vector<int>& upsample_factors() const { return up_factor_; }
    Conv2dLayer<T>& final_conv() { return final_; }

private:
    static void maybe_tap(const std::string& name, const Tensor<T>& v,
                          const std::string* selector, Tensor<T>* out) {
        if (selector && out && *selector == name) *out = v;
    }

    ModelConfig cfg_;
    Conv2dLayer<T> head_;
    std::vector<std::unique_ptr<IBlock<T>>> blocks_;
    std::vector<Conv2dLayer<T>> up_;
    std::vector<int> up_factor_;
    Conv2dLayer<T> final_;
};

template <typename T = float>
Model<T> build_model(ModelConfig cfg, std::uint64_t seed) {
    cfg.seed = seed;
    return Model<T>(cfg);
}

}  // namespace ebsr

#endif  // EBSR_NETWORK_HPP
