#ifndef EBSR_TRAIN_HPP
#define EBSR_TRAIN_HPP

#include <fstream>
#include <iostream>
#include <sstream>

#include "ebsr/checkpoint.hpp"
#include "ebsr/loss.hpp"
#include "ebsr/optim.hpp"
#include "ebsr/resize.hpp"

namespace ebsr {

struct SrImage {
    std::string name;
    Tensor<float> hr;  // trimmed to a multiple of the scale, RGB in [0,1]
    Tensor<float> lr;  // bicubic-downscaled counterpart (or dataset-provided)
};

struct SrDataset {
    int scale = 4;
    std::vector<SrImage> images;

    static SrDataset from_hr(std::vector<std::pair<std::string, Tensor<float>>> hr_images,
                             int scale) {
        SrDataset ds;
        ds.scale = scale;
        for (auto& [name, hr] : hr_images) {
            SrImage img;
            img.name = name;
            const Shape s = hr.shape();
            const int th = s.h - s.h % scale, tw = s.w - s.w % scale;
            img.hr = (th == s.h && tw == s.w) ? std::move(hr) : slice_spatial(hr, 0, 0, th, tw);
            img.lr = bicubic_downscale(img.hr, scale);
            ds.images.push_back(std::move(img));
        }
        return ds;
    }
};

struct TrainConfig {
    int patch = 48;  // LR-side pixels
    int batch = 16;
    double lr0 = 2e-4;
    int halve_every_epochs = 200;
    int halve_every_steps = 0;  // desk-scale override; takes precedence when > 0
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t steps = 1000;
    std::uint64_t seed = 1;
    bool augment = false;  // geometric flips/rotations, off by default
    int checkpoint_every = 0;
    std::string checkpoint_path;
    std::string loss_csv;
};

struct TraceRow {
    std::int64_t step;
    double lr;
    double loss;
};

struct TrainResult {
    std::vector<TraceRow> trace;
    TrainState state;
};

namespace detail {

inline std::vector<int> usable_images(const SrDataset& ds, int patch, bool warn) {
    std::vector<int> idx;
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        const Shape s = ds.images[i].lr.shape();
        if (s.h >= patch && s.w >= patch) {
            idx.push_back(static_cast<int>(i));
        } else if (warn) {
            std::cerr << "warning: skipping '" << ds.images[i].name << "' (" << s.h << "x" << s.w
                      << " LR smaller than " << patch << "x" << patch << " patch)\n";
        }
    }
    return idx;
}

template <typename T>
void flip_h(Tensor<T>& t) {
    const Shape s = t.shape();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < s.h; ++h)
                for (int w = 0; w < s.w / 2; ++w)
                    std::swap(t.at(n, c, h, w), t.at(n, c, h, s.w - 1 - w));
}

template <typename T>
void flip_v(Tensor<T>& t) {
    const Shape s = t.shape();
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < s.h / 2; ++h)
                for (int w = 0; w < s.w; ++w)
                    std::swap(t.at(n, c, h, w), t.at(n, c, s.h - 1 - h, w));
}

template <typename T>
Tensor<T> transpose_hw(const Tensor<T>& t) {
    const Shape s = t.shape();
    Tensor<T> out(s.n, s.c, s.w, s.h);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int h = 0; h < s.h; ++h)
                for (int w = 0; w < s.w; ++w) out.at(n, c, w, h) = t.at(n, c, h, w);
    return out;
}

}  // namespace detail

// Random aligned crops: LR patch p x p at (y, x), HR patch s*p x s*p at
// (s*y, s*x). Images smaller than the patch are skipped (warned once).
inline std::pair<Tensor<float>, Tensor<float>> sample_patches(const SrDataset& ds,
                                                              const TrainConfig& cfg, Rng& rng,
                                                              bool warn = false) {
    const std::vector<int> usable = detail::usable_images(ds, cfg.patch, warn);
    if (usable.empty()) throw ConfigError("sample_patches: no image fits the patch size");
    const int p = cfg.patch;
    const int s = ds.scale;
    Tensor<float> lr_batch(cfg.batch, 3, p, p);
    Tensor<float> hr_batch(cfg.batch, 3, p * s, p * s);
    for (int b = 0; b < cfg.batch; ++b) {
        const SrImage& img = ds.images[static_cast<std::size_t>(
            usable[static_cast<std::size_t>(rng.below(usable.size()))])];
        const Shape ls = img.lr.shape();
        const int y = static_cast<int>(rng.below(static_cast<std::uint64_t>(ls.h - p + 1)));
        const int x = static_cast<int>(rng.below(static_cast<std::uint64_t>(ls.w - p + 1)));
        Tensor<float> lr = slice_spatial(img.lr, y, x, p, p);
        Tensor<float> hr = slice_spatial(img.hr, s * y, s * x, s * p, s * p);
        if (cfg.augment) {
            const std::uint64_t k = rng.below(8);
            if (k & 1) {
                detail::flip_h(lr);
                detail::flip_h(hr);
            }
            if (k & 2) {
                detail::flip_v(lr);
                detail::flip_v(hr);
            }
            if (k & 4) {
                lr = detail::transpose_hw(lr);
                hr = detail::transpose_hw(hr);
            }
        }
        std::copy(lr.data(), lr.data() + lr.size(), lr_batch.data() + lr_batch.index(b, 0, 0, 0));
        std::copy(hr.data(), hr.data() + hr.size(), hr_batch.data() + hr_batch.index(b, 0, 0, 0));
    }
    return {std::move(lr_batch), std::move(hr_batch)};
}

inline std::int64_t steps_per_epoch(const SrDataset& ds, const TrainConfig& cfg) {
    const auto usable = detail::usable_images(ds, cfg.patch, false);
    const std::int64_t n = std::max<std::int64_t>(1, static_cast<std::int64_t>(usable.size()));
    return std::max<std::int64_t>(1, (n + cfg.batch - 1) / cfg.batch);
}

inline double lr_at_step(std::int64_t step, const TrainConfig& cfg, std::int64_t per_epoch) {
    if (cfg.halve_every_steps > 0)
        return cfg.lr0 * std::pow(0.5, static_cast<double>(step / cfg.halve_every_steps));
    return lr_at_epoch(step / per_epoch, cfg.lr0, cfg.halve_every_epochs);
}

namespace detail {

template <typename T>
std::string layer_diagnostics(Model<T>& model) {
    std::ostringstream os;
    for (auto* p : model.params()) {
        if (!p->value.all_finite() || !p->grad.all_finite())
            os << "  " << p->name << ": max|v|=" << p->value.max_abs()
               << " max|g|=" << p->grad.max_abs()
               << (p->value.all_finite() ? "" : " [non-finite value]")
               << (p->grad.all_finite() ? "" : " [non-finite grad]") << "\n";
    }
    return os.str();
}

}  // namespace detail

// Deterministic given (seed, thread count). Resumes exactly from a saved
// TrainState: optimizer moments, step counter and sampler RNG all continue.
inline TrainResult train_loop(Model<float>& model, const SrDataset& ds, const TrainConfig& cfg,
                              const TrainState* resume = nullptr) {
    TrainResult res;
    auto params = model.params();
    AdamState<float> adam;
    Rng rng(cfg.seed);
    std::int64_t start = 0;
    if (resume && resume->present) {
        adam.m = resume->adam_m;
        adam.v = resume->adam_v;
        adam.step = resume->step;
        start = resume->step;
        rng.set_state(resume->rng_state);
    } else {
        adam.init(params);
    }
    const AdamConfig acfg{cfg.beta1, cfg.beta2, cfg.eps};
    const std::int64_t per_epoch = steps_per_epoch(ds, cfg);

    std::ofstream csv;
    if (!cfg.loss_csv.empty()) {
        csv.open(cfg.loss_csv, start > 0 ? std::ios::app : std::ios::trunc);
        if (!csv) throw IoError("train: cannot write loss csv '" + cfg.loss_csv + "'");
        if (start == 0) csv << "step,lr,loss\n";
    }

    auto save_state = [&](const std::string& path, std::int64_t next_step) {
        TrainState st;
        st.present = true;
        st.adam_m = adam.m;
        st.adam_v = adam.v;
        st.step = next_step;
        st.rng_state = rng.state();
        save_checkpoint(model, path, &st);
    };

    detail::usable_images(ds, cfg.patch, /*warn=*/start == 0);  // surface skipped images once

    for (std::int64_t step = start; step < cfg.steps; ++step) {
        const double lr = lr_at_step(step, cfg, per_epoch);
        auto [lr_batch, hr_batch] = sample_patches(ds, cfg, rng);
        ForwardMode mode;
        mode.train = true;
        mode.calibrate = step == 0;
        Tensor<float> out = model.forward(lr_batch, mode);
        LossResult<float> loss = l1_loss(out, hr_batch);
        if (!std::isfinite(loss.value)) {
            throw TrainingAbort("non-finite loss at step " + std::to_string(step) +
                                "; offending layers:\n" + detail::layer_diagnostics(model));
        }
        model.zero_grads();
        model.backward(loss.grad);
        adam_step(params, adam, lr, acfg);
        res.trace.push_back({step, lr, loss.value});
        if (csv.is_open())
            csv << step << "," << lr << "," << loss.value << "\n";
        if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
            (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
            save_state(cfg.checkpoint_path, step + 1);
        }
    }

    res.state.present = true;
    res.state.adam_m = std::move(adam.m);
    res.state.adam_v = std::move(adam.v);
    res.state.step = cfg.steps;
    res.state.rng_state = rng.state();
    if (!cfg.checkpoint_path.empty()) {
        TrainState st = res.state;
        save_checkpoint(model, cfg.checkpoint_path, &st);
    }
    return res;
}

}  // namespace ebsr

#endif  // EBSR_TRAIN_HPP
