#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lpm/attacks/transforms.hpp"
#include "lpm/error.hpp"
#include "lpm/lpm/mask.hpp"
#include "lpm/numerics/loss.hpp"
#include "lpm/numerics/network.hpp"
#include "lpm/numerics/rng.hpp"

namespace lpm {

/// Budget and knobs of the sign-gradient attack family. Zero momentum,
/// diversity probability and kernel size switch the respective extension off.
struct AttackConfig {
    double epsilon = 16.0 / 255.0;
    double alpha = 1.6 / 255.0;
    std::uint32_t iterations = 10;
    double momentum = 0.0;
    double di_probability = 0.0;
    std::size_t ti_kernel = 0;
    RngStream rng{0, 0};

    void validate() const {
        if (!(epsilon > 0.0)) throw ArgumentError("AttackConfig: epsilon must be > 0");
        if (!(alpha > 0.0)) throw ArgumentError("AttackConfig: alpha must be > 0");
        if (iterations < 1) throw ArgumentError("AttackConfig: iterations must be >= 1");
        if (momentum < 0.0) throw ArgumentError("AttackConfig: momentum must be >= 0");
        if (di_probability < 0.0 || di_probability > 1.0)
            throw ArgumentError("AttackConfig: di probability must be in [0,1]");
        if (ti_kernel != 0 && ti_kernel % 2 == 0)
            throw ArgumentError("AttackConfig: ti kernel size must be odd or 0");
    }
};

struct AttackResult {
    Tensor adversarial;               // (N,C,H,W)
    std::vector<double> loss_trace;   // mean attacked loss before each step
    std::string evaluated_model;      // whose predictions `success` refers to
    std::vector<bool> success;
};

/// Strengths a variant switches on.
struct VariantParams {
    double momentum = 1.0;
    double di_probability = 0.5;
    std::size_t ti_kernel = 7;
};

/// Named variants: each maps a base config to the variant's settings. New
/// gradient-sign variants register here.
using AttackVariant = std::function<AttackConfig(AttackConfig, const VariantParams&)>;

inline std::map<std::string, AttackVariant>& attack_variants() {
    static std::map<std::string, AttackVariant> variants{
        {"i-fgsm", [](AttackConfig c, const VariantParams&) {
             c.momentum = 0.0;
             c.di_probability = 0.0;
             c.ti_kernel = 0;
             return c;
         }},
        {"mi-fgsm", [](AttackConfig c, const VariantParams& p) {
             c.momentum = p.momentum;
             c.di_probability = 0.0;
             c.ti_kernel = 0;
             return c;
         }},
        {"di-fgsm", [](AttackConfig c, const VariantParams& p) {
             c.momentum = 0.0;
             c.di_probability = p.di_probability;
             c.ti_kernel = 0;
             return c;
         }},
        {"ti-fgsm", [](AttackConfig c, const VariantParams& p) {
             c.momentum = 0.0;
             c.di_probability = 0.0;
             c.ti_kernel = p.ti_kernel;
             return c;
         }},
    };
    return variants;
}

inline AttackConfig make_variant(const std::string& name, const AttackConfig& base, const VariantParams& params = {}) {
    const auto& v = attack_variants();
    const auto it = v.find(name);
    if (it == v.end()) {
        std::string known;
        for (const auto& [k, _] : v) known += (known.empty() ? "" : ", ") + k;
        throw ArgumentError("unknown attack '" + name + "'; available: " + known);
    }
    return it->second(base, params);
}

/// Logits averaged uniformly over the ensemble.
inline Tensor ensemble_logits(std::span<const Network* const> models, const Tensor& batch) {
    if (models.empty()) throw ArgumentError("ensemble: no models");
    Tensor sum = models[0]->forward(batch);
    for (const Network* m : models.subspan(1)) sum += m->forward(batch);
    if (models.size() > 1) sum *= 1.0 / static_cast<double>(models.size());
    return sum;
}

/// Gradient of sum_s CE(mean_k logits_k(batch_s), labels_s) w.r.t. the batch.
/// Adds the summed loss to *loss_sum when given.
inline Tensor ensemble_input_gradient(std::span<const Network* const> models, const Tensor& batch,
                                      std::span<const std::size_t> labels, double* loss_sum = nullptr) {
    if (models.empty()) throw ArgumentError("ensemble: no models");
    std::vector<ForwardTrace> traces;
    traces.reserve(models.size());
    for (const Network* m : models) traces.push_back(m->trace(batch));
    Tensor avg = traces[0].logits;
    for (std::size_t k = 1; k < traces.size(); ++k) avg += traces[k].logits;
    const double share = 1.0 / static_cast<double>(models.size());
    if (models.size() > 1) avg *= share;
    if (loss_sum) {
        for (double l : cross_entropy_rows(avg, labels)) *loss_sum += l;
    }
    const Tensor dlogits = cross_entropy_grad(avg, labels, models.size() > 1 ? share : 1.0);
    Tensor grad = models[0]->backward_input(traces[0], dlogits);
    for (std::size_t k = 1; k < models.size(); ++k) grad += models[k]->backward_input(traces[k], dlogits);
    return grad.reshaped(batch.shape());
}

/// Sign-gradient attack on a batch.
///
/// Each step computes g = d/dx CE(ensemble(DI(x_t * M)), y) for the masks
/// active at that step (none, one, or the average over K), optionally
/// smooths g with a Gaussian (TI), accumulates L1-normalized g with momentum
/// (MI), then x_{t+1} = clip_[0,1](clip_{x +/- eps}(x_t + alpha * sign(g))).
///
/// `masks` is empty (no masking), one set shared by every image, or one set
/// per image. `stream_ids` names each image's random stream (default: its
/// batch index) so splitting a batch across workers does not change results.
inline AttackResult run_attack(std::span<const Network* const> models, const Tensor& x,
                               std::span<const std::size_t> labels, const AttackConfig& cfg,
                               std::span<const MaskSet> masks = {},
                               std::span<const std::uint64_t> stream_ids = {}) {
    cfg.validate();
    if (models.empty()) throw ArgumentError("run_attack: no models");
    if (x.rank() != 4) throw ShapeError("run_attack: expected a batch (N,C,H,W)");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t per = c * h * w;
    if (labels.size() != n) throw ArgumentError("run_attack: label count does not match batch");
    if (!masks.empty() && masks.size() != 1 && masks.size() != n)
        throw ArgumentError("run_attack: need 0, 1 or N mask sets");
    if (!stream_ids.empty() && stream_ids.size() != n) throw ArgumentError("run_attack: need one stream id per image");
    for (const MaskSet& set : masks) {
        if (set.masks.empty()) throw ArgumentError("run_attack: empty mask set");
        for (const PatchMask& m : set.masks) check_mask_geometry(m, x.shape());
    }
    for (double v : x.values())
        if (v < 0.0 || v > 1.0) throw ArgumentError("run_attack: input pixels must lie in [0,1]");

    auto mask_set = [&](std::size_t i) -> const MaskSet* {
        if (masks.empty()) return nullptr;
        return &masks[masks.size() == 1 ? 0 : i];
    };

    AttackResult result;
    result.adversarial = x;
    Tensor& adv = result.adversarial;
    std::vector<Tensor> accum;
    if (cfg.momentum > 0.0) accum.assign(n, Tensor({c, h, w}));

    struct Entry {
        std::size_t image;
        const PatchMask* mask;
        DiversityDraw draw;
    };

    for (std::uint32_t t = 0; t < cfg.iterations; ++t) {
        std::vector<Entry> entries;
        std::vector<Tensor> inputs;
        std::vector<std::size_t> entry_labels;
        for (std::size_t i = 0; i < n; ++i) {
            RngStream rng = cfg.rng.child(stream_ids.empty() ? i : stream_ids[i], t);
            const Tensor xi = adv.slice(i);
            auto push = [&](const PatchMask* m) {
                const DiversityDraw d = draw_diversity(rng, cfg.di_probability, h, w);
                inputs.push_back(apply_diversity(m ? apply_mask(xi, *m) : xi, d));
                entries.push_back({i, m, d});
                entry_labels.push_back(labels[i]);
            };
            if (const MaskSet* set = mask_set(i)) {
                for (const PatchMask& m : set->active(t)) push(&m);
            } else {
                push(nullptr);
            }
        }

        double loss_sum = 0.0;
        const Tensor grads = ensemble_input_gradient(models, Tensor::stack(inputs), entry_labels, &loss_sum);
        result.loss_trace.push_back(loss_sum / static_cast<double>(entries.size()));

        std::vector<Tensor> g(n, Tensor({c, h, w}));
        std::vector<std::size_t> counts(n, 0);
        for (std::size_t e = 0; e < entries.size(); ++e) {
            Tensor ge = diversity_adjoint(grads.slice(e), entries[e].draw);
            if (entries[e].mask) ge = apply_mask(ge, *entries[e].mask);
            Tensor& gi = g[entries[e].image];
            if (counts[entries[e].image]++ == 0)
                gi = std::move(ge);
            else
                gi += ge;
        }

        for (std::size_t i = 0; i < n; ++i) {
            if (counts[i] > 1) g[i] *= 1.0 / static_cast<double>(counts[i]);
            if (cfg.ti_kernel > 1) g[i] = ti_smooth(g[i], cfg.ti_kernel);
            const Tensor* direction = &g[i];
            if (cfg.momentum > 0.0) {
                double l1 = 0.0;
                for (double v : g[i].values()) l1 += std::abs(v);
                accum[i] *= cfg.momentum;
                if (l1 > 0.0) accum[i] += g[i] * (1.0 / l1);
                direction = &accum[i];
            }
            double* xa = adv.data() + i * per;
            const double* x0 = x.data() + i * per;
            for (std::size_t p = 0; p < per; ++p) {
                double v = xa[p] + cfg.alpha * sign((*direction)[p]);
                v = std::clamp(v, x0[p] - cfg.epsilon, x0[p] + cfg.epsilon);
                xa[p] = std::clamp(v, 0.0, 1.0);
            }
        }
    }

    result.evaluated_model = "white-box ensemble";
    const Tensor logits = ensemble_logits(models, adv);
    const std::size_t k = logits.dim(1);
    result.success.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        result.success[i] = argmax(std::span<const double>(logits.data() + i * k, k)) != labels[i];
    return result;
}

/// Single-model convenience overload.
inline AttackResult run_attack(const Network& model, const Tensor& x, std::span<const std::size_t> labels,
                               const AttackConfig& cfg, std::span<const MaskSet> masks = {},
                               std::span<const std::uint64_t> stream_ids = {}) {
    const Network* models[1] = {&model};
    return run_attack(std::span<const Network* const>(models), x, labels, cfg, masks, stream_ids);
}

/// Per-image misclassification flags of `model` on a batch.
inline std::vector<bool> misclassified(const Network& model, const Tensor& batch, std::span<const std::size_t> labels) {
    const auto pred = predict(model, batch);
    if (pred.size() != labels.size()) throw ArgumentError("misclassified: label count does not match batch");
    std::vector<bool> out(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) out[i] = pred[i] != labels[i];
    return out;
}

/// Fraction of images whose argmax differs from the label.
inline double success_rate(const Network& model, const Tensor& batch, std::span<const std::size_t> labels) {
    if (labels.empty()) throw ArgumentError("success_rate: empty batch");
    const auto flags = misclassified(model, batch, labels);
    return static_cast<double>(std::count(flags.begin(), flags.end(), true)) / static_cast<double>(flags.size());
}

}  // namespace lpm
