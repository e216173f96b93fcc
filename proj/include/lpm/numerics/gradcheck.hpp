#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/loss.hpp"
#include "lpm/numerics/network.hpp"

namespace lpm {

using InputGradientFn = std::function<Tensor(const Network&, const Tensor&, std::size_t)>;

struct GradCheckOptions {
    /// Denominator floor of the relative error; keeps components whose true
    /// value sits at rounding-noise level from dominating.
    double floor = 1e-6;
    /// Components to probe; empty means all of them.
    std::vector<std::size_t> components;
    /// Gradient under test; defaults to grad_wrt_input.
    InputGradientFn gradient;
};

struct GradCheckReport {
    std::vector<std::size_t> components;
    std::vector<double> analytic;
    std::vector<double> numeric;
    std::vector<double> relative_error;  // 0 for skipped components
    std::vector<bool> skipped;           // stencil straddles a ReLU/max-pool kink
    double max_relative_error = 0.0;
    std::size_t skipped_count = 0;
    bool passed = false;
};

namespace detail {

// Whether sample `s` of `tr` lies in the same piecewise-linear region (ReLU
// on/off bits and max-pool winners) as sample `b` of `base`.
inline bool same_region(const Network& net, const ForwardTrace& tr, std::size_t s, const ForwardTrace& base,
                        std::size_t b) {
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        const LayerKind kind = net.layers()[i].kind;
        if (kind == LayerKind::relu) {
            const std::size_t per = tr.inputs[i].size() / tr.batch;
            const double* v = tr.inputs[i].data() + s * per;
            const double* w = base.inputs[i].data() + b * per;
            for (std::size_t j = 0; j < per; ++j)
                if ((v[j] > 0.0) != (w[j] > 0.0)) return false;
        } else if (kind == LayerKind::max_pool) {
            const std::size_t per = tr.argmax[i].size() / tr.batch;
            if (!std::equal(tr.argmax[i].begin() + static_cast<std::ptrdiff_t>(s * per),
                            tr.argmax[i].begin() + static_cast<std::ptrdiff_t>((s + 1) * per),
                            base.argmax[i].begin() + static_cast<std::ptrdiff_t>(b * per)))
                return false;
        }
    }
    return true;
}

}  // namespace detail

/// Compares an input gradient with central differences of the cross-entropy.
///
/// relative error = |a - n| / max(|a|, |n|, floor). Components where x +/- h
/// fall in a different ReLU/max-pool region than x are not differentiable
/// across the stencil; they are reported as skipped and excluded from the max.
inline GradCheckReport finite_difference_check(const Network& net, const Tensor& x, std::size_t label,
                                               double h, double tol, const GradCheckOptions& opts = {}) {
    if (!(h > 0.0)) throw ArgumentError("finite_difference_check: h must be > 0");
    const Tensor analytic = opts.gradient ? opts.gradient(net, x, label) : grad_wrt_input(net, x, label);
    if (analytic.size() != x.size()) throw ShapeError("finite_difference_check: gradient shape mismatch");

    GradCheckReport r;
    r.components = opts.components;
    if (r.components.empty()) {
        r.components.resize(x.size());
        std::iota(r.components.begin(), r.components.end(), std::size_t{0});
    }
    const std::size_t m = r.components.size();
    r.analytic.resize(m);
    r.numeric.resize(m);
    r.relative_error.assign(m, 0.0);
    r.skipped.assign(m, false);

    const ActShape in = net.input_shape();
    const Tensor single = x.reshaped({1, in.c, in.h, in.w});
    const ForwardTrace base = net.trace(single);

    constexpr std::size_t chunk = 32;  // components per batched evaluation
    for (std::size_t start = 0; start < m; start += chunk) {
        const std::size_t count = std::min(chunk, m - start);
        Tensor probes({2 * count, in.c, in.h, in.w});
        std::vector<std::size_t> labels(2 * count, label);
        for (std::size_t j = 0; j < count; ++j) {
            const std::size_t c = r.components[start + j];
            if (c >= x.size()) throw ArgumentError("finite_difference_check: component out of range");
            probes.set_slice(2 * j, single.slice(0));
            probes.set_slice(2 * j + 1, single.slice(0));
            probes[(2 * j) * x.size() + c] += h;
            probes[(2 * j + 1) * x.size() + c] -= h;
        }
        const ForwardTrace tr = net.trace(probes);
        const auto losses = cross_entropy_rows(tr.logits, labels);
        for (std::size_t j = 0; j < count; ++j) {
            const std::size_t idx = start + j;
            r.analytic[idx] = analytic[r.components[idx]];
            r.numeric[idx] = (losses[2 * j] - losses[2 * j + 1]) / (2.0 * h);
            if (!detail::same_region(net, tr, 2 * j, base, 0) || !detail::same_region(net, tr, 2 * j + 1, base, 0)) {
                r.skipped[idx] = true;
                ++r.skipped_count;
                continue;
            }
            const double a = r.analytic[idx], n = r.numeric[idx];
            r.relative_error[idx] = std::abs(a - n) / std::max({std::abs(a), std::abs(n), opts.floor});
            r.max_relative_error = std::max(r.max_relative_error, r.relative_error[idx]);
        }
    }
    r.passed = r.max_relative_error < tol;
    return r;
}

}  // namespace lpm
