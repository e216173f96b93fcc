#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/network.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

namespace detail {

inline void check_label(std::size_t label, std::size_t classes) {
    if (label >= classes)
        throw ArgumentError("label " + std::to_string(label) + " out of range for " +
                            std::to_string(classes) + " classes");
}

inline double log_sum_exp(const double* z, std::size_t k) {
    const double m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += std::exp(z[i] - m);
    return m + std::log(s);
}

}  // namespace detail

/// -log softmax(logits)[label] for a single logit vector.
inline double cross_entropy(std::span<const double> logits, std::size_t label) {
    if (logits.empty()) throw ArgumentError("cross_entropy: empty logits");
    detail::check_label(label, logits.size());
    const double m = *std::max_element(logits.begin(), logits.end());
    double rest = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (i != label) rest += std::exp(logits[i] - m);
    if (logits[label] == m) return std::log1p(rest);
    return (m - logits[label]) + std::log(std::exp(logits[label] - m) + rest);
}

/// Per-row cross-entropy of an (N, K) logit matrix.
inline std::vector<double> cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> labels) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ArgumentError("cross_entropy: label count does not match batch");
    std::vector<double> out(n);
    for (std::size_t s = 0; s < n; ++s)
        out[s] = cross_entropy(std::span<const double>(logits.data() + s * k, k), labels[s]);
    return out;
}

inline std::vector<double> softmax(std::span<const double> logits) {
    const double lse = detail::log_sum_exp(logits.data(), logits.size());
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(logits[i] - lse);
    return p;
}

/// d(sum_s scale * CE_s)/d logits = scale * (softmax - onehot), row by row.
inline Tensor cross_entropy_grad(const Tensor& logits, std::span<const std::size_t> labels, double scale = 1.0) {
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != n) throw ArgumentError("cross_entropy_grad: label count does not match batch");
    Tensor g({n, k});
    for (std::size_t s = 0; s < n; ++s) {
        detail::check_label(labels[s], k);
        const auto p = softmax(std::span<const double>(logits.data() + s * k, k));
        double others = 0.0;
        for (std::size_t i = 0; i < k; ++i)
            if (i != labels[s]) {
                g[s * k + i] = scale * p[i];
                others += p[i];
            }
        g[s * k + labels[s]] = -scale * others;
    }
    return g;
}

inline std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

inline std::vector<std::size_t> predict(const Network& net, const Tensor& batch) {
    const Tensor logits = net.forward(batch);
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    std::vector<std::size_t> out(n);
    for (std::size_t s = 0; s < n; ++s) out[s] = argmax(std::span<const double>(logits.data() + s * k, k));
    return out;
}

/// Gradient of the summed per-image cross-entropy w.r.t. a batch (N,C,H,W).
/// Each image's gradient equals its own single-image gradient.
inline Tensor grad_wrt_input(const Network& net, const Tensor& batch, std::span<const std::size_t> labels) {
    const ForwardTrace tr = net.trace(batch);
    const Tensor dlogits = cross_entropy_grad(tr.logits, labels);
    return net.backward_input(tr, dlogits).reshaped(batch.shape());
}

/// Single-image convenience: x is (C,H,W).
inline Tensor grad_wrt_input(const Network& net, const Tensor& x, std::size_t label) {
    const std::size_t labels[1] = {label};
    return grad_wrt_input(net, x, std::span<const std::size_t>(labels));
}

inline double loss(const Network& net, const Tensor& x, std::size_t label) {
    const Tensor logits = net.forward(x);
    return cross_entropy(logits.values(), label);
}

}  // namespace lpm
