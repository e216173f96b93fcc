#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/rng.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

inline double sign(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// One draw of the input-diversity transform: nearest-neighbour resize of the
/// whole image to (rows x cols), placed at (top, left) on a zero canvas of the
/// original size. `applied == false` means identity.
struct DiversityDraw {
    bool applied = false;
    std::size_t rows = 0, cols = 0, top = 0, left = 0;
};

/// The resized height is uniform on [round(side * 299/330), side], i.e. the
/// scale range of the classic 299 -> [299,330) resize-and-pad recipe.
inline DiversityDraw draw_diversity(RngStream& rng, double probability, std::size_t height, std::size_t width) {
    DiversityDraw d;
    if (probability <= 0.0) return d;
    if (!rng.bernoulli(probability)) return d;
    const std::size_t lo = (height * 299 + 165) / 330;
    const std::size_t rows = lo + static_cast<std::size_t>(rng.below(height - lo + 1));
    const std::size_t cols = std::max<std::size_t>(1, (rows * width + height / 2) / height);
    d.applied = true;
    d.rows = rows;
    d.cols = std::min(cols, width);
    d.top = static_cast<std::size_t>(rng.below(height - d.rows + 1));
    d.left = static_cast<std::size_t>(rng.below(width - d.cols + 1));
    return d;
}

/// Applies a draw to a (C,H,W) image.
inline Tensor apply_diversity(const Tensor& x, const DiversityDraw& d) {
    if (!d.applied) return x;
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < d.rows; ++i) {
            const std::size_t sy = i * h / d.rows;
            for (std::size_t j = 0; j < d.cols; ++j) {
                const std::size_t sx = j * w / d.cols;
                out[(ch * h + d.top + i) * w + d.left + j] = x[(ch * h + sy) * w + sx];
            }
        }
    return out;
}

/// Adjoint of apply_diversity: routes output gradients back to source pixels.
inline Tensor diversity_adjoint(const Tensor& g, const DiversityDraw& d) {
    if (!d.applied) return g;
    const std::size_t c = g.dim(0), h = g.dim(1), w = g.dim(2);
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < d.rows; ++i) {
            const std::size_t sy = i * h / d.rows;
            for (std::size_t j = 0; j < d.cols; ++j) {
                const std::size_t sx = j * w / d.cols;
                out[(ch * h + sy) * w + sx] += g[(ch * h + d.top + i) * w + d.left + j];
            }
        }
    return out;
}

/// Input diversity: with `probability`, shrink-resize and randomly zero-pad
/// back to the original size; otherwise return x unchanged. x is (C,H,W).
inline Tensor di_transform(const Tensor& x, double probability, RngStream& rng) {
    if (probability < 0.0 || probability > 1.0) throw ArgumentError("di_transform: probability must be in [0,1]");
    if (x.rank() != 3) throw ShapeError("di_transform: expected a (C,H,W) image");
    return apply_diversity(x, draw_diversity(rng, probability, x.dim(1), x.dim(2)));
}

/// Normalized k x k Gaussian with sigma = (k - 1) / 6 (the kernel spans +/-3 sigma).
inline std::vector<double> gaussian_kernel(std::size_t k) {
    if (k % 2 == 0) throw ArgumentError("gaussian kernel size must be odd, got " + std::to_string(k));
    if (k == 1) return {1.0};
    const double sigma = static_cast<double>(k - 1) / 6.0;
    const double r = static_cast<double>(k / 2);
    std::vector<double> kern(k * k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
            const double dy = static_cast<double>(i) - r, dx = static_cast<double>(j) - r;
            kern[i * k + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += kern[i * k + j];
        }
    for (double& v : kern) v /= total;
    return kern;
}

/// Channelwise same-size convolution of a (C,H,W) gradient with a normalized
/// Gaussian. Borders replicate the nearest pixel so constant fields are fixed points.
inline Tensor ti_smooth(const Tensor& grad, std::size_t kernel_size) {
    const auto kern = gaussian_kernel(kernel_size);
    if (kernel_size == 1) return grad;
    if (grad.rank() != 3) throw ShapeError("ti_smooth: expected a (C,H,W) gradient");
    const std::size_t c = grad.dim(0), h = grad.dim(1), w = grad.dim(2);
    const auto r = static_cast<std::ptrdiff_t>(kernel_size / 2);
    const auto k = static_cast<std::ptrdiff_t>(kernel_size);
    Tensor out({c, h, w});
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::ptrdiff_t y = 0; y < static_cast<std::ptrdiff_t>(h); ++y)
            for (std::ptrdiff_t x = 0; x < static_cast<std::ptrdiff_t>(w); ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t i = 0; i < k; ++i) {
                    const auto sy = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + i - r, 0, static_cast<std::ptrdiff_t>(h) - 1));
                    for (std::ptrdiff_t j = 0; j < k; ++j) {
                        const auto sx = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(x + j - r, 0, static_cast<std::ptrdiff_t>(w) - 1));
                        acc += kern[static_cast<std::size_t>(i * k + j)] * grad[(ch * h + sy) * w + sx];
                    }
                }
                out[(ch * h + static_cast<std::size_t>(y)) * w + static_cast<std::size_t>(x)] = acc;
            }
    return out;
}

}  // namespace lpm
