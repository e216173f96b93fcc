#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

#include "lpm/data/dataset.hpp"
#include "lpm/error.hpp"
#include "lpm/numerics/rng.hpp"

namespace lpm {

/// Rendering knobs of the synthetic shape dataset.
struct SynthStyle {
    std::size_t side = 32;
    double background_max = 0.3;    // uniform background level per image
    double ink_min = 0.15;          // stroke contrast above the background
    double ink_max = 0.32;
    double noise_sigma = 0.05;      // per-pixel Gaussian noise
    std::size_t clutter_strokes = 2;// class-independent distractor strokes
    double clutter_ink = 0.2;
    double jitter = 3.0;            // center offset range in pixels
};

namespace detail {

struct Segment {
    double x0, y0, x1, y1;
};

inline double segment_distance(const Segment& s, double px, double py) {
    const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = s.x0 + t * dx - px, ey = s.y0 + t * dy - py;
    return std::sqrt(ex * ex + ey * ey);
}

// Strokes of one class shape centered at (cx, cy) with half-extent r.
inline std::vector<Segment> class_strokes(std::size_t label, double cx, double cy, double r) {
    const double h = r * 0.5;
    switch (label % 10) {
        case 0: return {{cx - r, cy, cx + r, cy}};                                   // horizontal bar
        case 1: return {{cx, cy - r, cx, cy + r}};                                   // vertical bar
        case 2: return {{cx - r, cy + r, cx + r, cy - r}};                           // rising diagonal
        case 3: return {{cx - r, cy - r, cx + r, cy + r}};                           // falling diagonal
        case 4:                                                                      // box outline
            return {{cx - r, cy - r, cx + r, cy - r}, {cx + r, cy - r, cx + r, cy + r},
                    {cx + r, cy + r, cx - r, cy + r}, {cx - r, cy + r, cx - r, cy - r}};
        case 5: return {{cx - r, cy, cx + r, cy}, {cx, cy - r, cx, cy + r}};         // plus
        case 6: return {{cx - r, cy - r, cx + r, cy + r}, {cx - r, cy + r, cx + r, cy - r}};  // X
        case 7: {                                                                    // ring
            std::vector<Segment> ring;
            constexpr int pieces = 16;
            for (int i = 0; i < pieces; ++i) {
                const double a0 = 2.0 * std::numbers::pi * i / pieces, a1 = 2.0 * std::numbers::pi * (i + 1) / pieces;
                ring.push_back({cx + 0.8 * r * std::cos(a0), cy + 0.8 * r * std::sin(a0),
                                cx + 0.8 * r * std::cos(a1), cy + 0.8 * r * std::sin(a1)});
            }
            return ring;
        }
        case 8: return {{cx - r, cy - h, cx + r, cy - h}, {cx - r, cy + h, cx + r, cy + h}};  // double bar
        default: return {{cx - r, cy - r, cx - r, cy + r}, {cx - r, cy + r, cx + r, cy + r}}; // L corner
    }
}

inline void draw(std::vector<double>& canvas, std::size_t side, const std::vector<Segment>& strokes,
                 double thickness, double ink) {
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            double d = 1e9;
            for (const Segment& s : strokes)
                d = std::min(d, segment_distance(s, static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5));
            const double cover = std::clamp(thickness * 0.5 - d + 0.5, 0.0, 1.0);
            double& px = canvas[y * side + x];
            px = std::max(px, ink * cover);
        }
}

}  // namespace detail

/// Deterministic dataset of class-specific stroke shapes (bars, boxes,
/// crosses, ring, ...) with position/size jitter, distractor strokes, and
/// pixel noise. Image i depends only on (rng identity, i).
inline Dataset synth_generate(const RngStream& rng, std::size_t n, std::size_t classes = 10,
                              const SynthStyle& style = {}, Split split = Split::train) {
    if (n == 0) throw ArgumentError("synth_generate: n must be > 0");
    if (classes == 0 || classes > 10) throw ArgumentError("synth_generate: classes must be in [1,10]");
    const std::size_t side = style.side;
    const double mid = static_cast<double>(side) / 2.0;
    const double scale = static_cast<double>(side) / 32.0;

    Dataset d;
    d.num_classes = classes;
    d.split = split;
    d.images = Tensor({n, 1, side, side});
    d.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        RngStream r = rng.child(i);
        const std::size_t label = static_cast<std::size_t>(r.below(classes));
        d.labels[i] = label;

        const double background = r.uniform(0.0, style.background_max);
        std::vector<double> canvas(side * side, 0.0);
        for (std::size_t k = 0; k < style.clutter_strokes; ++k) {
            const double x0 = r.uniform(0.0, static_cast<double>(side));
            const double y0 = r.uniform(0.0, static_cast<double>(side));
            const double angle = r.uniform(0.0, 2.0 * std::numbers::pi);
            const double len = r.uniform(3.0, 6.0) * scale;
            detail::draw(canvas, side, {{x0, y0, x0 + len * std::cos(angle), y0 + len * std::sin(angle)}},
                         1.5 * scale, style.clutter_ink * r.uniform(0.6, 1.0));
        }
        const double cx = mid + r.uniform(-style.jitter, style.jitter) * scale;
        const double cy = mid + r.uniform(-style.jitter, style.jitter) * scale;
        const double radius = r.uniform(7.0, 10.0) * scale;
        const double thickness = r.uniform(2.0, 3.0) * scale;
        const double ink = r.uniform(style.ink_min, style.ink_max);
        detail::draw(canvas, side, detail::class_strokes(label, cx, cy, radius), thickness, ink);

        for (std::size_t p = 0; p < canvas.size(); ++p)
            d.images[i * side * side + p] = std::clamp(background + canvas[p] + style.noise_sigma * r.normal(), 0.0, 1.0);
    }
    return d;
}

}  // namespace lpm
