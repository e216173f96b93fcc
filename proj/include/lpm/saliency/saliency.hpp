#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/loss.hpp"
#include "lpm/numerics/network.hpp"
#include "lpm/numerics/rng.hpp"

namespace lpm {

/// Nonnegative (H,W) attribution map.
struct SaliencyMap {
    Tensor values;
    std::string model;
    std::size_t samples = 0;
    double sigma = 0.0;

    std::size_t height() const { return values.dim(0); }
    std::size_t width() const { return values.dim(1); }
};

/// SmoothGrad: mean over `samples` noisy copies x + N(0, sigma^2) of
/// |d CE / dx|, then the maximum over channels. Noise for copy s comes from
/// rng.child(s).
inline SaliencyMap smoothgrad(const Network& model, const Tensor& x, std::size_t label, std::size_t samples,
                              double sigma, const RngStream& rng, std::string model_id = {}) {
    if (samples < 1) throw ArgumentError("smoothgrad: samples must be >= 1");
    if (!(sigma >= 0.0)) throw ArgumentError("smoothgrad: sigma must be >= 0");
    if (x.rank() != 3) throw ShapeError("smoothgrad: expected a (C,H,W) image");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), per = x.size();

    Tensor noisy({samples, c, h, w});
    for (std::size_t s = 0; s < samples; ++s) {
        RngStream r = rng.child(s);
        for (std::size_t p = 0; p < per; ++p) noisy[s * per + p] = x[p] + (sigma > 0.0 ? sigma * r.normal() : 0.0);
    }
    const std::vector<std::size_t> labels(samples, label);
    const Tensor g = grad_wrt_input(model, noisy, labels);

    std::vector<double> mean(per, 0.0);
    for (std::size_t s = 0; s < samples; ++s)
        for (std::size_t p = 0; p < per; ++p) mean[p] += std::abs(g[s * per + p]);
    for (double& v : mean) v /= static_cast<double>(samples);

    SaliencyMap map;
    map.values = Tensor({h, w});
    for (std::size_t p = 0; p < h * w; ++p) {
        double best = mean[p];
        for (std::size_t ch = 1; ch < c; ++ch) best = std::max(best, mean[ch * h * w + p]);
        map.values[p] = best;
    }
    map.model = std::move(model_id);
    map.samples = samples;
    map.sigma = sigma;
    return map;
}

enum class ThresholdRule { mean_plus_std, top_quantile };
enum class Connectivity { four = 4, eight = 8 };

struct GraphOptions {
    ThresholdRule rule = ThresholdRule::mean_plus_std;
    double quantile = 0.1;  // fraction of pixels kept by top_quantile
    Connectivity connectivity = Connectivity::eight;
};

/// Undirected graph over salient pixels. neighbors[i] is sorted ascending.
struct SaliencyGraph {
    std::size_t height = 0, width = 0;
    std::vector<std::pair<std::size_t, std::size_t>> vertices;  // (row, col), row-major order
    std::vector<std::vector<std::size_t>> neighbors;

    std::size_t size() const noexcept { return vertices.size(); }
    std::size_t degree(std::size_t i) const { return neighbors.at(i).size(); }
    bool adjacent(std::size_t a, std::size_t b) const {
        return std::binary_search(neighbors[a].begin(), neighbors[a].end(), b);
    }
};

/// Pixel threshold of a map: mean + population std, or the value of the
/// ceil(q*N)-th largest pixel for the quantile rule.
inline double saliency_threshold(const SaliencyMap& map, const GraphOptions& opt) {
    const auto v = map.values.values();
    const double n = static_cast<double>(v.size());
    if (opt.rule == ThresholdRule::mean_plus_std) {
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        return mean + std::sqrt(var / n);
    }
    if (!(opt.quantile > 0.0 && opt.quantile <= 1.0)) throw ArgumentError("saliency: quantile must be in (0,1]");
    std::vector<double> sorted(v.begin(), v.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    const auto k = static_cast<std::size_t>(std::ceil(opt.quantile * n));
    return sorted[std::max<std::size_t>(k, 1) - 1];
}

/// Vertices are pixels strictly above the mean+std threshold (or at least
/// the quantile threshold and nonzero); edges join vertices that touch
/// under the chosen connectivity.
inline SaliencyGraph build_graph(const SaliencyMap& map, const GraphOptions& opt = {}) {
    if (map.values.rank() != 2) throw ShapeError("build_graph: saliency map must be (H,W)");
    map.values.require_finite("build_graph");
    const std::size_t h = map.height(), w = map.width();
    const double t = saliency_threshold(map, opt);

    SaliencyGraph g;
    g.height = h;
    g.width = w;
    std::vector<std::ptrdiff_t> id(h * w, -1);
    for (std::size_t p = 0; p < h * w; ++p) {
        const double v = map.values[p];
        const bool keep = opt.rule == ThresholdRule::mean_plus_std ? v > t : (v >= t && v > 0.0);
        if (!keep) continue;
        id[p] = static_cast<std::ptrdiff_t>(g.vertices.size());
        g.vertices.emplace_back(p / w, p % w);
    }
    g.neighbors.resize(g.vertices.size());
    const bool diag = opt.connectivity == Connectivity::eight;
    for (std::size_t i = 0; i < g.vertices.size(); ++i) {
        const auto [r, c] = g.vertices[i];
        for (int dr = -1; dr <= 1; ++dr)
            for (int dc = -1; dc <= 1; ++dc) {
                if (dr == 0 && dc == 0) continue;
                if (!diag && dr != 0 && dc != 0) continue;
                const auto rr = static_cast<std::ptrdiff_t>(r) + dr, cc = static_cast<std::ptrdiff_t>(c) + dc;
                if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(h) || cc >= static_cast<std::ptrdiff_t>(w))
                    continue;
                const std::ptrdiff_t j = id[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
                if (j >= 0) g.neighbors[i].push_back(static_cast<std::size_t>(j));
            }
        std::sort(g.neighbors[i].begin(), g.neighbors[i].end());
    }
    return g;
}

struct ClusteringResult {
    double mean = 0.0;               // C
    std::vector<double> per_vertex;  // C_i
    bool empty = true;               // N == 0; mean is then 0
};

/// C_i = 2 e_i / (k_i (k_i - 1)) with e_i the edges among i's neighbors, and
/// C_i = 0 when k_i < 2. C averages C_i over all vertices.
inline ClusteringResult clustering_coefficient(const SaliencyGraph& g) {
    ClusteringResult out;
    out.per_vertex.resize(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& nb = g.neighbors[i];
        const std::size_t k = nb.size();
        if (k < 2) continue;
        std::size_t links = 0;
        for (std::size_t a = 0; a < k; ++a)
            for (std::size_t b = a + 1; b < k; ++b) links += g.adjacent(nb[a], nb[b]);
        out.per_vertex[i] = 2.0 * static_cast<double>(links) / (static_cast<double>(k) * static_cast<double>(k - 1));
    }
    out.empty = g.size() == 0;
    if (!out.empty)
        out.mean = std::accumulate(out.per_vertex.begin(), out.per_vertex.end(), 0.0) / static_cast<double>(g.size());
    return out;
}

}  // namespace lpm
