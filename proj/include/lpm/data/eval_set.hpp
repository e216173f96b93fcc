#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lpm/data/dataset.hpp"
#include "lpm/error.hpp"
#include "lpm/numerics/loss.hpp"
#include "lpm/numerics/network.hpp"
#include "lpm/numerics/rng.hpp"

namespace lpm {

/// Indices of images that every model classifies correctly, ascending.
inline std::vector<std::size_t> correctly_classified(std::span<const Network* const> models, const Dataset& data) {
    std::vector<bool> ok(data.size(), true);
    for (const Network* m : models) {
        const auto pred = predict(*m, data.images);
        for (std::size_t i = 0; i < data.size(); ++i) ok[i] = ok[i] && pred[i] == data.labels[i];
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (ok[i]) idx.push_back(i);
    return idx;
}

/// Dataset positions of n images that all `models` classify correctly,
/// drawn without replacement and sorted ascending. With no models the first
/// n positions are taken unfiltered.
inline std::vector<std::size_t> select_eval_indices(std::span<const Network* const> models, const Dataset& data,
                                                    std::size_t n, RngStream rng) {
    if (n == 0) throw ArgumentError("select_eval_set: n must be > 0");
    if (models.empty()) {
        if (data.size() < n)
            throw ArgumentError("select_eval_set: requested " + std::to_string(n) + " images, dataset has " +
                                std::to_string(data.size()));
        std::vector<std::size_t> first(n);
        std::iota(first.begin(), first.end(), std::size_t{0});
        return first;
    }
    std::vector<std::size_t> pool = correctly_classified(models, data);
    if (pool.size() < n)
        throw ArgumentError("select_eval_set: only " + std::to_string(pool.size()) +
                            " images are correctly classified by every model, need " + std::to_string(n));
    rng.shuffle(std::span<std::size_t>(pool));
    pool.resize(n);
    std::sort(pool.begin(), pool.end());
    return pool;
}

inline Dataset select_eval_set(std::span<const Network* const> models, const Dataset& data, std::size_t n,
                               RngStream rng) {
    return data.subset(select_eval_indices(models, data, n, rng), Split::eval);
}

}  // namespace lpm
