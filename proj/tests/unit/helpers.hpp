#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lpm/numerics/network.hpp"
#include "lpm/numerics/rng.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm::test {

inline Tensor random_tensor(Shape shape, RngStream rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline Network random_network(ActShape in, std::vector<LayerSpec> layers, std::uint64_t seed) {
    Network net(in, std::move(layers));
    net.initialize(RngStream(seed, 99));
    RngStream r(seed, 100);
    for (std::size_t i = 0; i < net.layers().size(); ++i)
        if (net.layers()[i].has_params())
            for (double& b : net.bias(i).values()) b = r.uniform(-0.1, 0.1);
    return net;
}

/// Small conv net on 1x8x8 inputs.
inline Network tiny_conv(std::uint64_t seed, std::size_t classes = 3) {
    using L = LayerSpec;
    return random_network({1, 8, 8},
                          {L::convolution(1, 3, 3, 1, 1), L::relu(), L::max_pool(2), L::flatten(),
                           L::affine(3 * 4 * 4, classes)},
                          seed);
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace lpm::test
