#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/network.hpp"
#include "lpm/numerics/rng.hpp"

namespace lpm {

enum class Role : std::uint8_t { unassigned, source, simulated, target, defended_target };

inline const char* to_string(Role r) {
    switch (r) {
        case Role::unassigned: return "unassigned";
        case Role::source: return "source";
        case Role::simulated: return "simulated";
        case Role::target: return "target";
        case Role::defended_target: return "defended-target";
    }
    return "?";
}

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::uint32_t epochs = 0;
    double test_accuracy = 0.0;
    bool adversarial = false;
};

/// A classifier plus the bookkeeping the experiments need.
struct ModelHandle {
    std::string name;           // unique within an experiment, e.g. "lenet" or "lenet-adv"
    std::string architecture;   // one of architecture_ids()
    Network network;
    Role role = Role::unassigned;
    TrainingMeta meta;
};

/// Desk-scale architectures for 1x32x32 inputs. They differ in depth, width,
/// pooling and receptive field so each attends to somewhat different pixels.
inline const std::vector<std::string>& architecture_ids() {
    static const std::vector<std::string> ids{"conv-small", "conv-wide", "conv-deep",  "pool-variant",
                                              "mlp",        "lenet",     "conv-strided"};
    return ids;
}

inline std::vector<LayerSpec> architecture_layers(std::string_view id, std::size_t classes = 10) {
    using L = LayerSpec;
    if (id == "conv-small")
        return {L::convolution(1, 8, 3, 1, 1), L::relu(),  L::max_pool(2),
                L::convolution(8, 16, 3, 1, 1), L::relu(), L::max_pool(2),
                L::flatten(),                   L::affine(16 * 8 * 8, classes)};
    if (id == "conv-wide")
        return {L::convolution(1, 12, 5, 1, 2), L::relu(), L::max_pool(2),
                L::convolution(12, 24, 3, 1, 1), L::relu(), L::max_pool(2),
                L::flatten(), L::affine(24 * 8 * 8, 32), L::relu(), L::affine(32, classes)};
    if (id == "conv-deep")
        return {L::convolution(1, 8, 3, 1, 1),  L::relu(), L::convolution(8, 8, 3, 1, 1),   L::relu(),
                L::max_pool(2),                 L::convolution(8, 16, 3, 1, 1), L::relu(),
                L::convolution(16, 16, 3, 1, 1), L::relu(), L::max_pool(2),
                L::convolution(16, 16, 3, 1, 1), L::relu(), L::max_pool(2),
                L::flatten(),                   L::affine(16 * 4 * 4, classes)};
    if (id == "pool-variant")
        return {L::convolution(1, 12, 5, 2, 2), L::relu(), L::average_pool(2),
                L::convolution(12, 24, 3, 1, 1), L::relu(), L::average_pool(2),
                L::flatten(), L::affine(24 * 4 * 4, classes)};
    if (id == "mlp")
        return {L::flatten(), L::affine(32 * 32, 128), L::relu(), L::affine(128, 64), L::relu(),
                L::affine(64, classes)};
    if (id == "lenet")
        return {L::convolution(1, 6, 5), L::relu(), L::average_pool(2), L::convolution(6, 16, 5), L::relu(),
                L::average_pool(2), L::flatten(), L::affine(16 * 5 * 5, 120), L::relu(), L::affine(120, 84),
                L::relu(), L::affine(84, classes)};
    if (id == "conv-strided")
        return {L::convolution(1, 16, 4, 2, 1), L::relu(), L::convolution(16, 32, 4, 2, 1), L::relu(),
                L::flatten(), L::affine(32 * 8 * 8, classes)};

    std::string known;
    for (const auto& a : architecture_ids()) known += (known.empty() ? "" : ", ") + a;
    throw ArgumentError("unknown architecture '" + std::string(id) + "'; available: " + known);
}

/// Untrained model with He-initialized weights drawn from (seed, architecture).
inline ModelHandle build(std::string_view architecture, std::uint64_t seed, std::string name = {},
                         std::size_t classes = 10) {
    ModelHandle m;
    m.architecture = std::string(architecture);
    m.name = name.empty() ? m.architecture : std::move(name);
    m.network = Network({1, 32, 32}, architecture_layers(architecture, classes));
    std::uint64_t tag = 0;
    for (char c : m.architecture) tag = tag * 131 + static_cast<unsigned char>(c);
    m.network.initialize(RngStream(seed, 0x1417).child(tag));
    m.meta.seed = seed;
    return m;
}

}  // namespace lpm
