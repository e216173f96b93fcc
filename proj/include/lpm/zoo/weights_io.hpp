#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lpm/binary_io.hpp"
#include "lpm/data/idx.hpp"
#include "lpm/zoo/architectures.hpp"

namespace lpm {

// Layout (little-endian): "LPMW" u32 version | str name | str architecture |
// u32 c,h,w | u32 layer count, per layer u8 kind + 7 u32 fields |
// u64 seed, u32 epochs, f64 accuracy, u8 adversarial, u8 role |
// per parameterized layer: weight tensor, bias tensor | u64 FNV-1a checksum.
inline constexpr std::uint32_t kWeightFileVersion = 1;

inline std::vector<std::uint8_t> serialize_model(const ModelHandle& m) {
    BlobWriter w("LPMW", kWeightFileVersion);
    w.str(m.name);
    w.str(m.architecture);
    const ActShape in = m.network.input_shape();
    w.u32(static_cast<std::uint32_t>(in.c));
    w.u32(static_cast<std::uint32_t>(in.h));
    w.u32(static_cast<std::uint32_t>(in.w));
    const auto& layers = m.network.layers();
    w.u32(static_cast<std::uint32_t>(layers.size()));
    for (const LayerSpec& l : layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        for (std::size_t v : {l.in_channels, l.out_channels, l.kernel, l.stride, l.padding, l.in_features,
                              l.out_features})
            w.u32(static_cast<std::uint32_t>(v));
    }
    w.u64(m.meta.seed);
    w.u32(m.meta.epochs);
    w.f64(m.meta.test_accuracy);
    w.u8(m.meta.adversarial ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(m.role));
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (!layers[i].has_params()) continue;
        w.tensor(m.network.weight(i));
        w.tensor(m.network.bias(i));
    }
    return std::move(w).finish();
}

inline ModelHandle deserialize_model(std::span<const std::uint8_t> bytes) {
    BlobReader r(bytes, "LPMW", kWeightFileVersion, "weight file");
    ModelHandle m;
    m.name = r.str();
    m.architecture = r.str();
    ActShape in;
    in.c = r.u32();
    in.h = r.u32();
    in.w = r.u32();
    const std::uint32_t count = r.u32();
    std::vector<LayerSpec> layers(count);
    for (LayerSpec& l : layers) {
        const std::uint8_t kind = r.u8();
        if (kind > static_cast<std::uint8_t>(LayerKind::flatten))
            throw ParseError("weight file: unknown layer kind", r.offset() - 1);
        l.kind = static_cast<LayerKind>(kind);
        for (std::size_t* f : {&l.in_channels, &l.out_channels, &l.kernel, &l.stride, &l.padding, &l.in_features,
                               &l.out_features})
            *f = r.u32();
    }
    m.network = Network(in, std::move(layers));
    m.meta.seed = r.u64();
    m.meta.epochs = r.u32();
    m.meta.test_accuracy = r.f64();
    m.meta.adversarial = r.u8() != 0;
    const std::uint8_t role = r.u8();
    if (role > static_cast<std::uint8_t>(Role::defended_target))
        throw ParseError("weight file: unknown role", r.offset() - 1);
    m.role = static_cast<Role>(role);
    for (std::size_t i = 0; i < m.network.layers().size(); ++i) {
        if (!m.network.layers()[i].has_params()) continue;
        Tensor w = r.tensor();
        Tensor b = r.tensor();
        if (w.shape() != m.network.weight(i).shape() || b.shape() != m.network.bias(i).shape())
            throw ParseError("weight file: parameter shape mismatch at layer " + std::to_string(i), r.offset());
        m.network.weight(i) = std::move(w);
        m.network.bias(i) = std::move(b);
    }
    if (!r.at_end()) throw ParseError("weight file: trailing bytes", r.offset());
    return m;
}

inline void save(const ModelHandle& m, const std::filesystem::path& path) {
    write_file_bytes(path, serialize_model(m));
}

inline ModelHandle load(const std::filesystem::path& path) { return deserialize_model(read_file_bytes(path)); }

}  // namespace lpm
