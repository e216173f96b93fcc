#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "lpm/binary_io.hpp"
#include "lpm/data/idx.hpp"
#include "lpm/error.hpp"
#include "lpm/lpm/mask.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    return {bytes.begin(), bytes.end()};
}

/// Fixed-point decimal with `digits` fractional digits.
inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// Minimal CSV builder; fields never contain commas or quotes here.
class Csv {
public:
    explicit Csv(std::vector<std::string> header) : width_(header.size()) { row(header); }

    void row(const std::vector<std::string>& fields) {
        if (fields.size() != width_) throw ArgumentError("csv: row width does not match header");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) text_ += ',';
            text_ += fields[i];
        }
        text_ += '\n';
    }

    const std::string& str() const noexcept { return text_; }
    void save(const std::filesystem::path& path) const { write_text(path, text_); }

private:
    std::size_t width_;
    std::string text_;
};

/// Binary PGM (P5) of an (H,W) map scaled so its maximum becomes 255.
inline void write_pgm(const std::filesystem::path& path, const Tensor& map, double scale_max = 0.0) {
    if (map.rank() != 2) throw ShapeError("write_pgm: expected (H,W)");
    const double top = scale_max > 0.0 ? scale_max : map.max_abs();
    std::string out = "P5\n" + std::to_string(map.dim(1)) + " " + std::to_string(map.dim(0)) + "\n255\n";
    for (double v : map.values()) {
        const double s = top > 0.0 ? std::clamp(v / top, 0.0, 1.0) : 0.0;
        out += static_cast<char>(static_cast<std::uint8_t>(std::lround(s * 255.0)));
    }
    write_text(path, out);
}

/// Masks learned for one eval image.
struct ImageMasks {
    std::size_t test_index = 0;
    std::size_t label = 0;
    std::vector<PatchMask> masks;
    std::vector<double> best_phi;          // per generation
    std::vector<PatchMask> evolution;      // best mask per generation

    friend bool operator==(const ImageMasks&, const ImageMasks&) = default;
};

inline constexpr std::uint32_t kMaskFileVersion = 1;

namespace io_detail {

inline void put_mask(BlobWriter& w, const PatchMask& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.u32(static_cast<std::uint32_t>(m.patch_size()));
    for (std::uint8_t c : m.grid()) w.u8(c);
}

inline PatchMask get_mask(BlobReader& r) {
    const std::size_t rows = r.u32(), cols = r.u32(), patch = r.u32();
    if (rows * cols > (1u << 20)) throw ParseError("mask file: implausible grid size", r.offset());
    std::vector<std::uint8_t> cells(rows * cols);
    for (auto& c : cells) {
        c = r.u8();
        if (c > 1) throw ParseError("mask file: cell value is not 0 or 1", r.offset() - 1);
    }
    return PatchMask(rows, cols, patch, std::move(cells));
}

}  // namespace io_detail

// Layout (little-endian): "LPMM" u32 version | u32 image count | per image:
// u64 test index, u32 label, u32 K, K masks, u32 G, G f64 best phi, G masks |
// u64 FNV-1a checksum. A mask is u32 rows, u32 cols, u32 patch, rows*cols u8.
inline std::vector<std::uint8_t> serialize_masks(std::span<const ImageMasks> all) {
    BlobWriter w("LPMM", kMaskFileVersion);
    w.u32(static_cast<std::uint32_t>(all.size()));
    for (const ImageMasks& im : all) {
        w.u64(im.test_index);
        w.u32(static_cast<std::uint32_t>(im.label));
        w.u32(static_cast<std::uint32_t>(im.masks.size()));
        for (const auto& m : im.masks) io_detail::put_mask(w, m);
        w.u32(static_cast<std::uint32_t>(im.best_phi.size()));
        for (double v : im.best_phi) w.f64(v);
        for (const auto& m : im.evolution) io_detail::put_mask(w, m);
    }
    return std::move(w).finish();
}

inline std::vector<ImageMasks> deserialize_masks(std::span<const std::uint8_t> bytes) {
    BlobReader r(bytes, "LPMM", kMaskFileVersion, "mask file");
    std::vector<ImageMasks> all(r.u32());
    for (ImageMasks& im : all) {
        im.test_index = r.u64();
        im.label = r.u32();
        im.masks.resize(r.u32());
        for (auto& m : im.masks) m = io_detail::get_mask(r);
        const std::uint32_t g = r.u32();
        im.best_phi.resize(g);
        for (double& v : im.best_phi) v = r.f64();
        im.evolution.resize(im.best_phi.size());
        for (auto& m : im.evolution) m = io_detail::get_mask(r);
    }
    if (!r.at_end()) throw ParseError("mask file: trailing bytes", r.offset());
    return all;
}

inline constexpr std::uint32_t kAttackFileVersion = 1;

// Layout: "LPMA" u32 version | str attack | str aggregation | u32 N |
// N u64 test indices | N u32 labels | tensor adversarial | checksum.
inline std::vector<std::uint8_t> serialize_adversarial(const std::string& attack, const std::string& aggregation,
                                                       std::span<const std::size_t> test_indices,
                                                       std::span<const std::size_t> labels, const Tensor& adversarial) {
    BlobWriter w("LPMA", kAttackFileVersion);
    w.str(attack);
    w.str(aggregation);
    w.u32(static_cast<std::uint32_t>(test_indices.size()));
    for (std::size_t i : test_indices) w.u64(i);
    for (std::size_t l : labels) w.u32(static_cast<std::uint32_t>(l));
    w.tensor(adversarial);
    return std::move(w).finish();
}

struct AdversarialBlob {
    std::string attack, aggregation;
    std::vector<std::size_t> test_indices, labels;
    Tensor adversarial;
};

inline AdversarialBlob deserialize_adversarial(std::span<const std::uint8_t> bytes) {
    BlobReader r(bytes, "LPMA", kAttackFileVersion, "adversarial file");
    AdversarialBlob b;
    b.attack = r.str();
    b.aggregation = r.str();
    const std::uint32_t n = r.u32();
    b.test_indices.resize(n);
    b.labels.resize(n);
    for (auto& i : b.test_indices) i = r.u64();
    for (auto& l : b.labels) l = r.u32();
    b.adversarial = r.tensor();
    if (!r.at_end()) throw ParseError("adversarial file: trailing bytes", r.offset());
    return b;
}

}  // namespace lpm
