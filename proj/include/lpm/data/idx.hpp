#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "lpm/data/dataset.hpp"
#include "lpm/error.hpp"

namespace lpm {

// IDX: big-endian u32 magic (0x00000803 images / 0x00000801 labels), then one
// big-endian u32 per dimension, then unsigned bytes.
inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

namespace detail {

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, const char* what) : bytes_(bytes), what_(what) {}

    std::uint32_t u32be() {
        need(4, "header field");
        const std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                                (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
        pos_ += 4;
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n) {
        need(n, "payload");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t offset() const noexcept { return pos_; }

private:
    void need(std::size_t n, const char* field) const {
        if (bytes_.size() - pos_ < n)
            throw ParseError(std::string(what_) + ": truncated " + field + ", need " + std::to_string(n) +
                                 " bytes, have " + std::to_string(bytes_.size() - pos_),
                             pos_);
    }

    std::span<const std::uint8_t> bytes_;
    const char* what_;
    std::size_t pos_ = 0;
};

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

/// Decodes an IDX image file and its label file into a single-channel dataset.
inline Dataset parse_idx(std::span<const std::uint8_t> image_bytes, std::span<const std::uint8_t> label_bytes,
                         std::size_t num_classes = 10, Split split = Split::train) {
    detail::ByteReader img(image_bytes, "idx images");
    if (image_bytes.empty()) throw ParseError("idx images: empty stream", 0);
    const std::uint32_t img_magic = img.u32be();
    if (img_magic != kIdxImageMagic)
        throw ParseError("idx images: expected magic 2051, got " + std::to_string(img_magic), 0);
    const std::uint32_t count = img.u32be();
    const std::uint32_t rows = img.u32be();
    const std::uint32_t cols = img.u32be();
    if (rows == 0 || cols == 0) throw ParseError("idx images: zero image dimension", 8);
    const std::size_t per = std::size_t{rows} * cols;
    const auto pixels = img.take(std::size_t{count} * per);

    detail::ByteReader lab(label_bytes, "idx labels");
    if (label_bytes.empty()) throw ParseError("idx labels: empty stream", 0);
    const std::uint32_t lab_magic = lab.u32be();
    if (lab_magic != kIdxLabelMagic)
        throw ParseError("idx labels: expected magic 2049, got " + std::to_string(lab_magic), 0);
    const std::uint32_t label_count = lab.u32be();
    if (label_count != count)
        throw ParseError("idx labels: count " + std::to_string(label_count) + " does not match image count " +
                             std::to_string(count),
                         4);
    const std::size_t label_offset = lab.offset();
    const auto raw_labels = lab.take(label_count);

    Dataset d;
    d.num_classes = num_classes;
    d.split = split;
    std::vector<double> values(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) values[i] = static_cast<double>(pixels[i]) / 255.0;
    d.images = Tensor({count, 1, rows, cols}, std::move(values));
    d.labels.reserve(count);
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        if (raw_labels[i] >= num_classes)
            throw ParseError("idx labels: label " + std::to_string(raw_labels[i]) + " out of range",
                             label_offset + i);
        d.labels.push_back(raw_labels[i]);
    }
    return d;
}

/// Inverse of parse_idx for single-channel datasets; pixels are rounded to bytes.
inline std::pair<std::vector<std::uint8_t>, std::vector<std::uint8_t>> serialize_idx(const Dataset& d) {
    if (d.channels() != 1) throw ArgumentError("serialize_idx: IDX images are single-channel");
    std::vector<std::uint8_t> img, lab;
    detail::put_u32be(img, kIdxImageMagic);
    detail::put_u32be(img, static_cast<std::uint32_t>(d.size()));
    detail::put_u32be(img, static_cast<std::uint32_t>(d.height()));
    detail::put_u32be(img, static_cast<std::uint32_t>(d.width()));
    for (double v : d.images.values()) img.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    detail::put_u32be(lab, kIdxLabelMagic);
    detail::put_u32be(lab, static_cast<std::uint32_t>(d.size()));
    for (std::size_t l : d.labels) lab.push_back(static_cast<std::uint8_t>(l));
    return {std::move(img), std::move(lab)};
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

inline Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::size_t num_classes = 10, Split split = Split::train) {
    const auto ib = read_file_bytes(images);
    const auto lb = read_file_bytes(labels);
    return parse_idx(ib, lb, num_classes, split);
}

}  // namespace lpm
