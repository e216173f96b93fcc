#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Little-endian writer for the versioned blobs (weights, masks, attack results).
class BlobWriter {
public:
    BlobWriter(std::string_view magic, std::uint32_t version) {
        bytes_.insert(bytes_.end(), magic.begin(), magic.end());
        u32(version);
    }

    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_.insert(bytes_.end(), s.begin(), s.end());
    }

    void tensor(const Tensor& t) {
        u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) u32(static_cast<std::uint32_t>(d));
        for (double v : t.values()) f64(v);
    }

    /// Appends the checksum of everything written so far and returns the blob.
    std::vector<std::uint8_t> finish() && {
        u64(fnv1a64(bytes_));
        return std::move(bytes_);
    }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

    std::vector<std::uint8_t> bytes_;
};

class BlobReader {
public:
    /// Verifies magic, version and trailing checksum before any field is read.
    BlobReader(std::span<const std::uint8_t> bytes, std::string_view magic, std::uint32_t version,
               std::string_view what)
        : what_(what) {
        const std::size_t min = magic.size() + 4 + 8;
        if (bytes.size() < min) throw ParseError(std::string(what) + ": checksum error, file truncated", bytes.size());
        const auto body = bytes.first(bytes.size() - 8);
        std::uint64_t stored = 0;
        for (int i = 0; i < 8; ++i) stored |= std::uint64_t{bytes[body.size() + i]} << (8 * i);
        if (stored != fnv1a64(body))
            throw ParseError(std::string(what) + ": checksum error (corrupt or truncated file)", body.size());
        bytes_ = body;
        if (std::string_view(reinterpret_cast<const char*>(bytes_.data()), magic.size()) != magic)
            throw ParseError(std::string(what) + ": bad magic", 0);
        pos_ = magic.size();
        const std::uint32_t v = u32();
        if (v != version)
            throw ParseError(std::string(what) + ": version mismatch, expected " + std::to_string(version) +
                                 ", got " + std::to_string(v),
                             magic.size());
    }

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }

    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    Tensor tensor() {
        const std::uint32_t rank = u32();
        if (rank > 8) throw ParseError(std::string(what_) + ": implausible tensor rank", pos_ - 4);
        Shape shape(rank);
        for (auto& d : shape) d = u32();
        const std::size_t count = shape_size(shape);
        need(count * 8);
        std::vector<double> data(count);
        for (auto& v : data) v = f64();
        return Tensor(std::move(shape), std::move(data));
    }

    bool at_end() const noexcept { return pos_ == bytes_.size(); }
    std::size_t offset() const noexcept { return pos_; }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw ParseError(std::string(what_) + ": truncated", pos_);
    }

    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

}  // namespace lpm
