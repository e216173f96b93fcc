#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

/// Binary grid over square image patches; 0 drops the patch, 1 keeps it.
class PatchMask {
public:
    PatchMask() = default;

    /// All-ones mask covering an image of height x width with square patches.
    PatchMask(std::size_t height, std::size_t width, std::size_t patch_size)
        : patch_(patch_size) {
        if (patch_size == 0) throw ArgumentError("PatchMask: patch size must be > 0");
        if (height % patch_size != 0 || width % patch_size != 0)
            throw ShapeError("PatchMask: image " + std::to_string(height) + "x" + std::to_string(width) +
                             " is not divisible by patch size " + std::to_string(patch_size));
        rows_ = height / patch_size;
        cols_ = width / patch_size;
        cells_.assign(rows_ * cols_, 1);
    }

    PatchMask(std::size_t rows, std::size_t cols, std::size_t patch_size, std::vector<std::uint8_t> cells)
        : rows_(rows), cols_(cols), patch_(patch_size), cells_(std::move(cells)) {
        if (patch_size == 0) throw ArgumentError("PatchMask: patch size must be > 0");
        if (cells_.size() != rows_ * cols_) throw ShapeError("PatchMask: cell count does not match grid");
        for (std::uint8_t c : cells_)
            if (c > 1) throw ArgumentError("PatchMask: cells must be 0 or 1");
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t cells() const noexcept { return cells_.size(); }
    std::size_t patch_size() const noexcept { return patch_; }
    std::size_t image_height() const noexcept { return rows_ * patch_; }
    std::size_t image_width() const noexcept { return cols_ * patch_; }

    std::uint8_t operator[](std::size_t i) const noexcept { return cells_[i]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return cells_.at(r * cols_ + c); }
    void set(std::size_t i, std::uint8_t v) {
        if (v > 1) throw ArgumentError("PatchMask: cells must be 0 or 1");
        cells_.at(i) = v;
    }
    std::span<const std::uint8_t> grid() const noexcept { return cells_; }

    std::size_t zero_count() const noexcept {
        return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{0}));
    }

    bool same_geometry(const PatchMask& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_ && patch_ == o.patch_;
    }

    /// Rows of '0'/'1' characters, one line per grid row.
    std::string dump() const {
        std::string s;
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t c = 0; c < cols_; ++c) s += cells_[r * cols_ + c] ? '1' : '0';
            s += '\n';
        }
        return s;
    }

    friend bool operator==(const PatchMask&, const PatchMask&) = default;
    friend auto operator<=>(const PatchMask&, const PatchMask&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::size_t patch_ = 1;
    std::vector<std::uint8_t> cells_;
};

/// Throws unless `mask` tiles an image of the given (C,H,W) / (N,C,H,W) shape.
inline void check_mask_geometry(const PatchMask& mask, const Shape& image_shape) {
    if (image_shape.size() < 2) throw ShapeError("mask: image tensor rank too small");
    const std::size_t h = image_shape[image_shape.size() - 2], w = image_shape[image_shape.size() - 1];
    if (mask.image_height() != h || mask.image_width() != w)
        throw ShapeError("mask grid " + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                         " with patch " + std::to_string(mask.patch_size()) + " does not tile a " +
                         std::to_string(h) + "x" + std::to_string(w) + " image");
}

/// Multiplies every pixel (all channels, all batch entries) by its patch value.
inline Tensor apply_mask(const Tensor& x, const PatchMask& mask) {
    check_mask_geometry(mask, x.shape());
    const std::size_t h = mask.image_height(), w = mask.image_width(), p = mask.patch_size();
    const std::size_t planes = x.size() / (h * w);
    Tensor out = x;
    for (std::size_t pl = 0; pl < planes; ++pl)
        for (std::size_t y = 0; y < h; ++y) {
            const std::size_t row = (y / p) * mask.cols();
            double* line = out.data() + (pl * h + y) * w;
            for (std::size_t xx = 0; xx < w; ++xx)
                if (!mask[row + xx / p]) line[xx] = 0.0;
        }
    return out;
}

enum class Aggregation : std::uint8_t { intersect, cycle, grad_average };

inline const char* to_string(Aggregation a) {
    switch (a) {
        case Aggregation::intersect: return "and";
        case Aggregation::cycle: return "cycle";
        case Aggregation::grad_average: return "grad-average";
    }
    return "?";
}

inline Aggregation parse_aggregation(std::string_view s) {
    if (s == "and" || s == "intersect") return Aggregation::intersect;
    if (s == "cycle") return Aggregation::cycle;
    if (s == "grad-average") return Aggregation::grad_average;
    throw ArgumentError("unknown aggregation mode '" + std::string(s) + "' (expected and, cycle, grad-average)");
}

/// Masks consumed by one image's attack together with how to combine them.
struct MaskSet {
    std::vector<PatchMask> masks;
    Aggregation mode = Aggregation::intersect;

    /// Masks active at attack step `step`.
    std::span<const PatchMask> active(std::size_t step) const {
        if (mode == Aggregation::cycle) return std::span<const PatchMask>(&masks[step % masks.size()], 1);
        return masks;
    }
};

/// Elementwise product of all grids.
inline PatchMask intersect(std::span<const PatchMask> masks) {
    if (masks.empty()) throw ArgumentError("intersect: no masks");
    std::vector<std::uint8_t> cells(masks[0].grid().begin(), masks[0].grid().end());
    for (const PatchMask& m : masks.subspan(1)) {
        if (!m.same_geometry(masks[0])) throw ShapeError("intersect: masks differ in geometry");
        for (std::size_t i = 0; i < cells.size(); ++i) cells[i] &= m[i];
    }
    return PatchMask(masks[0].rows(), masks[0].cols(), masks[0].patch_size(), std::move(cells));
}

/// Combines K learned masks for the final attack. AND collapses them into one
/// grid; cycle uses mask t mod K at step t; grad-average averages the K masked
/// gradients at every step.
inline MaskSet aggregate_masks(std::span<const PatchMask> masks, Aggregation mode) {
    if (masks.empty()) throw ArgumentError("aggregate_masks: empty mask list");
    for (const PatchMask& m : masks)
        if (!m.same_geometry(masks[0])) throw ShapeError("aggregate_masks: masks differ in geometry");
    MaskSet set;
    set.mode = mode;
    if (mode == Aggregation::intersect)
        set.masks = {intersect(masks)};
    else
        set.masks.assign(masks.begin(), masks.end());
    return set;
}

}  // namespace lpm
