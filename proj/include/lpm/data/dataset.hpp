#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

enum class Split { train, test, eval };

inline const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        case Split::eval: return "eval";
    }
    return "?";
}

/// Labeled images (N,C,H,W) with pixels in [0,1].
struct Dataset {
    Tensor images;
    std::vector<std::size_t> labels;
    std::size_t num_classes = 10;
    Split split = Split::train;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t channels() const { return images.dim(1); }
    std::size_t height() const { return images.dim(2); }
    std::size_t width() const { return images.dim(3); }

    Tensor image(std::size_t i) const { return images.slice(i); }

    /// Images at `indices` (in that order) as a new dataset with the given tag.
    Dataset subset(std::span<const std::size_t> indices, Split tag) const {
        if (indices.empty()) throw ArgumentError("subset: no indices");
        Dataset d;
        d.num_classes = num_classes;
        d.split = tag;
        d.images = Tensor({indices.size(), channels(), height(), width()});
        d.labels.reserve(indices.size());
        for (std::size_t j = 0; j < indices.size(); ++j) {
            if (indices[j] >= size()) throw ArgumentError("subset: index out of range");
            d.images.set_slice(j, images.slice(indices[j]));
            d.labels.push_back(labels[indices[j]]);
        }
        return d;
    }

    /// Throws unless every invariant holds.
    void validate() const {
        if (images.rank() != 4) throw ShapeError("dataset images must be (N,C,H,W)");
        if (images.dim(0) != labels.size())
            throw ArgumentError("dataset has " + std::to_string(images.dim(0)) + " images but " +
                                std::to_string(labels.size()) + " labels");
        for (std::size_t l : labels)
            if (l >= num_classes) throw ArgumentError("dataset label " + std::to_string(l) + " out of range");
        for (double v : images.values())
            if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("dataset pixel outside [0,1]");
    }

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Zero-pads every image symmetrically to side x side (e.g. 28 -> 32).
inline Dataset pad_to(const Dataset& d, std::size_t side) {
    if (d.height() > side || d.width() > side) throw ArgumentError("pad_to: image larger than target");
    const std::size_t top = (side - d.height()) / 2, left = (side - d.width()) / 2;
    Dataset out = d;
    out.images = Tensor({d.size(), d.channels(), side, side});
    for (std::size_t n = 0; n < d.size(); ++n)
        for (std::size_t c = 0; c < d.channels(); ++c)
            for (std::size_t y = 0; y < d.height(); ++y)
                for (std::size_t x = 0; x < d.width(); ++x)
                    out.images[((n * d.channels() + c) * side + y + top) * side + x + left] =
                        d.images[((n * d.channels() + c) * d.height() + y) * d.width() + x];
    return out;
}

}  // namespace lpm
