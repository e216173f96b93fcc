#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpm/error.hpp"
#include "lpm/numerics/rng.hpp"
#include "lpm/numerics/tensor.hpp"

namespace lpm {

enum class LayerKind : std::uint8_t { convolution, affine, relu, max_pool, average_pool, flatten };

inline const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::convolution: return "convolution";
        case LayerKind::affine: return "affine";
        case LayerKind::relu: return "relu";
        case LayerKind::max_pool: return "max-pool";
        case LayerKind::average_pool: return "average-pool";
        case LayerKind::flatten: return "flatten";
    }
    return "?";
}

/// Structural description of one layer. Pools reuse kernel/stride; affine
/// uses in/out features; convolution uses channels, kernel, stride, padding.
struct LayerSpec {
    LayerKind kind = LayerKind::flatten;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t in_features = 0;
    std::size_t out_features = 0;

    static LayerSpec convolution(std::size_t in, std::size_t out, std::size_t kernel,
                                 std::size_t stride = 1, std::size_t padding = 0) {
        return {LayerKind::convolution, in, out, kernel, stride, padding, 0, 0};
    }
    static LayerSpec affine(std::size_t in, std::size_t out) {
        return {LayerKind::affine, 0, 0, 0, 1, 0, in, out};
    }
    static LayerSpec relu() { return {LayerKind::relu}; }
    static LayerSpec max_pool(std::size_t kernel, std::size_t stride = 0) {
        return {LayerKind::max_pool, 0, 0, kernel, stride ? stride : kernel, 0, 0, 0};
    }
    static LayerSpec average_pool(std::size_t kernel, std::size_t stride = 0) {
        return {LayerKind::average_pool, 0, 0, kernel, stride ? stride : kernel, 0, 0, 0};
    }
    static LayerSpec flatten() { return {LayerKind::flatten}; }

    bool has_params() const noexcept {
        return kind == LayerKind::convolution || kind == LayerKind::affine;
    }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Per-sample activation geometry (channels, height, width). Vectors are (F,1,1).
struct ActShape {
    std::size_t c = 0, h = 0, w = 0;
    std::size_t size() const noexcept { return c * h * w; }
    friend bool operator==(const ActShape&, const ActShape&) = default;
};

/// Everything a backward pass needs from the forward pass.
struct ForwardTrace {
    std::size_t batch = 0;
    std::vector<Tensor> inputs;                       // input to layer i, (N, c, h, w)
    std::vector<std::vector<std::uint32_t>> argmax;   // per layer; only max-pool layers fill it
    Tensor logits;                                    // (N, classes)
};

struct ParamGradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;
};

/// Sequential feed-forward classifier with fixed weights.
///
/// Immutable after construction apart from explicit parameter access used by
/// training; forward/backward are const and safe to call concurrently.
class Network {
public:
    Network() = default;

    /// Validates shape compatibility and allocates zero parameters.
    Network(ActShape input, std::vector<LayerSpec> layers) : input_(input), layers_(std::move(layers)) {
        if (layers_.empty()) throw ShapeError("network has no layers");
        shapes_.push_back(input_);
        for (std::size_t i = 0; i < layers_.size(); ++i) shapes_.push_back(infer(i, shapes_.back()));
        const ActShape out = shapes_.back();
        if (out.h != 1 || out.w != 1)
            throw ShapeError("network output must be a vector, got (" + std::to_string(out.c) + "," +
                             std::to_string(out.h) + "," + std::to_string(out.w) + ")");
        weight_.resize(layers_.size());
        bias_.resize(layers_.size());
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerSpec& l = layers_[i];
            if (l.kind == LayerKind::convolution) {
                weight_[i] = Tensor({l.out_channels, l.in_channels, l.kernel, l.kernel});
                bias_[i] = Tensor({l.out_channels});
            } else if (l.kind == LayerKind::affine) {
                weight_[i] = Tensor({l.out_features, l.in_features});
                bias_[i] = Tensor({l.out_features});
            }
        }
    }

    const ActShape& input_shape() const noexcept { return input_; }
    std::size_t num_classes() const noexcept { return shapes_.back().c; }
    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
    const ActShape& output_shape_of(std::size_t layer) const { return shapes_.at(layer + 1); }

    Tensor& weight(std::size_t layer) { return weight_.at(layer); }
    const Tensor& weight(std::size_t layer) const { return weight_.at(layer); }
    Tensor& bias(std::size_t layer) { return bias_.at(layer); }
    const Tensor& bias(std::size_t layer) const { return bias_.at(layer); }

    std::size_t parameter_count() const noexcept {
        std::size_t n = 0;
        for (std::size_t i = 0; i < layers_.size(); ++i) n += weight_[i].size() + bias_[i].size();
        return n;
    }

    /// He-normal weights, zero biases.
    void initialize(RngStream rng) {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (!layers_[i].has_params()) continue;
            const std::size_t fan_in = weight_[i].size() / weight_[i].dim(0);
            const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
            for (double& v : weight_[i].values()) v = scale * rng.normal();
            for (double& v : bias_[i].values()) v = 0.0;
        }
    }

    /// Logits (N, classes) for a batch (N,C,H,W) or a single image (C,H,W).
    Tensor forward(const Tensor& batch) const { return trace(batch, false).logits; }

    ForwardTrace trace(const Tensor& batch, bool keep = true) const {
        const std::size_t n = batch_size(batch);
        ForwardTrace tr;
        tr.batch = n;
        tr.argmax.resize(layers_.size());
        if (keep) tr.inputs.reserve(layers_.size());
        Tensor cur = batch.reshaped({n, input_.c, input_.h, input_.w});
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            Tensor next = forward_layer(i, cur, n, tr.argmax[i]);
            if (!next.all_finite())
                throw NumericError("non-finite activation after layer " + std::to_string(i) + " (" +
                                   to_string(layers_[i].kind) + ")");
            if (keep) tr.inputs.push_back(std::move(cur));
            cur = std::move(next);
        }
        tr.logits = cur.reshaped({n, num_classes()});
        return tr;
    }

    /// Gradient of a scalar loss w.r.t. the input of layer `layer`, given the
    /// gradient w.r.t. that layer's output.
    Tensor backward_layer_input(std::size_t layer, const ForwardTrace& tr, const Tensor& dout) const;

    /// d loss / d input, shaped like the batch given to trace().
    Tensor backward_input(const ForwardTrace& tr, const Tensor& dlogits) const {
        Tensor g = dlogits.reshaped({tr.batch, num_classes(), 1, 1});
        for (std::size_t i = layers_.size(); i-- > 0;) {
            g = backward_layer_input(i, tr, g);
            if (!g.all_finite())
                throw NumericError("non-finite gradient at layer " + std::to_string(i) + " (" +
                                   to_string(layers_[i].kind) + ")");
        }
        return g;
    }

    /// Parameter gradients (and nothing else) for training.
    ParamGradients backward_params(const ForwardTrace& tr, const Tensor& dlogits) const;

private:
    std::size_t batch_size(const Tensor& batch) const {
        const std::size_t per = input_.size();
        if (batch.rank() == 3 && batch.shape() == Shape{input_.c, input_.h, input_.w}) return 1;
        if (batch.rank() == 4 && batch.dim(1) == input_.c && batch.dim(2) == input_.h &&
            batch.dim(3) == input_.w)
            return batch.dim(0);
        if (batch.rank() == 2 && batch.dim(1) == per) return batch.dim(0);
        throw ShapeError("input " + shape_string(batch.shape()) + " does not match network input (" +
                         std::to_string(input_.c) + "," + std::to_string(input_.h) + "," +
                         std::to_string(input_.w) + ") at layer 0");
    }

    ActShape infer(std::size_t i, const ActShape& in) const {
        const LayerSpec& l = layers_[i];
        auto fail = [&](const std::string& why) {
            return ShapeError("layer " + std::to_string(i) + " (" + to_string(l.kind) + "): " + why);
        };
        switch (l.kind) {
            case LayerKind::convolution: {
                if (l.in_channels != in.c)
                    throw fail("expects " + std::to_string(l.in_channels) + " input channels, got " +
                               std::to_string(in.c));
                if (l.kernel == 0 || l.stride == 0 || l.out_channels == 0) throw fail("zero-sized parameter");
                if (in.h + 2 * l.padding < l.kernel || in.w + 2 * l.padding < l.kernel)
                    throw fail("kernel larger than padded input");
                return {l.out_channels, (in.h + 2 * l.padding - l.kernel) / l.stride + 1,
                        (in.w + 2 * l.padding - l.kernel) / l.stride + 1};
            }
            case LayerKind::affine:
                if (in.h != 1 || in.w != 1) throw fail("input is not flat; insert a flatten layer");
                if (l.in_features != in.c)
                    throw fail("expects " + std::to_string(l.in_features) + " features, got " +
                               std::to_string(in.c));
                if (l.out_features == 0) throw fail("zero output features");
                return {l.out_features, 1, 1};
            case LayerKind::relu: return in;
            case LayerKind::max_pool:
            case LayerKind::average_pool:
                if (l.kernel == 0 || l.stride == 0) throw fail("zero-sized window");
                if (in.h < l.kernel || in.w < l.kernel) throw fail("window larger than input");
                return {in.c, (in.h - l.kernel) / l.stride + 1, (in.w - l.kernel) / l.stride + 1};
            case LayerKind::flatten: return {in.size(), 1, 1};
        }
        throw fail("unknown kind");
    }

    Tensor forward_layer(std::size_t i, const Tensor& in, std::size_t n,
                         std::vector<std::uint32_t>& argmax) const;

    ActShape input_{};
    std::vector<LayerSpec> layers_;
    std::vector<ActShape> shapes_;
    std::vector<Tensor> weight_;
    std::vector<Tensor> bias_;
};

namespace kernels {

// Output columns [lo, hi) whose input column ox*stride + k - pad lies inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_range(std::size_t out_len, std::size_t in_len,
                                                       std::size_t k, std::size_t stride,
                                                       std::size_t pad) {
    std::size_t lo = 0;
    if (k < pad) lo = (pad - k + stride - 1) / stride;
    // largest o with o*stride + k - pad <= in_len - 1
    const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(in_len) - 1 + static_cast<std::ptrdiff_t>(pad) -
                               static_cast<std::ptrdiff_t>(k);
    if (top < 0) return {0, 0};
    std::size_t hi = static_cast<std::size_t>(top) / stride + 1;
    hi = std::min(hi, out_len);
    if (lo > hi) lo = hi;
    return {lo, hi};
}

// C[m x p] += A[m x k] * B[k x p] with A addressed as a[i*ars + j*acs] and
// B, C row-major. Each entry sums over k in ascending order, so its value
// depends only on its own row and column of the operands.
using vec4 = double __attribute__((vector_size(32)));

inline vec4 load4(const double* p) noexcept {
    vec4 v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

inline void store4(double* p, vec4 v) noexcept { std::memcpy(p, &v, sizeof v); }

template <std::size_t MR>
inline void gemm_rows(std::size_t i, std::size_t k, std::size_t p, const double* a, std::size_t ars,
                      std::size_t acs, const double* b, double* c) {
    std::size_t j = 0;
    for (; j + 8 <= p; j += 8) {
        vec4 lo[MR], hi[MR];
        for (std::size_t r = 0; r < MR; ++r) {
            lo[r] = load4(c + (i + r) * p + j);
            hi[r] = load4(c + (i + r) * p + j + 4);
        }
        for (std::size_t kk = 0; kk < k; ++kk) {
            const vec4 b0 = load4(b + kk * p + j), b1 = load4(b + kk * p + j + 4);
            for (std::size_t r = 0; r < MR; ++r) {
                const double av = a[(i + r) * ars + kk * acs];
                lo[r] += av * b0;
                hi[r] += av * b1;
            }
        }
        for (std::size_t r = 0; r < MR; ++r) {
            store4(c + (i + r) * p + j, lo[r]);
            store4(c + (i + r) * p + j + 4, hi[r]);
        }
    }
    for (; j < p; ++j)
        for (std::size_t r = 0; r < MR; ++r) {
            double s = c[(i + r) * p + j];
            for (std::size_t kk = 0; kk < k; ++kk) s += a[(i + r) * ars + kk * acs] * b[kk * p + j];
            c[(i + r) * p + j] = s;
        }
}

inline void gemm_acc(std::size_t m, std::size_t k, std::size_t p, const double* a, std::size_t ars,
                     std::size_t acs, const double* b, double* c) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) gemm_rows<4>(i, k, p, a, ars, acs, b, c);
    for (; i < m; ++i) gemm_rows<1>(i, k, p, a, ars, acs, b, c);
}

// Unfolds one (C,H,W) sample into col[(ic*k + ky)*k + kx][oy*ow + ox], zero outside the image.
inline void im2col(const double* in, double* col, const ActShape& is, const ActShape& os, std::size_t k,
                   std::size_t stride, std::size_t pad) {
    const std::size_t plane = os.h * os.w;
    for (std::size_t ic = 0; ic < is.c; ++ic)
        for (std::size_t ky = 0; ky < k; ++ky) {
            const auto [ylo, yhi] = valid_range(os.h, is.h, ky, stride, pad);
            for (std::size_t kx = 0; kx < k; ++kx) {
                const auto [xlo, xhi] = valid_range(os.w, is.w, kx, stride, pad);
                double* row = col + ((ic * k + ky) * k + kx) * plane;
                std::fill(row, row + ylo * os.w, 0.0);
                std::fill(row + yhi * os.w, row + plane, 0.0);
                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                    const double* irow = in + (ic * is.h + oy * stride + ky - pad) * is.w;
                    double* orow = row + oy * os.w;
                    std::fill(orow, orow + xlo, 0.0);
                    std::fill(orow + xhi, orow + os.w, 0.0);
                    if (stride == 1 && xhi > xlo)
                        std::copy_n(irow + xlo + kx - pad, xhi - xlo, orow + xlo);
                    else
                        for (std::size_t ox = xlo; ox < xhi; ++ox) orow[ox] = irow[ox * stride + kx - pad];
                }
            }
        }
}

// Adjoint of im2col: adds every column entry back onto its source pixel.
inline void col2im(const double* col, double* out, const ActShape& is, const ActShape& os, std::size_t k,
                   std::size_t stride, std::size_t pad) {
    const std::size_t plane = os.h * os.w;
    for (std::size_t ic = 0; ic < is.c; ++ic)
        for (std::size_t ky = 0; ky < k; ++ky) {
            const auto [ylo, yhi] = valid_range(os.h, is.h, ky, stride, pad);
            for (std::size_t kx = 0; kx < k; ++kx) {
                const auto [xlo, xhi] = valid_range(os.w, is.w, kx, stride, pad);
                const double* row = col + ((ic * k + ky) * k + kx) * plane;
                for (std::size_t oy = ylo; oy < yhi; ++oy) {
                    double* drow = out + (ic * is.h + oy * stride + ky - pad) * is.w;
                    const double* crow = row + oy * os.w;
                    for (std::size_t ox = xlo; ox < xhi; ++ox) drow[ox * stride + kx - pad] += crow[ox];
                }
            }
        }
}

inline void conv_forward(const double* in, const double* w, const double* b, double* out,
                         std::size_t n, const ActShape& is, const ActShape& os, std::size_t k,
                         std::size_t stride, std::size_t pad) {
    const std::size_t plane = os.h * os.w, depth = is.c * k * k;
    std::vector<double> col(depth * plane);
    for (std::size_t s = 0; s < n; ++s) {
        im2col(in + s * is.size(), col.data(), is, os, k, stride, pad);
        double* op = out + s * os.size();
        for (std::size_t oc = 0; oc < os.c; ++oc) std::fill(op + oc * plane, op + (oc + 1) * plane, b[oc]);
        gemm_acc(os.c, depth, plane, w, depth, 1, col.data(), op);
    }
}

inline void conv_backward_input(const double* dout, const double* w, double* din, std::size_t n,
                                const ActShape& is, const ActShape& os, std::size_t k,
                                std::size_t stride, std::size_t pad) {
    const std::size_t plane = os.h * os.w, depth = is.c * k * k;
    std::vector<double> col(depth * plane);
    std::fill(din, din + n * is.size(), 0.0);
    for (std::size_t s = 0; s < n; ++s) {
        std::fill(col.begin(), col.end(), 0.0);
        gemm_acc(depth, os.c, plane, w, 1, depth, dout + s * os.size(), col.data());
        col2im(col.data(), din + s * is.size(), is, os, k, stride, pad);
    }
}

inline void conv_backward_params(const double* in, const double* dout, double* dw, double* db,
                                 std::size_t n, const ActShape& is, const ActShape& os, std::size_t k,
                                 std::size_t stride, std::size_t pad) {
    const std::size_t plane = os.h * os.w, depth = is.c * k * k;
    std::vector<double> col(depth * plane), colt(plane * depth);
    for (std::size_t s = 0; s < n; ++s) {
        const double* gp = dout + s * os.size();
        for (std::size_t oc = 0; oc < os.c; ++oc) {
            double acc = 0.0;
            for (std::size_t j = 0; j < plane; ++j) acc += gp[oc * plane + j];
            db[oc] += acc;
        }
        im2col(in + s * is.size(), col.data(), is, os, k, stride, pad);
        for (std::size_t r = 0; r < depth; ++r)
            for (std::size_t j = 0; j < plane; ++j) colt[j * depth + r] = col[r * plane + j];
        gemm_acc(os.c, plane, depth, gp, plane, 1, colt.data(), dw);
    }
}

// y_s = W x_s + b for each of n samples; W is (out x in).
inline void affine_forward(const double* in, const double* w, const double* b, double* out, std::size_t n,
                           std::size_t fin, std::size_t fout) {
    std::vector<double> wt(fin * fout);
    for (std::size_t o = 0; o < fout; ++o)
        for (std::size_t j = 0; j < fin; ++j) wt[j * fout + o] = w[o * fin + j];
    for (std::size_t s = 0; s < n; ++s) {
        double* y = out + s * fout;
        std::copy_n(b, fout, y);
        gemm_acc(1, fin, fout, in + s * fin, fin, 1, wt.data(), y);
    }
}

}  // namespace kernels

inline Tensor Network::forward_layer(std::size_t i, const Tensor& in, std::size_t n,
                                     std::vector<std::uint32_t>& argmax) const {
    const LayerSpec& l = layers_[i];
    const ActShape is = shapes_[i], os = shapes_[i + 1];
    Tensor out({n, os.c, os.h, os.w});
    const double* ip = in.data();
    double* op = out.data();
    switch (l.kind) {
        case LayerKind::convolution:
            kernels::conv_forward(ip, weight_[i].data(), bias_[i].data(), op, n, is, os, l.kernel, l.stride,
                                  l.padding);
            break;
        case LayerKind::affine:
            kernels::affine_forward(ip, weight_[i].data(), bias_[i].data(), op, n, is.c, os.c);
            break;
        case LayerKind::relu:
            for (std::size_t j = 0; j < in.size(); ++j) op[j] = ip[j] > 0.0 ? ip[j] : 0.0;
            break;
        case LayerKind::max_pool:
        case LayerKind::average_pool: {
            const bool is_max = l.kind == LayerKind::max_pool;
            if (is_max) argmax.assign(out.size(), 0);
            const double inv = 1.0 / static_cast<double>(l.kernel * l.kernel);
            for (std::size_t p = 0; p < n * is.c; ++p) {
                const double* plane = ip + p * is.h * is.w;
                for (std::size_t oy = 0; oy < os.h; ++oy) {
                    for (std::size_t ox = 0; ox < os.w; ++ox) {
                        double best = -std::numeric_limits<double>::infinity();
                        std::size_t best_at = 0;
                        double acc = 0.0;
                        for (std::size_t ky = 0; ky < l.kernel; ++ky) {
                            for (std::size_t kx = 0; kx < l.kernel; ++kx) {
                                const std::size_t at = (oy * l.stride + ky) * is.w + ox * l.stride + kx;
                                const double v = plane[at];
                                acc += v;
                                if (v > best) {
                                    best = v;
                                    best_at = at;
                                }
                            }
                        }
                        const std::size_t oi = p * os.h * os.w + oy * os.w + ox;
                        if (is_max) {
                            op[oi] = best;
                            argmax[oi] = static_cast<std::uint32_t>(best_at);
                        } else {
                            op[oi] = acc * inv;
                        }
                    }
                }
            }
            break;
        }
        case LayerKind::flatten: std::copy_n(ip, in.size(), op); break;
    }
    return out;
}

inline Tensor Network::backward_layer_input(std::size_t i, const ForwardTrace& tr, const Tensor& dout) const {
    if (tr.inputs.size() != layers_.size()) throw ArgumentError("trace was recorded without activations");
    const LayerSpec& l = layers_[i];
    const ActShape is = shapes_[i], os = shapes_[i + 1];
    const std::size_t n = tr.batch;
    Tensor din({n, is.c, is.h, is.w});
    const double* gp = dout.data();
    double* dp = din.data();
    switch (l.kind) {
        case LayerKind::convolution:
            kernels::conv_backward_input(gp, weight_[i].data(), dp, n, is, os, l.kernel, l.stride, l.padding);
            break;
        case LayerKind::affine: {
            for (std::size_t s = 0; s < n; ++s)
                kernels::gemm_acc(1, os.c, is.c, gp + s * os.c, os.c, 1, weight_[i].data(), dp + s * is.c);
            break;
        }
        case LayerKind::relu: {
            const double* x = tr.inputs[i].data();
            for (std::size_t j = 0; j < din.size(); ++j) dp[j] = x[j] > 0.0 ? gp[j] : 0.0;
            break;
        }
        case LayerKind::max_pool: {
            const auto& am = tr.argmax[i];
            const std::size_t in_plane = is.h * is.w, out_plane = os.h * os.w;
            for (std::size_t j = 0; j < dout.size(); ++j) dp[(j / out_plane) * in_plane + am[j]] += gp[j];
            break;
        }
        case LayerKind::average_pool: {
            const double inv = 1.0 / static_cast<double>(l.kernel * l.kernel);
            for (std::size_t p = 0; p < n * is.c; ++p) {
                double* plane = dp + p * is.h * is.w;
                for (std::size_t oy = 0; oy < os.h; ++oy)
                    for (std::size_t ox = 0; ox < os.w; ++ox) {
                        const double g = gp[p * os.h * os.w + oy * os.w + ox] * inv;
                        for (std::size_t ky = 0; ky < l.kernel; ++ky)
                            for (std::size_t kx = 0; kx < l.kernel; ++kx)
                                plane[(oy * l.stride + ky) * is.w + ox * l.stride + kx] += g;
                    }
            }
            break;
        }
        case LayerKind::flatten: std::copy_n(gp, din.size(), dp); break;
    }
    return din;
}

inline ParamGradients Network::backward_params(const ForwardTrace& tr, const Tensor& dlogits) const {
    ParamGradients grads;
    grads.weight.resize(layers_.size());
    grads.bias.resize(layers_.size());
    const std::size_t n = tr.batch;
    Tensor g = dlogits.reshaped({n, num_classes(), 1, 1});
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const LayerSpec& l = layers_[i];
        const ActShape is = shapes_[i], os = shapes_[i + 1];
        if (l.kind == LayerKind::convolution) {
            grads.weight[i] = Tensor(weight_[i].shape());
            grads.bias[i] = Tensor(bias_[i].shape());
            kernels::conv_backward_params(tr.inputs[i].data(), g.data(), grads.weight[i].data(),
                                          grads.bias[i].data(), n, is, os, l.kernel, l.stride, l.padding);
        } else if (l.kind == LayerKind::affine) {
            grads.weight[i] = Tensor(weight_[i].shape());
            grads.bias[i] = Tensor(bias_[i].shape());
            double* dw = grads.weight[i].data();
            double* db = grads.bias[i].data();
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t o = 0; o < os.c; ++o) db[o] += g[s * os.c + o];
            kernels::gemm_acc(os.c, n, is.c, g.data(), 1, os.c, tr.inputs[i].data(), dw);
        }
        if (i > 0) g = backward_layer_input(i, tr, g);
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (!layers_[i].has_params()) continue;
        if (!grads.weight[i].all_finite() || !grads.bias[i].all_finite())
            throw NumericError("non-finite parameter gradient at layer " + std::to_string(i));
    }
    return grads;
}

}  // namespace lpm
