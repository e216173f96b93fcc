#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "helpers.hpp"
#include "lpm/attacks/attack.hpp"

using namespace lpm;
using lpm::test::random_tensor;

namespace {

constexpr std::size_t kSide = 4, kPix = kSide * kSide, kClasses = 3;

Network linear_model(std::uint64_t seed) {
    return lpm::test::random_network({1, kSide, kSide}, {LayerSpec::flatten(), LayerSpec::affine(kPix, kClasses)},
                                     seed);
}

// d CE(W x + b, y) / dx = W^T (softmax(W x + b) - e_y)
std::vector<double> linear_grad(const Network& m, const std::vector<double>& x, std::size_t y) {
    const Tensor& w = m.weight(1);
    const Tensor& b = m.bias(1);
    std::vector<double> z(kClasses), p(kClasses);
    for (std::size_t o = 0; o < kClasses; ++o) {
        z[o] = b[o];
        for (std::size_t j = 0; j < kPix; ++j) z[o] += w[o * kPix + j] * x[j];
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double total = 0.0;
    for (std::size_t o = 0; o < kClasses; ++o) total += p[o] = std::exp(z[o] - mx);
    for (std::size_t o = 0; o < kClasses; ++o) p[o] = p[o] / total - (o == y ? 1.0 : 0.0);
    std::vector<double> g(kPix, 0.0);
    for (std::size_t j = 0; j < kPix; ++j)
        for (std::size_t o = 0; o < kClasses; ++o) g[j] += w[o * kPix + j] * p[o];
    return g;
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

void step(std::vector<double>& x, const std::vector<double>& x0, const std::vector<double>& dir, const AttackConfig& c) {
    for (std::size_t j = 0; j < x.size(); ++j)
        x[j] = std::clamp(std::clamp(x[j] + c.alpha * sgn(dir[j]), x0[j] - c.epsilon, x0[j] + c.epsilon), 0.0, 1.0);
}

std::vector<double> masked(std::vector<double> v, const PatchMask& m) {
    for (std::size_t j = 0; j < kPix; ++j) v[j] *= m.at((j / kSide) / m.patch_size(), (j % kSide) / m.patch_size());
    return v;
}

Tensor as_batch(const std::vector<double>& x) { return Tensor({1, 1, kSide, kSide}, x); }

AttackConfig config(std::uint32_t steps) {
    AttackConfig c;
    c.epsilon = 0.2;
    c.alpha = 0.05;
    c.iterations = steps;
    return c;
}

const std::vector<double> kImage{0.1, 0.5, 0.9, 0.3, 0.7, 0.2, 0.6, 0.4, 0.8, 0.0, 1.0, 0.35, 0.45, 0.55, 0.65, 0.25};

}  // namespace

TEST(IFgsm, OneStepMatchesLinearClosedForm) {
    const Network m = linear_model(1);
    const AttackConfig c = config(1);
    const std::size_t y[1] = {2};
    const AttackResult r = run_attack(m, as_batch(kImage), y, c);
    std::vector<double> expect = kImage;
    step(expect, kImage, linear_grad(m, kImage, 2), c);
    for (std::size_t j = 0; j < kPix; ++j) EXPECT_DOUBLE_EQ(r.adversarial[j], expect[j]);
}

TEST(IFgsm, StaysInsideBallAndPixelRange) {
    const Network m = lpm::test::tiny_conv(2);
    const Tensor x = random_tensor({6, 1, 8, 8}, RngStream(3, 3), 0.0, 1.0);
    const std::vector<std::size_t> y{0, 1, 2, 0, 1, 2};
    AttackConfig c;
    c.iterations = 20;
    c.alpha = 0.03;
    const AttackResult r = run_attack(m, x, y, c);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_LE(std::abs(r.adversarial[i] - x[i]), c.epsilon + 1e-15);
        EXPECT_GE(r.adversarial[i], 0.0);
        EXPECT_LE(r.adversarial[i], 1.0);
    }
    EXPECT_EQ(r.loss_trace.size(), 20u);
    EXPECT_GT(r.loss_trace.back(), r.loss_trace.front());
}

TEST(IFgsm, ZeroGradientLeavesImageUnchanged) {
    Network m({1, kSide, kSide}, {LayerSpec::flatten(), LayerSpec::affine(kPix, kClasses)});
    const std::size_t y[1] = {0};
    const AttackResult r = run_attack(m, as_batch(kImage), y, config(5));
    EXPECT_TRUE(r.adversarial == as_batch(kImage));
}

TEST(MaskedAttack, AllOnesMaskIsBitIdenticalToPlain) {
    const Network m = lpm::test::tiny_conv(4);
    const Tensor x = random_tensor({5, 1, 8, 8}, RngStream(4, 4), 0.0, 1.0);
    const std::vector<std::size_t> y{0, 1, 2, 1, 0};
    const PatchMask ones(8, 8, 2);
    for (const char* v : {"i-fgsm", "mi-fgsm", "di-fgsm", "ti-fgsm"}) {
        AttackConfig c = make_variant(v, config(6), {1.0, 0.5, 3});
        const AttackResult plain = run_attack(m, x, y, c);
        for (Aggregation mode : {Aggregation::intersect, Aggregation::cycle}) {
            const PatchMask k[1] = {ones};
            const MaskSet set = aggregate_masks(k, mode);
            const AttackResult lpm_r = run_attack(m, x, y, c, std::span<const MaskSet>(&set, 1));
            EXPECT_TRUE(lpm_r.adversarial == plain.adversarial) << v;
        }
    }
}

TEST(MaskedAttack, DroppedPatchesNeverMove) {
    const Network m = linear_model(5);
    PatchMask mask(kSide, kSide, 2);
    mask.set(1, 0);
    const MaskSet set{{mask}, Aggregation::intersect};
    const std::size_t y[1] = {1};
    const AttackResult r = run_attack(m, as_batch(kImage), y, config(4), std::span<const MaskSet>(&set, 1));
    for (std::size_t j = 0; j < kPix; ++j) {
        const bool dropped = (j / kSide) < 2 && (j % kSide) >= 2;
        if (dropped) {
            EXPECT_EQ(r.adversarial[j], kImage[j]);
        }
    }
}

TEST(MaskedAttack, GradAverageAndCycleMatchOracle) {
    const Network m = linear_model(6);
    PatchMask a(kSide, kSide, 2), b(kSide, kSide, 2);
    a.set(0, 0);
    b.set(3, 0);
    const PatchMask both[2] = {a, b};
    const std::size_t y[1] = {0};
    const AttackConfig c = config(3);

    std::vector<double> avg = kImage, cyc = kImage;
    for (int t = 0; t < 3; ++t) {
        const auto ga = masked(linear_grad(m, masked(avg, a), 0), a);
        const auto gb = masked(linear_grad(m, masked(avg, b), 0), b);
        std::vector<double> mean(kPix);
        for (std::size_t j = 0; j < kPix; ++j) mean[j] = (ga[j] + gb[j]) * 0.5;
        step(avg, kImage, mean, c);
        const PatchMask& active = t % 2 == 0 ? a : b;
        step(cyc, kImage, masked(linear_grad(m, masked(cyc, active), 0), active), c);
    }
    const MaskSet sa = aggregate_masks(both, Aggregation::grad_average);
    const MaskSet sc = aggregate_masks(both, Aggregation::cycle);
    const auto ra = run_attack(m, as_batch(kImage), y, c, std::span<const MaskSet>(&sa, 1));
    const auto rc = run_attack(m, as_batch(kImage), y, c, std::span<const MaskSet>(&sc, 1));
    for (std::size_t j = 0; j < kPix; ++j) {
        EXPECT_DOUBLE_EQ(ra.adversarial[j], avg[j]) << j;
        EXPECT_DOUBLE_EQ(rc.adversarial[j], cyc[j]) << j;
    }
}

TEST(MiFgsm, MomentumOfL1NormalizedGradients) {
    const Network m = linear_model(7);
    AttackConfig c = make_variant("mi-fgsm", config(3), {0.8, 0.5, 7});
    const std::size_t y[1] = {1};
    std::vector<double> x = kImage, acc(kPix, 0.0);
    for (int t = 0; t < 3; ++t) {
        const auto g = linear_grad(m, x, 1);
        double l1 = 0.0;
        for (double v : g) l1 += std::abs(v);
        for (std::size_t j = 0; j < kPix; ++j) acc[j] = 0.8 * acc[j] + g[j] / l1;
        step(x, kImage, acc, c);
    }
    const auto r = run_attack(m, as_batch(kImage), y, c);
    for (std::size_t j = 0; j < kPix; ++j) EXPECT_DOUBLE_EQ(r.adversarial[j], x[j]);
}

TEST(Ensemble, GradientOfAveragedLogits) {
    const Network m1 = linear_model(8), m2 = linear_model(9);
    Network avg = m1;
    for (std::size_t i = 0; i < avg.weight(1).size(); ++i) avg.weight(1)[i] = (m1.weight(1)[i] + m2.weight(1)[i]) / 2;
    for (std::size_t i = 0; i < kClasses; ++i) avg.bias(1)[i] = (m1.bias(1)[i] + m2.bias(1)[i]) / 2;
    const Network* models[2] = {&m1, &m2};
    const std::size_t y[1] = {2};
    const Tensor g = ensemble_input_gradient(models, as_batch(kImage), y);
    const auto expect = linear_grad(avg, kImage, 2);
    for (std::size_t j = 0; j < kPix; ++j) EXPECT_NEAR(g[j], expect[j], 1e-14);
}

TEST(InputDiversity, ScaleRangeAndProbability) {
    RngStream r(3, 9);
    std::vector<int> seen(33, 0);
    int applied = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const DiversityDraw d = draw_diversity(r, 0.5, 32, 32);
        if (!d.applied) continue;
        ++applied;
        ASSERT_GE(d.rows, 29u);
        ASSERT_LE(d.rows, 32u);
        ASSERT_LE(d.top + d.rows, 32u);
        ASSERT_LE(d.left + d.cols, 32u);
        ++seen[d.rows];
    }
    EXPECT_NEAR(applied / double(n), 0.5, 0.015);
    for (std::size_t s = 29; s <= 32; ++s) EXPECT_GT(seen[s], applied / 8);
}

TEST(InputDiversity, AdjointIdentity) {
    RngStream r(4, 4);
    for (int trial = 0; trial < 20; ++trial) {
        const DiversityDraw d = draw_diversity(r, 1.0, 12, 12);
        const Tensor x = random_tensor({2, 12, 12}, RngStream(trial, 1));
        const Tensor y = random_tensor({2, 12, 12}, RngStream(trial, 2));
        const Tensor ax = apply_diversity(x, d), aty = diversity_adjoint(y, d);
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            lhs += ax[i] * y[i];
            rhs += x[i] * aty[i];
        }
        EXPECT_NEAR(lhs, rhs, 1e-12);
    }
}

TEST(TranslationInvariance, KernelShape) {
    const auto k = gaussian_kernel(7);
    EXPECT_NEAR(std::accumulate(k.begin(), k.end(), 0.0), 1.0, 1e-15);
    EXPECT_NEAR(k[3 * 7 + 3] / k[3 * 7 + 4], std::exp(0.5), 1e-12);
    EXPECT_NEAR(k[0] / k[3 * 7 + 3], std::exp(-9.0), 1e-12);
    EXPECT_THROW(gaussian_kernel(4), ArgumentError);
}

TEST(TranslationInvariance, MatchesPaddedConvolutionOracle) {
    const std::size_t h = 6, w = 5, k = 3;
    const Tensor g = random_tensor({1, h, w}, RngStream(1, 7));
    const auto kern = gaussian_kernel(k);
    std::vector<double> padded((h + 2) * (w + 2));
    for (std::size_t y = 0; y < h + 2; ++y)
        for (std::size_t x = 0; x < w + 2; ++x) {
            const std::size_t sy = std::min<std::size_t>(h - 1, y == 0 ? 0 : y - 1);
            const std::size_t sx = std::min<std::size_t>(w - 1, x == 0 ? 0 : x - 1);
            padded[y * (w + 2) + x] = g[sy * w + sx];
        }
    const Tensor s = ti_smooth(g, k);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) acc += kern[i * k + j] * padded[(y + i) * (w + 2) + x + j];
            EXPECT_NEAR(s[y * w + x], acc, 1e-15);
        }
    const Tensor flat({1, h, w}, 0.37);
    EXPECT_LT(lpm::test::max_abs_diff(ti_smooth(flat, 5), flat), 1e-15);
}

TEST(Streams, SplittingBatchWithStreamIdsChangesNothing) {
    const Network m = lpm::test::tiny_conv(10);
    const Tensor x = random_tensor({4, 1, 8, 8}, RngStream(5, 5), 0.0, 1.0);
    const std::vector<std::size_t> y{0, 1, 2, 0};
    const std::vector<std::uint64_t> ids{40, 41, 42, 43};
    AttackConfig c = make_variant("di-fgsm", config(5), {1.0, 0.9, 7});
    c.rng = RngStream(9, 9);
    const auto whole = run_attack(m, x, y, c, {}, ids);
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t yi[1] = {y[i]};
        const std::uint64_t id[1] = {ids[i]};
        const auto one = run_attack(m, x.slice(i).reshaped({1, 1, 8, 8}), yi, c, {}, id);
        EXPECT_TRUE(one.adversarial.slice(0) == whole.adversarial.slice(i));
    }
}

TEST(Variants, RegistryAndValidation) {
    EXPECT_THROW(make_variant("pgd", {}), ArgumentError);
    const AttackConfig mi = make_variant("mi-fgsm", {}, {0.7, 0.5, 7});
    EXPECT_EQ(mi.momentum, 0.7);
    EXPECT_EQ(make_variant("ti-fgsm", {}).ti_kernel, 7u);
    AttackConfig bad;
    bad.epsilon = -1;
    EXPECT_THROW(bad.validate(), ArgumentError);
    const Network m = linear_model(1);
    const std::size_t y[1] = {0};
    std::vector<double> out_of_range = kImage;
    out_of_range[0] = 1.5;
    EXPECT_THROW(run_attack(m, as_batch(out_of_range), y, config(1)), ArgumentError);
}
