#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>

#include "helpers.hpp"
#include "lpm/data/eval_set.hpp"
#include "lpm/data/idx.hpp"
#include "lpm/data/synth.hpp"
#include "lpm/zoo/architectures.hpp"
#include "lpm/zoo/train.hpp"

using namespace lpm;

namespace {

std::string fixture(const std::string& name) { return std::string(LPM_FIXTURES) + "/" + name; }

std::string parse_error(const std::string& images, const std::string& labels) {
    try {
        load_idx(fixture(images), fixture(labels));
    } catch (const ParseError& e) {
        return e.what();
    }
    return "no error";
}

}  // namespace

TEST(Idx, HandCheckedTwoByTwoImage) {
    const std::vector<std::uint8_t> img{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 128, 255, 64};
    const std::vector<std::uint8_t> lab{0, 0, 8, 1, 0, 0, 0, 1, 7};
    const Dataset d = parse_idx(img, lab);
    ASSERT_EQ(d.images.shape(), (Shape{1, 1, 2, 2}));
    EXPECT_EQ(d.images[0], 0.0);
    EXPECT_EQ(d.images[1], 128.0 / 255.0);
    EXPECT_EQ(d.images[2], 1.0);
    EXPECT_EQ(d.images[3], 64.0 / 255.0);
    EXPECT_EQ(d.labels, std::vector<std::size_t>{7});
}

TEST(Idx, WrongLabelMagicNamesExpectedValue) {
    const std::vector<std::uint8_t> img{0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 9};
    const std::vector<std::uint8_t> lab{0, 0, 8, 3, 0, 0, 0, 1, 0};
    try {
        parse_idx(img, lab);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_NE(std::string(e.what()).find("expected magic 2049"), std::string::npos);
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Idx, EmptyStreamFailsAtOffsetZero) {
    const std::vector<std::uint8_t> lab{0, 0, 8, 1, 0, 0, 0, 0};
    try {
        parse_idx({}, lab);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.offset(), 0u);
    }
}

TEST(Idx, RoundTripThroughWriter) {
    Dataset d = synth_generate(RngStream(3, 0), 7, 10);
    for (double& v : d.images.values()) v = std::round(v * 255.0) / 255.0;
    const auto [img, lab] = serialize_idx(d);
    const Dataset back = parse_idx(img, lab);
    EXPECT_TRUE(back.images == d.images);
    EXPECT_EQ(back.labels, d.labels);
}

TEST(Idx, CommittedFixtureParses) {
    const Dataset d = load_idx(fixture("digits-images.idx3-ubyte"), fixture("digits-labels.idx1-ubyte"));
    ASSERT_EQ(d.images.shape(), (Shape{6, 1, 28, 28}));
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{3, 0, 9, 1, 7, 4}));
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t p = 0; p < 28 * 28; p += 97)
            EXPECT_EQ(d.images[i * 784 + p], double((i * 131 + p * 7) % 256) / 255.0);
    const Dataset padded = pad_to(d, 32);
    EXPECT_EQ(padded.images.shape(), (Shape{6, 1, 32, 32}));
    EXPECT_EQ(padded.images[0], 0.0);
    EXPECT_EQ(padded.images[2 * 32 + 2], d.images[0]);
}

TEST(Idx, MalformedFixturesAreRejected) {
    EXPECT_NE(parse_error("digits-images.idx3-ubyte", "bad-magic-labels.idx1-ubyte").find("expected magic 2049"),
              std::string::npos);
    EXPECT_NE(parse_error("truncated-images.idx3-ubyte", "digits-labels.idx1-ubyte").find("truncated"),
              std::string::npos);
    EXPECT_NE(parse_error("digits-images.idx3-ubyte", "count-mismatch-labels.idx1-ubyte").find("does not match"),
              std::string::npos);
}

TEST(Synth, SameSeedIsBitIdentical) {
    const Dataset a = synth_generate(RngStream(9, 1), 50, 10);
    const Dataset b = synth_generate(RngStream(9, 1), 50, 10);
    const Dataset c = synth_generate(RngStream(9, 2), 50, 10);
    EXPECT_TRUE(a.images == b.images);
    EXPECT_EQ(a.labels, b.labels);
    EXPECT_FALSE(a.images == c.images);
    a.validate();
}

TEST(Synth, ZeroCountRejected) { EXPECT_THROW(synth_generate(RngStream(1, 1), 0, 10), ArgumentError); }

TEST(Synth, ClassesAreSeparableByTwoLayerProbe) {
    const Dataset train_set = synth_generate(RngStream(21, 1), 1000, 10, {}, Split::train);
    const Dataset test_set = synth_generate(RngStream(21, 2), 500, 10, {}, Split::test);
    ModelHandle probe;
    probe.name = "probe";
    probe.architecture = "probe";
    probe.network = Network({1, 32, 32}, {LayerSpec::flatten(), LayerSpec::affine(1024, 64), LayerSpec::relu(),
                                          LayerSpec::affine(64, 10)});
    probe.network.initialize(RngStream(21, 3));
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 0.01;
    const ModelHandle trained = train(probe, train_set, tc);
    EXPECT_GE(accuracy(trained.network, test_set), 0.95);
}

TEST(EvalSet, NoModelsTakesFirstN) {
    const Dataset d = synth_generate(RngStream(4, 4), 20, 10, {}, Split::test);
    const auto idx = select_eval_indices({}, d, 5, RngStream(1, 1));
    EXPECT_EQ(idx, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(EvalSet, PoolMatchesBruteForceScan) {
    const Dataset d = synth_generate(RngStream(4, 5), 150, 10, {}, Split::test);
    const Dataset tr = synth_generate(RngStream(4, 7), 300, 10, {}, Split::train);
    TrainConfig tc;
    tc.epochs = 2;
    const Network a = train(build("mlp", 1), tr, tc).network;
    const Network b = train(build("conv-strided", 2), tr, tc).network;
    std::size_t brute = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const Tensor x = d.image(i);
        brute += predict(a, x.reshaped({1, 1, 32, 32}))[0] == d.labels[i] &&
                 predict(b, x.reshaped({1, 1, 32, 32}))[0] == d.labels[i];
    }
    ASSERT_GT(brute, 10u);
    ASSERT_LT(brute, d.size());
    const Network* models[2] = {&a, &b};
    const auto idx = select_eval_indices(models, d, brute, RngStream(3, 3));
    EXPECT_EQ(idx.size(), brute);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), brute);
    for (std::size_t i : idx) {
        EXPECT_EQ(predict(a, d.image(i).reshaped({1, 1, 32, 32}))[0], d.labels[i]);
        EXPECT_EQ(predict(b, d.image(i).reshaped({1, 1, 32, 32}))[0], d.labels[i]);
    }
    try {
        select_eval_indices(models, d, brute + 1, RngStream(3, 3));
        FAIL();
    } catch (const ArgumentError& e) {
        EXPECT_NE(std::string(e.what()).find("only " + std::to_string(brute)), std::string::npos);
    }
}

TEST(EvalSet, SmallerSetIsSubsetOfLargerDraw) {
    const Dataset d = synth_generate(RngStream(4, 6), 90, 3, {}, Split::test);
    Network a({1, 32, 32}, {LayerSpec::flatten(), LayerSpec::affine(1024, 3)});
    a.initialize(RngStream(6, 6));
    const Network* models[1] = {&a};
    const std::size_t pool = correctly_classified(models, d).size();
    ASSERT_GE(pool, 10u);
    const auto big = select_eval_indices(models, d, pool - 2, RngStream(5, 5));
    const auto small = select_eval_indices(models, d, pool / 2, RngStream(5, 5));
    EXPECT_TRUE(std::includes(big.begin(), big.end(), small.begin(), small.end()));
}
