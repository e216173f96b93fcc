#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "lpm/data/dataset.hpp"
#include "lpm/error.hpp"
#include "lpm/numerics/loss.hpp"
#include "lpm/zoo/architectures.hpp"

namespace lpm {

struct TrainConfig {
    std::uint32_t epochs = 6;
    std::size_t batch_size = 32;
    double learning_rate = 0.02;
    double momentum = 0.9;
    std::uint64_t seed = 1;
    bool adversarial = false;
    double adversarial_epsilon = 16.0 / 255.0;

    void validate() const {
        if (epochs < 1) throw ArgumentError("TrainConfig: epochs must be >= 1");
        if (!(learning_rate > 0.0)) throw ArgumentError("TrainConfig: learning rate must be > 0");
        if (batch_size == 0) throw ArgumentError("TrainConfig: batch size must be > 0");
        if (momentum < 0.0 || momentum >= 1.0) throw ArgumentError("TrainConfig: momentum must be in [0,1)");
    }
};

inline double accuracy(const Network& net, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    const auto pred = predict(net, data.images);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) hits += pred[i] == data.labels[i];
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Minibatch SGD with momentum on mean cross-entropy. With the adversarial
/// flag, every other sample of each batch is replaced by its one-step
/// sign-gradient example at the current weights (50/50 clean/adversarial).
inline ModelHandle train(ModelHandle model, const Dataset& train_set, const TrainConfig& cfg,
                         const Dataset* test_set = nullptr) {
    cfg.validate();
    if (train_set.split != Split::train) throw ArgumentError("train: dataset split must be 'train'");
    if (train_set.size() == 0) throw ArgumentError("train: empty dataset");

    Network& net = model.network;
    const std::size_t n = train_set.size();
    const ActShape in = net.input_shape();
    const std::size_t per = in.size();

    std::vector<Tensor> velocity_w, velocity_b;
    for (std::size_t i = 0; i < net.layers().size(); ++i) {
        velocity_w.emplace_back(net.weight(i).shape());
        velocity_b.emplace_back(net.bias(i).shape());
    }

    const RngStream base(cfg.seed, 0x7a11);
    std::vector<std::size_t> order(n);
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream shuffle_rng = base.child(epoch);
        shuffle_rng.shuffle(std::span<std::size_t>(order));

        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, n - start);
            Tensor batch({b, in.c, in.h, in.w});
            std::vector<std::size_t> labels(b);
            for (std::size_t j = 0; j < b; ++j) {
                const std::size_t idx = order[start + j];
                std::copy_n(train_set.images.data() + idx * per, per, batch.data() + j * per);
                labels[j] = train_set.labels[idx];
            }
            try {
                if (cfg.adversarial) {
                    const Tensor g = grad_wrt_input(net, batch, labels);
                    for (std::size_t j = 1; j < b; j += 2)
                        for (std::size_t p = 0; p < per; ++p) {
                            const double gv = g[j * per + p];
                            const double s = gv > 0.0 ? 1.0 : (gv < 0.0 ? -1.0 : 0.0);
                            double& px = batch[j * per + p];
                            px = std::clamp(px + cfg.adversarial_epsilon * s, 0.0, 1.0);
                        }
                }
                const ForwardTrace tr = net.trace(batch);
                const Tensor dlogits = cross_entropy_grad(tr.logits, labels, 1.0 / static_cast<double>(b));
                const ParamGradients grads = net.backward_params(tr, dlogits);
                for (std::size_t i = 0; i < net.layers().size(); ++i) {
                    if (!net.layers()[i].has_params()) continue;
                    auto step = [&](Tensor& param, Tensor& vel, const Tensor& grad) {
                        for (std::size_t k = 0; k < param.size(); ++k) {
                            vel[k] = cfg.momentum * vel[k] + grad[k];
                            param[k] -= cfg.learning_rate * vel[k];
                        }
                    };
                    step(net.weight(i), velocity_w[i], grads.weight[i]);
                    step(net.bias(i), velocity_b[i], grads.bias[i]);
                    if (!net.weight(i).all_finite() || !net.bias(i).all_finite())
                        throw NumericError("non-finite weights at layer " + std::to_string(i));
                }
            } catch (const NumericError& e) {
                throw NumericError("training '" + model.name + "' diverged in epoch " + std::to_string(epoch) +
                                   ": " + e.what());
            }
        }
    }
    model.meta.seed = cfg.seed;
    model.meta.epochs = cfg.epochs;
    model.meta.adversarial = cfg.adversarial;
    model.meta.test_accuracy = test_set ? accuracy(net, *test_set) : 0.0;
    return model;
}

}  // namespace lpm
