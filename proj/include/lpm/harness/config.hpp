#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "lpm/attacks/attack.hpp"
#include "lpm/data/synth.hpp"
#include "lpm/error.hpp"
#include "lpm/lpm/de.hpp"
#include "lpm/lpm/mask.hpp"
#include "lpm/saliency/saliency.hpp"
#include "lpm/zoo/architectures.hpp"
#include "lpm/zoo/train.hpp"

namespace lpm {

struct DataSettings {
    bool synthetic = true;
    std::string train_images, train_labels, test_images, test_labels;
    std::size_t synthetic_train = 6000;
    std::size_t synthetic_test = 1000;
    std::size_t classes = 10;
    std::uint64_t seed = 1;
    std::size_t eval_size = 200;
    SynthStyle style;
};

struct ZooSettings {
    std::vector<std::string> architectures = architecture_ids();
    std::vector<std::string> adversarial{"lenet"};  // also trained adversarially as "<id>-adv"
    std::uint64_t seed = 7;
    TrainConfig train;
    std::vector<std::pair<std::string, double>> learning_rates{{"mlp", 0.005}};  // per-architecture overrides

    double learning_rate_for(const std::string& arch) const {
        for (const auto& [name, lr] : learning_rates)
            if (name == arch) return lr;
        return train.learning_rate;
    }
};

/// Model names per role. Targets trained adversarially become defended targets.
struct RoleSettings {
    std::string source = "conv-small";
    std::vector<std::string> simulated{"conv-wide", "pool-variant", "conv-deep"};
    std::vector<std::string> targets{"mlp", "lenet", "conv-strided", "lenet-adv"};
};

struct AttackSettings {
    AttackConfig base;
    VariantParams params;
    std::vector<std::string> variants{"i-fgsm", "mi-fgsm"};
};

struct SaliencySettings {
    std::size_t samples = 32;
    double sigma = 0.1;
    GraphOptions graph;
    std::size_t images = 0;       // 0 = whole eval set
    std::size_t export_maps = 4;  // images whose maps are written as PGM
};

struct SweepSettings {
    std::vector<std::string> axes{"patch_size", "mask_count"};
    std::vector<std::size_t> patch_sizes{1, 2, 4, 8, 16};
    std::vector<std::size_t> mask_counts{1, 4, 8, 12};
    std::vector<std::size_t> simulated_counts{1, 2, 3};
    std::vector<Aggregation> aggregations{Aggregation::intersect, Aggregation::cycle, Aggregation::grad_average};
    std::vector<std::string> attacks{"i-fgsm"};
};

struct RunSettings {
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string out = "out";
    std::string models;  // empty = <out>/models
    std::string masks;   // empty = <out>/masks/masks.lpmm
    bool fast = false;
};

/// Everything needed to rerun an experiment.
struct ExperimentConfig {
    DataSettings data;
    ZooSettings zoo;
    RoleSettings roles;
    AttackSettings attack;
    DeConfig de;
    Aggregation aggregation = Aggregation::intersect;
    SaliencySettings saliency;
    SweepSettings sweep;
    RunSettings run;

    /// The CI profile: smaller search and eval set.
    void apply_fast_profile() {
        de.population = 12;
        de.generations = 5;
        de.inner_iterations = 5;
        data.eval_size = 50;
        run.fast = true;
    }

    std::string models_dir() const { return run.models.empty() ? run.out + "/models" : run.models; }
    std::string masks_file() const { return run.masks.empty() ? run.out + "/masks/masks.lpmm" : run.masks; }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto piece = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
        if (!piece.empty()) out.push_back(piece);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline double parse_number(std::string_view text) {
    const std::string s = trim(text);
    auto one = [&](std::string_view part) {
        double v = 0.0;
        const auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
        if (ec != std::errc() || p != part.data() + part.size()) throw ArgumentError("not a number: '" + s + "'");
        return v;
    };
    const auto slash = s.find('/');
    if (slash == std::string::npos) return one(s);
    const double den = one(std::string_view(s).substr(slash + 1));
    if (den == 0.0) throw ArgumentError("division by zero in '" + s + "'");
    return one(std::string_view(s).substr(0, slash)) / den;
}

inline std::uint64_t parse_count(std::string_view text) {
    const std::string s = trim(text);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ArgumentError("not a non-negative integer: '" + s + "'");
    return v;
}

inline bool parse_flag(std::string_view text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ArgumentError("not a boolean: '" + s + "'");
}

inline std::string show(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (const auto& x : v) {
        if (!s.empty()) s += ",";
        if constexpr (std::is_same_v<T, std::string>)
            s += x;
        else if constexpr (std::is_same_v<T, Aggregation>)
            s += to_string(x);
        else
            s += std::to_string(x);
    }
    return s;
}

struct Key {
    std::string name;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class Access>
Key number(std::string name, Access access) {
    return {std::move(name), [access](ExperimentConfig& c, std::string_view v) { access(c) = parse_number(v); },
            [access](const ExperimentConfig& c) { return show(access(const_cast<ExperimentConfig&>(c))); }};
}

template <class Access>
Key count(std::string name, Access access) {
    return {std::move(name),
            [access](ExperimentConfig& c, std::string_view v) {
                using T = std::remove_reference_t<decltype(access(c))>;
                access(c) = static_cast<T>(parse_count(v));
            },
            [access](const ExperimentConfig& c) { return std::to_string(access(const_cast<ExperimentConfig&>(c))); }};
}

template <class Access>
Key flag(std::string name, Access access) {
    return {std::move(name), [access](ExperimentConfig& c, std::string_view v) { access(c) = parse_flag(v); },
            [access](const ExperimentConfig& c) {
                return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
            }};
}

template <class Access>
Key text(std::string name, Access access) {
    return {std::move(name), [access](ExperimentConfig& c, std::string_view v) { access(c) = trim(v); },
            [access](const ExperimentConfig& c) { return access(const_cast<ExperimentConfig&>(c)); }};
}

template <class Access>
Key names(std::string name, Access access) {
    return {std::move(name), [access](ExperimentConfig& c, std::string_view v) { access(c) = split_list(v); },
            [access](const ExperimentConfig& c) { return join(access(const_cast<ExperimentConfig&>(c))); }};
}

template <class Access>
Key counts(std::string name, Access access) {
    return {std::move(name),
            [access](ExperimentConfig& c, std::string_view v) {
                std::vector<std::size_t> out;
                for (const auto& s : split_list(v)) out.push_back(static_cast<std::size_t>(parse_count(s)));
                access(c) = std::move(out);
            },
            [access](const ExperimentConfig& c) { return join(access(const_cast<ExperimentConfig&>(c))); }};
}

template <class Access>
Key rates(std::string name, Access access) {
    return {std::move(name),
            [access](ExperimentConfig& c, std::string_view v) {
                std::vector<std::pair<std::string, double>> out;
                for (const auto& item : split_list(v)) {
                    const auto colon = item.find(':');
                    if (colon == std::string::npos) throw ArgumentError("expected name:rate, got '" + item + "'");
                    out.emplace_back(trim(item.substr(0, colon)), parse_number(item.substr(colon + 1)));
                }
                access(c) = std::move(out);
            },
            [access](const ExperimentConfig& c) {
                std::string s;
                for (const auto& [n, r] : access(const_cast<ExperimentConfig&>(c))) {
                    if (!s.empty()) s += ",";
                    s += n + ":" + show(r);
                }
                return s;
            }};
}

inline const std::vector<Key>& keys() {
    using C = ExperimentConfig;
    static const std::vector<Key> all{
        flag("data.synthetic", [](C& c) -> bool& { return c.data.synthetic; }),
        text("data.train_images", [](C& c) -> std::string& { return c.data.train_images; }),
        text("data.train_labels", [](C& c) -> std::string& { return c.data.train_labels; }),
        text("data.test_images", [](C& c) -> std::string& { return c.data.test_images; }),
        text("data.test_labels", [](C& c) -> std::string& { return c.data.test_labels; }),
        count("data.synthetic_train", [](C& c) -> std::size_t& { return c.data.synthetic_train; }),
        count("data.synthetic_test", [](C& c) -> std::size_t& { return c.data.synthetic_test; }),
        count("data.classes", [](C& c) -> std::size_t& { return c.data.classes; }),
        count("data.seed", [](C& c) -> std::uint64_t& { return c.data.seed; }),
        count("data.eval_size", [](C& c) -> std::size_t& { return c.data.eval_size; }),
        number("synth.background_max", [](C& c) -> double& { return c.data.style.background_max; }),
        number("synth.ink_min", [](C& c) -> double& { return c.data.style.ink_min; }),
        number("synth.ink_max", [](C& c) -> double& { return c.data.style.ink_max; }),
        number("synth.noise_sigma", [](C& c) -> double& { return c.data.style.noise_sigma; }),
        count("synth.clutter_strokes", [](C& c) -> std::size_t& { return c.data.style.clutter_strokes; }),
        number("synth.clutter_ink", [](C& c) -> double& { return c.data.style.clutter_ink; }),
        number("synth.jitter", [](C& c) -> double& { return c.data.style.jitter; }),
        names("zoo.architectures", [](C& c) -> std::vector<std::string>& { return c.zoo.architectures; }),
        names("zoo.adversarial", [](C& c) -> std::vector<std::string>& { return c.zoo.adversarial; }),
        count("zoo.seed", [](C& c) -> std::uint64_t& { return c.zoo.seed; }),
        count("train.epochs", [](C& c) -> std::uint32_t& { return c.zoo.train.epochs; }),
        count("train.batch_size", [](C& c) -> std::size_t& { return c.zoo.train.batch_size; }),
        number("train.learning_rate", [](C& c) -> double& { return c.zoo.train.learning_rate; }),
        rates("zoo.learning_rates",
              [](C& c) -> std::vector<std::pair<std::string, double>>& { return c.zoo.learning_rates; }),
        number("train.momentum", [](C& c) -> double& { return c.zoo.train.momentum; }),
        number("train.adversarial_epsilon", [](C& c) -> double& { return c.zoo.train.adversarial_epsilon; }),
        text("roles.source", [](C& c) -> std::string& { return c.roles.source; }),
        names("roles.simulated", [](C& c) -> std::vector<std::string>& { return c.roles.simulated; }),
        names("roles.targets", [](C& c) -> std::vector<std::string>& { return c.roles.targets; }),
        number("attack.epsilon", [](C& c) -> double& { return c.attack.base.epsilon; }),
        number("attack.alpha", [](C& c) -> double& { return c.attack.base.alpha; }),
        count("attack.iterations", [](C& c) -> std::uint32_t& { return c.attack.base.iterations; }),
        number("attack.momentum", [](C& c) -> double& { return c.attack.params.momentum; }),
        number("attack.di_probability", [](C& c) -> double& { return c.attack.params.di_probability; }),
        count("attack.ti_kernel", [](C& c) -> std::size_t& { return c.attack.params.ti_kernel; }),
        names("attack.variants", [](C& c) -> std::vector<std::string>& { return c.attack.variants; }),
        {"attack.aggregation", [](C& c, std::string_view v) { c.aggregation = parse_aggregation(trim(v)); },
         [](const C& c) { return std::string(to_string(c.aggregation)); }},
        count("de.population", [](C& c) -> std::size_t& { return c.de.population; }),
        count("de.generations", [](C& c) -> std::uint32_t& { return c.de.generations; }),
        number("de.superior_rate", [](C& c) -> double& { return c.de.superior_rate; }),
        number("de.zeros_rate", [](C& c) -> double& { return c.de.zeros_rate; }),
        number("de.mutation_probability", [](C& c) -> double& { return c.de.mutation_probability; }),
        count("de.inner_iterations", [](C& c) -> std::uint32_t& { return c.de.inner_iterations; }),
        count("de.patch_size", [](C& c) -> std::size_t& { return c.de.patch_size; }),
        count("de.mask_count", [](C& c) -> std::size_t& { return c.de.mask_count; }),
        {"de.production",
         [](C& c, std::string_view v) {
             const std::string s = trim(v);
             if (s == "top-k")
                 c.de.production = MaskProduction::top_k;
             else if (s == "independent")
                 c.de.production = MaskProduction::independent_runs;
             else
                 throw ArgumentError("de.production must be top-k or independent, got '" + s + "'");
         },
         [](const C& c) {
             return std::string(c.de.production == MaskProduction::top_k ? "top-k" : "independent");
         }},
        count("saliency.samples", [](C& c) -> std::size_t& { return c.saliency.samples; }),
        number("saliency.sigma", [](C& c) -> double& { return c.saliency.sigma; }),
        {"saliency.threshold",
         [](C& c, std::string_view v) {
             const std::string s = trim(v);
             if (s == "mean-std")
                 c.saliency.graph.rule = ThresholdRule::mean_plus_std;
             else if (s == "quantile")
                 c.saliency.graph.rule = ThresholdRule::top_quantile;
             else
                 throw ArgumentError("saliency.threshold must be mean-std or quantile, got '" + s + "'");
         },
         [](const C& c) {
             return std::string(c.saliency.graph.rule == ThresholdRule::mean_plus_std ? "mean-std" : "quantile");
         }},
        number("saliency.quantile", [](C& c) -> double& { return c.saliency.graph.quantile; }),
        {"saliency.connectivity",
         [](C& c, std::string_view v) {
             const auto n = parse_count(v);
             if (n != 4 && n != 8) throw ArgumentError("saliency.connectivity must be 4 or 8");
             c.saliency.graph.connectivity = n == 4 ? Connectivity::four : Connectivity::eight;
         },
         [](const C& c) { return std::to_string(static_cast<int>(c.saliency.graph.connectivity)); }},
        count("saliency.images", [](C& c) -> std::size_t& { return c.saliency.images; }),
        count("saliency.export_maps", [](C& c) -> std::size_t& { return c.saliency.export_maps; }),
        names("sweep.axes", [](C& c) -> std::vector<std::string>& { return c.sweep.axes; }),
        counts("sweep.patch_sizes", [](C& c) -> std::vector<std::size_t>& { return c.sweep.patch_sizes; }),
        counts("sweep.mask_counts", [](C& c) -> std::vector<std::size_t>& { return c.sweep.mask_counts; }),
        counts("sweep.simulated_counts", [](C& c) -> std::vector<std::size_t>& { return c.sweep.simulated_counts; }),
        {"sweep.aggregations",
         [](C& c, std::string_view v) {
             c.sweep.aggregations.clear();
             for (const auto& s : split_list(v)) c.sweep.aggregations.push_back(parse_aggregation(s));
         },
         [](const C& c) { return join(c.sweep.aggregations); }},
        names("sweep.attacks", [](C& c) -> std::vector<std::string>& { return c.sweep.attacks; }),
        count("run.seed", [](C& c) -> std::uint64_t& { return c.run.seed; }),
        count("run.workers", [](C& c) -> std::size_t& { return c.run.workers; }),
        text("run.out", [](C& c) -> std::string& { return c.run.out; }),
        text("run.models", [](C& c) -> std::string& { return c.run.models; }),
        text("run.masks", [](C& c) -> std::string& { return c.run.masks; }),
        flag("run.fast", [](C& c) -> bool& { return c.run.fast; }),
    };
    return all;
}

}  // namespace config_detail

/// Sets one dotted key, e.g. set_config_value(cfg, "de.population", "40").
inline void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
    for (const auto& k : config_detail::keys())
        if (k.name == key) {
            try {
                k.set(cfg, value);
            } catch (const ArgumentError& e) {
                throw ArgumentError(std::string(key) + ": " + e.what());
            }
            return;
        }
    throw ArgumentError("unknown config key '" + std::string(key) + "'");
}

/// Parses "section.key = value" lines on top of `base`. '#' starts a comment.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
    std::size_t offset = 0, line_no = 0;
    std::set<std::string> seen;
    while (offset < text.size()) {
        const auto end = text.find('\n', offset);
        std::string_view line = text.substr(offset, end == std::string_view::npos ? std::string_view::npos : end - offset);
        const std::size_t line_start = offset;
        offset = end == std::string_view::npos ? text.size() : end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        if (config_detail::trim(line).empty()) continue;
        const auto eq = line.find('=');
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (eq == std::string_view::npos) throw ParseError(where + "expected 'key = value'", line_start);
        const std::string key = config_detail::trim(line.substr(0, eq));
        if (!seen.insert(key).second) throw ParseError(where + "duplicate key '" + key + "'", line_start);
        try {
            set_config_value(base, key, line.substr(eq + 1));
        } catch (const ArgumentError& e) {
            throw ParseError(where + e.what(), line_start);
        }
    }
    return base;
}

/// One "key = value" line per key in a fixed order. run.workers is left out
/// since it never changes results.
inline std::string echo_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& k : config_detail::keys())
        if (k.name != "run.workers") out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

}  // namespace lpm
