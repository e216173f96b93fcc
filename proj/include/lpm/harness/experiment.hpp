#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "lpm/attacks/attack.hpp"
#include "lpm/data/eval_set.hpp"
#include "lpm/data/idx.hpp"
#include "lpm/data/synth.hpp"
#include "lpm/harness/config.hpp"
#include "lpm/harness/io.hpp"
#include "lpm/harness/parallel.hpp"
#include "lpm/lpm/de.hpp"
#include "lpm/saliency/saliency.hpp"
#include "lpm/zoo/train.hpp"
#include "lpm/zoo/weights_io.hpp"

#ifndef LPM_REVISION
#define LPM_REVISION "unknown"
#endif

namespace lpm {

// Stream tags under the master seed.
inline constexpr std::uint64_t kEvalStream = 0xe7a1;
inline constexpr std::uint64_t kDeStream = 0xde5e;
inline constexpr std::uint64_t kInnerAttackStream = 0xde5f;
inline constexpr std::uint64_t kAttackStream = 0xa77a;
inline constexpr std::uint64_t kSaliencyStream = 0x5a11;

// Images per attack work item. Fixed so the split never depends on the worker count.
inline constexpr std::size_t kAttackChunk = 8;

struct DataBundle {
    Dataset train;
    Dataset test;
};

inline Dataset load_idx_pair(const std::string& images, const std::string& labels, std::size_t classes, Split split) {
    for (const auto& p : {images, labels}) {
        if (p.empty()) throw ArgumentError("dataset path not set (use --synthetic or set data.*_images/labels)");
        if (!std::filesystem::exists(p)) throw Error("dataset file not found: " + p);
    }
    Dataset d = load_idx(images, labels, classes, split);
    if (d.height() < 32 || d.width() < 32) d = pad_to(d, 32);
    d.validate();
    return d;
}

inline DataBundle load_data(const DataSettings& s, bool need_train) {
    DataBundle b;
    if (s.synthetic) {
        const RngStream root(s.seed, 0xda7a);
        if (need_train) b.train = synth_generate(root.child(1), s.synthetic_train, s.classes, s.style, Split::train);
        b.test = synth_generate(root.child(2), s.synthetic_test, s.classes, s.style, Split::test);
    } else {
        if (need_train) b.train = load_idx_pair(s.train_images, s.train_labels, s.classes, Split::train);
        b.test = load_idx_pair(s.test_images, s.test_labels, s.classes, Split::test);
    }
    return b;
}

/// (name, architecture, adversarial) for every model the zoo trains.
inline std::vector<std::tuple<std::string, std::string, bool>> zoo_models(const ZooSettings& z) {
    std::vector<std::tuple<std::string, std::string, bool>> out;
    for (const auto& a : z.architectures) out.emplace_back(a, a, false);
    for (const auto& a : z.adversarial) out.emplace_back(a + "-adv", a, true);
    return out;
}

inline Role role_of(const ExperimentConfig& cfg, const std::string& name) {
    if (name == cfg.roles.source) return Role::source;
    if (std::find(cfg.roles.simulated.begin(), cfg.roles.simulated.end(), name) != cfg.roles.simulated.end())
        return Role::simulated;
    if (std::find(cfg.roles.targets.begin(), cfg.roles.targets.end(), name) != cfg.roles.targets.end()) {
        for (const auto& [n, a, adv] : zoo_models(cfg.zoo))
            if (n == name && adv) return Role::defended_target;
        return Role::target;
    }
    return Role::unassigned;
}

/// Role names exist in the zoo and no model plays two roles.
inline void validate_roles(const ExperimentConfig& cfg) {
    std::vector<std::string> known;
    for (const auto& [n, a, adv] : zoo_models(cfg.zoo)) known.push_back(n);
    auto require = [&](const std::string& n) {
        if (std::find(known.begin(), known.end(), n) == known.end())
            throw ArgumentError("role refers to unknown model '" + n + "'");
    };
    if (cfg.roles.source.empty()) throw ArgumentError("roles.source is empty");
    if (cfg.roles.simulated.empty()) throw ArgumentError("roles.simulated needs at least one model");
    if (cfg.roles.targets.empty()) throw ArgumentError("roles.targets needs at least one model");
    std::vector<std::string> all{cfg.roles.source};
    all.insert(all.end(), cfg.roles.simulated.begin(), cfg.roles.simulated.end());
    all.insert(all.end(), cfg.roles.targets.begin(), cfg.roles.targets.end());
    for (std::size_t i = 0; i < all.size(); ++i) {
        require(all[i]);
        for (std::size_t j = 0; j < i; ++j)
            if (all[i] == all[j]) throw ArgumentError("model '" + all[i] + "' is assigned to more than one role");
    }
    for (const auto& [n, a, adv] : zoo_models(cfg.zoo)) architecture_layers(a, cfg.data.classes);
}

inline std::filesystem::path model_path(const ExperimentConfig& cfg, const std::string& name) {
    return std::filesystem::path(cfg.models_dir()) / (name + ".lpmw");
}

struct TrainReport {
    std::vector<ModelHandle> models;
    std::string manifest_csv;
};

/// Trains every zoo model (concurrently across models, each single-threaded).
inline TrainReport train_zoo(const ExperimentConfig& cfg) {
    validate_roles(cfg);
    const DataBundle data = load_data(cfg.data, true);
    const auto specs = zoo_models(cfg.zoo);
    TrainReport report;
    report.models.resize(specs.size());
    parallel_for(specs.size(), cfg.run.workers, [&](std::size_t i) {
        const auto& [name, arch, adv] = specs[i];
        TrainConfig tc = cfg.zoo.train;
        tc.seed = cfg.zoo.seed;
        tc.adversarial = adv;
        tc.learning_rate = cfg.zoo.learning_rate_for(arch);
        ModelHandle m = build(arch, cfg.zoo.seed, name, cfg.data.classes);
        m.role = role_of(cfg, name);
        report.models[i] = train(std::move(m), data.train, tc, &data.test);
    });
    Csv csv({"name", "architecture", "role", "adversarial", "epochs", "seed", "parameters", "test_accuracy", "checksum"});
    for (const ModelHandle& m : report.models) {
        const auto bytes = serialize_model(m);
        char sum[17];
        std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
        csv.row({m.name, m.architecture, to_string(m.role), m.meta.adversarial ? "1" : "0",
                 std::to_string(m.meta.epochs), std::to_string(m.meta.seed),
                 std::to_string(m.network.parameter_count()), fixed(m.meta.test_accuracy, 4), sum});
    }
    report.manifest_csv = csv.str();
    return report;
}

inline TrainReport cmd_train(const ExperimentConfig& cfg) {
    TrainReport r = train_zoo(cfg);
    std::filesystem::create_directories(cfg.models_dir());
    for (const ModelHandle& m : r.models) save(m, model_path(cfg, m.name));
    write_text(std::filesystem::path(cfg.run.out) / "train" / "manifest.csv", r.manifest_csv);
    write_text(std::filesystem::path(cfg.run.out) / "train" / "config.txt", echo_config(cfg));
    return r;
}

/// Loaded models, test split and eval set of one experiment.
class Experiment {
public:
    explicit Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
        validate_roles(cfg_);
        test_ = load_data(cfg_.data, false).test;
        std::vector<std::string> names{cfg_.roles.source};
        names.insert(names.end(), cfg_.roles.simulated.begin(), cfg_.roles.simulated.end());
        names.insert(names.end(), cfg_.roles.targets.begin(), cfg_.roles.targets.end());
        for (const auto& n : names) {
            const auto path = model_path(cfg_, n);
            if (!std::filesystem::exists(path))
                throw Error("model file not found: " + path.string() + " (run the train command first)");
            ModelHandle m = load(path);
            m.role = role_of(cfg_, n);
            models_.push_back(std::move(m));
        }
        std::vector<const Network*> filter;
        for (const auto& m : models_) filter.push_back(&m.network);
        eval_indices_ = select_eval_indices(filter, test_, cfg_.data.eval_size, RngStream(cfg_.run.seed, kEvalStream));
        eval_ = test_.subset(eval_indices_, Split::eval);
    }

    const ExperimentConfig& config() const noexcept { return cfg_; }
    const Dataset& eval() const noexcept { return eval_; }
    const std::vector<std::size_t>& eval_indices() const noexcept { return eval_indices_; }

    /// Source first, then simulated, then targets, in config order.
    const std::vector<ModelHandle>& models() const noexcept { return models_; }

    const ModelHandle& model(const std::string& name) const {
        for (const auto& m : models_)
            if (m.name == name) return m;
        throw ArgumentError("no model named '" + name + "' in this experiment");
    }

    const Network& source() const { return model(cfg_.roles.source).network; }

    std::vector<const Network*> simulated(std::size_t count) const {
        if (count < 1 || count > cfg_.roles.simulated.size())
            throw ArgumentError("simulated model count must be in [1, " + std::to_string(cfg_.roles.simulated.size()) +
                                "]");
        std::vector<const Network*> out;
        for (std::size_t i = 0; i < count; ++i) out.push_back(&model(cfg_.roles.simulated[i]).network);
        return out;
    }

    std::vector<const ModelHandle*> transfer_targets() const {
        std::vector<const ModelHandle*> out;
        for (const auto& m : models_)
            if (m.role == Role::target || m.role == Role::defended_target) out.push_back(&m);
        return out;
    }

private:
    ExperimentConfig cfg_;
    Dataset test_;
    Dataset eval_;
    std::vector<std::size_t> eval_indices_;
    std::vector<ModelHandle> models_;
};

/// Why a DE setting cannot run on this image geometry, or empty if it can.
inline std::string de_infeasibility(const DeConfig& de, std::size_t height, std::size_t width) {
    if (de.patch_size == 0 || height % de.patch_size != 0 || width % de.patch_size != 0)
        return "patch size " + std::to_string(de.patch_size) + " does not tile a " + std::to_string(height) + "x" +
               std::to_string(width) + " image";
    const std::size_t rows = height / de.patch_size, cols = width / de.patch_size;
    if (initial_zero_count(de, rows, cols) < 1)
        return "zeros rate " + fixed(de.zeros_rate, 3) + " on a " + std::to_string(rows) + "x" + std::to_string(cols) +
               " grid rounds to zero dropped patches";
    if (detail::distinct_masks(rows * cols, initial_zero_count(de, rows, cols), de.population) < de.population)
        return "grid too small for " + std::to_string(de.population) + " distinct masks";
    return {};
}

/// DE masks for every eval image. Image streams are keyed by test-set index.
inline std::vector<ImageMasks> search_masks(const Experiment& exp, const DeConfig& de, std::size_t simulated_count) {
    const auto& cfg = exp.config();
    const Dataset& ev = exp.eval();
    if (const auto why = de_infeasibility(de, ev.height(), ev.width()); !why.empty()) throw ArgumentError(why);
    const auto sim = exp.simulated(simulated_count);
    std::vector<ImageMasks> out(ev.size());
    parallel_for(ev.size(), cfg.run.workers, [&](std::size_t j) {
        const std::size_t t = exp.eval_indices()[j];
        DeConfig d = de;
        d.rng = RngStream(cfg.run.seed, kDeStream).child(t);
        AttackConfig a = cfg.attack.base;
        a.rng = RngStream(cfg.run.seed, kInnerAttackStream).child(t);
        DeResult r = de_search(ev.image(j), ev.labels[j], exp.source(), sim, d, a);
        out[j] = {t, ev.labels[j], std::move(r.masks), std::move(r.best_phi), std::move(r.best_per_generation)};
    });
    return out;
}

inline std::string mask_grid_dump(std::span<const ImageMasks> all) {
    std::string s;
    for (const ImageMasks& im : all) {
        s += "image " + std::to_string(im.test_index) + " label " + std::to_string(im.label) + "\n";
        for (std::size_t k = 0; k < im.masks.size(); ++k) s += "mask " + std::to_string(k) + "\n" + im.masks[k].dump();
        for (std::size_t g = 0; g < im.evolution.size(); ++g)
            s += "generation " + std::to_string(g) + " best_phi " + fixed(im.best_phi[g], 9) + "\n" +
                 im.evolution[g].dump();
        s += "\n";
    }
    return s;
}

inline std::vector<ImageMasks> cmd_search_masks(const ExperimentConfig& cfg) {
    const Experiment exp(cfg);
    const auto masks = search_masks(exp, cfg.de, cfg.roles.simulated.size());
    const std::filesystem::path file = cfg.masks_file();
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    write_file_bytes(file, serialize_masks(masks));
    const auto dir = file.parent_path();
    write_text(dir / "grids.txt", mask_grid_dump(masks));
    Csv trace({"test_index", "generation", "best_phi"});
    for (const auto& im : masks)
        for (std::size_t g = 0; g < im.best_phi.size(); ++g)
            trace.row({std::to_string(im.test_index), std::to_string(g), fixed(im.best_phi[g], 12)});
    trace.save(dir / "de_trace.csv");
    write_text(dir / "config.txt", echo_config(cfg));
    return masks;
}

/// Loads the mask file and checks it covers exactly this experiment's eval set.
inline std::vector<ImageMasks> load_masks_for(const Experiment& exp) {
    const std::string file = exp.config().masks_file();
    if (!std::filesystem::exists(file))
        throw Error("mask file not found: " + file + " (run the search-masks command first)");
    auto masks = deserialize_masks(read_file_bytes(file));
    bool same = masks.size() == exp.eval_indices().size();
    for (std::size_t j = 0; same && j < masks.size(); ++j) same = masks[j].test_index == exp.eval_indices()[j];
    if (!same) throw Error("mask file " + file + " was produced for a different eval set");
    return masks;
}

/// Per-image mask sets using the first `count` masks (0 = all) of each image.
inline std::vector<MaskSet> mask_sets(std::span<const ImageMasks> masks, Aggregation mode, std::size_t count = 0) {
    std::vector<MaskSet> sets;
    for (const auto& im : masks) {
        const std::size_t k = count == 0 ? im.masks.size() : count;
        if (k > im.masks.size())
            throw ArgumentError("requested " + std::to_string(k) + " masks, only " + std::to_string(im.masks.size()) +
                                " were learned");
        sets.push_back(aggregate_masks(std::span<const PatchMask>(im.masks).first(k), mode));
    }
    return sets;
}

/// Attacks the eval set from the source model, chunk by chunk.
inline Tensor attack_eval_set(const Experiment& exp, const AttackConfig& attack, std::span<const MaskSet> sets = {}) {
    const auto& cfg = exp.config();
    const Dataset& ev = exp.eval();
    if (!sets.empty() && sets.size() != ev.size()) throw ArgumentError("attack: need one mask set per eval image");
    Tensor adv = ev.images;
    const std::size_t chunks = (ev.size() + kAttackChunk - 1) / kAttackChunk;
    parallel_for(chunks, cfg.run.workers, [&](std::size_t c) {
        const std::size_t lo = c * kAttackChunk, hi = std::min(ev.size(), lo + kAttackChunk);
        std::vector<std::size_t> rows(hi - lo);
        for (std::size_t j = lo; j < hi; ++j) rows[j - lo] = j;
        const Dataset part = ev.subset(rows, Split::eval);
        std::vector<std::uint64_t> ids;
        for (std::size_t j = lo; j < hi; ++j) ids.push_back(exp.eval_indices()[j]);
        AttackConfig a = attack;
        a.rng = RngStream(cfg.run.seed, kAttackStream);
        const auto part_sets = sets.empty() ? std::span<const MaskSet>{} : sets.subspan(lo, hi - lo);
        const AttackResult r = run_attack(exp.source(), part.images, part.labels, a, part_sets, ids);
        for (std::size_t j = lo; j < hi; ++j) adv.set_slice(j, r.adversarial.slice(j - lo));
    });
    return adv;
}

struct SuccessRow {
    std::string attack;       // e.g. "i-fgsm" or "lpm-i-fgsm"
    std::string aggregation;  // "-" for unmasked attacks
    std::string model;
    Role role = Role::unassigned;
    std::size_t successes = 0;
    std::size_t images = 0;
    std::vector<bool> flags;  // per eval image

    double rate() const { return images ? static_cast<double>(successes) / static_cast<double>(images) : 0.0; }
};

inline std::vector<SuccessRow> score_adversarial(const Experiment& exp, const std::string& attack,
                                                 const std::string& aggregation, const Tensor& adv) {
    std::vector<SuccessRow> rows;
    for (const auto& m : exp.models()) {
        SuccessRow r{attack, aggregation, m.name, m.role, 0, exp.eval().size(), {}};
        r.flags = misclassified(m.network, adv, exp.eval().labels);
        r.successes = static_cast<std::size_t>(std::count(r.flags.begin(), r.flags.end(), true));
        rows.push_back(std::move(r));
    }
    return rows;
}

/// White-box rate and mean transfer rate over target and defended-target models.
struct AttackSummary {
    std::string attack, aggregation;
    double white_box = 0.0;
    double transfer_mean = 0.0;
    std::size_t targets = 0;
};

inline std::vector<AttackSummary> summarize(std::span<const SuccessRow> rows) {
    std::vector<AttackSummary> out;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(), [&](const AttackSummary& s) {
            return s.attack == r.attack && s.aggregation == r.aggregation;
        });
        if (it == out.end()) {
            out.push_back({r.attack, r.aggregation});
            it = out.end() - 1;
        }
        if (r.role == Role::source) it->white_box = r.rate();
        if (r.role == Role::target || r.role == Role::defended_target) {
            it->transfer_mean += r.rate();
            ++it->targets;
        }
    }
    for (auto& s : out)
        if (s.targets) s.transfer_mean /= static_cast<double>(s.targets);
    return out;
}

struct AttackTable {
    std::vector<SuccessRow> rows;
    std::vector<AttackSummary> summary;
    std::map<std::string, Tensor> adversarial;  // keyed by "<attack>/<aggregation>"
};

/// Plain and (when masks are given) LPM versions of each configured variant.
inline AttackTable attack_table(const Experiment& exp, const std::vector<ImageMasks>* masks,
                                std::span<const Aggregation> modes) {
    const auto& cfg = exp.config();
    AttackTable t;
    for (const auto& v : cfg.attack.variants) {
        const AttackConfig a = make_variant(v, cfg.attack.base, cfg.attack.params);
        Tensor plain = attack_eval_set(exp, a);
        for (auto& r : score_adversarial(exp, v, "-", plain)) t.rows.push_back(std::move(r));
        t.adversarial.emplace(v + "/-", std::move(plain));
        if (!masks) continue;
        for (Aggregation mode : modes) {
            const auto sets = mask_sets(*masks, mode);
            Tensor adv = attack_eval_set(exp, a, sets);
            for (auto& r : score_adversarial(exp, "lpm-" + v, to_string(mode), adv)) t.rows.push_back(std::move(r));
            t.adversarial.emplace("lpm-" + v + "/" + to_string(mode), std::move(adv));
        }
    }
    t.summary = summarize(t.rows);
    return t;
}

inline nlohmann::ordered_json provenance(const ExperimentConfig& cfg, const std::string& command) {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["revision"] = LPM_REVISION;
    j["seed"] = cfg.run.seed;
    j["fast"] = cfg.run.fast;
    j["config"] = echo_config(cfg);
    return j;
}

inline AttackTable cmd_attack(const ExperimentConfig& cfg) {
    const Experiment exp(cfg);
    const auto masks = load_masks_for(exp);
    const Aggregation modes[1] = {cfg.aggregation};
    AttackTable t = attack_table(exp, &masks, modes);

    const std::filesystem::path dir = std::filesystem::path(cfg.run.out) / "attack";
    Csv rows({"attack", "aggregation", "model", "role", "successes", "images", "success_rate"});
    Csv per_image({"attack", "aggregation", "model", "test_index", "label", "success"});
    for (const auto& r : t.rows) {
        rows.row({r.attack, r.aggregation, r.model, to_string(r.role), std::to_string(r.successes),
                  std::to_string(r.images), fixed(r.rate(), 6)});
        for (std::size_t j = 0; j < r.flags.size(); ++j)
            per_image.row({r.attack, r.aggregation, r.model, std::to_string(exp.eval_indices()[j]),
                           std::to_string(exp.eval().labels[j]), r.flags[j] ? "1" : "0"});
    }
    rows.save(dir / "success.csv");
    per_image.save(dir / "per_image.csv");
    Csv summary({"attack", "aggregation", "white_box", "transfer_mean", "targets"});
    for (const auto& s : t.summary)
        summary.row({s.attack, s.aggregation, fixed(s.white_box, 6), fixed(s.transfer_mean, 6), std::to_string(s.targets)});
    summary.save(dir / "summary.csv");

    auto j = provenance(cfg, "attack");
    j["images"] = exp.eval().size();
    for (const auto& r : t.rows)
        j["rows"].push_back({{"attack", r.attack}, {"aggregation", r.aggregation}, {"model", r.model},
                             {"role", to_string(r.role)}, {"successes", r.successes}, {"images", r.images},
                             {"success_rate", r.rate()}});
    for (const auto& s : t.summary)
        j["summary"].push_back({{"attack", s.attack}, {"aggregation", s.aggregation}, {"white_box", s.white_box},
                                {"transfer_mean", s.transfer_mean}, {"targets", s.targets}});
    write_text(dir / "report.json", j.dump(2) + "\n");

    for (const auto& [key, adv] : t.adversarial) {
        const auto slash = key.find('/');
        const std::string attack = key.substr(0, slash), agg = key.substr(slash + 1);
        const std::string file = agg == "-" ? attack : attack + "-" + agg;
        write_file_bytes(dir / (file + ".lpma"),
                         serialize_adversarial(attack, agg, exp.eval_indices(), exp.eval().labels, adv));
    }
    return t;
}

struct SaliencyRow {
    std::string model;
    std::size_t test_index = 0;
    double benign = 0.0;
    double masked = 0.0;
    std::size_t benign_vertices = 0;
    std::size_t masked_vertices = 0;
};

struct SaliencyTable {
    std::vector<SaliencyRow> rows;
    struct Entry {
        std::string model;
        Role role;
        double benign_mean, masked_mean;
        std::size_t images;
    };
    std::vector<Entry> table;
};

/// Mean clustering coefficient of SmoothGrad maps for benign eval images and
/// the same images multiplied by their learned mask. For cycle and
/// grad-average the masked value averages over the K individually masked copies.
inline SaliencyTable saliency_table(const Experiment& exp, std::span<const ImageMasks> masks) {
    const auto& cfg = exp.config();
    const Dataset& ev = exp.eval();
    const std::size_t n = cfg.saliency.images == 0 ? ev.size() : std::min(cfg.saliency.images, ev.size());
    if (n == 0) throw ArgumentError("saliency report: empty eval set");
    if (masks.size() != ev.size()) throw ArgumentError("saliency report: need masks for every eval image");
    const auto& models = exp.models();
    std::vector<std::vector<SaliencyRow>> per(n);
    parallel_for(n, cfg.run.workers, [&](std::size_t j) {
        const std::size_t t = exp.eval_indices()[j];
        const Tensor x = ev.image(j);
        const RngStream noise = RngStream(cfg.run.seed, kSaliencyStream).child(t);
        std::vector<Tensor> masked;
        if (cfg.aggregation == Aggregation::intersect)
            masked.push_back(apply_mask(x, intersect(masks[j].masks)));
        else
            for (const auto& m : masks[j].masks) masked.push_back(apply_mask(x, m));
        for (const auto& m : models) {
            auto c = [&](const Tensor& img) {
                const auto map = smoothgrad(m.network, img, ev.labels[j], cfg.saliency.samples, cfg.saliency.sigma,
                                            noise, m.name);
                const auto g = build_graph(map, cfg.saliency.graph);
                return std::pair{clustering_coefficient(g).mean, g.size()};
            };
            SaliencyRow row{m.name, t};
            std::tie(row.benign, row.benign_vertices) = c(x);
            for (const auto& img : masked) {
                const auto [cm, nv] = c(img);
                row.masked += cm;
                row.masked_vertices += nv;
            }
            row.masked /= static_cast<double>(masked.size());
            row.masked_vertices /= masked.size();
            per[j].push_back(row);
        }
    });
    SaliencyTable out;
    for (const auto& m : models) {
        SaliencyTable::Entry e{m.name, m.role, 0.0, 0.0, n};
        for (std::size_t j = 0; j < n; ++j)
            for (const auto& r : per[j])
                if (r.model == m.name) {
                    e.benign_mean += r.benign;
                    e.masked_mean += r.masked;
                    out.rows.push_back(r);
                }
        e.benign_mean /= static_cast<double>(n);
        e.masked_mean /= static_cast<double>(n);
        out.table.push_back(e);
    }
    return out;
}

inline SaliencyTable cmd_saliency_report(const ExperimentConfig& cfg) {
    const Experiment exp(cfg);
    const auto masks = load_masks_for(exp);
    SaliencyTable t = saliency_table(exp, masks);
    const std::filesystem::path dir = std::filesystem::path(cfg.run.out) / "saliency";
    Csv rows({"model", "test_index", "benign_c", "masked_c", "benign_vertices", "masked_vertices"});
    for (const auto& r : t.rows)
        rows.row({r.model, std::to_string(r.test_index), fixed(r.benign, 9), fixed(r.masked, 9),
                  std::to_string(r.benign_vertices), std::to_string(r.masked_vertices)});
    rows.save(dir / "clustering.csv");
    Csv table({"model", "role", "images", "benign_mean_c", "masked_mean_c"});
    auto j = provenance(cfg, "saliency-report");
    for (const auto& e : t.table) {
        table.row({e.model, to_string(e.role), std::to_string(e.images), fixed(e.benign_mean, 9),
                   fixed(e.masked_mean, 9)});
        j["table"].push_back({{"model", e.model}, {"role", to_string(e.role)}, {"images", e.images},
                              {"benign_mean_c", e.benign_mean}, {"masked_mean_c", e.masked_mean}});
    }
    table.save(dir / "table.csv");
    write_text(dir / "report.json", j.dump(2) + "\n");

    const std::size_t exports = std::min(cfg.saliency.export_maps, exp.eval().size());
    const Network& src = exp.source();
    for (std::size_t k = 0; k < exports; ++k) {
        const Tensor x = exp.eval().image(k);
        const Tensor xm = apply_mask(x, intersect(masks[k].masks));
        const RngStream noise = RngStream(cfg.run.seed, kSaliencyStream).child(exp.eval_indices()[k]);
        const std::string stem = (dir / "maps" / std::to_string(exp.eval_indices()[k])).string();
        write_pgm(stem + "_image.pgm", x.slice(0), 1.0);
        write_pgm(stem + "_masked_image.pgm", xm.slice(0), 1.0);
        write_pgm(stem + "_benign_saliency.pgm",
                  smoothgrad(src, x, exp.eval().labels[k], cfg.saliency.samples, cfg.saliency.sigma, noise).values);
        write_pgm(stem + "_masked_saliency.pgm",
                  smoothgrad(src, xm, exp.eval().labels[k], cfg.saliency.samples, cfg.saliency.sigma, noise).values);
    }
    return t;
}

struct SweepRow {
    std::string axis, value, attack, aggregation, model;
    Role role = Role::unassigned;
    std::string status;  // "ok" or "infeasible"
    std::string note;
    std::size_t successes = 0, images = 0;

    double rate() const { return images ? static_cast<double>(successes) / static_cast<double>(images) : 0.0; }
};

/// Transfer success of LPM attacks as one setting varies. Axes: patch_size,
/// mask_count, simulated_count, aggregation, de_generations (configured
/// value against 0, i.e. learned against random masks).
inline std::vector<SweepRow> sweep_table(const Experiment& exp) {
    const auto& cfg = exp.config();
    const Dataset& ev = exp.eval();
    std::map<std::tuple<std::size_t, std::size_t, std::uint32_t, std::size_t>, std::vector<ImageMasks>> cache;
    auto masks_for = [&](DeConfig de, std::size_t sims) -> const std::vector<ImageMasks>& {
        const auto key = std::tuple{de.patch_size, sims, de.generations, de.mask_count};
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, search_masks(exp, de, sims)).first;
        return it->second;
    };
    const std::size_t all_sims = cfg.roles.simulated.size();
    std::vector<SweepRow> rows;
    auto emit = [&](const std::string& axis, const std::string& value, const std::vector<ImageMasks>* masks,
                    Aggregation mode, std::size_t count, const std::string& why) {
        for (const auto& v : cfg.sweep.attacks) {
            std::vector<SuccessRow> scored;
            if (why.empty()) {
                const auto sets = mask_sets(*masks, mode, count);
                const Tensor adv = attack_eval_set(exp, make_variant(v, cfg.attack.base, cfg.attack.params), sets);
                scored = score_adversarial(exp, "lpm-" + v, to_string(mode), adv);
            }
            for (const ModelHandle* m : exp.transfer_targets()) {
                SweepRow r{axis, value, "lpm-" + v, to_string(mode), m->name, m->role,
                           why.empty() ? "ok" : "infeasible", why};
                for (const auto& s : scored)
                    if (s.model == m->name) {
                        r.successes = s.successes;
                        r.images = s.images;
                    }
                rows.push_back(std::move(r));
            }
        }
    };
    for (const auto& axis : cfg.sweep.axes) {
        if (axis == "patch_size") {
            for (std::size_t ps : cfg.sweep.patch_sizes) {
                DeConfig de = cfg.de;
                de.patch_size = ps;
                const std::string why = de_infeasibility(de, ev.height(), ev.width());
                emit(axis, std::to_string(ps), why.empty() ? &masks_for(de, all_sims) : nullptr, cfg.aggregation, 0, why);
            }
        } else if (axis == "mask_count") {
            DeConfig de = cfg.de;
            de.mask_count = *std::max_element(cfg.sweep.mask_counts.begin(), cfg.sweep.mask_counts.end());
            const auto& masks = masks_for(de, all_sims);
            for (std::size_t k : cfg.sweep.mask_counts) emit(axis, std::to_string(k), &masks, cfg.aggregation, k, {});
        } else if (axis == "simulated_count") {
            for (std::size_t s : cfg.sweep.simulated_counts) {
                const std::string why =
                    s >= 1 && s <= all_sims ? "" : "only " + std::to_string(all_sims) + " simulated models configured";
                emit(axis, std::to_string(s), why.empty() ? &masks_for(cfg.de, s) : nullptr, cfg.aggregation, 0, why);
            }
        } else if (axis == "aggregation") {
            const auto& masks = masks_for(cfg.de, all_sims);
            for (Aggregation mode : cfg.sweep.aggregations) emit(axis, to_string(mode), &masks, mode, 0, {});
        } else if (axis == "de_generations") {
            for (std::uint32_t g : {cfg.de.generations, 0u}) {
                DeConfig de = cfg.de;
                de.generations = g;
                emit(axis, std::to_string(g), &masks_for(de, all_sims), cfg.aggregation, 0, {});
            }
        } else {
            throw ArgumentError("unknown sweep axis '" + axis +
                                "' (expected patch_size, mask_count, simulated_count, aggregation, de_generations)");
        }
    }
    return rows;
}

inline std::vector<SweepRow> cmd_sweep(const ExperimentConfig& cfg) {
    const Experiment exp(cfg);
    const auto rows = sweep_table(exp);
    const std::filesystem::path dir = std::filesystem::path(cfg.run.out) / "sweep";
    Csv csv({"axis", "value", "attack", "aggregation", "model", "role", "status", "successes", "images", "success_rate",
             "note"});
    auto j = provenance(cfg, "sweep");
    for (const auto& r : rows) {
        const bool ok = r.status == "ok";
        csv.row({r.axis, r.value, r.attack, r.aggregation, r.model, to_string(r.role), r.status,
                 ok ? std::to_string(r.successes) : "", ok ? std::to_string(r.images) : "",
                 ok ? fixed(r.rate(), 6) : "", r.note});
        nlohmann::ordered_json row{{"axis", r.axis},   {"value", r.value},           {"attack", r.attack},
                                   {"aggregation", r.aggregation}, {"model", r.model}, {"role", to_string(r.role)},
                                   {"status", r.status}};
        if (ok) {
            row["successes"] = r.successes;
            row["images"] = r.images;
            row["success_rate"] = r.rate();
        } else {
            row["note"] = r.note;
        }
        j["rows"].push_back(row);
    }
    csv.save(dir / "sweep.csv");
    write_text(dir / "report.json", j.dump(2) + "\n");
    return rows;
}

}  // namespace lpm
