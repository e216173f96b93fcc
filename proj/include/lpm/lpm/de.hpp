#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lpm/attacks/attack.hpp"
#include "lpm/error.hpp"
#include "lpm/lpm/mask.hpp"
#include "lpm/numerics/loss.hpp"
#include "lpm/numerics/network.hpp"
#include "lpm/numerics/rng.hpp"

namespace lpm {

/// How the K output masks are produced.
enum class MaskProduction : std::uint8_t {
    top_k,             // K best unique masks of the final population
    independent_runs,  // best mask of K searches with distinct streams
};

/// Differential-evolution settings for the mask search.
struct DeConfig {
    std::size_t population = 40;        // P
    std::uint32_t generations = 10;     // T_DE; 0 yields unscored random masks
    double superior_rate = 0.3;         // rho
    double zeros_rate = 0.1;            // r
    double mutation_probability = 1.0;  // p_m
    std::uint32_t inner_iterations = 10;// T_m
    std::size_t patch_size = 4;         // p_s
    std::size_t mask_count = 12;        // K
    MaskProduction production = MaskProduction::top_k;
    RngStream rng{0, 0};

    std::size_t crossover_count() const noexcept {
        return static_cast<std::size_t>(std::lround(superior_rate * static_cast<double>(population)));
    }

    void validate() const {
        if (population < 2) throw ArgumentError("DeConfig: population must be >= 2");
        if (!(superior_rate > 0.0 && superior_rate < 1.0)) throw ArgumentError("DeConfig: rho must be in (0,1)");
        if (!(zeros_rate > 0.0 && zeros_rate < 1.0)) throw ArgumentError("DeConfig: zeros rate must be in (0,1)");
        if (!(mutation_probability > 0.0 && mutation_probability <= 1.0))
            throw ArgumentError("DeConfig: mutation probability must be in (0,1]");
        if (inner_iterations < 1) throw ArgumentError("DeConfig: inner attack iterations must be >= 1");
        if (patch_size == 0) throw ArgumentError("DeConfig: patch size must be > 0");
        if (mask_count == 0) throw ArgumentError("DeConfig: mask count must be >= 1");
        if ((production == MaskProduction::top_k || generations == 0) && mask_count > population)
            throw ArgumentError("DeConfig: mask count exceeds population size");
        if (crossover_count() < 1 || crossover_count() >= population)
            throw ArgumentError("DeConfig: rho * P must leave at least one crossover and one mutation child");
    }
};

/// Simulated-model feedback of one candidate. Lower is better.
struct FeedbackScore {
    double phi = 0.0;
    std::vector<double> cross_entropy;  // one per simulated model

    /// -sum CE_i + sum (CE_i - mean CE)^2
    static double phi_of(std::span<const double> ce) {
        if (ce.empty()) throw ArgumentError("feedback: no simulated models");
        const double total = std::accumulate(ce.begin(), ce.end(), 0.0);
        const double mean = total / static_cast<double>(ce.size());
        double spread = 0.0;
        for (double v : ce) spread += (v - mean) * (v - mean);
        return -total + spread;
    }

    static FeedbackScore from(std::vector<double> ce) {
        FeedbackScore s;
        s.phi = phi_of(ce);
        s.cross_entropy = std::move(ce);
        return s;
    }
};

struct Individual {
    PatchMask mask;
    FeedbackScore score;
    bool scored = false;
};

struct Population {
    std::vector<Individual> individuals;
    std::size_t generation = 0;

    std::size_t size() const noexcept { return individuals.size(); }
};

/// Feedback of every image of a batch (or one (C,H,W) image) against the
/// simulated models.
inline std::vector<FeedbackScore> compute_feedback(const Tensor& adversarial, std::span<const std::size_t> labels,
                                                   std::span<const Network* const> simulated) {
    if (simulated.empty()) throw ArgumentError("compute_feedback: need at least one simulated model");
    std::vector<std::vector<double>> per_model;
    for (const Network* s : simulated) per_model.push_back(cross_entropy_rows(s->forward(adversarial), labels));
    std::vector<FeedbackScore> out;
    const std::size_t n = per_model[0].size();
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> ce;
        for (const auto& row : per_model) ce.push_back(row[i]);
        out.push_back(FeedbackScore::from(std::move(ce)));
    }
    return out;
}

inline FeedbackScore compute_feedback(const Tensor& adversarial, std::size_t label,
                                      std::span<const Network* const> simulated) {
    const std::size_t labels[1] = {label};
    return compute_feedback(adversarial, std::span<const std::size_t>(labels), simulated).front();
}

namespace detail {

// Number of grids with `zeros` zeros among `cells`, saturating at `cap`.
inline std::size_t distinct_masks(std::size_t cells, std::size_t zeros, std::size_t cap) {
    double c = 1.0;
    for (std::size_t i = 0; i < zeros; ++i) {
        c = c * static_cast<double>(cells - i) / static_cast<double>(i + 1);
        if (c >= static_cast<double>(cap)) return cap;
    }
    return static_cast<std::size_t>(std::llround(c));
}

inline PatchMask random_mask(std::size_t rows, std::size_t cols, std::size_t patch, std::size_t zeros,
                             RngStream& rng) {
    const std::size_t cells = rows * cols;
    std::vector<std::size_t> pos(cells);
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < zeros; ++i) {  // partial Fisher-Yates
        const std::size_t j = i + static_cast<std::size_t>(rng.below(cells - i));
        std::swap(pos[i], pos[j]);
    }
    std::vector<std::uint8_t> grid(cells, 1);
    for (std::size_t i = 0; i < zeros; ++i) grid[pos[i]] = 0;
    return PatchMask(rows, cols, patch, std::move(grid));
}

}  // namespace detail

/// Zero count of every initial and mutated mask: round(r * m * n).
inline std::size_t initial_zero_count(const DeConfig& cfg, std::size_t rows, std::size_t cols) {
    return static_cast<std::size_t>(std::lround(cfg.zeros_rate * static_cast<double>(rows * cols)));
}

/// P distinct random masks, each with exactly round(r*m*n) zeros.
inline Population init_population(const DeConfig& cfg, std::size_t height, std::size_t width, RngStream rng) {
    cfg.validate();
    const PatchMask geometry(height, width, cfg.patch_size);
    const std::size_t rows = geometry.rows(), cols = geometry.cols();
    const std::size_t zeros = initial_zero_count(cfg, rows, cols);
    if (zeros < 1)
        throw ArgumentError("init_population: r * m * n = " +
                            std::to_string(cfg.zeros_rate * static_cast<double>(rows * cols)) +
                            " rounds to zero dropped patches");
    if (detail::distinct_masks(rows * cols, zeros, cfg.population) < cfg.population)
        throw ArgumentError("init_population: a " + std::to_string(rows) + "x" + std::to_string(cols) +
                            " grid with " + std::to_string(zeros) + " zeros has fewer than P = " +
                            std::to_string(cfg.population) + " distinct masks");
    Population pop;
    std::set<PatchMask> seen;
    while (pop.individuals.size() < cfg.population) {
        PatchMask m = detail::random_mask(rows, cols, cfg.patch_size, zeros, rng);
        if (seen.insert(m).second) pop.individuals.push_back({std::move(m), {}, false});
    }
    return pop;
}

/// Children built patchwise from two superior parents drawn uniformly with
/// replacement: agreement is inherited, disagreement is a fair coin.
inline std::vector<PatchMask> crossover(std::span<const PatchMask> superior, std::size_t count, RngStream& rng) {
    if (superior.empty()) throw ArgumentError("crossover: superior list is empty");
    for (const PatchMask& m : superior)
        if (!m.same_geometry(superior[0])) throw ShapeError("crossover: parents differ in geometry");
    std::vector<PatchMask> children;
    children.reserve(count);
    for (std::size_t c = 0; c < count; ++c) {
        const PatchMask& a = superior[static_cast<std::size_t>(rng.below(superior.size()))];
        const PatchMask& b = superior[static_cast<std::size_t>(rng.below(superior.size()))];
        std::vector<std::uint8_t> grid(a.cells());
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const int s = a[i] + b[i];
            grid[i] = s == 2 ? 1 : (s == 0 ? 0 : static_cast<std::uint8_t>(rng.below(2)));
        }
        children.emplace_back(a.rows(), a.cols(), a.patch_size(), std::move(grid));
    }
    return children;
}

/// Re-draws each position with probability p_m, then restores the original
/// zero count by flipping uniformly chosen cells. At p_m = 1 the result is a
/// fresh uniform mask with the base's zero count.
inline PatchMask mutate(const PatchMask& base, double p_m, RngStream& rng) {
    if (!(p_m > 0.0 && p_m <= 1.0)) throw ArgumentError("mutate: p_m must be in (0,1]");
    const std::size_t zeros = base.zero_count();
    if (p_m >= 1.0) return detail::random_mask(base.rows(), base.cols(), base.patch_size(), zeros, rng);

    const double zero_share = static_cast<double>(zeros) / static_cast<double>(base.cells());
    std::vector<std::uint8_t> grid(base.grid().begin(), base.grid().end());
    for (auto& cell : grid)
        if (rng.bernoulli(p_m)) cell = rng.bernoulli(zero_share) ? 0 : 1;
    auto count_zeros = [&] { return static_cast<std::size_t>(std::count(grid.begin(), grid.end(), 0)); };
    for (std::size_t z = count_zeros(); z != zeros; z = count_zeros()) {
        const std::uint8_t from = z > zeros ? 0 : 1;
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (grid[i] == from) candidates.push_back(i);
        grid[candidates[static_cast<std::size_t>(rng.below(candidates.size()))]] = from ^ 1U;
    }
    return PatchMask(base.rows(), base.cols(), base.patch_size(), std::move(grid));
}

/// Best `size` unique individuals of previous + candidates by ascending phi.
/// Duplicates keep their first occurrence; ties keep insertion order.
inline Population select(const Population& previous, std::span<const Individual> candidates, std::size_t size) {
    std::vector<Individual> pool;
    std::set<PatchMask> seen;
    auto offer = [&](const Individual& ind) {
        if (!ind.scored) throw ArgumentError("select: unscored individual");
        if (seen.insert(ind.mask).second) pool.push_back(ind);
    };
    for (const Individual& ind : previous.individuals) offer(ind);
    for (const Individual& ind : candidates) offer(ind);
    if (pool.size() < size)
        throw ArgumentError("select: only " + std::to_string(pool.size()) + " unique individuals for P = " +
                            std::to_string(size));
    std::stable_sort(pool.begin(), pool.end(),
                     [](const Individual& a, const Individual& b) { return a.score.phi < b.score.phi; });
    pool.resize(size);
    Population next;
    next.individuals = std::move(pool);
    next.generation = previous.generation + 1;
    return next;
}

/// Scores each mask: masked I-FGSM with T_m steps on the source model, then
/// feedback of the resulting adversarial image on the simulated models.
inline std::vector<FeedbackScore> score_masks(const Tensor& x, std::size_t label, const Network& source,
                                              std::span<const Network* const> simulated,
                                              std::span<const PatchMask> masks, const AttackConfig& inner,
                                              std::uint64_t stream_base = 0) {
    if (masks.empty()) return {};
    const std::size_t n = masks.size();
    std::vector<Tensor> copies(n, x);
    const Tensor batch = Tensor::stack(copies);
    std::vector<std::size_t> labels(n, label);
    std::vector<MaskSet> sets;
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < n; ++i) {
        sets.push_back({{masks[i]}, Aggregation::intersect});
        ids.push_back(stream_base + i);
    }
    const AttackResult r = run_attack(source, batch, labels, inner, sets, ids);
    return compute_feedback(r.adversarial, labels, simulated);
}

struct DeResult {
    std::vector<PatchMask> masks;                // K output masks
    std::vector<double> best_phi;                // per generation, generation 0 first
    std::vector<PatchMask> best_per_generation;  // for evolution dumps
    Population final_population;
};

namespace detail {

inline DeResult de_single(const Tensor& x, std::size_t label, const Network& source,
                          std::span<const Network* const> simulated, const DeConfig& cfg,
                          const AttackConfig& attack, RngStream rng) {
    if (x.rank() != 3) throw ShapeError("de_search: expected a (C,H,W) image");
    AttackConfig inner = attack;
    inner.iterations = cfg.inner_iterations;
    inner.momentum = 0.0;
    inner.di_probability = 0.0;
    inner.ti_kernel = 0;

    DeResult out;
    Population pop = init_population(cfg, x.dim(1), x.dim(2), rng.child(0));
    if (cfg.generations == 0) {
        for (std::size_t i = 0; i < cfg.mask_count && i < pop.size(); ++i) out.masks.push_back(pop.individuals[i].mask);
        out.final_population = std::move(pop);
        return out;
    }

    auto score = [&](std::vector<Individual>& inds, std::uint64_t generation) {
        std::vector<PatchMask> masks;
        for (const auto& ind : inds) masks.push_back(ind.mask);
        inner.rng = attack.rng.child(0xde, generation);
        const auto scores = score_masks(x, label, source, simulated, masks, inner, generation * cfg.population);
        for (std::size_t i = 0; i < inds.size(); ++i) {
            inds[i].score = scores[i];
            inds[i].scored = true;
        }
    };

    score(pop.individuals, 0);
    std::stable_sort(pop.individuals.begin(), pop.individuals.end(),
                     [](const Individual& a, const Individual& b) { return a.score.phi < b.score.phi; });
    out.best_phi.push_back(pop.individuals.front().score.phi);
    out.best_per_generation.push_back(pop.individuals.front().mask);

    const std::size_t n_cross = cfg.crossover_count();
    for (std::uint32_t k = 1; k <= cfg.generations; ++k) {
        RngStream gen_rng = rng.child(1, k);
        std::vector<PatchMask> superior;
        for (std::size_t i = 0; i < n_cross; ++i) superior.push_back(pop.individuals[i].mask);
        std::vector<Individual> candidates;
        for (PatchMask& m : crossover(superior, n_cross, gen_rng)) candidates.push_back({std::move(m), {}, false});
        for (std::size_t i = n_cross; i < cfg.population; ++i)
            candidates.push_back({mutate(pop.individuals[i].mask, cfg.mutation_probability, gen_rng), {}, false});
        score(candidates, k);
        pop = select(pop, candidates, cfg.population);
        out.best_phi.push_back(pop.individuals.front().score.phi);
        out.best_per_generation.push_back(pop.individuals.front().mask);
    }
    for (std::size_t i = 0; i < cfg.mask_count; ++i) out.masks.push_back(pop.individuals[i].mask);
    out.final_population = std::move(pop);
    return out;
}

}  // namespace detail

/// Learns K patch masks for one image (C,H,W).
///
/// Generation 0 scores P random masks. Each later generation adds
/// round(rho*P) crossover children of the best round(rho*P) individuals and
/// P - round(rho*P) mutation children, scores them, and keeps the best P
/// unique individuals of old and new. With zero generations the first K
/// unscored random masks are returned (the random-mask baseline).
inline DeResult de_search(const Tensor& x, std::size_t label, const Network& source,
                          std::span<const Network* const> simulated, const DeConfig& cfg,
                          const AttackConfig& attack) {
    cfg.validate();
    if (simulated.empty()) throw ArgumentError("de_search: need at least one simulated model");
    if (cfg.production == MaskProduction::top_k || cfg.generations == 0)
        return detail::de_single(x, label, source, simulated, cfg, attack, cfg.rng);

    DeResult combined;
    DeConfig one = cfg;
    one.mask_count = 1;
    for (std::size_t run = 0; run < cfg.mask_count; ++run) {
        AttackConfig a = attack;
        a.rng = attack.rng.child(0x5eed, run);
        DeResult r = detail::de_single(x, label, source, simulated, one, a, cfg.rng.child(0x5eed, run));
        combined.masks.push_back(r.masks.front());
        if (run == 0) {
            combined.best_phi = r.best_phi;
            combined.best_per_generation = r.best_per_generation;
            combined.final_population = std::move(r.final_population);
        }
    }
    return combined;
}

}  // namespace lpm
