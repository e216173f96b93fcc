#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "lpm/harness/allocator.hpp"
#include "lpm/harness/experiment.hpp"
#include "lpm/numerics/gradcheck.hpp"

using namespace lpm;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

const Stopwatch wall;

template <class... Args>
void progress(const char* fmt, Args... args) {
    std::fprintf(stderr, "[%7.1fs] ", wall.seconds());
    if constexpr (sizeof...(Args) == 0)
        std::fputs(fmt, stderr);
    else
        std::fprintf(stderr, fmt, args...);
    std::fputc('\n', stderr);
}

std::string pct(double v) { return fixed(100.0 * v, 2); }

class Scoreboard {
public:
    /// One line per check; a check with a runtime limit also fails when it overruns.
    void record(const std::string& label, bool ok, double seconds, double limit, const std::string& detail) {
        const bool in_time = limit <= 0.0 || seconds < limit;
        const bool pass = ok && in_time;
        std::string timing = fixed(seconds, 1) + "s";
        if (limit > 0.0) timing += " of " + fixed(limit, 0) + "s" + (in_time ? "" : " OVERRUN");
        std::printf("%s  %-24s %-22s %s\n", pass ? "PASS" : "FAIL", label.c_str(), timing.c_str(), detail.c_str());
        std::fflush(stdout);
        failures_ += pass ? 0 : 1;
    }

    int failures() const noexcept { return failures_; }

private:
    int failures_ = 0;
};

struct Options {
    fs::path work = "acceptance-work";
    std::string cli;
    std::size_t seeds = 3;
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    std::vector<int> only;
    bool keep_zoo = false;

    bool wants(int id) const { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); }
};

ExperimentConfig base_config(const Options& o, std::uint64_t seed, std::size_t eval_size) {
    ExperimentConfig c;
    c.data.synthetic = true;
    c.data.eval_size = eval_size;
    c.run.seed = seed;
    c.run.workers = o.workers;
    c.run.out = (o.work / "zoo").string();
    return c;
}

double mean(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Transfer rates of one attacked eval set, keyed by target model.
std::map<std::string, double> target_rates(std::span<const SuccessRow> rows, const std::string& attack,
                                           const std::string& aggregation) {
    std::map<std::string, double> out;
    for (const auto& r : rows)
        if (r.attack == attack && r.aggregation == aggregation &&
            (r.role == Role::target || r.role == Role::defended_target))
            out[r.model] = r.rate();
    return out;
}

double mean_of(const std::map<std::string, double>& m) {
    double s = 0.0;
    for (const auto& [k, v] : m) s += v;
    return m.empty() ? 0.0 : s / static_cast<double>(m.size());
}

std::map<std::string, double> lpm_rates(const Experiment& exp, std::span<const ImageMasks> masks, Aggregation mode) {
    const auto& cfg = exp.config();
    const AttackConfig a = make_variant("i-fgsm", cfg.attack.base, cfg.attack.params);
    const auto sets = mask_sets(masks, mode);
    const Tensor adv = attack_eval_set(exp, a, sets);
    return target_rates(score_adversarial(exp, "lpm-i-fgsm", to_string(mode), adv), "lpm-i-fgsm", to_string(mode));
}

std::vector<ImageMasks> restrict_to(std::span<const ImageMasks> masks, std::span<const std::size_t> indices) {
    std::vector<ImageMasks> out;
    for (std::size_t t : indices) {
        const auto it = std::find_if(masks.begin(), masks.end(), [&](const ImageMasks& m) { return m.test_index == t; });
        if (it == masks.end()) throw Error("eval subset is not contained in the full eval set");
        out.push_back(*it);
    }
    return out;
}

std::map<std::string, std::vector<std::uint8_t>> snapshot(const fs::path& root) {
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).generic_string()] = read_file_bytes(e.path());
    return files;
}

std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

std::string fixture(const std::string& name) { return std::string(LPM_FIXTURES) + "/" + name; }

// Per-seed state shared by the transfer criteria.
struct SeedRun {
    std::uint64_t seed = 0;
    std::unique_ptr<Experiment> full;
    std::vector<ImageMasks> learned;
    AttackTable table;
};

class Acceptance {
public:
    explicit Acceptance(Options o) : o_(std::move(o)) {}

    int run() {
        fs::create_directories(o_.work);
        train();
        if (o_.wants(1)) gradients();
        if (o_.wants(2)) reduction();
        if (o_.wants(3)) de_properties();
        if (o_.wants(4) || o_.wants(5) || o_.wants(6) || o_.wants(7) || o_.wants(8)) transfer_suite();
        if (o_.wants(9)) determinism();
        if (o_.wants(10)) formats();
        progress("done, %d failing", board_.failures());
        return board_.failures() == 0 ? 0 : 1;
    }

private:
    void train() {
        const ExperimentConfig cfg = base_config(o_, 1, 200);
        const fs::path manifest = fs::path(cfg.run.out) / "train" / "manifest.csv";
        if (!(o_.keep_zoo && fs::exists(manifest))) {
            progress("training the zoo into %s", cfg.run.out.c_str());
            cmd_train(cfg);
        }
        for (const auto& [name, arch, adv] : zoo_models(cfg.zoo)) zoo_.push_back(load(model_path(cfg, name)));

        std::string worst;
        double low = 1.0;
        for (const auto& m : zoo_)
            if (m.meta.test_accuracy < low) {
                low = m.meta.test_accuracy;
                worst = m.name;
            }
        board_.record("zoo accuracy", low >= 0.95, 0.0, 0.0,
                      "lowest clean test accuracy " + pct(low) + "% (" + worst + "), floor 95%");

        const Dataset probe = synth_generate(RngStream(cfg.data.seed, 0xda7a).child(3), 5000, cfg.data.classes,
                                             cfg.data.style, Split::test);
        for (const auto& arch : cfg.zoo.adversarial) {
            const double clean = accuracy(model(arch).network, probe);
            const double hardened = accuracy(model(arch + "-adv").network, probe);
            board_.record("adversarial training", hardened < clean, 0.0, 0.0,
                          arch + " clean accuracy on 5000 fresh images: standard " + pct(clean) + "%, adversarial " +
                              pct(hardened) + "%");
        }
    }

    const ModelHandle& model(const std::string& name) const {
        for (const auto& m : zoo_)
            if (m.name == name) return m;
        throw Error("zoo has no model " + name);
    }

    void gradients() {
        progress("criterion 1: finite differences");
        const Stopwatch sw;
        double worst = 0.0;
        std::size_t probed = 0, skipped = 0, samples = 0;
        std::string worst_arch;
        std::set<std::string> seen;
        for (const auto& m : zoo_) {
            if (!seen.insert(m.architecture).second) continue;
            const ActShape in = m.network.input_shape();
            for (std::uint64_t k = 0; k < 20; ++k) {
                RngStream rng(0xc1, k);
                Tensor x({in.c, in.h, in.w});
                for (double& v : x.values()) v = rng.uniform();
                const std::size_t y = rng.below(m.network.num_classes());
                const auto r = finite_difference_check(m.network, x, y, 1e-5, 1e-4);
                probed += r.components.size();
                skipped += r.skipped_count;
                ++samples;
                if (r.max_relative_error >= worst) {
                    worst = r.max_relative_error;
                    worst_arch = m.architecture;
                }
            }
        }
        const bool ok = worst < 1e-4 && seen.size() == architecture_ids().size() && skipped * 100 < probed;
        board_.record("1 gradient correctness", ok, sw.seconds(), 60.0,
                      std::to_string(seen.size()) + " architectures, " + std::to_string(samples) +
                          " samples, max relative error " + config_detail::show(worst) + " (" + worst_arch + "), " +
                          std::to_string(skipped) + "/" + std::to_string(probed) + " kink components skipped");
    }

    void reduction() {
        progress("criterion 2: all-ones masks");
        const Stopwatch sw;
        const Experiment exp(base_config(o_, 1, 200));
        std::vector<std::size_t> rows(50);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const Dataset part = exp.eval().subset(rows, Split::eval);
        std::vector<std::uint64_t> ids(exp.eval_indices().begin(), exp.eval_indices().begin() + 50);
        AttackConfig a = make_variant("i-fgsm", exp.config().attack.base, exp.config().attack.params);
        a.rng = RngStream(1, kAttackStream);
        const AttackResult plain = run_attack(exp.source(), part.images, part.labels, a, {}, ids);
        const std::vector<PatchMask> ones(exp.config().de.mask_count, PatchMask(part.height(), part.width(), 4));
        bool ok = true;
        std::string detail;
        for (Aggregation mode : {Aggregation::intersect, Aggregation::cycle, Aggregation::grad_average}) {
            const MaskSet set[1] = {aggregate_masks(ones, mode)};
            const AttackResult lpm = run_attack(exp.source(), part.images, part.labels, a, set, ids);
            const bool same = lpm.adversarial == plain.adversarial && lpm.success == plain.success;
            ok = ok && same;
            detail += std::string(to_string(mode)) + (same ? " identical" : " DIFFERS") + ", ";
        }
        board_.record("2 reduction identity", ok, sw.seconds(), 60.0,
                      detail + "50 images, K=" + std::to_string(ones.size()));
    }

    void de_properties() {
        progress("criterion 3: DE property suite");
        const Stopwatch sw;
        const Experiment exp(base_config(o_, 1, 200));
        const auto& cfg = exp.config();
        const auto sims = exp.simulated(cfg.roles.simulated.size());
        std::vector<std::string> failures;
        auto require = [&](bool cond, const std::string& what) {
            if (!cond) failures.push_back(what);
        };
        const std::size_t images = 4;
        for (std::size_t j = 0; j < images; ++j) {
            const std::size_t t = exp.eval_indices()[j];
            const Tensor x = exp.eval().image(j);
            const std::size_t label = exp.eval().labels[j];
            DeConfig d = cfg.de;
            d.rng = RngStream(cfg.run.seed, kDeStream).child(t);
            AttackConfig a = cfg.attack.base;
            a.rng = RngStream(cfg.run.seed, kInnerAttackStream).child(t);
            const DeResult full = de_search(x, label, exp.source(), sims, d, a);
            const std::string at = "image " + std::to_string(t) + ": ";
            require(full.best_phi.size() == d.generations + 1u, at + "best phi trace length");
            for (std::size_t g = 1; g < full.best_phi.size(); ++g)
                require(full.best_phi[g] <= full.best_phi[g - 1], at + "best phi increased at generation " +
                                                                      std::to_string(g));
            for (std::uint32_t g = 1; g <= d.generations; ++g) {
                DeConfig dg = d;
                dg.generations = g;
                const DeResult r = de_search(x, label, exp.source(), sims, dg, a);
                const auto& pop = r.final_population.individuals;
                const std::string gen = at + "generation " + std::to_string(g) + ": ";
                require(pop.size() == d.population, gen + "population size");
                std::set<PatchMask> distinct;
                for (const auto& ind : pop) {
                    distinct.insert(ind.mask);
                    require(std::abs(ind.score.phi - FeedbackScore::phi_of(ind.score.cross_entropy)) <= 1e-12,
                            gen + "phi not recomputable from stored cross-entropies");
                }
                require(distinct.size() == pop.size(), gen + "duplicate masks");
                require(r.best_phi.back() == full.best_phi[g], gen + "prefix run disagrees with full run");
            }
            AttackConfig inner = a;
            inner.iterations = d.inner_iterations;
            const Individual& best = full.final_population.individuals.front();
            const PatchMask one[1] = {best.mask};
            const auto again = score_masks(x, label, exp.source(), sims, one, inner);
            require(std::abs(again[0].phi - best.score.phi) <= 1e-12, at + "rescored phi differs");
            for (std::size_t s = 0; s < sims.size(); ++s)
                require(std::abs(again[0].cross_entropy[s] - best.score.cross_entropy[s]) <= 1e-12,
                        at + "rescored cross-entropy differs");

            DeConfig tiny = d;
            tiny.population = 4;
            tiny.generations = 3;
            tiny.zeros_rate = 0.25;
            tiny.patch_size = x.dim(1) / 2;
            tiny.mask_count = 4;
            const DeResult small = de_search(x, label, exp.source(), sims, tiny, a);
            AttackConfig tiny_inner = a;
            tiny_inner.iterations = tiny.inner_iterations;
            double best_phi = 0.0;
            PatchMask best_mask;
            for (std::size_t z = 0; z < 4; ++z) {
                std::vector<std::uint8_t> cells(4, 1);
                cells[z] = 0;
                const PatchMask m[1] = {PatchMask(2, 2, tiny.patch_size, std::move(cells))};
                const double phi = score_masks(x, label, exp.source(), sims, m, tiny_inner)[0].phi;
                if (z == 0 || phi < best_phi) {
                    best_phi = phi;
                    best_mask = m[0];
                }
            }
            require(std::abs(small.best_phi.back() - best_phi) <= 1e-12 && small.masks.front() == best_mask,
                    at + "2x2 search misses the enumerated optimum");
        }
        RngStream r(0xc3, 0);
        std::size_t mutations = 0;
        for (std::size_t zeros : {1u, 6u, 32u})
            for (double pm : {1.0, 0.5, 0.1})
                for (int i = 0; i < 200; ++i) {
                    const PatchMask m = detail::random_mask(8, 8, 4, zeros, r);
                    require(mutate(m, pm, r).zero_count() == zeros, "mutation changed the zero count");
                    ++mutations;
                }
        std::string detail = std::to_string(images) + " images x " + std::to_string(cfg.de.generations) +
                             " generations on the trained zoo, " + std::to_string(mutations) + " mutations";
        if (!failures.empty()) detail += "; first failure: " + failures.front();
        board_.record("3 DE properties", failures.empty(), sw.seconds(), 300.0, detail);
    }

    void transfer_suite() {
        std::vector<SeedRun> runs(o_.seeds);
        const std::vector<Aggregation> modes{Aggregation::intersect, Aggregation::cycle, Aggregation::grad_average};

        const Stopwatch c4_sw;
        std::vector<double> white;
        for (std::size_t s = 0; s < o_.seeds; ++s) {
            runs[s].seed = s + 1;
            runs[s].full = std::make_unique<Experiment>(base_config(o_, runs[s].seed, 200));
            const Experiment& exp = *runs[s].full;
            AttackConfig a = make_variant("i-fgsm", exp.config().attack.base, exp.config().attack.params);
            const Tensor adv = attack_eval_set(exp, a);
            white.push_back(success_rate(exp.source(), adv, exp.eval().labels));
        }
        if (o_.wants(4)) {
            std::string detail = "I-FGSM on " + runs[0].full->config().roles.source + ", 200 images, per seed:";
            for (double w : white) detail += " " + pct(w) + "%";
            board_.record("4 white-box strength", *std::min_element(white.begin(), white.end()) >= 0.95,
                          c4_sw.seconds(), 300.0, detail);
        }
        if (!(o_.wants(5) || o_.wants(6) || o_.wants(7) || o_.wants(8))) return;

        const Stopwatch c5_sw;
        for (auto& run : runs) {
            progress("criterion 5: seed %llu mask search", static_cast<unsigned long long>(run.seed));
            run.learned = search_masks(*run.full, run.full->config().de, run.full->config().roles.simulated.size());
            run.table = attack_table(*run.full, &run.learned, modes);
            write_text(o_.work / ("transfer-seed" + std::to_string(run.seed) + ".csv"), table_csv(run.table));
        }
        Aggregation best_mode = Aggregation::grad_average;
        {
            bool ok = true;
            std::string detail;
            for (const std::string v : {"i-fgsm", "mi-fgsm"}) {
                std::vector<double> plain;
                for (const auto& run : runs) plain.push_back(mean_of(target_rates(run.table.rows, v, "-")));
                double best = -1.0;
                Aggregation arg = modes.front();
                std::string per_mode;
                for (Aggregation m : modes) {
                    std::vector<double> lpm;
                    for (const auto& run : runs)
                        lpm.push_back(mean_of(target_rates(run.table.rows, "lpm-" + v, to_string(m))));
                    per_mode += std::string(" ") + to_string(m) + "=" + pct(mean(lpm));
                    if (mean(lpm) > best) {
                        best = mean(lpm);
                        arg = m;
                    }
                }
                if (v == "i-fgsm") best_mode = arg;
                const double gain = 100.0 * (best - mean(plain));
                ok = ok && gain >= 1.0;
                detail += v + " " + pct(mean(plain)) + "% ->" + per_mode + " (best " + to_string(arg) + ", " +
                          (gain >= 0 ? "+" : "") + fixed(gain, 2) + " points); ";
            }
            if (o_.wants(5))
                board_.record("5 transfer improvement", ok, c5_sw.seconds(), 1800.0,
                              detail + std::to_string(runs.size()) + " seeds x 200 images");
        }

        if (o_.wants(6)) {
            const Stopwatch sw;
            std::map<std::string, std::vector<double>> learned, random;
            std::vector<std::vector<double>> by_sims(3);
            for (auto& run : runs) {
                progress("criterion 6: seed %llu random masks and simulated-model counts",
                         static_cast<unsigned long long>(run.seed));
                const Experiment& exp = *run.full;
                DeConfig zero = exp.config().de;
                zero.generations = 0;
                const auto rnd = search_masks(exp, zero, exp.config().roles.simulated.size());
                for (const auto& [name, rate] : lpm_rates(exp, rnd, best_mode)) random[name].push_back(rate);
                for (const auto& [name, rate] :
                     target_rates(run.table.rows, "lpm-i-fgsm", to_string(best_mode)))
                    learned[name].push_back(rate);
                for (std::size_t c = 1; c <= 3; ++c) {
                    const auto masks = c == exp.config().roles.simulated.size()
                                           ? run.learned
                                           : search_masks(exp, exp.config().de, c);
                    by_sims[c - 1].push_back(mean_of(lpm_rates(exp, masks, best_mode)));
                }
            }
            bool every = true;
            std::vector<double> l_all, r_all;
            std::string detail = "lpm-i-fgsm/" + std::string(to_string(best_mode)) + " learned vs random:";
            for (const auto& [name, l] : learned) {
                every = every && mean(l) >= mean(random[name]);
                l_all.push_back(mean(l));
                r_all.push_back(mean(random[name]));
                detail += " " + name + " " + pct(mean(l)) + "/" + pct(mean(random[name]));
            }
            const bool strict = mean(l_all) > mean(r_all);
            const double s1 = mean(by_sims[0]), s2 = mean(by_sims[1]), s3 = mean(by_sims[2]);
            const bool trend = s1 <= s2 && s2 <= s3;
            detail += "; mean " + pct(mean(l_all)) + "/" + pct(mean(r_all)) + "; simulated 1,2,3: " + pct(s1) + ", " +
                      pct(s2) + ", " + pct(s3);
            board_.record("6 learned vs random", every && strict && trend, sw.seconds(), 2700.0, detail);
        }

        if (o_.wants(7)) {
            const Stopwatch sw;
            const std::vector<std::size_t> sizes{1, 2, 4, 8, 16};
            std::map<std::size_t, std::vector<double>> rate;
            std::map<std::size_t, std::string> infeasible;
            for (auto& run : runs) {
                progress("criterion 7: seed %llu patch sizes", static_cast<unsigned long long>(run.seed));
                const Experiment sub(base_config(o_, run.seed, 100));
                for (std::size_t ps : sizes) {
                    DeConfig d = sub.config().de;
                    d.patch_size = ps;
                    if (auto why = de_infeasibility(d, sub.eval().height(), sub.eval().width()); !why.empty()) {
                        infeasible[ps] = why;
                        continue;
                    }
                    const auto masks = ps == run.full->config().de.patch_size
                                           ? restrict_to(run.learned, sub.eval_indices())
                                           : search_masks(sub, d, sub.config().roles.simulated.size());
                    rate[ps].push_back(mean_of(lpm_rates(sub, masks, best_mode)));
                }
            }
            double best_patch = -1.0;
            std::string detail = "lpm-i-fgsm/" + std::string(to_string(best_mode)) + ", 100 images:";
            for (const auto& [ps, r] : rate) {
                detail += " ps" + std::to_string(ps) + "=" + pct(mean(r));
                if (ps > 1) best_patch = std::max(best_patch, mean(r));
            }
            for (const auto& [ps, why] : infeasible) detail += "; ps" + std::to_string(ps) + " skipped: " + why;
            const bool ok = rate.count(1) && best_patch >= 0.0 && mean(rate[1]) <= best_patch;
            board_.record("7 patch-size sweep", ok, sw.seconds(), 2700.0, detail);
        }

        if (o_.wants(8)) {
            progress("criterion 8: saliency clustering");
            const Stopwatch sw;
            const SaliencyTable t = saliency_table(*runs.front().full, runs.front().learned);
            bool ok = true;
            std::string detail = "masked/benign C:";
            for (const auto& e : t.table) {
                ok = ok && e.masked_mean > e.benign_mean;
                detail += " " + e.model + " " + fixed(e.masked_mean, 4) + "/" + fixed(e.benign_mean, 4);
            }
            board_.record("8 clustering coefficient", ok, sw.seconds(), 600.0, detail);
        }
    }

    static std::string table_csv(const AttackTable& t) {
        Csv csv({"attack", "aggregation", "model", "role", "successes", "images", "success_rate"});
        for (const auto& r : t.rows)
            csv.row({r.attack, r.aggregation, r.model, to_string(r.role), std::to_string(r.successes),
                     std::to_string(r.images), fixed(r.rate())});
        return csv.str();
    }

    void determinism() {
        if (o_.cli.empty()) {
            board_.record("9 determinism", false, 0.0, 600.0, "no --cli binary given");
            return;
        }
        progress("criterion 9: reruns at 1 and 8 workers");
        const Stopwatch sw;
        const fs::path out = o_.work / "determinism";
        const fs::path log = o_.work / "determinism.log";
        const std::vector<std::string> steps{"train", "search-masks", "attack", "saliency-report", "sweep"};
        std::vector<std::map<std::string, std::vector<std::uint8_t>>> snaps;
        std::string error;
        for (int workers : {1, 8}) {
            fs::remove_all(out);
            for (const auto& step : steps) {
                const std::string cmd = shell_quote(o_.cli) + " " + step + " --synthetic --fast --seed 1 --workers " +
                                        std::to_string(workers) + " --out " + shell_quote(out.string()) + " >> " +
                                        shell_quote(log.string()) + " 2>&1";
                if (std::system(cmd.c_str()) != 0 && error.empty())
                    error = step + " failed at " + std::to_string(workers) + " workers, see " + log.string();
            }
            snaps.push_back(snapshot(out));
        }
        std::size_t differing = 0;
        std::string first;
        std::set<std::string> names;
        for (const auto& s : snaps)
            for (const auto& [k, v] : s) names.insert(k);
        for (const auto& n : names) {
            const auto a = snaps[0].find(n), b = snaps[1].find(n);
            if (a == snaps[0].end() || b == snaps[1].end() || a->second != b->second) {
                if (first.empty()) first = n;
                ++differing;
            }
        }
        const bool ok = error.empty() && differing == 0 && !names.empty();
        std::string detail = std::to_string(names.size()) + " files compared across " +
                             std::to_string(steps.size()) + " commands, " + std::to_string(differing) + " differ";
        if (!first.empty()) detail += " (first: " + first + ")";
        if (!error.empty()) detail += "; " + error;
        board_.record("9 determinism", ok, sw.seconds(), 600.0, detail);
    }

    void formats() {
        progress("criterion 10: fixtures");
        const Stopwatch sw;
        std::vector<std::string> failures;
        try {
            const Dataset d = load_idx(fixture("digits-images.idx3-ubyte"), fixture("digits-labels.idx1-ubyte"));
            if (d.size() != 6 || d.labels != std::vector<std::size_t>{3, 0, 9, 1, 7, 4})
                failures.push_back("fixture parsed to the wrong content");
        } catch (const std::exception& e) {
            failures.push_back(std::string("fixture rejected: ") + e.what());
        }
        const std::vector<std::tuple<std::string, std::string, std::string>> bad{
            {"digits-images.idx3-ubyte", "bad-magic-labels.idx1-ubyte", "expected magic 2049"},
            {"truncated-images.idx3-ubyte", "digits-labels.idx1-ubyte", "truncated"},
            {"digits-images.idx3-ubyte", "count-mismatch-labels.idx1-ubyte", "does not match"},
        };
        for (const auto& [images, labels, message] : bad) {
            try {
                load_idx(fixture(images), fixture(labels));
                failures.push_back(images + " + " + labels + " accepted");
            } catch (const ParseError& e) {
                if (std::string(e.what()).find(message) == std::string::npos)
                    failures.push_back(images + " + " + labels + ": unexpected message " + e.what());
            }
        }
        double worst = 0.0;
        std::size_t logits = 0;
        const ModelHandle m = load(fixture("probe-net.lpmw"));
        const ModelHandle back = deserialize_model(serialize_model(m));
        Tensor x({2, 1, 32, 32});
        for (std::size_t p = 0; p < x.size(); ++p) x[p] = double((p * 37) % 101) / 100.0;
        const Tensor z = back.network.forward(x);
        std::istringstream in(read_text(fixture("probe-net-logits.txt")));
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            if (logits < z.size()) worst = std::max(worst, std::abs(z[logits] - std::stod(line)));
            ++logits;
        }
        if (logits != z.size()) failures.push_back("recorded logit count does not match");
        if (!(worst <= 1e-12)) failures.push_back("probe logits differ by " + config_detail::show(worst));
        std::string detail = "1 fixture accepted, " + std::to_string(bad.size()) + " malformed rejected, " +
                             std::to_string(logits) + " probe logits within " + config_detail::show(worst);
        if (!failures.empty()) detail += "; " + failures.front();
        board_.record("10 format round-trips", failures.empty(), sw.seconds(), 0.0, detail);
    }

    Options o_;
    Scoreboard board_;
    std::vector<ModelHandle> zoo_;
};

}  // namespace

int main(int argc, char** argv) {
    keep_freed_memory();
    Options o;
    std::string work = o.work.string();
    CLI::App app("LPM acceptance suite");
    app.add_option("--work", work, "scratch directory for models and reports");
    app.add_option("--cli", o.cli, "path to the lpm command line tool");
    app.add_option("--seeds", o.seeds, "master seeds for the transfer criteria")->check(CLI::Range(1, 10));
    app.add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--only", o.only, "criteria to run (default all)")->delimiter(',');
    app.add_flag("--keep-zoo", o.keep_zoo, "reuse models already trained in the work directory");
    CLI11_PARSE(app, argc, argv);
    o.work = work;
    try {
        return Acceptance(std::move(o)).run();
    } catch (const std::exception& e) {
        std::fprintf(stderr, "acceptance: error: %s\n", e.what());
        return 2;
    }
}
