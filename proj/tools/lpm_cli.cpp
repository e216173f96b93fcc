#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "lpm/harness/allocator.hpp"
#include "lpm/harness/experiment.hpp"

namespace {

struct Options {
    std::string config;
    std::uint64_t seed = 0;
    bool synthetic = false;
    bool fast = false;
    std::string out;
    std::string aggregation;
    std::size_t workers = 0;
};

lpm::ExperimentConfig resolve(const Options& o, const CLI::App& app) {
    lpm::ExperimentConfig cfg;
    if (!o.config.empty()) cfg = lpm::parse_config(lpm::read_text(o.config), cfg);
    if (o.fast || cfg.run.fast) cfg.apply_fast_profile();
    if (app.count("--seed")) cfg.run.seed = o.seed;
    if (o.synthetic) cfg.data.synthetic = true;
    if (!o.out.empty()) cfg.run.out = o.out;
    if (!o.aggregation.empty()) cfg.aggregation = lpm::parse_aggregation(o.aggregation);
    if (app.count("--workers")) cfg.run.workers = o.workers;
    return cfg;
}

void print_attack(const lpm::AttackTable& t) {
    std::printf("%-14s %-13s %10s %14s\n", "attack", "aggregation", "white_box", "transfer_mean");
    for (const auto& s : t.summary)
        std::printf("%-14s %-13s %10.4f %14.4f\n", s.attack.c_str(), s.aggregation.c_str(), s.white_box,
                    s.transfer_mean);
}

}  // namespace

int main(int argc, char** argv) {
    lpm::keep_freed_memory();
    CLI::App app{"Learnable patch-wise mask search and transfer attacks on a synthetic model zoo"};
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "master seed");
    app.add_flag("--synthetic", o.synthetic, "use the procedural digit dataset");
    app.add_flag("--fast", o.fast, "small DE and eval set for quick runs");
    app.add_option("--out", o.out, "output directory");
    app.add_option("--aggregation", o.aggregation, "mask aggregation")
        ->check(CLI::IsMember({"and", "cycle", "grad-average"}));
    app.add_option("--workers", o.workers, "worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);

    auto* train = app.add_subcommand("train", "train the model zoo and write weight files");
    auto* search = app.add_subcommand("search-masks", "learn K masks per eval image");
    auto* attack = app.add_subcommand("attack", "plain and LPM attacks, success tables");
    auto* saliency = app.add_subcommand("saliency-report", "clustering coefficient of benign vs masked images");
    auto* sweep = app.add_subcommand("sweep", "transfer success along sweep axes");
    bool echo = false;
    app.add_flag("--print-config", echo, "print the resolved config before running");

    CLI11_PARSE(app, argc, argv);

    try {
        const lpm::ExperimentConfig cfg = resolve(o, app);
        if (echo) std::fputs(lpm::echo_config(cfg).c_str(), stdout);
        if (train->parsed()) {
            const auto r = lpm::cmd_train(cfg);
            std::fputs(r.manifest_csv.c_str(), stdout);
        } else if (search->parsed()) {
            const auto masks = lpm::cmd_search_masks(cfg);
            std::printf("learned masks for %zu images -> %s\n", masks.size(), cfg.masks_file().c_str());
        } else if (attack->parsed()) {
            print_attack(lpm::cmd_attack(cfg));
        } else if (saliency->parsed()) {
            const auto t = lpm::cmd_saliency_report(cfg);
            std::printf("%-14s %12s %12s\n", "model", "benign_c", "masked_c");
            for (const auto& e : t.table)
                std::printf("%-14s %12.6f %12.6f\n", e.model.c_str(), e.benign_mean, e.masked_mean);
        } else if (sweep->parsed()) {
            const auto rows = lpm::cmd_sweep(cfg);
            std::printf("%zu sweep rows -> %s/sweep/sweep.csv\n", rows.size(), cfg.run.out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "lpm: error: %s\n", e.what());
        return 1;
    }
    return 0;
}
