// SPDX-License-Identifier: Apache-2.0
// Command-line experiment runner.
#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bayesarch/config.hpp"
#include "bayesarch/data.hpp"
#include "bayesarch/experiments.hpp"

using namespace bayesarch;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitRuntime = 1;

struct Options {
    std::string config;
    std::string out;
    std::string seeds;
    bool full_scale = false;
};

template <typename T>
T load_as(const Options& o, const std::string& kind) {
    config::ExperimentConfig any = config::load_config(o.config);
    config::ExperimentMeta& meta = config::meta_of(any);
    if (meta.kind != kind) {
        throw config::ConfigError({fmt::format("config kind is '{}' but the subcommand is '{}'", meta.kind, kind)});
    }
    if (!o.seeds.empty()) meta.seeds = config::parse_seed_list(o.seeds);
    return std::get<T>(std::move(any));
}

std::string out_dir(const Options& o, const config::ExperimentMeta& meta) {
    return o.out.empty() ? fmt::format("results/{}", meta.name) : o.out;
}

void cmd_toy_size(const Options& o) {
    const auto c = load_as<config::ToySizeConfig>(o, "toy-size");
    const std::string dir = out_dir(o, c.meta);
    experiments::write_config_copy(c.meta, dir);
    fmt::print("seed,decoded_size,mu,sigma,train_rmse\n");
    for (const auto& r : experiments::run_toy_size_suite(c, dir)) {
        fmt::print("{},{},{:.4f},{:.4f},{:.4f}\n", r.seed, r.decoded_size, r.mu, r.sigma, r.train_rmse);
    }
    fmt::print(stderr, "artifacts in {}\n", dir);
}

void cmd_toy_depth(const Options& o) {
    const auto c = load_as<config::ToyDepthConfig>(o, "toy-depth");
    const std::string dir = out_dir(o, c.meta);
    experiments::write_config_copy(c.meta, dir);
    fmt::print("seed,kept_hidden,train_rmse,skip_pi\n");
    for (const auto& r : experiments::run_toy_depth_suite(c, dir)) {
        fmt::print("{},{},{:.4f},{:.3f}\n", r.seed, r.kept_hidden, r.train_rmse, fmt::join(r.skip_probs, " "));
    }
    fmt::print(stderr, "artifacts in {}\n", dir);
}

void cmd_uci(const Options& o) {
    const auto c = load_as<config::UciConfig>(o, "uci");
    const std::string dir = out_dir(o, c.meta);
    experiments::write_config_copy(c.meta, dir);
    fmt::print("dataset,variant,n,rmse_mean,rmse_std,loglik_mean,loglik_std\n");
    for (const auto& s : experiments::run_uci(c, dir)) {
        fmt::print("{},{},{},{:.4f},{:.4f},{:.4f},{:.4f}\n", s.dataset, experiments::to_string(s.variant), s.n,
                   s.rmse_mean, s.rmse_std, s.loglik_mean, s.loglik_std);
    }
    fmt::print(stderr, "artifacts in {}\n", dir);
}

void cmd_bandit(const Options& o) {
    const auto c = load_as<config::BanditConfig>(o, "bandit");
    const std::string dir = out_dir(o, c.meta);
    const std::size_t steps = o.full_scale ? c.full_scale_interactions : c.interactions;
    experiments::write_config_copy(c.meta, dir);
    fmt::print("agent,seed,final_cumulative_regret,final_reward_rmse,tail_slope,divergences\n");
    for (const auto& r : experiments::run_bandit_suite(c, steps, dir)) {
        fmt::print("{},{},{:.1f},{:.4f},{:.4f},{}\n", bandit::to_string(r.agent), r.seed, r.final_regret,
                   r.final_reward_rmse, r.tail_slope, r.divergences);
    }
    fmt::print(stderr, "artifacts in {}\n", dir);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational networks with learned width and depth"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(config::kVersion));

    Options opts;
    auto add = [&](const std::string& name, const std::string& help, void (*fn)(const Options&)) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opts.config, "experiment config (INI)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", opts.out, "output directory (default results/<name>)");
        sub->add_option("--seeds", opts.seeds, "seed list overriding the config, e.g. 0,1,5-9");
        if (name == "bandit") sub->add_flag("--full-scale", opts.full_scale, "use full_scale_interactions");
        sub->callback([&opts, fn] { fn(opts); });
    };
    add("toy-size", "learn the width of one hidden layer on toy data", cmd_toy_size);
    add("toy-depth", "learn which layers to bypass on toy data", cmd_toy_depth);
    add("uci", "rigid vs adaptive networks on regression datasets", cmd_uci);
    add("bandit", "mushroom contextual bandit agents", cmd_bandit);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error:\n" << e.what() << '\n';
        return kExitConfig;
    } catch (const data::CsvError& e) {
        std::cerr << "data error:\n" << e.what() << '\n';
        return kExitConfig;
    } catch (const train::DivergenceError& e) {
        std::cerr << "training diverged: " << e.what() << '\n';
        return kExitDiverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return EXIT_SUCCESS;
}
