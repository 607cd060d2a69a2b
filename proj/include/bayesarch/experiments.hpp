// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bayesarch/bandit.hpp"
#include "bayesarch/config.hpp"
#include "bayesarch/training.hpp"

// Experiment runners shared by the command-line tool and the acceptance
// suite. Each runner writes its artifacts below out_dir (one directory per
// seed) and returns the numbers needed for reporting. An empty out_dir skips
// all file output.

namespace bayesarch::experiments {

// "# bayesarch <version> config_hash=<hash> seed=<seed>"
std::string artifact_header(const config::ExperimentMeta& meta, std::uint64_t seed);

struct ToySizeResult {
    std::uint64_t seed = 0;
    std::size_t decoded_size = 0;
    double mu = 0.0;
    double sigma = 0.0;
    double train_rmse = 0.0;
    train::RunLog log;
};

Network build_toy_size_network(const config::ToySizeConfig& c, std::uint64_t seed);
ToySizeResult run_toy_size(const config::ToySizeConfig& c, std::uint64_t seed, const std::string& out_dir);
// All configured seeds, run in parallel.
std::vector<ToySizeResult> run_toy_size_suite(const config::ToySizeConfig& c, const std::string& out_dir);

struct ToyDepthResult {
    std::uint64_t seed = 0;
    std::vector<double> skip_probs;
    std::size_t kept_hidden = 0;  // hidden layers kept by decode_depth
    double train_rmse = 0.0;
    train::RunLog log;
};

Network build_toy_depth_network(const config::ToyDepthConfig& c, std::uint64_t seed);
ToyDepthResult run_toy_depth(const config::ToyDepthConfig& c, std::uint64_t seed, const std::string& out_dir);
std::vector<ToyDepthResult> run_toy_depth_suite(const config::ToyDepthConfig& c, const std::string& out_dir);

enum class UciVariant { shallow_rigid, shallow_adaptive, deep_rigid, deep_adaptive };
std::string to_string(UciVariant v);
inline constexpr UciVariant kUciVariants[] = {UciVariant::shallow_rigid, UciVariant::shallow_adaptive,
                                             UciVariant::deep_rigid, UciVariant::deep_adaptive};

struct UciRun {
    std::string dataset;
    UciVariant variant = UciVariant::shallow_rigid;
    std::uint64_t seed = 0;
    double rmse = 0.0;    // original target units
    double loglik = 0.0;  // per test point, original target units
    std::size_t epochs_run = 0;
    std::vector<std::size_t> decoded_sizes;
    std::size_t kept_layers = 0;
};

struct UciSummary {
    std::string dataset;
    UciVariant variant = UciVariant::shallow_rigid;
    double rmse_mean = 0.0, rmse_std = 0.0;
    double loglik_mean = 0.0, loglik_std = 0.0;
    std::size_t n = 0;
};

NetworkSpec uci_network_spec(const config::UciConfig& c, UciVariant v, std::size_t input_dim);
UciRun run_uci_single(const config::UciConfig& c, const std::string& dataset, UciVariant v, std::uint64_t seed,
                      const std::string& out_dir);
// Every dataset x variant x seed, then the summary table (also written to out_dir).
std::vector<UciSummary> run_uci(const config::UciConfig& c, const std::string& out_dir, std::vector<UciRun>* runs = nullptr);
std::vector<UciSummary> summarize_uci(const std::vector<UciRun>& runs);

struct BanditSummaryRow {
    bandit::AgentKind agent = bandit::AgentKind::greedy;
    std::uint64_t seed = 0;
    double final_regret = 0.0;
    double final_reward_rmse = 0.0;
    double tail_slope = 0.0;
    std::size_t divergences = 0;
    std::vector<std::size_t> hidden;
};

// Runs the configured agents for one seed. thompson_warmstart is sized from
// the thompson_adaptive run of the same seed (run first if not listed).
std::vector<BanditSummaryRow> run_bandit_seed(const config::BanditConfig& c, const data::MushroomData& data,
                                              std::uint64_t seed, std::size_t interactions,
                                              const std::string& out_dir);
std::vector<BanditSummaryRow> run_bandit_suite(const config::BanditConfig& c, std::size_t interactions,
                                               const std::string& out_dir);

// Writes the verbatim config next to the results.
void write_config_copy(const config::ExperimentMeta& meta, const std::string& out_dir);

}  // namespace bayesarch::experiments
