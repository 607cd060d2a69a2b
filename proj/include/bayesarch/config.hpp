// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "bayesarch/bandit.hpp"
#include "bayesarch/layers.hpp"
#include "bayesarch/training.hpp"

namespace bayesarch::config {

inline constexpr const char* kVersion = "0.1.0";

// All validation problems of one file, reported together.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::vector<std::string>& problems);
    const std::vector<std::string>& problems() const { return problems_; }

private:
    std::vector<std::string> problems_;
};

struct ExperimentMeta {
    std::string kind;
    std::string name;
    std::vector<std::uint64_t> seeds;
    std::string source_text;  // the config file, verbatim
    std::string hash;         // FNV-1a of source_text, 16 hex digits
};

struct ToySizeConfig {
    ExperimentMeta meta;
    std::size_t n_points = 2000;
    double noise_sigma = 0.1;
    std::size_t max_units = 50;
    WeightMode weight_mode = WeightMode::point;
    double obs_sigma = 0.1;
    double weight_prior_sigma = 1.0;
    double init_sigma = 0.05;
    SizeAdapterSpec size_prior;
    train::TrainConfig train;
    std::size_t snapshot_grid = 200;
};

struct ToyDepthConfig {
    ExperimentMeta meta;
    std::size_t n_points = 2000;
    double noise_sigma = 0.1;
    std::size_t width = 5;
    std::size_t skip_layers = 10;
    WeightMode weight_mode = WeightMode::point;
    double obs_sigma = 0.1;
    double weight_prior_sigma = 1.0;
    double init_sigma = 0.05;
    SkipAdapterSpec skip_prior;
    train::TrainConfig train;
};

struct UciConfig {
    ExperimentMeta meta;
    std::string data_dir;
    std::vector<std::string> datasets;
    double test_fraction = 0.1;
    double validation_fraction = 0.1;
    std::size_t width = 50;
    std::size_t deep_layers = 5;
    double obs_sigma = 1.0;
    double weight_prior_sigma = 1.0;
    double init_sigma = 1.0;
    MeanInit mean_init = MeanInit::prior;
    SizeAdapterSpec size_prior;
    SkipAdapterSpec skip_prior;
    train::TrainConfig train;
    std::size_t predictive_samples = 100;
};

struct BanditConfig {
    ExperimentMeta meta;
    std::string mushroom_path;
    std::size_t interactions = 5000;
    std::size_t full_scale_interactions = 30000;
    std::vector<bandit::AgentKind> agents;
    bandit::AgentConfig agent;
};

using ExperimentConfig = std::variant<ToySizeConfig, ToyDepthConfig, UciConfig, BanditConfig>;

// Parses INI text. Unknown keys, missing keys and bad values all throw one
// ConfigError listing every problem. base_dir resolves relative data paths.
ExperimentConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

const ExperimentMeta& meta_of(const ExperimentConfig& config);
ExperimentMeta& meta_of(ExperimentConfig& config);

std::string fnv1a_hex(const std::string& text);
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace bayesarch::config
