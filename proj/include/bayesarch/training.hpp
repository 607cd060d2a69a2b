// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayesarch/data.hpp"
#include "bayesarch/layers.hpp"

namespace bayesarch::train {

// Negative ELBO split into its summands. nll is already scaled up to the full
// dataset; total = nll + kl_scale * (kl_weights + kl_arch).
struct ElboTerms {
    double nll = 0.0;
    double kl_weights = 0.0;
    double kl_arch = 0.0;
    double kl_scale = 1.0;
    double total() const { return nll + kl_scale * (kl_weights + kl_arch); }
    bool operator==(const ElboTerms&) const = default;
};

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    // Learning rate for size/skip parameters; unset means learning_rate.
    std::optional<double> arch_learning_rate;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    // Override adapter temperatures when set.
    std::optional<double> tau_size;
    std::optional<double> tau_depth;
    // 0 disables early stopping. Otherwise the held-out NLL is checked every
    // epoch and the best parameters are restored at the end.
    std::size_t early_stop_patience = 0;
    std::size_t validation_samples = 10;
    double kl_scale = 1.0;

    void validate() const;
    nlohmann::json to_json() const;
};

// Raised when a step yields a non-finite value. term() is one of
// "nll", "kl_weights", "kl_arch" or "gradient".
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(std::string term, std::size_t epoch, std::size_t step, const std::string& detail);
    const std::string& term() const { return term_; }
    std::size_t epoch() const { return epoch_; }
    std::size_t step() const { return step_; }

private:
    std::string term_;
    std::size_t epoch_;
    std::size_t step_;
};

struct StepResult {
    ElboTerms terms;
    std::vector<Tensor> grads;  // aligned with Network::parameters()
    Tensor predictions;         // network output for the batch
};

// One stochastic estimate of the negative ELBO on a batch with a single
// weight/architecture sample drawn from noise.
StepResult elbo_step(const Network& network, const Tensor& x, const Tensor& y, std::size_t dataset_size,
                     NoiseSource& noise, double kl_scale = 1.0);

// Differentiable negative log-likelihood summed over the batch.
Var negative_loglik(Var output, Var logits, const Tensor& target, const Likelihood& likelihood);

// sum_i log N(target_i; pred_i, obs_sigma^2)
double gaussian_loglik(const Tensor& pred_mean, const Tensor& target, double obs_sigma);

class Adam {
public:
    Adam(const TrainConfig& config, std::size_t n_params);
    void step(const std::vector<Parameter*>& params, const std::vector<Tensor>& grads);
    std::size_t steps() const { return t_; }

private:
    double lr_, arch_lr_, beta1_, beta2_, eps_;
    std::vector<Tensor> m_, v_;
    std::size_t t_ = 0;
};

struct SizeRecord {
    std::size_t layer = 0;
    double mu = 0.0;
    double sigma = 0.0;
    std::vector<double> pi;
    bool operator==(const SizeRecord&) const = default;
};

struct SkipRecord {
    std::size_t layer = 0;
    double pi = 0.0;
    bool operator==(const SkipRecord&) const = default;
};

struct RunLogRow {
    std::string run_id;
    std::size_t epoch = 0;
    ElboTerms terms;
    std::vector<SizeRecord> sizes;
    std::vector<SkipRecord> skips;
    std::map<std::string, double> metrics;

    nlohmann::json to_json() const;
    bool operator==(const RunLogRow&) const = default;
};

struct RunLog {
    nlohmann::json metadata;
    std::vector<RunLogRow> rows;

    bool empty() const { return rows.empty(); }
    // Metadata line first, then one line per epoch.
    std::string to_jsonl() const;
};

// Architecture state of a network as a log row (terms and metrics left empty).
RunLogRow snapshot_row(const Network& network, const std::string& run_id, std::size_t epoch);

struct FitOptions {
    std::string run_id = "run";
    const data::Dataset* validation = nullptr;
    // Called after every epoch with the 1-based epoch index.
    std::function<void(std::size_t, const Network&)> on_epoch;
};

// Minibatch training. Deterministic given config.seed. Throws DivergenceError
// with the epoch and step index when a non-finite value appears.
RunLog fit(Network& network, const data::Dataset& dataset, const TrainConfig& config, const FitOptions& options = {});

// Sets adapter temperatures from the config overrides.
void apply_temperatures(Network& network, const TrainConfig& config);

}  // namespace bayesarch::train
