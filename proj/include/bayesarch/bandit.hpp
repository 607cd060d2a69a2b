// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "bayesarch/data.hpp"
#include "bayesarch/layers.hpp"

namespace bayesarch::bandit {

enum class Action { consume = 0, reject = 1 };

std::string to_string(Action a);

struct RewardSpec {
    double edible_consume = 5.0;
    double poisonous_consume_good = 5.0;
    double poisonous_consume_bad = -35.0;
    double poisonous_bad_prob = 0.5;
    double reject = 0.0;

    double expected(data::MushroomLabel label, Action action) const;
};

// Contexts are drawn uniformly with replacement; consuming a poisonous
// mushroom flips a coin for the reward. Contexts and coins use separate
// streams, so the context sequence does not depend on the actions taken.
class MushroomBandit {
public:
    MushroomBandit(const data::MushroomData& data, std::uint64_t seed, RewardSpec rewards = {});

    std::size_t draw_context();
    double reward(std::size_t context_id, Action action);
    double expected_reward(std::size_t context_id, Action action) const;
    // Consume edible, reject poisonous.
    double oracle_reward(std::size_t context_id) const;
    double regret(std::size_t context_id, Action action) const;

    const data::MushroomData& data() const { return *data_; }
    std::size_t context_dim() const { return data_->contexts.cols(); }

private:
    const data::MushroomData* data_;
    RewardSpec rewards_;
    dist::Rng context_rng_;
    dist::Rng coin_rng_;
};

struct Transition {
    std::size_t context_id = 0;
    Action action = Action::reject;
    double reward = 0.0;
};

// Fixed-capacity FIFO: pushing into a full buffer evicts the oldest entry.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 4096);
    void push(const Transition& t);
    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    // 0 is the oldest retained entry.
    const Transition& operator[](std::size_t i) const { return items_[i]; }

private:
    std::size_t capacity_;
    std::deque<Transition> items_;
};

enum class AgentKind { greedy, epsilon_greedy, thompson_rigid, thompson_adaptive, thompson_warmstart };

std::string to_string(AgentKind k);
AgentKind agent_kind_from_string(const std::string& s);

struct AgentConfig {
    AgentKind kind = AgentKind::thompson_rigid;
    double epsilon = 0.05;
    std::vector<std::size_t> hidden{100, 100};
    // Size adapters (adaptive agent only).
    SizeAdapterSpec size_prior{50.0, 20.0, 3.0};
    double weight_prior_sigma = 1.0;
    double init_sigma = 0.02;
    double obs_sigma = 0.5;
    double learning_rate = 5e-4;
    // Multiplies the KL terms of the per-batch loss; 1 is the plain ELBO.
    double kl_scale = 1.0;
    std::optional<double> arch_learning_rate;
    std::size_t batch_size = 64;
    std::size_t buffer_capacity = 4096;
    // Rewards are divided by this before entering the network.
    double reward_scale = 35.0;

    void validate() const;
};

// context ++ one-hot(action) -> hidden ReLU layers -> scalar reward estimate.
NetworkSpec reward_network_spec(const AgentConfig& config, std::size_t context_dim);

// Input row for (context, action).
Tensor reward_input(const Tensor& contexts, std::size_t context_id, Action action);

// Reward estimates for both actions from one network draw; ties go to reject.
Action choose_greedy(const Network& network, const Tensor& contexts, std::size_t context_id);
Action choose_epsilon(const Network& network, const Tensor& contexts, std::size_t context_id, double epsilon,
                      dist::Rng& rng);
Action choose_thompson(const Network& network, const Tensor& contexts, std::size_t context_id, dist::Rng& rng);

struct StepRecord {
    std::size_t step = 0;
    std::size_t context_id = 0;
    Action action = Action::reject;
    double reward = 0.0;
    double regret = 0.0;
    double cumulative_regret = 0.0;
    // RMSE of the update epoch's reward estimates against expected rewards, raw units.
    double reward_rmse = 0.0;
    bool diverged = false;
};

struct BanditRun {
    AgentConfig config;
    std::vector<StepRecord> steps;
    std::size_t divergences = 0;
    std::optional<Network> network;
};

// n_interactions steps of act, observe, store, then one epoch over the buffer.
// The environment stream depends on seed only, so agents run with the same
// seed see the same contexts.
BanditRun run_bandit(const AgentConfig& config, const data::MushroomData& data, std::size_t n_interactions,
                     std::uint64_t seed);

// Rigid Bayesian agent sized by the decoded layer sizes of an adaptive network.
AgentConfig warmstart_from(const Network& adaptive, const AgentConfig& base);

// Least-squares slope of cumulative regret against step over the last fraction of steps.
double tail_regret_slope(const std::vector<StepRecord>& steps, double fraction = 0.2);

}  // namespace bayesarch::bandit
