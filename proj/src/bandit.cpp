// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/bandit.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "bayesarch/training.hpp"

namespace bayesarch::bandit {

std::string to_string(Action a) {
    return a == Action::consume ? "consume" : "reject";
}

std::string to_string(AgentKind k) {
    switch (k) {
        case AgentKind::greedy: return "greedy";
        case AgentKind::epsilon_greedy: return "epsilon_greedy";
        case AgentKind::thompson_rigid: return "thompson_rigid";
        case AgentKind::thompson_adaptive: return "thompson_adaptive";
        case AgentKind::thompson_warmstart: return "thompson_warmstart";
    }
    return "?";
}

AgentKind agent_kind_from_string(const std::string& s) {
    for (AgentKind k : {AgentKind::greedy, AgentKind::epsilon_greedy, AgentKind::thompson_rigid,
                        AgentKind::thompson_adaptive, AgentKind::thompson_warmstart}) {
        if (to_string(k) == s) return k;
    }
    throw std::invalid_argument(fmt::format("unknown agent kind '{}'", s));
}

double RewardSpec::expected(data::MushroomLabel label, Action action) const {
    if (action == Action::reject) return reject;
    if (label == data::MushroomLabel::edible) return edible_consume;
    return poisonous_bad_prob * poisonous_consume_bad + (1.0 - poisonous_bad_prob) * poisonous_consume_good;
}

MushroomBandit::MushroomBandit(const data::MushroomData& data, std::uint64_t seed, RewardSpec rewards)
    : data_(&data), rewards_(rewards), context_rng_(seed), coin_rng_(seed ^ 0xc2b2ae3d27d4eb4fULL) {
    if (data.size() == 0) throw std::invalid_argument("MushroomBandit: no contexts");
}

std::size_t MushroomBandit::draw_context() {
    return static_cast<std::size_t>(context_rng_() % data_->size());
}

double MushroomBandit::reward(std::size_t context_id, Action action) {
    if (action == Action::reject) return rewards_.reject;
    if (data_->labels.at(context_id) == data::MushroomLabel::edible) return rewards_.edible_consume;
    return dist::open_uniform(coin_rng_) < rewards_.poisonous_bad_prob ? rewards_.poisonous_consume_bad
                                                                   : rewards_.poisonous_consume_good;
}

double MushroomBandit::expected_reward(std::size_t context_id, Action action) const {
    return rewards_.expected(data_->labels.at(context_id), action);
}

double MushroomBandit::oracle_reward(std::size_t context_id) const {
    return std::max(expected_reward(context_id, Action::consume), expected_reward(context_id, Action::reject));
}

double MushroomBandit::regret(std::size_t context_id, Action action) const {
    return oracle_reward(context_id) - expected_reward(context_id, action);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(const Transition& t) {
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(t);
}

void AgentConfig::validate() const {
    std::vector<std::string> errors;
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) errors.push_back(fmt::format("epsilon {} outside [0, 1]", epsilon));
    if (hidden.empty()) errors.push_back("at least one hidden layer is required");
    for (std::size_t h : hidden) {
        if (h < 1) errors.push_back("hidden layer sizes must be >= 1");
    }
    if (!(init_sigma > 0.0)) errors.push_back("init_sigma must be > 0");
    if (!(obs_sigma > 0.0)) errors.push_back("obs_sigma must be > 0");
    if (!(learning_rate > 0.0)) errors.push_back("learning_rate must be > 0");
    if (!(kl_scale > 0.0 && kl_scale <= 1.0)) errors.push_back("kl_scale must be in (0, 1]");
    if (batch_size < 1) errors.push_back("batch_size must be >= 1");
    if (buffer_capacity < 1) errors.push_back("buffer_capacity must be >= 1");
    if (!(reward_scale > 0.0)) errors.push_back("reward_scale must be > 0");
    if (!errors.empty()) {
        std::string msg = "invalid agent config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw std::invalid_argument(msg);
    }
}

NetworkSpec reward_network_spec(const AgentConfig& config, std::size_t context_dim) {
    const bool point = config.kind == AgentKind::greedy || config.kind == AgentKind::epsilon_greedy;
    const WeightMode mode = point ? WeightMode::point : WeightMode::gaussian;
    NetworkSpec spec;
    std::size_t in = context_dim + 2;
    for (std::size_t h : config.hidden) {
        LayerSpec ls;
        ls.dense = {in, h, Activation::relu, mode};
        if (config.kind == AgentKind::thompson_adaptive) ls.size = config.size_prior;
        spec.layers.push_back(ls);
        in = h;
    }
    LayerSpec out;
    out.dense = {in, 1, Activation::identity, mode};
    spec.layers.push_back(out);
    spec.likelihood = {LikelihoodKind::gaussian, config.obs_sigma};
    spec.weight_prior_sigma = config.weight_prior_sigma;
    return spec;
}

Tensor reward_input(const Tensor& contexts, std::size_t context_id, Action action) {
    const std::size_t d = contexts.cols();
    Tensor row(Shape{1, d + 2});
    std::copy_n(contexts.data().begin() + static_cast<std::ptrdiff_t>(context_id * d), d, row.data().begin());
    row[d + static_cast<std::size_t>(action)] = 1.0;
    return row;
}

namespace {

// Both action rows in one batch so that a single network draw scores both.
Tensor both_actions(const Tensor& contexts, std::size_t context_id) {
    const std::size_t d = contexts.cols();
    Tensor x(Shape{2, d + 2});
    for (std::size_t a = 0; a < 2; ++a) {
        std::copy_n(contexts.data().begin() + static_cast<std::ptrdiff_t>(context_id * d), d,
                    x.data().begin() + static_cast<std::ptrdiff_t>(a * (d + 2)));
        x.at(a, d + a) = 1.0;
    }
    return x;
}

Action argmax_action(const Tensor& scores) {
    return scores[0] > scores[1] ? Action::consume : Action::reject;
}

// Point networks ignore the noise source, so any stream will do.
class ZeroNoise final : public NoiseSource {
public:
    Tensor normal(const Shape& shape) override { return Tensor(shape); }
    Tensor gumbel(std::size_t k) override { return Tensor(Shape{k}); }
    double logistic() override { return 0.0; }
};

}  // namespace

Action choose_greedy(const Network& network, const Tensor& contexts, std::size_t context_id) {
    ZeroNoise noise;
    return argmax_action(network.predict_once(both_actions(contexts, context_id), noise, ForwardMode::decoded));
}

Action choose_epsilon(const Network& network, const Tensor& contexts, std::size_t context_id, double epsilon,
                      dist::Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("choose_epsilon: epsilon outside [0, 1]");
    if (epsilon > 0.0 && dist::open_uniform(rng) < epsilon) {
        return (rng() & 1U) != 0 ? Action::consume : Action::reject;
    }
    return choose_greedy(network, contexts, context_id);
}

Action choose_thompson(const Network& network, const Tensor& contexts, std::size_t context_id, dist::Rng& rng) {
    RandomNoise noise(rng);
    return argmax_action(network.predict_once(both_actions(contexts, context_id), noise, ForwardMode::sample));
}

BanditRun run_bandit(const AgentConfig& config, const data::MushroomData& data, std::size_t n_interactions,
                     std::uint64_t seed) {
    config.validate();
    BanditRun run;
    run.config = config;
    if (n_interactions == 0) return run;

    MushroomBandit env(data, seed);
    dist::Rng agent_rng(seed ^ 0x9e3779b97f4a7c15ULL);
    InitOptions init;
    init.mean_init = MeanInit::fan_in;
    init.init_sigma = config.init_sigma;
    init.seed = agent_rng();
    Network network(reward_network_spec(config, env.context_dim()), init);

    train::TrainConfig tc;
    tc.learning_rate = config.learning_rate;
    tc.arch_learning_rate = config.arch_learning_rate;
    tc.batch_size = config.batch_size;
    tc.kl_scale = config.kl_scale;
    std::vector<Parameter*> params = network.parameters();
    train::Adam adam(tc, params.size());
    RandomNoise noise(agent_rng);
    ReplayBuffer buffer(config.buffer_capacity);
    const Tensor& contexts = data.contexts;
    const std::size_t d = env.context_dim();

    double cumulative = 0.0;
    std::vector<std::size_t> order;
    for (std::size_t step = 0; step < n_interactions; ++step) {
        const std::size_t ctx = env.draw_context();
        Action action = Action::reject;
        switch (config.kind) {
            case AgentKind::greedy: action = choose_greedy(network, contexts, ctx); break;
            case AgentKind::epsilon_greedy: action = choose_epsilon(network, contexts, ctx, config.epsilon, agent_rng); break;
            default: action = choose_thompson(network, contexts, ctx, agent_rng); break;
        }
        StepRecord rec;
        rec.step = step;
        rec.context_id = ctx;
        rec.action = action;
        rec.reward = env.reward(ctx, action);
        rec.regret = env.regret(ctx, action);
        cumulative += rec.regret;
        rec.cumulative_regret = cumulative;
        buffer.push({ctx, action, rec.reward});

        // one epoch over the buffer
        const std::size_t n = buffer.size();
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[agent_rng() % (i + 1)]);
        double sq_err = 0.0;
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            Tensor x(Shape{end - begin, d + 2});
            Tensor y(Shape{end - begin, 1});
            std::vector<double> expected(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                const Transition& t = buffer[order[i]];
                std::copy_n(contexts.data().begin() + static_cast<std::ptrdiff_t>(t.context_id * d), d,
                            x.data().begin() + static_cast<std::ptrdiff_t>((i - begin) * (d + 2)));
                x.at(i - begin, d + static_cast<std::size_t>(t.action)) = 1.0;
                y[i - begin] = t.reward / config.reward_scale;
                expected[i - begin] = env.expected_reward(t.context_id, t.action);
            }
            try {
                const train::StepResult sr = train::elbo_step(network, x, y, n, noise, config.kl_scale);
                adam.step(params, sr.grads);
                for (std::size_t i = 0; i < expected.size(); ++i) {
                    const double e = sr.predictions[i] * config.reward_scale - expected[i];
                    sq_err += e * e;
                }
            } catch (const train::DivergenceError&) {
                rec.diverged = true;
                ++run.divergences;
                break;
            }
        }
        rec.reward_rmse = rec.diverged ? std::nan("") : std::sqrt(sq_err / static_cast<double>(n));
        run.steps.push_back(rec);
    }
    run.network = std::move(network);
    return run;
}

AgentConfig warmstart_from(const Network& adaptive, const AgentConfig& base) {
    AgentConfig out = base;
    out.kind = AgentKind::thompson_warmstart;
    out.hidden.clear();
    for (const DenseLayer& layer : adaptive.layers()) {
        if (layer.size_adapter()) out.hidden.push_back(decode_size(*layer.size_adapter()));
    }
    if (out.hidden.empty()) throw std::invalid_argument("warmstart_from: network has no size adapters");
    return out;
}

double tail_regret_slope(const std::vector<StepRecord>& steps, double fraction) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("tail_regret_slope: fraction outside (0, 1]");
    const auto n = static_cast<std::size_t>(std::ceil(static_cast<double>(steps.size()) * fraction));
    if (n < 2) throw std::invalid_argument("tail_regret_slope: need at least two steps in the tail");
    const std::size_t start = steps.size() - n;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = start; i < steps.size(); ++i) {
        mx += static_cast<double>(steps[i].step);
        my += steps[i].cumulative_regret;
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = start; i < steps.size(); ++i) {
        const double dx = static_cast<double>(steps[i].step) - mx;
        sxy += dx * (steps[i].cumulative_regret - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

}  // namespace bayesarch::bandit
