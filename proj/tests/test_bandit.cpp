// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <string>

#include "bayesarch/bandit.hpp"

using namespace bayesarch;
using bandit::Action;
using bandit::AgentKind;

namespace {

const data::MushroomData& mushrooms() {
    static const data::MushroomData m =
        data::encode_mushroom(std::string(BAYESARCH_SOURCE_DIR) + "/data/mushroom/agaricus-lepiota.data");
    return m;
}

std::size_t first_with(data::MushroomLabel label) {
    const auto& m = mushrooms();
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.labels[i] == label) return i;
    }
    throw std::logic_error("label not present");
}

bandit::AgentConfig small_agent(AgentKind kind) {
    bandit::AgentConfig c;
    c.kind = kind;
    c.hidden = {8, 6};
    c.size_prior = {4.0, 2.0, 3.0};
    c.batch_size = 32;
    c.buffer_capacity = 64;
    return c;
}

}  // namespace

TEST_SUITE("bandit") {

TEST_CASE("expected rewards and regret") {
    bandit::MushroomBandit env(mushrooms(), 1);
    const std::size_t e = first_with(data::MushroomLabel::edible);
    const std::size_t p = first_with(data::MushroomLabel::poisonous);
    CHECK(env.expected_reward(e, Action::consume) == 5.0);
    CHECK(env.expected_reward(p, Action::consume) == -15.0);
    CHECK(env.expected_reward(p, Action::reject) == 0.0);
    CHECK(env.regret(p, Action::consume) == 15.0);
    CHECK(env.regret(e, Action::reject) == 5.0);
    CHECK(env.regret(e, Action::consume) == 0.0);
    CHECK(env.regret(p, Action::reject) == 0.0);
    CHECK(env.oracle_reward(e) == 5.0);
    CHECK(env.oracle_reward(p) == 0.0);

    // poisonous consumption pays 5 or -35 with equal odds
    int bad = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double r = env.reward(p, Action::consume);
        CHECK((r == 5.0 || r == -35.0));
        bad += r < 0;
    }
    CHECK(std::abs(bad / static_cast<double>(n) - 0.5) < 4.0 * std::sqrt(0.25 / n));
    CHECK(env.reward(e, Action::consume) == 5.0);

    double sum = 0.0;
    for (int i = 0; i < 100000; ++i) sum += env.reward(p, Action::consume);
    CHECK(std::abs(sum / 100000.0 + 15.0) < 0.5);
    CHECK(env.reward(p, Action::reject) == 0.0);
}

TEST_CASE("replay buffer evicts the oldest entry") {
    bandit::ReplayBuffer buf(3);
    for (std::size_t i = 0; i < 5; ++i) buf.push({i, Action::consume, 0.0});
    CHECK(buf.size() == 3);
    CHECK(buf[0].context_id == 2);
    CHECK(buf[2].context_id == 4);
    CHECK_THROWS(bandit::ReplayBuffer(0));
}

TEST_CASE("action selection") {
    const auto& m = mushrooms();
    const auto cfg = small_agent(AgentKind::greedy);
    Network net(bandit::reward_network_spec(cfg, m.contexts.cols()), {});
    CHECK(net.input_dim() == m.contexts.cols() + 2);
    const Tensor in = bandit::reward_input(m.contexts, 3, Action::reject);
    CHECK(in.cols() == m.contexts.cols() + 2);
    CHECK(in.at(0, m.contexts.cols()) == 0.0);
    CHECK(in.at(0, m.contexts.cols() + 1) == 1.0);

    // all-zero network: equal estimates, tie goes to reject
    Network zero = net;
    for (Parameter* p : zero.parameters()) {
        if (p->role == ParamRole::weight) {
            for (double& v : p->value.data()) v = 0.0;
        }
    }
    CHECK(bandit::choose_greedy(zero, m.contexts, 0) == Action::reject);

    dist::Rng rng(5);
    int consume = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) consume += bandit::choose_epsilon(zero, m.contexts, 0, 1.0, rng) == Action::consume;
    CHECK(std::abs(consume / static_cast<double>(n) - 0.5) < 4.0 * std::sqrt(0.25 / n));

    for (std::size_t ctx = 0; ctx < 200; ctx += 7) {
        CHECK(bandit::choose_epsilon(net, m.contexts, ctx, 0.0, rng) == bandit::choose_greedy(net, m.contexts, ctx));
    }
    CHECK_THROWS_AS(bandit::choose_epsilon(net, m.contexts, 0, 1.5, rng), std::invalid_argument);
}

TEST_CASE("runs: regret bookkeeping, shared environment stream, determinism") {
    const auto& m = mushrooms();
    const auto greedy = bandit::run_bandit(small_agent(AgentKind::greedy), m, 40, 3);
    const auto thompson = bandit::run_bandit(small_agent(AgentKind::thompson_rigid), m, 40, 3);
    REQUIRE(greedy.steps.size() == 40);
    double cum = 0.0;
    for (std::size_t i = 0; i < 40; ++i) {
        const auto& s = greedy.steps[i];
        CHECK((s.regret == 0.0 || s.regret == 5.0 || s.regret == 15.0));
        cum += s.regret;
        CHECK(s.cumulative_regret == doctest::Approx(cum));
        if (i > 0) CHECK(s.cumulative_regret >= greedy.steps[i - 1].cumulative_regret);
        CHECK(s.context_id == thompson.steps[i].context_id);
        CHECK(std::isfinite(s.reward_rmse));
    }
    const auto again = bandit::run_bandit(small_agent(AgentKind::greedy), m, 40, 3);
    for (std::size_t i = 0; i < 40; ++i) CHECK(again.steps[i].action == greedy.steps[i].action);
    CHECK(bandit::run_bandit(small_agent(AgentKind::greedy), m, 0, 3).steps.empty());
}

TEST_CASE("thompson sampling tries both actions early") {
    // deterministic per seed; every seed has to explore within 100 steps
    std::size_t explored = 0;
    const std::size_t seeds = 20;
    for (std::uint64_t seed = 0; seed < seeds; ++seed) {
        const auto run = bandit::run_bandit(small_agent(AgentKind::thompson_rigid), mushrooms(), 100, seed);
        bool consume = false, reject = false;
        for (const auto& s : run.steps) {
            consume = consume || s.action == Action::consume;
            reject = reject || s.action == Action::reject;
        }
        explored += consume && reject;
    }
    CHECK(explored == seeds);
}

TEST_CASE("warm start takes the decoded sizes and shrinks the network") {
    auto cfg = small_agent(AgentKind::thompson_adaptive);
    cfg.hidden = {100, 100};
    cfg.size_prior = {50.0, 20.0, 3.0};
    Network adaptive(bandit::reward_network_spec(cfg, mushrooms().contexts.cols()), {});
    // at the prior the decoded size is the prior mode
    CHECK(bandit::warmstart_from(adaptive, cfg).hidden == std::vector<std::size_t>{50, 50});

    adaptive.layers()[0].size_adapter()->set_posterior(34.0, 2.0);
    adaptive.layers()[1].size_adapter()->set_posterior(20.0, 2.0);
    const auto warm = bandit::warmstart_from(adaptive, cfg);
    CHECK(warm.kind == AgentKind::thompson_warmstart);
    CHECK(warm.hidden == std::vector<std::size_t>{34, 20});
    const Network rigid(bandit::reward_network_spec(warm, mushrooms().contexts.cols()), {});
    CHECK(rigid.weight_count() < adaptive.weight_count());
    CHECK(rigid.weight_count() == prune(adaptive).weight_count());

    auto plain = small_agent(AgentKind::thompson_rigid);
    CHECK_THROWS_AS(bandit::warmstart_from(Network(bandit::reward_network_spec(plain, 10), {}), plain),
                    std::invalid_argument);
}

TEST_CASE("tail slope of a straight line") {
    std::vector<bandit::StepRecord> steps(100);
    for (std::size_t i = 0; i < 100; ++i) {
        steps[i].step = i;
        steps[i].cumulative_regret = i < 50 ? 5.0 * i : 250.0 + 0.5 * (i - 50);
    }
    CHECK(bandit::tail_regret_slope(steps, 0.2) == doctest::Approx(0.5));
    CHECK(bandit::tail_regret_slope(steps, 1.0) > 0.5);
    CHECK_THROWS(bandit::tail_regret_slope(steps, 0.0));
}

TEST_CASE("agent names round-trip") {
    for (auto k : {AgentKind::greedy, AgentKind::epsilon_greedy, AgentKind::thompson_rigid, AgentKind::thompson_adaptive,
                   AgentKind::thompson_warmstart}) {
        CHECK(bandit::agent_kind_from_string(bandit::to_string(k)) == k);
    }
    CHECK_THROWS(bandit::agent_kind_from_string("oracle"));
}

}  // TEST_SUITE
