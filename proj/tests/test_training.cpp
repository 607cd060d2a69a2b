// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "bayesarch/data.hpp"
#include "bayesarch/training.hpp"
#include "support.hpp"

using namespace bayesarch;
using testutil::random_tensor;

namespace {

NetworkSpec small_spec(WeightMode mode, bool adapters) {
    NetworkSpec spec;
    LayerSpec a;
    a.dense = {1, 6, Activation::relu, mode};
    if (adapters) a.size = SizeAdapterSpec{3.0, 2.0, 1.5};
    LayerSpec b;
    b.dense = {6, 6, Activation::relu, mode};
    if (adapters) b.skip = SkipAdapterSpec{0.4, 1.0};
    LayerSpec c;
    c.dense = {6, 1, Activation::identity, mode};
    spec.layers = {a, b, c};
    spec.likelihood = {LikelihoodKind::gaussian, 0.3};
    spec.weight_prior_sigma = 0.8;
    return spec;
}

data::Dataset tiny_dataset(std::size_t n, std::uint64_t seed) { return data::toy_periodic(n, 0.1, seed); }

}  // namespace

TEST_SUITE("training") {

TEST_CASE("elbo gradient matches finite differences at fixed noise") {
    std::mt19937_64 rng(30);
    const Tensor x = random_tensor(rng, {5, 1});
    const Tensor y = random_tensor(rng, {5, 1});
    for (WeightMode mode : {WeightMode::point, WeightMode::gaussian}) {
        CAPTURE(to_string(mode));
        InitOptions init;
        init.seed = 3;
        init.init_sigma = 0.3;
        Network net(small_spec(mode, true), init);

        dist::Rng noise_rng(31);
        RandomNoise base(noise_rng);
        RecordedNoise noise(base);
        const train::StepResult at = train::elbo_step(net, x, y, 40, noise);
        auto total = [&](const Network& n) {
            noise.replay();
            return train::elbo_step(n, x, y, 40, noise).terms.total();
        };
        CHECK(total(net) == doctest::Approx(at.terms.total()).epsilon(1e-12));

        const double h = 1e-6;
        double worst = 0.0;
        const auto params = net.parameters();
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t i = 0; i < params[p]->value.size(); ++i) {
                Network plus = net;
                Network minus = net;
                plus.parameters()[p]->value.data()[i] += h;
                minus.parameters()[p]->value.data()[i] -= h;
                const double fd = (total(plus) - total(minus)) / (2 * h);
                const double an = at.grads[p][i];
                worst = std::max(worst, std::abs(fd - an) / std::max(1.0, std::abs(fd) + std::abs(an)));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("nll is scaled from the batch to the dataset") {
    std::mt19937_64 rng(32);
    const Tensor x = random_tensor(rng, {4, 1});
    const Tensor y = random_tensor(rng, {4, 1});
    Network net(small_spec(WeightMode::point, false), {});
    dist::Rng r(1);
    RandomNoise n(r);
    const double per_batch = train::elbo_step(net, x, y, 4, n).terms.nll;
    CHECK(train::elbo_step(net, x, y, 400, n).terms.nll == doctest::Approx(100.0 * per_batch).epsilon(1e-12));

    const Tensor pred = net.predict_once(x, n, ForwardMode::decoded);
    CHECK(-train::gaussian_loglik(pred, y, 0.3) == doctest::Approx(per_batch).epsilon(1e-12));
}

TEST_CASE("weight KL vanishes when the posterior starts at the prior") {
    NetworkSpec spec = small_spec(WeightMode::gaussian, false);
    InitOptions init;
    init.mean_init = MeanInit::prior;
    init.init_sigma = spec.weight_prior_sigma;
    Network net(spec, init);
    dist::Rng r(2);
    RandomNoise n(r);
    const auto res = train::elbo_step(net, Tensor::zeros({3, 1}), Tensor::zeros({3, 1}), 3, n);
    CHECK(std::abs(res.terms.kl_weights) < 1e-9);
    CHECK(res.terms.kl_arch == 0.0);
}

TEST_CASE("zero epochs leave the network untouched and log nothing") {
    Network net(small_spec(WeightMode::gaussian, true), {});
    const Network before = net;
    train::TrainConfig cfg;
    cfg.epochs = 0;
    const auto log = train::fit(net, tiny_dataset(32, 1), cfg);
    CHECK(log.empty());
    const auto a = net.parameters();
    const auto b = before.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
}

TEST_CASE("fit is deterministic and reduces the loss") {
    const auto ds = tiny_dataset(128, 2);
    train::TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.01;
    cfg.seed = 9;
    InitOptions init;
    init.seed = 4;
    Network a(small_spec(WeightMode::gaussian, true), init);
    Network b(small_spec(WeightMode::gaussian, true), init);
    const auto la = train::fit(a, ds, cfg);
    const auto lb = train::fit(b, ds, cfg);
    REQUIRE(la.rows.size() == 15);
    CHECK(la.rows == lb.rows);
    CHECK(la.to_jsonl() == lb.to_jsonl());
    CHECK(la.rows.back().terms.nll < la.rows.front().terms.nll);
    CHECK(la.rows.front().sizes.size() == 1);
    CHECK(la.rows.front().skips.size() == 1);

    cfg.seed = 10;
    Network c(small_spec(WeightMode::gaussian, true), init);
    CHECK(train::fit(c, ds, cfg).rows != la.rows);
}

TEST_CASE("snapshot row before training equals the prior") {
    Network net(small_spec(WeightMode::point, true), {});
    const auto row = train::snapshot_row(net, "r", 0);
    REQUIRE(row.sizes.size() == 1);
    const auto& sa = *net.layers()[0].size_adapter();
    CHECK(row.sizes[0].mu == doctest::Approx(3.0));
    CHECK(row.sizes[0].sigma == doctest::Approx(2.0));
    const auto prior = sa.prior_probs();
    for (std::size_t i = 0; i < prior.size(); ++i) CHECK(row.sizes[0].pi[i] == doctest::Approx(prior[i]).epsilon(1e-12));
    CHECK(row.skips[0].pi == doctest::Approx(0.4));
}

TEST_CASE("divergence is reported with its term and position") {
    auto ds = tiny_dataset(32, 3);
    ds.targets.data()[5] = std::numeric_limits<double>::quiet_NaN();
    Network net(small_spec(WeightMode::point, false), {});
    train::TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    try {
        train::fit(net, ds, cfg);
        FAIL("expected DivergenceError");
    } catch (const train::DivergenceError& e) {
        CHECK(e.term() == "nll");
        CHECK(e.epoch() == 1);
        CHECK(e.step() < 4);
    }

    Network exploding(small_spec(WeightMode::point, false), {});
    for (Parameter* p : exploding.parameters()) {
        for (double& v : p->value.data()) v = 1e200;
    }
    CHECK_THROWS_AS(train::fit(exploding, tiny_dataset(32, 3), cfg), train::DivergenceError);
}

TEST_CASE("adam: first step moves each coordinate by the learning rate") {
    train::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.arch_learning_rate = 0.5;
    Parameter w{"w", Tensor::vector({1.0, -2.0}), ParamRole::weight};
    Parameter a{"a", Tensor::scalar(0.0), ParamRole::architecture};
    train::Adam adam(cfg, 2);
    adam.step({&w, &a}, {Tensor::vector({3.0, -0.01}), Tensor::scalar(-2.0)});
    CHECK(w.value[0] == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(w.value[1] == doctest::Approx(-1.9).epsilon(1e-5));
    CHECK(a.value.item() == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(adam.steps() == 1);
}

TEST_CASE("config validation") {
    train::TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.learning_rate = -1;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    cfg.kl_scale = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.kl_scale = 1.5;
    CHECK_THROWS(cfg.validate());
    cfg = {};
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("early stopping restores the best validation parameters") {
    const auto ds = tiny_dataset(96, 4);
    const auto val = tiny_dataset(32, 5);
    train::TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.learning_rate = 0.01;
    cfg.early_stop_patience = 3;
    Network net(small_spec(WeightMode::gaussian, false), {});
    train::FitOptions opts;
    opts.validation = &val;
    std::size_t calls = 0;
    opts.on_epoch = [&](std::size_t, const Network&) { ++calls; };
    const auto log = train::fit(net, ds, cfg, opts);
    CHECK(calls == log.rows.size());
    CHECK(log.rows.size() <= 30);
    for (const auto& r : log.rows) CHECK(r.metrics.count("val_nll") == 1);
}

}  // TEST_SUITE
