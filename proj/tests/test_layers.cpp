// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "bayesarch/layers.hpp"
#include "support.hpp"

using namespace bayesarch;
using testutil::random_tensor;

namespace {

// Random point of the open simplex (normalised exponentials).
Tensor random_simplex(std::mt19937_64& rng, std::size_t k) {
    std::exponential_distribution<double> e;
    Tensor t(Shape{k});
    double total = 0.0;
    for (double& v : t.data()) total += (v = e(rng));
    for (double& v : t.data()) v /= total;
    return t;
}

NetworkSpec sized_spec(std::size_t in, std::size_t width, std::size_t depth, bool skips, WeightMode mode) {
    NetworkSpec spec;
    std::size_t d = in;
    for (std::size_t l = 0; l < depth; ++l) {
        LayerSpec ls;
        ls.dense = {d, width, Activation::relu, mode};
        ls.size = SizeAdapterSpec{static_cast<double>(width) / 2, 3.0, 1.0};
        if (skips && l > 0) ls.skip = SkipAdapterSpec{0.3, 1.0};
        spec.layers.push_back(ls);
        d = width;
    }
    LayerSpec out;
    out.dense = {d, 2, Activation::identity, mode};
    spec.layers.push_back(out);
    return spec;
}

}  // namespace

TEST_SUITE("layers") {

TEST_CASE("size mask: definition and partial sums") {
    ad::Tape tape;
    CHECK(build_size_mask(tape.constant(Tensor::vector({0, 0, 1, 0, 0}))).value().values() ==
          std::vector<double>{1, 1, 1, 0, 0});
    const auto m = build_size_mask(tape.constant(Tensor::vector({0.25, 0.25, 0.25, 0.25}))).value().values();
    const std::vector<double> expect{1.0, 0.75, 0.5, 0.25};
    for (std::size_t i = 0; i < 4; ++i) CHECK(m[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("size mask: m_1 = 1 and non-increasing on random simplex points") {
    std::mt19937_64 rng(20);
    for (int trial = 0; trial < 10000; ++trial) {
        ad::Tape tape;
        const auto m = build_size_mask(tape.constant(random_simplex(rng, 1 + trial % 40))).value().values();
        REQUIRE(std::abs(m[0] - 1.0) < 1e-12);
        for (std::size_t i = 1; i < m.size(); ++i) REQUIRE(m[i] <= m[i - 1]);
    }
}

TEST_CASE("sized_forward limits") {
    std::mt19937_64 rng(21);
    const Tensor x = random_tensor(rng, {6, 3});
    const Tensor w = random_tensor(rng, {3, 8});
    const Tensor b = random_tensor(rng, {8});
    dist::Rng noise_rng(1);
    RandomNoise noise(noise_rng);

    ad::Tape tape;
    const Var plain = dense_forward(tape.constant(x), tape.constant(w), tape.constant(b), Activation::relu);
    dist::TruncNormSizeParams full{tape.constant(8.0), tape.constant(dist::rho_for_sigma(1e-3)), 8};
    const auto out = sized_forward(tape.constant(x), tape.constant(w), tape.constant(b), Activation::relu, full, 1.0, noise);
    for (std::size_t i = 0; i < plain.size(); ++i) CHECK(out.output.value()[i] == doctest::Approx(plain.value()[i]).epsilon(1e-3));

    // hard mask keeping two units zeroes the rest
    const Var mask = build_size_mask(tape.constant(Tensor::vector({0, 1, 0, 0, 0, 0, 0, 0})));
    const Tensor masked = (plain * mask).value();
    for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t c = 2; c < 8; ++c) CHECK(masked.at(r, c) == 0.0);
    }
}

TEST_CASE("sized_forward gradients at fixed gumbel noise") {
    std::mt19937_64 rng(22);
    const Tensor x = random_tensor(rng, {4, 3});
    const Tensor b = random_tensor(rng, {6});
    dist::Rng noise_rng(2);
    RandomNoise base(noise_rng);
    RecordedNoise noise(base);
    const Tensor w0 = random_tensor(rng, {3, 6});
    {
        ad::Tape t;
        dist::TruncNormSizeParams p{t.constant(3.0), t.constant(0.5), 6};
        sized_forward(t.constant(x), t.constant(w0), t.constant(b), Activation::relu, p, 2.0, noise);
    }
    noise.replay();
    auto through_w = [&](Var w) {
        noise.replay();
        ad::Tape& t = w.tape();
        dist::TruncNormSizeParams p{t.constant(3.0), t.constant(0.5), 6};
        return ad::sum(ad::square(sized_forward(t.constant(x), w, t.constant(b), Activation::relu, p, 2.0, noise).output));
    };
    auto through_mu = [&](Var mu) {
        noise.replay();
        ad::Tape& t = mu.tape();
        dist::TruncNormSizeParams p{ad::reshape(mu, {}), t.constant(0.5), 6};
        auto so = sized_forward(t.constant(x), t.constant(w0), t.constant(b), Activation::relu, p, 2.0, noise);
        return ad::sum(ad::square(so.output)) + ad::sum(so.log_sample);
    };
    CHECK(ad::grad_check(through_w, w0).max_rel_error < 1e-4);
    CHECK(ad::grad_check(through_mu, Tensor::vector({3.0})).max_rel_error < 1e-4);
}

TEST_CASE("skip_forward endpoints are exact and gradients match") {
    std::mt19937_64 rng(23);
    const Tensor x = random_tensor(rng, {5, 4});
    const Tensor fx = random_tensor(rng, {5, 4});
    ad::Tape tape;
    CHECK(skip_combine(tape.constant(x), tape.constant(fx), tape.constant(1.0)).value() == x);
    CHECK(skip_combine(tape.constant(x), tape.constant(fx), tape.constant(0.0)).value() == fx);

    dist::Rng noise_rng(3);
    RandomNoise base(noise_rng);
    RecordedNoise noise(base);
    {
        ad::Tape t;
        skip_forward(t.constant(x), t.constant(fx), dist::ConcreteBernoulliParams{t.constant(0.4), 1.0}, noise);
    }
    auto through_logit = [&](Var logit) {
        noise.replay();
        ad::Tape& t = logit.tape();
        const auto so = skip_forward(t.constant(x), t.constant(fx), {ad::reshape(logit, {}), 1.0}, noise);
        return ad::sum(ad::square(so.output)) + so.gamma_logit;
    };
    auto through_x = [&](Var xv) {
        noise.replay();
        ad::Tape& t = xv.tape();
        return ad::sum(ad::square(skip_forward(xv, ad::relu(xv) * 0.5, {t.constant(0.4), 1.0}, noise).output));
    };
    CHECK(ad::grad_check(through_logit, Tensor::vector({0.4})).max_rel_error < 1e-4);
    CHECK(ad::grad_check(through_x, x).max_rel_error < 1e-4);
}

TEST_CASE("decode_size: paper posterior, truncation, tie rule") {
    SizeAdapter a(50, {1.0, 2.0, 3.0});
    a.set_posterior(21.99, 0.16);
    CHECK(decode_size(a) == 22);
    a.set_posterior(0.2, 5.0);
    CHECK(decode_size(a) == 1);
    a.set_posterior(25.5, 1.0);
    CHECK(decode_size(a) == 25);
    SizeAdapter prior(100, {50.0, 20.0, 3.0});
    CHECK(decode_size(prior) == 50);
}

TEST_CASE("decode_depth follows the bypass probability") {
    Network net(sized_spec(3, 6, 4, true, WeightMode::point), {});
    auto set_all = [&](double logit) {
        for (auto& l : net.layers()) {
            if (l.skip_adapter()) l.skip_adapter()->set_logit(logit);
        }
    };
    set_all(-10.0);
    CHECK(decode_depth(net).kept_count() == net.layers().size());
    set_all(10.0);
    CHECK(decode_depth(net).kept_count() == net.layers().size() - 3);
    net.layers()[1].skip_adapter()->set_logit(0.3);   // pi > 0.5: dropped
    net.layers()[2].skip_adapter()->set_logit(-0.3);  // kept
    net.layers()[3].skip_adapter()->set_logit(2.0);   // dropped
    const auto d = decode_depth(net);
    CHECK(d.kept == std::vector<bool>{true, false, true, false, true});
}

TEST_CASE("prune agrees with the hard-mask forward") {
    std::mt19937_64 rng(24);
    const Tensor x = random_tensor(rng, {7, 3});
    dist::Rng noise_rng(4);
    RandomNoise noise(noise_rng);
    for (bool skips : {false, true}) {
        for (WeightMode mode : {WeightMode::point, WeightMode::gaussian}) {
            InitOptions init;
            init.seed = 5;
            Network net(sized_spec(3, 8, 3, skips, mode), init);
            net.layers()[0].size_adapter()->set_posterior(3.2, 0.4);
            net.layers()[1].size_adapter()->set_posterior(6.0, 0.5);
            net.layers()[2].size_adapter()->set_posterior(8.0, 2.0);
            if (skips) net.layers()[1].skip_adapter()->set_logit(3.0);
            const Network rigid = prune(net);
            CHECK(rigid.weight_count() < net.weight_count());
            const Tensor a = net.predict_once(x, noise, ForwardMode::decoded);
            const Tensor b = rigid.predict_once(x, noise, ForwardMode::decoded);
            REQUIRE(a.shape() == b.shape());
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-6);
        }
    }
}

TEST_CASE("prune: full sizes change nothing, k=2 of 4 drops two rows downstream") {
    std::mt19937_64 rng(25);
    const Tensor x = random_tensor(rng, {4, 3});
    dist::Rng noise_rng(5);
    RandomNoise noise(noise_rng);
    Network net(sized_spec(3, 4, 2, false, WeightMode::point), {});
    for (auto& l : net.layers()) {
        if (l.size_adapter()) l.size_adapter()->set_posterior(4.0, 0.3);
    }
    const Tensor full = net.predict_once(x, noise, ForwardMode::decoded);
    Network same = prune(net);
    CHECK(same.predict_once(x, noise, ForwardMode::decoded).values() == full.values());

    net.layers()[0].size_adapter()->set_posterior(2.0, 0.3);
    const Network cut = prune(net);
    CHECK(cut.layers()[0].weight_mean().value.shape() == Shape{3, 2});
    CHECK(cut.layers()[1].weight_mean().value.shape() == Shape{2, 4});
}

TEST_CASE("forward: posterior at prior has zero weight KL; adapters contribute arch KL") {
    NetworkSpec spec = sized_spec(2, 5, 2, true, WeightMode::gaussian);
    spec.weight_prior_sigma = 0.7;
    InitOptions init;
    init.mean_init = MeanInit::prior;
    init.init_sigma = 0.7;
    Network net(spec, init);
    ad::Tape tape;
    dist::Rng rng(6);
    RandomNoise noise(rng);
    const BoundNetwork bound = net.bind(tape, true);
    const auto r = net.forward(bound, tape.constant(Tensor::zeros({3, 2})), noise, ForwardMode::sample);
    CHECK(std::abs(r.kl_weights.item()) < 1e-9);
    CHECK(std::isfinite(r.kl_arch.item()));
    CHECK(r.size_samples.size() == 2);
    CHECK(r.skip_samples.size() == 1);
}

TEST_CASE("describe round-trips through spec_from_description") {
    Network net(sized_spec(3, 6, 3, true, WeightMode::gaussian), {});
    const auto doc = describe(net);
    const NetworkSpec spec = spec_from_description(doc);
    Network again(spec, {});
    CHECK(describe(again) == doc);
    CHECK(doc["layers"].size() == 4);
}

TEST_CASE("constructor validation") {
    NetworkSpec bad = sized_spec(3, 6, 2, false, WeightMode::point);
    bad.layers[1].dense.in_dim = 5;
    CHECK_THROWS_AS(Network(bad, {}), std::invalid_argument);
    NetworkSpec skip_mismatch = sized_spec(3, 6, 1, false, WeightMode::point);
    skip_mismatch.layers[0].skip = SkipAdapterSpec{0.5, 1.0};
    CHECK_THROWS(Network(skip_mismatch, {}));
    CHECK_THROWS_AS(SkipAdapter({1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("recorded noise replays exactly and rejects a different sequence") {
    dist::Rng rng(7);
    RandomNoise base(rng);
    RecordedNoise rec(base);
    const Tensor g = rec.gumbel(5);
    const double l = rec.logistic();
    rec.replay();
    CHECK(rec.gumbel(5) == g);
    CHECK(rec.logistic() == l);
    rec.replay();
    CHECK_THROWS_AS(rec.normal({2}), std::logic_error);
}

}  // TEST_SUITE
