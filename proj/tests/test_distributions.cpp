// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "bayesarch/distributions.hpp"
#include "support.hpp"

using namespace bayesarch;
using ad::Var;
using testutil::bernoulli_density;
using testutil::categorical_density;

namespace {

double log_normal_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double integrate01(const std::function<double(double)>& f) {
    boost::math::quadrature::tanh_sinh<double> q;
    return q.integrate(f, 0.0, 1.0);
}

}  // namespace

TEST_SUITE("distributions") {

TEST_CASE("gaussian sampling: zero noise, degenerate sigma, empirical mean") {
    ad::Tape tape;
    const Tensor mu = Tensor::vector({0.5, -1.0, 2.0});
    dist::GaussianPosterior post{tape.constant(mu), tape.constant(Tensor::vector({0.3, -0.2, 1.0}))};
    CHECK(dist::sample_gaussian(post, Tensor::zeros({3})).value() == mu);

    dist::GaussianPosterior tight{tape.constant(mu), tape.constant(Tensor(Shape{3}, -60.0))};
    const Tensor s = dist::sample_gaussian(tight, Tensor::vector({3.0, -2.0, 5.0})).value();
    for (std::size_t i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(mu[i]).epsilon(1e-15));

    // MC oracle: mean within 4 sigma / sqrt(N)
    const std::size_t n = 100000;
    const double sigma = dist::softplus(0.4);
    dist::Rng rng(7);
    ad::Tape big;
    dist::GaussianPosterior p{big.constant(Tensor(Shape{n}, 1.5)), big.constant(Tensor(Shape{n}, 0.4))};
    const Tensor draws = dist::sample_gaussian(p, dist::normal_noise(rng, {n})).value();
    double mean = 0.0;
    for (double v : draws.values()) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean - 1.5) < 4.0 * sigma / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("rho_for_sigma inverts softplus") {
    for (double s : {1e-4, 0.02, 1.0, 30.0}) CHECK(dist::softplus(dist::rho_for_sigma(s)) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("analytic gaussian KL: closed forms and MC oracle") {
    ad::Tape tape;
    auto kl = [&](double mu, double sigma, double sigma0) {
        dist::GaussianPosterior post{tape.constant(Tensor::vector({mu})),
                                     tape.constant(Tensor::vector({dist::rho_for_sigma(sigma)}))};
        return dist::kl_gaussian_analytic(post, {sigma0}).item();
    };
    CHECK(kl(0.0, 0.7, 0.7) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl(1.0, 1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(kl(0.3, 0.2, 1.0) > 0.0);

    dist::Rng rng(8);
    std::normal_distribution<double> eps;
    for (auto [mu, sigma, sigma0] : {std::tuple{0.4, 0.3, 1.0}, {-1.2, 0.8, 0.5}, {2.0, 1.5, 2.0}}) {
        double acc = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) {
            const double w = mu + sigma * eps(rng);
            acc += log_normal_pdf(w, mu, sigma) - log_normal_pdf(w, 0.0, sigma0);
        }
        CHECK(kl(mu, sigma, sigma0) == doctest::Approx(acc / n).epsilon(0.02));
    }
}

TEST_CASE("fused gaussian nodes match central differences") {
    dist::Rng rng(9);
    const Tensor noise = dist::normal_noise(rng, {3, 2});
    const Tensor rho = testutil::random_tensor(rng, {3, 2}, -3, 1);
    const Tensor mu = testutil::random_tensor(rng, {3, 2});
    auto by_mean = [&](Var m) {
        ad::Tape& t = m.tape();
        dist::GaussianPosterior p{m, t.constant(rho)};
        return ad::sum(ad::square(dist::sample_gaussian(p, noise))) + dist::kl_gaussian_analytic(p, {0.8});
    };
    auto by_rho = [&](Var r) {
        ad::Tape& t = r.tape();
        dist::GaussianPosterior p{t.constant(mu), r};
        return ad::sum(ad::square(dist::sample_gaussian(p, noise))) + dist::kl_gaussian_analytic(p, {0.8});
    };
    CHECK(ad::grad_check(by_mean, mu).max_rel_error < 1e-4);
    CHECK(ad::grad_check(by_rho, rho).max_rel_error < 1e-4);
}

TEST_CASE("concrete categorical sampling") {
    ad::Tape tape;
    auto uniform = dist::ConcreteCategoricalParams::from_probs(tape, {0.25, 0.25, 0.25, 0.25}, 0.7);
    const Tensor s = dist::sample_concrete_categorical(uniform, Tensor(Shape{4}, 0.3)).value();
    for (double v : s.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));

    // low temperature: almost one-hot. For K=2, max(s) <= 0.999 iff the logistic
    // variable g1 - g2 lands within tau * log(999) of -logit(0.9); that band has
    // probability about 0.0125, so the exact rate is about 0.9875.
    dist::Rng rng(10);
    auto sharp = dist::ConcreteCategoricalParams::from_probs(tape, {0.9, 0.1}, 0.01);
    const double a = std::log(9.0);
    const double band = 0.01 * std::log(999.0);
    auto cdf = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    const double expect = 1.0 - (cdf(-a + band) - cdf(-a - band));
    CHECK(expect == doctest::Approx(0.9875).epsilon(1e-3));
    int peaked = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Tensor d = dist::sample_concrete_categorical(sharp, dist::gumbel_noise(rng, 2)).value();
        peaked += std::max(d[0], d[1]) > 0.999;
    }
    CHECK(std::abs(peaked / static_cast<double>(n) - expect) < 4.0 * std::sqrt(expect * (1 - expect) / n));
    CHECK(peaked >= 0.98 * n);
}

TEST_CASE("gumbel-max law holds at every temperature") {
    const std::vector<double> pi{0.5, 0.3, 0.15, 0.05};
    const std::size_t n = 100000;
    for (double tau : {0.5, 1.0, 3.0}) {
        CAPTURE(tau);
        ad::Tape tape;
        auto params = dist::ConcreteCategoricalParams::from_probs(tape, pi, tau);
        dist::Rng rng(11);
        std::vector<double> counts(pi.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            ad::Tape t;
            auto p = dist::ConcreteCategoricalParams::from_probs(t, pi, tau);
            const Tensor s = dist::sample_concrete_categorical(p, dist::gumbel_noise(rng, pi.size())).value();
            counts[static_cast<std::size_t>(std::max_element(s.values().begin(), s.values().end()) - s.values().begin())] += 1;
        }
        for (std::size_t k = 0; k < pi.size(); ++k) {
            const double freq = counts[k] / static_cast<double>(n);
            CHECK(std::abs(freq - pi[k]) < 4.0 * std::sqrt(pi[k] * (1.0 - pi[k]) / static_cast<double>(n)));
        }
    }
}

TEST_CASE("concrete categorical density: K=2 reduction, normalisation, permutation") {
    for (double p1 : {0.2, 0.5, 0.85}) {
        for (double tau : {0.5, 1.0, 3.0}) {
            for (double s1 : {0.1, 0.4, 0.77}) {
                CHECK(categorical_density({s1, 1.0 - s1}, {p1, 1.0 - p1}, tau) ==
                      doctest::Approx(bernoulli_density(s1, p1, tau)).epsilon(1e-9));
            }
            const double mass = integrate01([&](double s1) { return categorical_density({s1, 1.0 - s1}, {p1, 1.0 - p1}, tau); });
            CHECK(std::abs(mass - 1.0) < 0.01);
        }
    }
    const double a = categorical_density({0.2, 0.5, 0.3}, {0.1, 0.6, 0.3}, 1.3);
    const double b = categorical_density({0.3, 0.2, 0.5}, {0.3, 0.1, 0.6}, 1.3);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("log-space categorical route agrees with the plain route") {
    dist::Rng rng(12);
    const std::vector<double> pi{0.1, 0.2, 0.4, 0.2, 0.1};
    for (int trial = 0; trial < 20; ++trial) {
        ad::Tape tape;
        auto params = dist::ConcreteCategoricalParams::from_probs(tape, pi, 2.0);
        const Tensor g = dist::gumbel_noise(rng, pi.size());
        const Var log_s = dist::sample_concrete_categorical_log(params, g);
        const Var s = dist::sample_concrete_categorical(params, g);
        for (std::size_t i = 0; i < pi.size(); ++i) CHECK(std::exp(log_s.value()[i]) == doctest::Approx(s.value()[i]).epsilon(1e-12));
        CHECK(dist::log_density_concrete_categorical_log(log_s, params).item() ==
              doctest::Approx(dist::log_density_concrete_categorical(s, params).item()).epsilon(1e-9));
    }
    ad::Tape tape;
    auto params = dist::ConcreteCategoricalParams::from_probs(tape, {0.5, 0.5}, 1.0);
    CHECK_THROWS_AS(dist::log_density_concrete_categorical_log(tape.constant(Tensor::vector({0.0, 0.0})), params),
                    std::domain_error);
    CHECK_THROWS_AS(dist::ConcreteCategoricalParams::from_probs(tape, {0.5, 0.6}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(dist::ConcreteCategoricalParams::from_probs(tape, {1.0, 0.0}, 1.0), std::invalid_argument);
}

TEST_CASE("concrete bernoulli sampling") {
    ad::Tape tape;
    for (double tau : {0.1, 1.0, 5.0}) {
        CHECK(dist::sample_concrete_bernoulli(dist::ConcreteBernoulliParams::from_prob(tape, 0.5, tau), 0.0).item() ==
              doctest::Approx(0.5));
    }
    CHECK(dist::sample_concrete_bernoulli(dist::ConcreteBernoulliParams::from_prob(tape, 0.9, 0.01), 0.0).item() > 0.999999);

    const int n = 100000;
    for (double pi : {0.1, 0.5, 0.8}) {
        for (double tau : {0.5, 2.0}) {
            dist::Rng rng(13);
            auto params = dist::ConcreteBernoulliParams::from_prob(tape, pi, tau);
            int above = 0;
            for (int i = 0; i < n; ++i) above += dist::sample_concrete_bernoulli(params, dist::logistic_noise(rng)).item() > 0.5;
            CHECK(std::abs(above / static_cast<double>(n) - pi) < 4.0 * std::sqrt(pi * (1 - pi) / n));
        }
    }
}

TEST_CASE("concrete bernoulli density: normalisation, symmetry, uniform case") {
    for (double pi : {0.1, 0.5, 0.9}) {
        for (double tau : {0.5, 1.0, 3.0}) {
            CAPTURE(pi);
            CAPTURE(tau);
            const double mass = integrate01([&](double s) { return bernoulli_density(s, pi, tau); });
            CHECK(std::abs(mass - 1.0) < 0.001);
            for (double s : {0.05, 0.3, 0.6, 0.97}) {
                CHECK(bernoulli_density(s, pi, tau) == doctest::Approx(bernoulli_density(1.0 - s, 1.0 - pi, tau)).epsilon(1e-9));
            }
        }
    }
    // pi = 0.5, tau = 1 is the sigmoid of a logistic variable, i.e. uniform on (0, 1):
    // the density is 1 everywhere, including at s = 0.5.
    for (double s : {0.5, 0.2, 0.9}) CHECK(bernoulli_density(s, 0.5, 1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bernoulli logit route agrees with the plain route") {
    dist::Rng rng(14);
    for (int i = 0; i < 20; ++i) {
        ad::Tape tape;
        auto params = dist::ConcreteBernoulliParams::from_prob(tape, 0.3, 0.8);
        const double u = dist::logistic_noise(rng);
        const Var z = dist::sample_concrete_bernoulli_logit(params, u);
        const Var s = dist::sample_concrete_bernoulli(params, u);
        CHECK(1.0 / (1.0 + std::exp(-z.item())) == doctest::Approx(s.item()).epsilon(1e-12));
        if (s.item() > 1e-5 && s.item() < 1 - 1e-5) {
            CHECK(dist::log_density_concrete_bernoulli_logit(z, params).item() ==
                  doctest::Approx(dist::log_density_concrete_bernoulli(s, params).item()).epsilon(1e-9));
        }
    }
}

TEST_CASE("truncated-normal size probabilities") {
    ad::Tape tape;
    auto probs = [&](double mu, double sigma, std::size_t k) {
        return dist::size_probs({tape.constant(mu), tape.constant(dist::rho_for_sigma(sigma)), k}).value().values();
    };
    const auto sym = probs(25.5, 4.0, 50);
    for (std::size_t i = 0; i < 50; ++i) CHECK(sym[i] == doctest::Approx(sym[49 - i]).epsilon(1e-12));

    const auto onehot = probs(7.0, 1e-3, 12);
    CHECK(onehot[6] == doctest::Approx(1.0));

    // normalise exp(-1/2), 1, exp(-1/2)
    const double e = std::exp(-0.5);
    const auto three = probs(2.0, 1.0, 3);
    CHECK(three[0] == doctest::Approx(e / (1 + 2 * e)).epsilon(1e-12));
    CHECK(three[1] == doctest::Approx(1 / (1 + 2 * e)).epsilon(1e-12));
    CHECK(three[0] == doctest::Approx(0.274).epsilon(0.002));
    CHECK(three[1] == doctest::Approx(0.452).epsilon(0.002));

    const auto plain = dist::size_probs(13.3, 2.2, 30);
    const auto var = probs(13.3, 2.2, 30);
    for (std::size_t i = 0; i < 30; ++i) CHECK(plain[i] == doctest::Approx(var[i]).epsilon(1e-12));
}

TEST_CASE("mc_kl: identical distributions and a bernoulli pair") {
    const std::size_t n = 100000;
    {
        ad::Tape tape;
        tape.set_check_finite(false);
        dist::Rng rng(15);
        auto q = dist::ConcreteCategoricalParams::from_probs(tape, {0.1, 0.2, 0.3, 0.4}, 1.0);
        const Var est = dist::mc_kl([&](Var s) { return dist::log_density_concrete_categorical_log(s, q); },
                                    [&](Var s) { return dist::log_density_concrete_categorical_log(s, q); },
                                    [&] { return dist::sample_concrete_categorical_log(q, dist::gumbel_noise(rng, 4)); }, n);
        CHECK(std::abs(est.item()) < 0.01);
    }

    // quadrature oracle for KL(q || p)
    const double exact = integrate01([](double s) {
        const double q = bernoulli_density(s, 0.9, 1.0);
        return q > 0 ? q * std::log(q / bernoulli_density(s, 0.1, 1.0)) : 0.0;
    });
    CHECK(exact > 0.0);
    std::vector<double> estimates;
    for (std::uint64_t seed : {1, 2, 3}) {
        ad::Tape tape;
        dist::Rng rng(seed);
        auto q = dist::ConcreteBernoulliParams::from_prob(tape, 0.9, 1.0);
        auto p = dist::ConcreteBernoulliParams::from_prob(tape, 0.1, 1.0);
        const Var est = dist::mc_kl([&](Var z) { return dist::log_density_concrete_bernoulli_logit(z, q); },
                                    [&](Var z) { return dist::log_density_concrete_bernoulli_logit(z, p); },
                                    [&] { return dist::sample_concrete_bernoulli_logit(q, dist::logistic_noise(rng)); }, n);
        estimates.push_back(est.item());
        CHECK(est.item() > 0.0);
        CHECK(est.item() == doctest::Approx(exact).epsilon(0.05));
    }
    // small S is unbiased too: the mean of many S=10 estimates lands on the same value
    dist::Rng rng(4);
    double acc = 0.0;
    const int reps = 10000;
    for (int r = 0; r < reps; ++r) {
        ad::Tape t;
        auto qq = dist::ConcreteBernoulliParams::from_prob(t, 0.9, 1.0);
        auto pp = dist::ConcreteBernoulliParams::from_prob(t, 0.1, 1.0);
        acc += dist::mc_kl([&](Var z) { return dist::log_density_concrete_bernoulli_logit(z, qq); },
                           [&](Var z) { return dist::log_density_concrete_bernoulli_logit(z, pp); },
                           [&] { return dist::sample_concrete_bernoulli_logit(qq, dist::logistic_noise(rng)); }, 10)
                   .item();
    }
    CHECK(acc / reps == doctest::Approx(exact).epsilon(0.05));
}

}  // TEST_SUITE
