// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <stdexcept>

#include <boost/random/normal_distribution.hpp>
#include <fmt/format.h>

namespace bayesarch::dist {

double open_uniform(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double v = u(rng);
    while (v <= 0.0 || v >= 1.0) v = u(rng);
    return v;
}

Tensor normal_noise(Rng& rng, const Shape& shape) {
    boost::random::normal_distribution<double> n(0.0, 1.0);  // ziggurat, much cheaper than the polar method
    Tensor out(shape);
    for (double& v : out.data()) v = n(rng);
    return out;
}

Tensor gumbel_noise(Rng& rng, std::size_t k) {
    Tensor out(Shape{k});
    for (double& v : out.data()) v = -std::log(-std::log(open_uniform(rng)));
    return out;
}

double logistic_noise(Rng& rng) {
    const double u = open_uniform(rng);
    return std::log(u) - std::log1p(-u);
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

namespace {

// softplus(x) and its derivative sigmoid(x), sharing one exp
struct SoftplusPair {
    double value;
    double slope;
};

SoftplusPair softplus_pair(double x) {
    const double e = std::exp(-std::abs(x));
    return {std::max(x, 0.0) + std::log1p(e), x >= 0 ? 1.0 / (1.0 + e) : e / (1.0 + e)};
}

}  // namespace

double rho_for_sigma(double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument(fmt::format("rho_for_sigma: sigma must be positive, got {}", sigma));
    // inverse softplus: log(exp(sigma) - 1), written to stay accurate for large sigma
    return sigma + std::log(-std::expm1(-sigma));
}

Var sample_gaussian(const GaussianPosterior& post, const Tensor& noise) {
    if (noise.shape() != post.mean.shape() || post.rho.shape() != post.mean.shape()) {
        throw ShapeError(fmt::format("sample_gaussian: mean {}, rho {}, noise {} must match",
                                     shape_str(post.mean.shape()), shape_str(post.rho.shape()), shape_str(noise.shape())));
    }
    // fused mean + softplus(rho) * noise; these are the largest tensors on the tape
    const Tensor& mu = post.mean.value();
    const Tensor& rho = post.rho.value();
    Tensor out(mu.shape());
    const std::size_t im = post.mean.index();
    const std::size_t ir = post.rho.index();
    const bool need_rho = post.rho.tape().requires_grad(ir);
    auto dsigma = std::make_shared<Tensor>(need_rho ? mu.shape() : Shape{0});  // noise * sigmoid(rho)
    for (std::size_t i = 0; i < out.size(); ++i) {
        const SoftplusPair sp = softplus_pair(rho[i]);
        out[i] = mu[i] + sp.value * noise[i];
        if (need_rho) (*dsigma)[i] = noise[i] * sp.slope;
    }
    return post.mean.tape().record("sample_gaussian", std::move(out), {post.mean, post.rho},
                                   [im, ir, dsigma](ad::Tape& t, std::size_t self) {
                                       const Tensor& g = t.out_grad(self);
                                       if (t.requires_grad(im)) {
                                           Tensor& gm = t.grad_accumulator(im);
                                           for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
                                       }
                                       if (t.requires_grad(ir)) {
                                           Tensor& gr = t.grad_accumulator(ir);
                                           for (std::size_t i = 0; i < g.size(); ++i) gr[i] += g[i] * (*dsigma)[i];
                                       }
                                   });
}

Var kl_gaussian_analytic(const GaussianPosterior& post, GaussianPrior prior) {
    if (!(prior.sigma0 > 0.0)) throw std::invalid_argument("kl_gaussian_analytic: sigma0 must be positive");
    if (post.rho.shape() != post.mean.shape()) {
        throw ShapeError(fmt::format("kl_gaussian_analytic: mean {} and rho {} must match", shape_str(post.mean.shape()),
                                     shape_str(post.rho.shape())));
    }
    const double inv_var0 = 1.0 / (prior.sigma0 * prior.sigma0);
    const Tensor& mu = post.mean.value();
    const Tensor& rho = post.rho.value();
    const std::size_t n = mu.size();
    auto drho = std::make_shared<Tensor>(mu.shape());
    double total = (std::log(prior.sigma0) - 0.5) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const SoftplusPair sp = softplus_pair(rho[i]);
        const double sigma = sp.value;
        total += 0.5 * (sigma * sigma + mu[i] * mu[i]) * inv_var0 - std::log(sigma);
        (*drho)[i] = (sigma * inv_var0 - 1.0 / sigma) * sp.slope;
    }
    const std::size_t im = post.mean.index();
    const std::size_t ir = post.rho.index();
    return post.mean.tape().record("kl_gaussian", Tensor::scalar(total), {post.mean, post.rho},
                                   [im, ir, drho, inv_var0](ad::Tape& t, std::size_t self) {
                                       const double g = t.out_grad(self).item();
                                       if (t.requires_grad(im)) {
                                           Tensor& gm = t.grad_accumulator(im);
                                           const Tensor& mu = t.value(im);
                                           for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g * mu[i] * inv_var0;
                                       }
                                       if (t.requires_grad(ir)) {
                                           Tensor& gr = t.grad_accumulator(ir);
                                           for (std::size_t i = 0; i < gr.size(); ++i) gr[i] += g * (*drho)[i];
                                       }
                                   });
}

ConcreteCategoricalParams ConcreteCategoricalParams::from_probs(ad::Tape& tape, const std::vector<double>& probs,
                                                                double temperature) {
    if (probs.empty()) throw std::invalid_argument("concrete categorical: empty probability vector");
    if (!(temperature > 0.0)) throw std::invalid_argument("concrete categorical: temperature must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] > 0.0)) {
            throw std::invalid_argument(fmt::format("concrete categorical: pi[{}] = {} is not positive", i, probs[i]));
        }
        total += probs[i];
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument(fmt::format("concrete categorical: probabilities sum to {}", total));
    }
    Tensor logp(Shape{probs.size()});
    for (std::size_t i = 0; i < probs.size(); ++i) logp[i] = std::log(probs[i] / total);
    return {tape.constant(std::move(logp)), temperature};
}

Var sample_concrete_categorical(const ConcreteCategoricalParams& params, const Tensor& gumbel) {
    if (gumbel.shape() != params.log_probs.shape()) {
        throw ShapeError(fmt::format("sample_concrete_categorical: noise {} vs probs {}", shape_str(gumbel.shape()),
                                     shape_str(params.log_probs.shape())));
    }
    ad::Tape& tape = params.log_probs.tape();
    return ad::softmax(params.log_probs + tape.constant(gumbel), params.temperature);
}

Var clamp_to_simplex_interior(Var s) {
    const Var c = ad::clamp(s, kInteriorEps, 1.0 - kInteriorEps);
    return c / ad::sum(c);
}

Var log_density_concrete_categorical(Var s, const ConcreteCategoricalParams& params) {
    if (s.shape() != params.log_probs.shape() || s.shape().size() != 1) {
        throw ShapeError(fmt::format("log_density_concrete_categorical: sample {} vs probs {}", shape_str(s.shape()),
                                     shape_str(params.log_probs.shape())));
    }
    double total = 0.0;
    for (double v : s.value().data()) {
        if (!(v > 0.0)) throw std::domain_error(fmt::format("log_density_concrete_categorical: coordinate {} not interior", v));
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw std::domain_error(fmt::format("log_density_concrete_categorical: sample sums to {}, off the simplex", total));
    }
    const auto k = static_cast<double>(s.size());
    const double tau = params.temperature;
    const double log_norm = std::lgamma(k) + (k - 1.0) * std::log(tau);
    const Var log_s = ad::log(s);
    const Var body = ad::sum(params.log_probs - log_s * (tau + 1.0));
    const Var lse = ad::logsumexp(params.log_probs - log_s * tau);
    return body - lse * k + log_norm;
}

Var sample_concrete_categorical_log(const ConcreteCategoricalParams& params, const Tensor& gumbel) {
    if (gumbel.shape() != params.log_probs.shape()) {
        throw ShapeError(fmt::format("sample_concrete_categorical_log: noise {} vs probs {}", shape_str(gumbel.shape()),
                                     shape_str(params.log_probs.shape())));
    }
    ad::Tape& tape = params.log_probs.tape();
    return ad::log_softmax(params.log_probs + tape.constant(gumbel), params.temperature);
}

Var log_density_concrete_categorical_log(Var log_s, const ConcreteCategoricalParams& params) {
    if (log_s.shape() != params.log_probs.shape() || log_s.shape().size() != 1) {
        throw ShapeError(fmt::format("log_density_concrete_categorical_log: sample {} vs probs {}",
                                     shape_str(log_s.shape()), shape_str(params.log_probs.shape())));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : log_s.value().data()) mx = std::max(mx, v);
    double total = 0.0;
    for (double v : log_s.value().data()) total += std::exp(v - mx);
    if (!std::isfinite(mx) || std::abs(mx + std::log(total)) > 1e-6) {
        throw std::domain_error("log_density_concrete_categorical_log: sample is off the simplex");
    }
    const auto k = static_cast<double>(log_s.size());
    const double tau = params.temperature;
    const double log_norm = std::lgamma(k) + (k - 1.0) * std::log(tau);
    const Var body = ad::sum(params.log_probs - log_s * (tau + 1.0));
    const Var lse = ad::logsumexp(params.log_probs - log_s * tau);
    return body - lse * k + log_norm;
}

ConcreteBernoulliParams ConcreteBernoulliParams::from_prob(ad::Tape& tape, double prob, double temperature) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw std::invalid_argument(fmt::format("concrete Bernoulli: pi = {} outside (0, 1)", prob));
    }
    if (!(temperature > 0.0)) throw std::invalid_argument("concrete Bernoulli: temperature must be positive");
    return {tape.constant(std::log(prob) - std::log1p(-prob)), temperature};
}

Var sample_concrete_bernoulli(const ConcreteBernoulliParams& params, double noise) {
    return ad::sigmoid((params.logit + noise) * (1.0 / params.temperature));
}

Var clamp_to_unit_interior(Var s) {
    return ad::clamp(s, kInteriorEps, 1.0 - kInteriorEps);
}

Var log_density_concrete_bernoulli(Var s, const ConcreteBernoulliParams& params) {
    for (double v : s.value().data()) {
        if (!(v > 0.0 && v < 1.0)) {
            throw std::domain_error(fmt::format("log_density_concrete_bernoulli: s = {} outside the unit interval", v));
        }
    }
    const double tau = params.temperature;
    // log pi and log(1 - pi) from the logit
    const Var log_pi = ad::log_sigmoid(params.logit);
    const Var log_1m_pi = ad::log_sigmoid(-params.logit);
    const Var log_s = ad::log(s);
    const Var log_1m_s = ad::log(ad::shift(-s, 1.0));
    const Var a = log_pi - log_s * tau;
    const Var b = log_1m_pi - log_1m_s * tau;
    const Var lse = ad::logsumexp(ad::stack({ad::reshape(a, Shape{}), ad::reshape(b, Shape{})}));
    const Var body = log_pi + log_1m_pi - (log_s + log_1m_s) * (tau + 1.0);
    return ad::sum(body) - lse * 2.0 + std::log(tau);
}

Var sample_concrete_bernoulli_logit(const ConcreteBernoulliParams& params, double noise) {
    return (params.logit + noise) * (1.0 / params.temperature);
}

Var log_density_concrete_bernoulli_logit(Var z, const ConcreteBernoulliParams& params) {
    if (z.size() != 1) throw ShapeError(fmt::format("log_density_concrete_bernoulli_logit: z must hold one value"));
    const double tau = params.temperature;
    const Var log_pi = ad::log_sigmoid(params.logit);
    const Var log_1m_pi = ad::log_sigmoid(-params.logit);
    const Var log_s = ad::log_sigmoid(z);
    const Var log_1m_s = ad::log_sigmoid(-z);
    const Var a = log_pi - log_s * tau;
    const Var b = log_1m_pi - log_1m_s * tau;
    const Var lse = ad::logsumexp(ad::stack({ad::reshape(a, Shape{}), ad::reshape(b, Shape{})}));
    const Var body = log_pi + log_1m_pi - (log_s + log_1m_s) * (tau + 1.0);
    return ad::sum(body) - lse * 2.0 + std::log(tau);
}

Var size_log_probs(const TruncNormSizeParams& params) {
    if (params.max_units < 1) throw std::invalid_argument("size_log_probs: max_units must be >= 1");
    ad::Tape& tape = params.mu.tape();
    Tensor grid(Shape{params.max_units});
    for (std::size_t i = 0; i < params.max_units; ++i) grid[i] = static_cast<double>(i + 1);
    const Var sigma = ad::softplus(ad::reshape(params.sigma_raw, Shape{}));
    const Var mu = ad::reshape(params.mu, Shape{});
    const Var dist2 = ad::square(tape.constant(std::move(grid)) - mu);
    const Var logits = -(dist2 / (ad::square(sigma) * 2.0));
    return ad::log_softmax(logits);
}

Var size_probs(const TruncNormSizeParams& params) {
    return ad::exp(size_log_probs(params));
}

std::vector<double> size_log_probs(double mu, double sigma, std::size_t max_units) {
    if (max_units < 1) throw std::invalid_argument("size_log_probs: max_units must be >= 1");
    std::vector<double> logits(max_units);
    for (std::size_t i = 0; i < max_units; ++i) {
        const double d = static_cast<double>(i + 1) - mu;
        logits[i] = -d * d / (2.0 * sigma * sigma);
    }
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double v : logits) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    for (double& v : logits) v -= lse;
    return logits;
}

std::vector<double> size_probs(double mu, double sigma, std::size_t max_units) {
    std::vector<double> p = size_log_probs(mu, sigma, max_units);
    for (double& v : p) v = std::exp(v);
    return p;
}

Var mc_kl(const LogDensityFn& q_log_density, const LogDensityFn& p_log_density, const SamplerFn& sampler,
          std::size_t n_samples) {
    if (n_samples == 0) throw std::invalid_argument("mc_kl: n_samples must be >= 1");
    Var total;
    for (std::size_t j = 0; j < n_samples; ++j) {
        Var diff;
        try {
            const Var s = sampler();
            diff = q_log_density(s) - p_log_density(s);
        } catch (const ad::NonFiniteError& e) {
            throw ad::NonFiniteError(e.op(), fmt::format("mc_kl: non-finite log-density at sample {} ({})", j, e.what()));
        }
        total = total.valid() ? total + diff : diff;
    }
    return total * (1.0 / static_cast<double>(n_samples));
}

}  // namespace bayesarch::dist
