// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "bayesarch/autodiff.hpp"

// Reparameterised samplers and log-densities for the distributions used by the
// variational network: factorised Gaussians over weights, concrete categorical
// over layer sizes and concrete Bernoulli over skip gates.
//
// Every sampler is a deterministic function of its parameters and externally
// supplied noise, so the gradient flows to the parameters and a fixed noise
// draw gives a deterministic function.

namespace bayesarch::dist {

using ad::Var;
using Rng = std::mt19937_64;

// Samples are clamped into [kInteriorEps, 1 - kInteriorEps] before any density
// evaluation; the concrete densities diverge at the boundary.
inline constexpr double kInteriorEps = 1e-6;

// --- noise -----------------------------------------------------------------

Tensor normal_noise(Rng& rng, const Shape& shape);
// -log(-log(U)), U ~ Uniform(0, 1)
Tensor gumbel_noise(Rng& rng, std::size_t k);
// log(U) - log(1 - U), U ~ Uniform(0, 1)
double logistic_noise(Rng& rng);
// Uniform on the open interval (0, 1).
double open_uniform(Rng& rng);

// --- Gaussian weights ------------------------------------------------------

// std = softplus(rho)
struct GaussianPosterior {
    Var mean;
    Var rho;
};

struct GaussianPrior {
    double sigma0 = 1.0;
};

// mean + softplus(rho) * noise
Var sample_gaussian(const GaussianPosterior& post, const Tensor& noise);

// sum over elements of KL(N(mu, sigma^2) || N(0, sigma0^2))
Var kl_gaussian_analytic(const GaussianPosterior& post, GaussianPrior prior);

// rho such that softplus(rho) == sigma
double rho_for_sigma(double sigma);
double softplus(double x);

// --- concrete categorical --------------------------------------------------

// Probabilities are carried as normalised log-probabilities so that very
// concentrated distributions keep finite gradients.
struct ConcreteCategoricalParams {
    Var log_probs;
    double temperature = 1.0;

    // Validates that probs is a strictly positive simplex vector.
    static ConcreteCategoricalParams from_probs(ad::Tape& tape, const std::vector<double>& probs, double temperature);
};

Var sample_concrete_categorical(const ConcreteCategoricalParams& params, const Tensor& gumbel);

// Clamps each coordinate into the interior and renormalises onto the simplex.
Var clamp_to_simplex_interior(Var s);

// log of the concrete categorical density at s (s must already be interior).
Var log_density_concrete_categorical(Var s, const ConcreteCategoricalParams& params);

// Log-space route: log s = log_softmax((log pi + gumbel) / tau), and the same
// density evaluated from log s without clamping. Far-from-mode coordinates of
// s underflow any fixed clamp, which corrupts the density; log s never does.
Var sample_concrete_categorical_log(const ConcreteCategoricalParams& params, const Tensor& gumbel);
Var log_density_concrete_categorical_log(Var log_s, const ConcreteCategoricalParams& params);

// --- concrete Bernoulli ----------------------------------------------------

// pi = sigmoid(logit)
struct ConcreteBernoulliParams {
    Var logit;
    double temperature = 1.0;

    static ConcreteBernoulliParams from_prob(ad::Tape& tape, double prob, double temperature);
};

// sigmoid((logit + noise) / temperature)
Var sample_concrete_bernoulli(const ConcreteBernoulliParams& params, double logistic_noise);

Var clamp_to_unit_interior(Var s);

Var log_density_concrete_bernoulli(Var s, const ConcreteBernoulliParams& params);

// Pre-sigmoid value z = (logit + noise) / tau of a sample s = sigmoid(z), and
// the density of s evaluated from z (log s = log_sigmoid(z)).
Var sample_concrete_bernoulli_logit(const ConcreteBernoulliParams& params, double logistic_noise);
Var log_density_concrete_bernoulli_logit(Var z, const ConcreteBernoulliParams& params);

// --- truncated-normal size probabilities -------------------------------------

// sigma = softplus(sigma_raw); grid points 1..max_units
struct TruncNormSizeParams {
    Var mu;
    Var sigma_raw;
    std::size_t max_units = 1;
};

// log pi_i, pi_i proportional to exp(-(i - mu)^2 / (2 sigma^2)) over i = 1..K
Var size_log_probs(const TruncNormSizeParams& params);
Var size_probs(const TruncNormSizeParams& params);

// Plain-value route of the same grid renormalisation, for decoding and logs.
std::vector<double> size_probs(double mu, double sigma, std::size_t max_units);
std::vector<double> size_log_probs(double mu, double sigma, std::size_t max_units);

// --- Monte-Carlo KL ----------------------------------------------------------

using LogDensityFn = std::function<Var(Var)>;
using SamplerFn = std::function<Var()>;

// (1/S) sum_j [log q(s_j) - log p(s_j)] with s_j drawn by the sampler.
// A non-finite log-density raises ad::NonFiniteError naming the sample index.
Var mc_kl(const LogDensityFn& q_log_density, const LogDensityFn& p_log_density, const SamplerFn& sampler,
          std::size_t n_samples);

}  // namespace bayesarch::dist
