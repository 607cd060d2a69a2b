// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "bayesarch/layers.hpp"

namespace bayesarch::predictive {

struct PredictiveResult {
    Tensor mean;
    std::vector<Tensor> samples;
    std::size_t n_samples = 0;
};

// Monte-Carlo posterior predictive: n_samples forward passes, each with fresh
// weight and architecture samples from its own stream derived from seed.
// Samples run in parallel; the result does not depend on the thread count.
PredictiveResult predict(const Network& network, const Tensor& x, std::size_t n_samples, std::uint64_t seed,
                         ForwardMode mode = ForwardMode::sample);

// Seed of the stream used for sample j.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t j);

double rmse(const Tensor& pred_mean, const Tensor& target);

// (1/n) sum_i log((1/S) sum_s N(target_i; sample_s_i, obs_sigma^2))
double test_loglik(const std::vector<Tensor>& samples, const Tensor& target, double obs_sigma);

// (1/n) sum_i (1/S) sum_s log N(target_i; sample_s_i, obs_sigma^2). Never
// exceeds test_loglik.
double mean_sample_loglik(const std::vector<Tensor>& samples, const Tensor& target, double obs_sigma);

}  // namespace bayesarch::predictive
