// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

namespace bayesarch::predictive {

namespace {

void check_pair(const Tensor& a, const Tensor& b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(fmt::format("{}: predictions {} vs targets {}", what, shape_str(a.shape()), shape_str(b.shape())));
    }
    if (b.size() == 0) throw std::invalid_argument(fmt::format("{}: empty test set", what));
}

double log_normal(double y, double mean, double sigma) {
    const double z = (y - mean) / sigma;
    return -0.5 * z * z - std::log(sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
}

}  // namespace

std::uint64_t sample_seed(std::uint64_t seed, std::size_t j) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(j), static_cast<std::uint32_t>(static_cast<std::uint64_t>(j) >> 32)};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

PredictiveResult predict(const Network& network, const Tensor& x, std::size_t n_samples, std::uint64_t seed,
                         ForwardMode mode) {
    if (n_samples < 1) throw std::invalid_argument("predict: n_samples must be >= 1");
    PredictiveResult result;
    result.n_samples = n_samples;
    result.samples.resize(n_samples);
    const auto n = static_cast<std::ptrdiff_t>(n_samples);
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < n; ++j) {
        try {
            dist::Rng rng(sample_seed(seed, static_cast<std::size_t>(j)));
            RandomNoise noise(rng);
            result.samples[static_cast<std::size_t>(j)] = network.predict_once(x, noise, mode);
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    result.mean = Tensor(result.samples.front().shape());
    for (const Tensor& s : result.samples) {
        for (std::size_t i = 0; i < s.size(); ++i) result.mean[i] += s[i];
    }
    for (double& v : result.mean.data()) v /= static_cast<double>(n_samples);
    return result;
}

double rmse(const Tensor& pred_mean, const Tensor& target) {
    check_pair(pred_mean, target, "rmse");
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double e = pred_mean[i] - target[i];
        total += e * e;
    }
    return std::sqrt(total / static_cast<double>(target.size()));
}

double test_loglik(const std::vector<Tensor>& samples, const Tensor& target, double obs_sigma) {
    if (samples.empty()) throw std::invalid_argument("test_loglik: no samples");
    if (!(obs_sigma > 0.0)) throw std::invalid_argument("test_loglik: obs_sigma must be positive");
    for (const Tensor& s : samples) check_pair(s, target, "test_loglik");
    const double log_s = std::log(static_cast<double>(samples.size()));
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (const Tensor& s : samples) mx = std::max(mx, log_normal(target[i], s[i], obs_sigma));
        double acc = 0.0;
        for (const Tensor& s : samples) acc += std::exp(log_normal(target[i], s[i], obs_sigma) - mx);
        total += mx + std::log(acc) - log_s;
    }
    return total / static_cast<double>(target.size());
}

double mean_sample_loglik(const std::vector<Tensor>& samples, const Tensor& target, double obs_sigma) {
    if (samples.empty()) throw std::invalid_argument("mean_sample_loglik: no samples");
    double total = 0.0;
    for (const Tensor& s : samples) {
        check_pair(s, target, "mean_sample_loglik");
        for (std::size_t i = 0; i < target.size(); ++i) total += log_normal(target[i], s[i], obs_sigma);
    }
    return total / static_cast<double>(target.size() * samples.size());
}

}  // namespace bayesarch::predictive
