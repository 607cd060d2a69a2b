// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit tests: random tensors and plain-double wrappers
// around the tape-based densities, so quadrature oracles can call them.
#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "bayesarch/autodiff.hpp"
#include "bayesarch/distributions.hpp"

namespace testutil {

using bayesarch::Shape;
using bayesarch::Tensor;
namespace ad = bayesarch::ad;
namespace dist = bayesarch::dist;

inline Tensor random_tensor(std::mt19937_64& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = u(rng);
    return t;
}

// Values bounded away from zero, for ops with a kink or pole there.
inline Tensor away_from_zero(std::mt19937_64& rng, const Shape& shape, double margin = 0.1) {
    Tensor t = random_tensor(rng, shape);
    for (double& v : t.data()) v += v < 0 ? -margin : margin;
    return t;
}

inline double bernoulli_density(double s, double pi, double tau) {
    ad::Tape tape;
    auto params = dist::ConcreteBernoulliParams::from_prob(tape, pi, tau);
    return std::exp(dist::log_density_concrete_bernoulli(tape.constant(s), params).item());
}

inline double categorical_density(const std::vector<double>& s, const std::vector<double>& pi, double tau) {
    ad::Tape tape;
    auto params = dist::ConcreteCategoricalParams::from_probs(tape, pi, tau);
    return std::exp(dist::log_density_concrete_categorical(tape.constant(Tensor::vector(s)), params).item());
}

}  // namespace testutil
