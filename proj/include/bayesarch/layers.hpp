// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "bayesarch/autodiff.hpp"
#include "bayesarch/distributions.hpp"

namespace bayesarch {

using ad::Var;

enum class Activation { relu, identity, softmax };
enum class WeightMode { point, gaussian };
enum class ParamRole { weight, architecture };

std::string to_string(Activation a);
std::string to_string(WeightMode m);
Activation activation_from_string(const std::string& s);
WeightMode weight_mode_from_string(const std::string& s);

struct Parameter {
    std::string name;
    Tensor value;
    ParamRole role = ParamRole::weight;
};

struct DenseSpec {
    std::size_t in_dim = 1;
    std::size_t out_dim = 1;
    Activation activation = Activation::relu;
    WeightMode weight_mode = WeightMode::point;
};

// Truncated-normal size posterior over 1..K with a fixed prior of the same form.
struct SizeAdapterSpec {
    double prior_mu = 1.0;
    double prior_sigma = 1.0;
    double temperature = 1.0;
};

// Concrete Bernoulli bypass gate with fixed prior probability.
struct SkipAdapterSpec {
    double prior_prob = 0.5;
    double temperature = 1.0;
};

struct LayerSpec {
    DenseSpec dense;
    std::optional<SizeAdapterSpec> size;
    std::optional<SkipAdapterSpec> skip;
};

enum class LikelihoodKind { gaussian, categorical };

struct Likelihood {
    LikelihoodKind kind = LikelihoodKind::gaussian;
    double obs_sigma = 1.0;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    Likelihood likelihood;
    double weight_prior_sigma = 1.0;
};

// How weight means are initialised. fan_in: U(-1/sqrt(in), 1/sqrt(in));
// prior: zero means, so the posterior starts at N(0, init_sigma^2).
enum class MeanInit { fan_in, prior };

struct InitOptions {
    MeanInit mean_init = MeanInit::fan_in;
    double init_sigma = 0.05;  // std of Gaussian weights at initialisation
    std::uint64_t seed = 0;
};

class SizeAdapter {
public:
    SizeAdapter(std::size_t max_units, SizeAdapterSpec spec);

    std::size_t max_units() const { return max_units_; }
    const SizeAdapterSpec& spec() const { return spec_; }
    double mu() const { return mu_.value.item(); }
    double sigma() const;
    std::vector<double> probs() const;
    std::vector<double> prior_probs() const;

    Parameter& mu_param() { return mu_; }
    Parameter& sigma_raw_param() { return sigma_raw_; }
    const Parameter& mu_param() const { return mu_; }
    const Parameter& sigma_raw_param() const { return sigma_raw_; }

    // Overwrites the posterior (tests and warm starts).
    void set_posterior(double mu, double sigma);
    void set_temperature(double tau);

private:
    std::size_t max_units_;
    SizeAdapterSpec spec_;
    Parameter mu_;
    Parameter sigma_raw_;
};

class SkipAdapter {
public:
    explicit SkipAdapter(SkipAdapterSpec spec);

    const SkipAdapterSpec& spec() const { return spec_; }
    // Posterior probability of bypassing the layer.
    double prob() const;
    Parameter& logit_param() { return logit_; }
    const Parameter& logit_param() const { return logit_; }
    void set_logit(double logit) { logit_.value = Tensor::scalar(logit); }
    void set_temperature(double tau);

private:
    SkipAdapterSpec spec_;
    Parameter logit_;
};

class DenseLayer {
public:
    DenseLayer(const LayerSpec& spec, const InitOptions& init, dist::Rng& rng);

    const DenseSpec& spec() const { return spec_; }
    bool bayesian() const { return spec_.weight_mode == WeightMode::gaussian; }

    // Weights are stored as [in_dim, out_dim] so that y = x W + b for row-major batches.
    Parameter& weight_mean() { return w_mean_; }
    Parameter& bias_mean() { return b_mean_; }
    const Parameter& weight_mean() const { return w_mean_; }
    const Parameter& bias_mean() const { return b_mean_; }
    // Only present for Gaussian weights.
    std::optional<Parameter>& weight_rho() { return w_rho_; }
    std::optional<Parameter>& bias_rho() { return b_rho_; }
    const std::optional<Parameter>& weight_rho() const { return w_rho_; }
    const std::optional<Parameter>& bias_rho() const { return b_rho_; }

    std::optional<SizeAdapter>& size_adapter() { return size_; }
    std::optional<SkipAdapter>& skip_adapter() { return skip_; }
    const std::optional<SizeAdapter>& size_adapter() const { return size_; }
    const std::optional<SkipAdapter>& skip_adapter() const { return skip_; }

    void attach_size(SizeAdapterSpec spec);
    void attach_skip(SkipAdapterSpec spec);

private:
    DenseSpec spec_;
    Parameter w_mean_;
    Parameter b_mean_;
    std::optional<Parameter> w_rho_;
    std::optional<Parameter> b_rho_;
    std::optional<SizeAdapter> size_;
    std::optional<SkipAdapter> skip_;
};

// Noise supplier for one forward pass. Recording a draw sequence and replaying
// it turns the stochastic network into a deterministic function.
class NoiseSource {
public:
    virtual ~NoiseSource() = default;
    virtual Tensor normal(const Shape& shape) = 0;
    virtual Tensor gumbel(std::size_t k) = 0;
    virtual double logistic() = 0;
};

class RandomNoise final : public NoiseSource {
public:
    explicit RandomNoise(dist::Rng& rng) : rng_(rng) {}
    Tensor normal(const Shape& shape) override { return dist::normal_noise(rng_, shape); }
    Tensor gumbel(std::size_t k) override { return dist::gumbel_noise(rng_, k); }
    double logistic() override { return dist::logistic_noise(rng_); }

private:
    dist::Rng& rng_;
};

// Records draws from an underlying source until replay() is called; after
// that, returns the recorded draws in order on every pass.
class RecordedNoise final : public NoiseSource {
public:
    explicit RecordedNoise(NoiseSource& source) : source_(&source) {}
    Tensor normal(const Shape& shape) override;
    Tensor gumbel(std::size_t k) override;
    double logistic() override;
    void replay() {
        replaying_ = true;
        cursor_ = 0;
    }

private:
    Tensor next(const Shape& shape, int kind);

    NoiseSource* source_;
    std::vector<std::pair<int, Tensor>> draws_;
    std::size_t cursor_ = 0;
    bool replaying_ = false;
};

// sample: weights and architecture drawn from the posterior.
// decoded: weight means, hard mask from the decoded size, hard skip decision.
enum class ForwardMode { sample, decoded };

struct LayerVars {
    Var w_mean, w_rho, b_mean, b_rho;
    Var size_mu, size_sigma_raw;
    Var skip_logit;
};

struct BoundNetwork {
    std::vector<Var> params;  // aligned with Network::parameters()
    std::vector<LayerVars> layers;
};

struct ForwardResult {
    Var output;      // predictions (softmax probabilities for a softmax output layer)
    Var logits;      // pre-softmax output of the last layer (== output otherwise)
    Var kl_weights;  // analytic Gaussian KL, 0 for point weights
    Var kl_arch;     // single-sample MC KL of the architecture variables
    std::vector<Tensor> size_samples;
    std::vector<double> skip_samples;
};

class Network {
public:
    Network(const NetworkSpec& spec, const InitOptions& init);
    Network(std::vector<DenseLayer> layers, Likelihood likelihood, double weight_prior_sigma);

    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    const Likelihood& likelihood() const { return likelihood_; }
    double weight_prior_sigma() const { return weight_prior_sigma_; }
    std::size_t input_dim() const { return layers_.front().spec().in_dim; }
    std::size_t output_dim() const { return layers_.back().spec().out_dim; }

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    // Number of weight and bias entries (means only).
    std::size_t weight_count() const;

    BoundNetwork bind(ad::Tape& tape, bool trainable) const;
    std::vector<Tensor> gradients(const ad::Tape& tape, const BoundNetwork& bound) const;

    ForwardResult forward(const BoundNetwork& bound, Var x, NoiseSource& noise, ForwardMode mode,
                          bool with_kl = true) const;

    // Convenience: evaluate on a private tape without gradients.
    Tensor predict_once(const Tensor& x, NoiseSource& noise, ForwardMode mode) const;

private:
    std::vector<DenseLayer> layers_;
    Likelihood likelihood_;
    double weight_prior_sigma_ = 1.0;
};

// m_i = sum_{j >= i} s_j, i.e. U s with U the upper-triangular matrix of ones.
Var build_size_mask(Var s);

// act(x W + b) for one layer given the (sampled) weights.
Var dense_forward(Var x, Var w, Var b, Activation act);

// (1 - gamma) * fx + gamma * x
Var skip_combine(Var x, Var fx, Var gamma);

// One layer with a size adapter: act(x W + b) * m(s), s ~ concrete(pi(mu, sigma)).
struct SizedOutput {
    Var output;
    Var sample;      // the relaxed one-hot s
    Var log_sample;  // log s, used for the density
};
SizedOutput sized_forward(Var x, Var w, Var b, Activation act, const dist::TruncNormSizeParams& size, double temperature,
                          NoiseSource& noise);

struct SkipOutput {
    Var output;
    Var gamma;
    Var gamma_logit;  // gamma = sigmoid(gamma_logit)
};
SkipOutput skip_forward(Var x, Var fx, const dist::ConcreteBernoulliParams& gate, NoiseSource& noise);

// argmax_i of the size posterior, ties toward the smaller size (1-based).
std::size_t decode_size(const SizeAdapter& adapter);

struct DepthDecision {
    std::vector<bool> kept;  // per layer; layers without a skip adapter are always kept
    std::size_t kept_count() const;
};
// A layer is dropped iff its bypass probability exceeds 0.5.
DepthDecision decode_depth(const Network& network);

// Rigid network keeping the first k output units of every sized layer (and the
// matching input rows of the next kept layer) and dropping bypassed layers.
Network prune(const Network& network);

nlohmann::json describe(const Network& network);
NetworkSpec spec_from_description(const nlohmann::json& doc);

}  // namespace bayesarch
