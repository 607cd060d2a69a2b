// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace bayesarch {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::identity: return "identity";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

std::string to_string(WeightMode m) {
    return m == WeightMode::point ? "point" : "gaussian";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "identity") return Activation::identity;
    if (s == "softmax") return Activation::softmax;
    throw std::invalid_argument(fmt::format("unknown activation '{}'", s));
}

WeightMode weight_mode_from_string(const std::string& s) {
    if (s == "point") return WeightMode::point;
    if (s == "gaussian") return WeightMode::gaussian;
    throw std::invalid_argument(fmt::format("unknown weight mode '{}'", s));
}

// --- adapters ---------------------------------------------------------------

SizeAdapter::SizeAdapter(std::size_t max_units, SizeAdapterSpec spec)
    : max_units_(max_units),
      spec_(spec),
      mu_{"size.mu", Tensor::scalar(spec.prior_mu), ParamRole::architecture},
      sigma_raw_{"size.sigma_raw", Tensor::scalar(dist::rho_for_sigma(spec.prior_sigma)), ParamRole::architecture} {
    if (max_units < 1) throw std::invalid_argument("size adapter: max_units must be >= 1");
    if (!(spec.temperature > 0.0)) throw std::invalid_argument("size adapter: temperature must be positive");
}

double SizeAdapter::sigma() const {
    return dist::softplus(sigma_raw_.value.item());
}

std::vector<double> SizeAdapter::probs() const {
    return dist::size_probs(mu(), sigma(), max_units_);
}

std::vector<double> SizeAdapter::prior_probs() const {
    return dist::size_probs(spec_.prior_mu, spec_.prior_sigma, max_units_);
}

void SizeAdapter::set_posterior(double mu, double sigma) {
    mu_.value = Tensor::scalar(mu);
    sigma_raw_.value = Tensor::scalar(dist::rho_for_sigma(sigma));
}

void SizeAdapter::set_temperature(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("size adapter: temperature must be positive");
    spec_.temperature = tau;
}

void SkipAdapter::set_temperature(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("skip adapter: temperature must be positive");
    spec_.temperature = tau;
}

SkipAdapter::SkipAdapter(SkipAdapterSpec spec)
    : spec_(spec),
      logit_{"skip.logit", Tensor::scalar(std::log(spec.prior_prob) - std::log1p(-spec.prior_prob)),
             ParamRole::architecture} {
    if (!(spec.prior_prob > 0.0 && spec.prior_prob < 1.0)) {
        throw std::invalid_argument(fmt::format("skip adapter: prior probability {} outside (0, 1)", spec.prior_prob));
    }
    if (!(spec.temperature > 0.0)) throw std::invalid_argument("skip adapter: temperature must be positive");
}

double SkipAdapter::prob() const {
    const double z = logit_.value.item();
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// --- dense layer --------------------------------------------------------------

DenseLayer::DenseLayer(const LayerSpec& spec, const InitOptions& init, dist::Rng& rng)
    : spec_(spec.dense),
      w_mean_{"w.mean", Tensor(Shape{spec.dense.in_dim, spec.dense.out_dim}), ParamRole::weight},
      b_mean_{"b.mean", Tensor(Shape{spec.dense.out_dim}), ParamRole::weight} {
    if (spec_.in_dim < 1 || spec_.out_dim < 1) {
        throw std::invalid_argument(fmt::format("dense layer: dims must be >= 1, got {}x{}", spec_.in_dim, spec_.out_dim));
    }
    if (init.mean_init == MeanInit::fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.in_dim));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& v : w_mean_.value.data()) v = u(rng);
        for (double& v : b_mean_.value.data()) v = u(rng);
    }
    if (bayesian()) {
        const double rho = dist::rho_for_sigma(init.init_sigma);
        w_rho_ = Parameter{"w.rho", Tensor(w_mean_.value.shape(), rho), ParamRole::weight};
        b_rho_ = Parameter{"b.rho", Tensor(b_mean_.value.shape(), rho), ParamRole::weight};
    }
    if (spec.size) attach_size(*spec.size);
    if (spec.skip) attach_skip(*spec.skip);
}

void DenseLayer::attach_size(SizeAdapterSpec spec) {
    size_.emplace(spec_.out_dim, spec);
}

void DenseLayer::attach_skip(SkipAdapterSpec spec) {
    if (spec_.in_dim != spec_.out_dim) {
        throw std::invalid_argument(fmt::format("skip adapter needs a dimension-preserving layer, got {} -> {}",
                                                spec_.in_dim, spec_.out_dim));
    }
    skip_.emplace(spec);
}

// --- noise --------------------------------------------------------------------

namespace {
enum NoiseKind { kNormal = 0, kGumbel = 1, kLogistic = 2 };
}

Tensor RecordedNoise::next(const Shape& shape, int kind) {
    if (replaying_) {
        if (cursor_ >= draws_.size() || draws_[cursor_].first != kind || draws_[cursor_].second.shape() != shape) {
            throw std::logic_error("RecordedNoise: replay does not match the recorded draw sequence");
        }
        return draws_[cursor_++].second;
    }
    Tensor t;
    switch (kind) {
        case kNormal: t = source_->normal(shape); break;
        case kGumbel: t = source_->gumbel(shape.front()); break;
        default: t = Tensor::scalar(source_->logistic()); break;
    }
    draws_.emplace_back(kind, t);
    return t;
}

Tensor RecordedNoise::normal(const Shape& shape) {
    return next(shape, kNormal);
}

Tensor RecordedNoise::gumbel(std::size_t k) {
    return next(Shape{k}, kGumbel);
}

double RecordedNoise::logistic() {
    return next(Shape{}, kLogistic).item();
}

// --- forward building blocks ----------------------------------------------------

Var build_size_mask(Var s) {
    return ad::suffix_sum(s);
}

Var dense_forward(Var x, Var w, Var b, Activation act) {
    const Var h = ad::matmul(x, w) + b;
    switch (act) {
        case Activation::relu: return ad::relu(h);
        case Activation::identity: return h;
        case Activation::softmax: return ad::softmax(h);
    }
    return h;
}

Var skip_combine(Var x, Var fx, Var gamma) {
    // written this way both endpoints are exact in floating point
    return fx * (-gamma + 1.0) + x * gamma;
}

SizedOutput sized_forward(Var x, Var w, Var b, Activation act, const dist::TruncNormSizeParams& size, double temperature,
                          NoiseSource& noise) {
    const dist::ConcreteCategoricalParams q{dist::size_log_probs(size), temperature};
    const Var log_s = dist::sample_concrete_categorical_log(q, noise.gumbel(size.max_units));
    const Var s = ad::exp(log_s);
    const Var fx = dense_forward(x, w, b, act);
    if (fx.shape().back() != size.max_units) {
        throw ShapeError(fmt::format("sized_forward: layer width {} differs from adapter size {}", fx.shape().back(),
                                     size.max_units));
    }
    return {fx * build_size_mask(s), s, log_s};
}

SkipOutput skip_forward(Var x, Var fx, const dist::ConcreteBernoulliParams& gate, NoiseSource& noise) {
    if (x.shape() != fx.shape()) {
        throw ShapeError(fmt::format("skip_forward: input {} and layer output {} differ", shape_str(x.shape()),
                                     shape_str(fx.shape())));
    }
    const Var z = dist::sample_concrete_bernoulli_logit(gate, noise.logistic());
    const Var gamma = ad::sigmoid(z);
    return {skip_combine(x, fx, gamma), gamma, z};
}

// --- network --------------------------------------------------------------------

Network::Network(const NetworkSpec& spec, const InitOptions& init)
    : likelihood_(spec.likelihood), weight_prior_sigma_(spec.weight_prior_sigma) {
    if (spec.layers.empty()) throw std::invalid_argument("network: no layers");
    dist::Rng rng(init.seed);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const LayerSpec& ls = spec.layers[l];
        if (l > 0 && spec.layers[l - 1].dense.out_dim != ls.dense.in_dim) {
            throw std::invalid_argument(fmt::format("network: layer {} input {} does not match layer {} output {}", l,
                                                    ls.dense.in_dim, l - 1, spec.layers[l - 1].dense.out_dim));
        }
        layers_.emplace_back(ls, init, rng);
    }
    const DenseLayer& last = layers_.back();
    if (last.size_adapter()) throw std::invalid_argument("network: size adapters are not supported on the output layer");
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l) {
        if (layers_[l].spec().activation == Activation::softmax) {
            throw std::invalid_argument("network: softmax is only allowed on the output layer");
        }
    }
    if (!(weight_prior_sigma_ > 0.0)) throw std::invalid_argument("network: weight prior sigma must be positive");
}

Network::Network(std::vector<DenseLayer> layers, Likelihood likelihood, double weight_prior_sigma)
    : layers_(std::move(layers)), likelihood_(likelihood), weight_prior_sigma_(weight_prior_sigma) {
    if (layers_.empty()) throw std::invalid_argument("network: no layers");
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    for (DenseLayer& layer : layers_) {
        out.push_back(&layer.weight_mean());
        if (layer.weight_rho()) out.push_back(&*layer.weight_rho());
        out.push_back(&layer.bias_mean());
        if (layer.bias_rho()) out.push_back(&*layer.bias_rho());
        if (layer.size_adapter()) {
            out.push_back(&layer.size_adapter()->mu_param());
            out.push_back(&layer.size_adapter()->sigma_raw_param());
        }
        if (layer.skip_adapter()) out.push_back(&layer.skip_adapter()->logit_param());
    }
    return out;
}

std::vector<const Parameter*> Network::parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
    return out;
}

std::size_t Network::weight_count() const {
    std::size_t n = 0;
    for (const DenseLayer& layer : layers_) n += layer.weight_mean().value.size() + layer.bias_mean().value.size();
    return n;
}

BoundNetwork Network::bind(ad::Tape& tape, bool trainable) const {
    BoundNetwork bound;
    auto make = [&](const Parameter& p) {
        Var v = trainable ? tape.leaf(p.value) : tape.constant(p.value);
        bound.params.push_back(v);
        return v;
    };
    for (const DenseLayer& layer : layers_) {
        LayerVars lv;
        lv.w_mean = make(layer.weight_mean());
        if (layer.weight_rho()) lv.w_rho = make(*layer.weight_rho());
        lv.b_mean = make(layer.bias_mean());
        if (layer.bias_rho()) lv.b_rho = make(*layer.bias_rho());
        if (layer.size_adapter()) {
            lv.size_mu = make(layer.size_adapter()->mu_param());
            lv.size_sigma_raw = make(layer.size_adapter()->sigma_raw_param());
        }
        if (layer.skip_adapter()) lv.skip_logit = make(layer.skip_adapter()->logit_param());
        bound.layers.push_back(lv);
    }
    return bound;
}

std::vector<Tensor> Network::gradients(const ad::Tape& tape, const BoundNetwork& bound) const {
    std::vector<Tensor> grads;
    grads.reserve(bound.params.size());
    for (const Var& v : bound.params) grads.push_back(tape.grad(v));
    return grads;
}

ForwardResult Network::forward(const BoundNetwork& bound, Var x, NoiseSource& noise, ForwardMode mode,
                               bool with_kl) const {
    ad::Tape& tape = x.tape();
    if (x.shape().size() != 2 || x.shape()[1] != input_dim()) {
        throw ShapeError(fmt::format("network: input shape {} does not match input dim {}", shape_str(x.shape()),
                                     input_dim()));
    }
    ForwardResult result;
    std::vector<Var> kl_w_terms;
    std::vector<Var> kl_a_terms;
    const dist::GaussianPrior weight_prior{weight_prior_sigma_};
    Var h = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const DenseLayer& layer = layers_[l];
        const LayerVars& v = bound.layers[l];
        const bool last = l + 1 == layers_.size();

        Var w = v.w_mean;
        Var b = v.b_mean;
        if (layer.bayesian()) {
            const dist::GaussianPosterior wq{v.w_mean, v.w_rho};
            const dist::GaussianPosterior bq{v.b_mean, v.b_rho};
            if (mode == ForwardMode::sample) {
                w = dist::sample_gaussian(wq, noise.normal(v.w_mean.shape()));
                b = dist::sample_gaussian(bq, noise.normal(v.b_mean.shape()));
            }
            if (with_kl) {
                kl_w_terms.push_back(dist::kl_gaussian_analytic(wq, weight_prior));
                kl_w_terms.push_back(dist::kl_gaussian_analytic(bq, weight_prior));
            }
        }

        Activation act = layer.spec().activation;
        if (last && act == Activation::softmax) act = Activation::identity;

        Var fx;
        if (const auto& size = layer.size_adapter()) {
            const dist::TruncNormSizeParams sp{v.size_mu, v.size_sigma_raw, size->max_units()};
            if (mode == ForwardMode::sample) {
                const SizedOutput so = sized_forward(h, w, b, act, sp, size->spec().temperature, noise);
                fx = so.output;
                result.size_samples.push_back(so.sample.value());
                if (with_kl) {
                    const Var log_s = so.log_sample;
                    const dist::ConcreteCategoricalParams q{dist::size_log_probs(sp), size->spec().temperature};
                    const dist::ConcreteCategoricalParams p{
                        tape.constant(Tensor::vector(
                            dist::size_log_probs(size->spec().prior_mu, size->spec().prior_sigma, size->max_units()))),
                        size->spec().temperature};
                    kl_a_terms.push_back(dist::mc_kl(
                        [&](Var z) { return dist::log_density_concrete_categorical_log(z, q); },
                        [&](Var z) { return dist::log_density_concrete_categorical_log(z, p); }, [&] { return log_s; },
                        1));
                }
            } else {
                const std::size_t k = decode_size(*size);
                Tensor mask(Shape{size->max_units()});
                for (std::size_t i = 0; i < k; ++i) mask[i] = 1.0;
                fx = dense_forward(h, w, b, act) * tape.constant(std::move(mask));
            }
        } else {
            fx = dense_forward(h, w, b, act);
        }

        if (const auto& skip = layer.skip_adapter()) {
            const dist::ConcreteBernoulliParams gate{v.skip_logit, skip->spec().temperature};
            if (mode == ForwardMode::sample) {
                const SkipOutput so = skip_forward(h, fx, gate, noise);
                h = so.output;
                result.skip_samples.push_back(so.gamma.item());
                if (with_kl) {
                    const Var g = so.gamma_logit;
                    const auto p = dist::ConcreteBernoulliParams::from_prob(tape, skip->spec().prior_prob,
                                                                            skip->spec().temperature);
                    kl_a_terms.push_back(dist::mc_kl(
                        [&](Var z) { return dist::log_density_concrete_bernoulli_logit(z, gate); },
                        [&](Var z) { return dist::log_density_concrete_bernoulli_logit(z, p); }, [&] { return g; }, 1));
                }
            } else {
                h = skip->prob() > 0.5 ? h : fx;
            }
        } else {
            h = fx;
        }
    }

    result.logits = h;
    result.output = layers_.back().spec().activation == Activation::softmax ? ad::softmax(h) : h;
    auto total = [&](const std::vector<Var>& terms) {
        if (terms.empty()) return tape.constant(0.0);
        Var acc = terms.front();
        for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
        return ad::reshape(acc, Shape{});
    };
    result.kl_weights = total(kl_w_terms);
    result.kl_arch = total(kl_a_terms);
    return result;
}

Tensor Network::predict_once(const Tensor& x, NoiseSource& noise, ForwardMode mode) const {
    ad::Tape tape;
    const BoundNetwork bound = bind(tape, false);
    return forward(bound, tape.constant(x), noise, mode, false).output.value();
}

// --- decoding and pruning ---------------------------------------------------------

std::size_t decode_size(const SizeAdapter& adapter) {
    const std::vector<double> lp = dist::size_log_probs(adapter.mu(), adapter.sigma(), adapter.max_units());
    return static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin()) + 1;
}

std::size_t DepthDecision::kept_count() const {
    return static_cast<std::size_t>(std::count(kept.begin(), kept.end(), true));
}

DepthDecision decode_depth(const Network& network) {
    DepthDecision d;
    for (const DenseLayer& layer : network.layers()) {
        d.kept.push_back(!(layer.skip_adapter() && layer.skip_adapter()->prob() > 0.5));
    }
    return d;
}

Network prune(const Network& network) {
    const DepthDecision depth = decode_depth(network);
    std::vector<DenseLayer> out;
    dist::Rng rng(0);
    std::size_t width = network.input_dim();
    for (std::size_t l = 0; l < network.layers().size(); ++l) {
        if (!depth.kept[l]) continue;
        const DenseLayer& src = network.layers()[l];
        const std::size_t k = src.size_adapter() ? decode_size(*src.size_adapter()) : src.spec().out_dim;
        LayerSpec ls;
        ls.dense = src.spec();
        ls.dense.in_dim = width;
        ls.dense.out_dim = k;
        InitOptions init;
        init.mean_init = MeanInit::prior;
        DenseLayer dst(ls, init, rng);

        auto copy_matrix = [&](const Tensor& from, Tensor& to) {
            const std::size_t src_cols = from.shape()[1];
            for (std::size_t r = 0; r < width; ++r) {
                for (std::size_t c = 0; c < k; ++c) to[r * k + c] = from[r * src_cols + c];
            }
        };
        auto copy_vector = [&](const Tensor& from, Tensor& to) {
            for (std::size_t c = 0; c < k; ++c) to[c] = from[c];
        };
        copy_matrix(src.weight_mean().value, dst.weight_mean().value);
        copy_vector(src.bias_mean().value, dst.bias_mean().value);
        if (src.weight_rho()) {
            copy_matrix(src.weight_rho()->value, dst.weight_rho()->value);
            copy_vector(src.bias_rho()->value, dst.bias_rho()->value);
        }
        out.push_back(std::move(dst));
        width = k;
    }
    return Network(std::move(out), network.likelihood(), network.weight_prior_sigma());
}

nlohmann::json describe(const Network& network) {
    nlohmann::json doc;
    doc["layers"] = nlohmann::json::array();
    for (const DenseLayer& layer : network.layers()) {
        nlohmann::json j;
        j["in_dim"] = layer.spec().in_dim;
        j["out_dim"] = layer.spec().out_dim;
        j["activation"] = to_string(layer.spec().activation);
        j["weight_mode"] = to_string(layer.spec().weight_mode);
        if (const auto& s = layer.size_adapter()) {
            j["size_posterior"] = {{"mu", s->mu()}, {"sigma", s->sigma()}, {"decoded", decode_size(*s)}};
            j["size_prior"] = {{"mu", s->spec().prior_mu}, {"sigma", s->spec().prior_sigma},
                               {"temperature", s->spec().temperature}};
        }
        if (const auto& s = layer.skip_adapter()) {
            j["skip_posterior"] = {{"pi", s->prob()}};
            j["skip_prior"] = {{"pi", s->spec().prior_prob}, {"temperature", s->spec().temperature}};
        }
        doc["layers"].push_back(j);
    }
    const Likelihood& lik = network.likelihood();
    doc["likelihood"] = {{"kind", lik.kind == LikelihoodKind::gaussian ? "gaussian" : "categorical"},
                         {"obs_sigma", lik.obs_sigma}};
    doc["weight_prior_sigma"] = network.weight_prior_sigma();
    return doc;
}

NetworkSpec spec_from_description(const nlohmann::json& doc) {
    NetworkSpec spec;
    for (const auto& j : doc.at("layers")) {
        LayerSpec ls;
        ls.dense.in_dim = j.at("in_dim").get<std::size_t>();
        ls.dense.out_dim = j.at("out_dim").get<std::size_t>();
        ls.dense.activation = activation_from_string(j.at("activation").get<std::string>());
        ls.dense.weight_mode = weight_mode_from_string(j.value("weight_mode", std::string("gaussian")));
        if (j.contains("size_prior")) {
            const auto& p = j["size_prior"];
            ls.size = SizeAdapterSpec{p.at("mu").get<double>(), p.at("sigma").get<double>(),
                                      p.at("temperature").get<double>()};
        }
        if (j.contains("skip_prior")) {
            const auto& p = j["skip_prior"];
            ls.skip = SkipAdapterSpec{p.at("pi").get<double>(), p.at("temperature").get<double>()};
        }
        spec.layers.push_back(ls);
    }
    if (doc.contains("likelihood")) {
        const auto& lik = doc["likelihood"];
        spec.likelihood.kind =
            lik.value("kind", std::string("gaussian")) == "gaussian" ? LikelihoodKind::gaussian : LikelihoodKind::categorical;
        spec.likelihood.obs_sigma = lik.value("obs_sigma", 1.0);
    }
    spec.weight_prior_sigma = doc.value("weight_prior_sigma", 1.0);
    return spec;
}

}  // namespace bayesarch
