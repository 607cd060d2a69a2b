// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "bayesarch/predictive.hpp"

namespace bayesarch::train {

void TrainConfig::validate() const {
    std::vector<std::string> errors;
    if (batch_size < 1) errors.push_back("batch_size must be >= 1");
    if (!(learning_rate > 0.0)) errors.push_back("learning_rate must be > 0");
    if (arch_learning_rate && !(*arch_learning_rate > 0.0)) errors.push_back("arch_learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) errors.push_back("beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) errors.push_back("beta2 must be in [0, 1)");
    if (!(eps > 0.0)) errors.push_back("eps must be > 0");
    if (tau_size && !(*tau_size > 0.0)) errors.push_back("tau_size must be > 0");
    if (tau_depth && !(*tau_depth > 0.0)) errors.push_back("tau_depth must be > 0");
    if (!(kl_scale > 0.0 && kl_scale <= 1.0)) errors.push_back("kl_scale must be in (0, 1]");
    if (early_stop_patience > 0 && validation_samples < 1) errors.push_back("validation_samples must be >= 1");
    if (!errors.empty()) {
        std::string msg = "invalid training config:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw std::invalid_argument(msg);
    }
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j{{"epochs", epochs},
                     {"batch_size", batch_size},
                     {"learning_rate", learning_rate},
                     {"beta1", beta1},
                     {"beta2", beta2},
                     {"eps", eps},
                     {"seed", seed},
                     {"early_stop_patience", early_stop_patience},
                     {"validation_samples", validation_samples},
                     {"kl_scale", kl_scale}};
    j["arch_learning_rate"] = arch_learning_rate ? nlohmann::json(*arch_learning_rate) : nlohmann::json(nullptr);
    j["tau_size"] = tau_size ? nlohmann::json(*tau_size) : nlohmann::json(nullptr);
    j["tau_depth"] = tau_depth ? nlohmann::json(*tau_depth) : nlohmann::json(nullptr);
    return j;
}

DivergenceError::DivergenceError(std::string term, std::size_t epoch, std::size_t step, const std::string& detail)
    : std::runtime_error(fmt::format("non-finite {} at epoch {}, step {}: {}", term, epoch, step, detail)),
      term_(std::move(term)),
      epoch_(epoch),
      step_(step) {}

Var negative_loglik(Var output, Var logits, const Tensor& target, const Likelihood& likelihood) {
    if (output.shape() != target.shape()) {
        throw ShapeError(fmt::format("negative_loglik: output {} vs target {}", shape_str(output.shape()),
                                     shape_str(target.shape())));
    }
    ad::Tape& tape = output.tape();
    if (likelihood.kind == LikelihoodKind::gaussian) {
        const double s = likelihood.obs_sigma;
        if (!(s > 0.0)) throw std::invalid_argument("negative_loglik: obs_sigma must be positive");
        const double constant = 0.5 * std::log(2.0 * std::numbers::pi * s * s) * static_cast<double>(target.size());
        const Var r = output - tape.constant(target);
        return ad::sum(ad::square(r)) * (0.5 / (s * s)) + constant;
    }
    // categorical: target rows are one-hot
    return -ad::sum(ad::log_softmax(logits) * tape.constant(target));
}

double gaussian_loglik(const Tensor& pred_mean, const Tensor& target, double obs_sigma) {
    if (!(obs_sigma > 0.0)) throw std::invalid_argument("gaussian_loglik: obs_sigma must be positive");
    if (pred_mean.size() != target.size()) {
        throw ShapeError(fmt::format("gaussian_loglik: prediction {} vs target {}", shape_str(pred_mean.shape()),
                                     shape_str(target.shape())));
    }
    const double c = -std::log(obs_sigma) - 0.5 * std::log(2.0 * std::numbers::pi);
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double z = (target[i] - pred_mean[i]) / obs_sigma;
        total += c - 0.5 * z * z;
    }
    return total;
}

StepResult elbo_step(const Network& network, const Tensor& x, const Tensor& y, std::size_t dataset_size,
                     NoiseSource& noise, double kl_scale) {
    if (x.rank() != 2 || x.rows() == 0) throw std::invalid_argument("elbo_step: empty batch");
    if (y.rank() != 2 || y.rows() != x.rows()) {
        throw ShapeError(fmt::format("elbo_step: inputs {} vs targets {}", shape_str(x.shape()), shape_str(y.shape())));
    }
    ad::Tape tape;
    // Non-finite values are caught per term below so the report can name it.
    tape.set_check_finite(false);
    const BoundNetwork bound = network.bind(tape, true);
    ForwardResult fr;
    try {
        fr = network.forward(bound, tape.constant(x), noise, ForwardMode::sample, true);
    } catch (const std::domain_error& e) {
        throw DivergenceError("kl_arch", 0, 0, e.what());
    }
    const double n_scale = static_cast<double>(dataset_size) / static_cast<double>(x.rows());
    const Var nll = negative_loglik(fr.output, fr.logits, y, network.likelihood()) * n_scale;

    StepResult out;
    out.terms = {nll.item(), fr.kl_weights.item(), fr.kl_arch.item(), kl_scale};
    if (!std::isfinite(out.terms.nll)) throw DivergenceError("nll", 0, 0, fmt::format("value {}", out.terms.nll));
    if (!std::isfinite(out.terms.kl_weights)) {
        throw DivergenceError("kl_weights", 0, 0, fmt::format("value {}", out.terms.kl_weights));
    }
    if (!std::isfinite(out.terms.kl_arch)) throw DivergenceError("kl_arch", 0, 0, fmt::format("value {}", out.terms.kl_arch));

    const Var loss = nll + (fr.kl_weights + fr.kl_arch) * kl_scale;
    tape.backward(loss);
    out.grads = network.gradients(tape, bound);
    for (std::size_t i = 0; i < out.grads.size(); ++i) {
        if (!out.grads[i].all_finite()) throw DivergenceError("gradient", 0, 0, fmt::format("parameter {}", i));
    }
    out.predictions = fr.output.value();
    return out;
}

Adam::Adam(const TrainConfig& config, std::size_t n_params)
    : lr_(config.learning_rate),
      arch_lr_(config.arch_learning_rate.value_or(config.learning_rate)),
      beta1_(config.beta1),
      beta2_(config.beta2),
      eps_(config.eps),
      m_(n_params),
      v_(n_params) {}

void Adam::step(const std::vector<Parameter*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw std::invalid_argument(fmt::format("Adam: expected {} parameters, got {} and {} gradients", m_.size(),
                                                params.size(), grads.size()));
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& value = params[p]->value;
        const Tensor& g = grads[p];
        if (m_[p].shape() != value.shape()) {
            m_[p] = Tensor(value.shape());
            v_[p] = Tensor(value.shape());
        }
        const double lr = params[p]->role == ParamRole::architecture ? arch_lr_ : lr_;
        for (std::size_t i = 0; i < value.size(); ++i) {
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
            value[i] -= lr * (m_[p][i] / c1) / (std::sqrt(v_[p][i] / c2) + eps_);
        }
    }
}

nlohmann::json RunLogRow::to_json() const {
    nlohmann::json j{{"run_id", run_id},
                     {"epoch", epoch},
                     {"nll", terms.nll},
                     {"kl_weights", terms.kl_weights},
                     {"kl_arch", terms.kl_arch},
                     {"kl_scale", terms.kl_scale},
                     {"total", terms.total()}};
    j["sizes"] = nlohmann::json::array();
    for (const SizeRecord& s : sizes) j["sizes"].push_back({{"layer", s.layer}, {"mu", s.mu}, {"sigma", s.sigma}, {"pi", s.pi}});
    j["skips"] = nlohmann::json::array();
    for (const SkipRecord& s : skips) j["skips"].push_back({{"layer", s.layer}, {"skip_pi", s.pi}});
    j["metrics"] = metrics;
    return j;
}

std::string RunLog::to_jsonl() const {
    std::ostringstream out;
    out << nlohmann::json{{"metadata", metadata}}.dump() << '\n';
    for (const RunLogRow& r : rows) out << r.to_json().dump() << '\n';
    return out.str();
}

RunLogRow snapshot_row(const Network& network, const std::string& run_id, std::size_t epoch) {
    RunLogRow row;
    row.run_id = run_id;
    row.epoch = epoch;
    for (std::size_t l = 0; l < network.layers().size(); ++l) {
        const DenseLayer& layer = network.layers()[l];
        if (const auto& s = layer.size_adapter()) row.sizes.push_back({l, s->mu(), s->sigma(), s->probs()});
        if (const auto& s = layer.skip_adapter()) row.skips.push_back({l, s->prob()});
    }
    return row;
}

void apply_temperatures(Network& network, const TrainConfig& config) {
    for (DenseLayer& layer : network.layers()) {
        if (config.tau_size && layer.size_adapter()) layer.size_adapter()->set_temperature(*config.tau_size);
        if (config.tau_depth && layer.skip_adapter()) layer.skip_adapter()->set_temperature(*config.tau_depth);
    }
}

namespace {

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& order, std::size_t begin, std::size_t end) {
    const std::size_t d = m.cols();
    Tensor out(Shape{end - begin, d});
    for (std::size_t i = begin; i < end; ++i) {
        std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(order[i] * d), d,
                    out.data().begin() + static_cast<std::ptrdiff_t>((i - begin) * d));
    }
    return out;
}

}  // namespace

RunLog fit(Network& network, const data::Dataset& dataset, const TrainConfig& config, const FitOptions& options) {
    config.validate();
    if (dataset.size() == 0) throw std::invalid_argument("fit: empty dataset");
    if (dataset.input_dim() != network.input_dim() || dataset.output_dim() != network.output_dim()) {
        throw ShapeError(fmt::format("fit: dataset {} -> {} does not match network {} -> {}", dataset.input_dim(),
                                     dataset.output_dim(), network.input_dim(), network.output_dim()));
    }
    const bool early_stop = config.early_stop_patience > 0 && options.validation != nullptr;
    apply_temperatures(network, config);

    RunLog log;
    log.metadata = {{"run_id", options.run_id},
                    {"dataset", dataset.name},
                    {"n_train", dataset.size()},
                    {"likelihood", network.likelihood().kind == LikelihoodKind::gaussian ? "gaussian" : "categorical"},
                    {"obs_sigma", network.likelihood().obs_sigma},
                    {"train", config.to_json()},
                    {"architecture", describe(network)}};
    if (config.epochs == 0) return log;

    dist::Rng rng(config.seed);
    RandomNoise noise(rng);
    std::vector<Parameter*> params = network.parameters();
    Adam adam(config, params.size());

    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;
    std::vector<Tensor> best_params;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

        ElboTerms acc{0.0, 0.0, 0.0, config.kl_scale};
        double sq_err = 0.0;
        std::size_t correct = 0;
        std::size_t steps = 0;
        for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
            const std::size_t end = std::min(n, begin + config.batch_size);
            const Tensor xb = gather_rows(dataset.features, order, begin, end);
            const Tensor yb = gather_rows(dataset.targets, order, begin, end);
            StepResult step;
            try {
                step = elbo_step(network, xb, yb, n, noise, config.kl_scale);
            } catch (const DivergenceError& e) {
                throw DivergenceError(e.term(), epoch, steps, e.what());
            }
            adam.step(params, step.grads);
            acc.nll += step.terms.nll;
            acc.kl_weights += step.terms.kl_weights;
            acc.kl_arch += step.terms.kl_arch;
            const Tensor& p = step.predictions;
            if (network.likelihood().kind == LikelihoodKind::gaussian) {
                for (std::size_t i = 0; i < p.size(); ++i) sq_err += (p[i] - yb[i]) * (p[i] - yb[i]);
            } else {
                const std::size_t c = p.cols();
                for (std::size_t r = 0; r < p.rows(); ++r) {
                    const auto row = p.data().subspan(r * c, c);
                    const auto lab = yb.data().subspan(r * c, c);
                    if (std::max_element(row.begin(), row.end()) - row.begin() ==
                        std::max_element(lab.begin(), lab.end()) - lab.begin()) {
                        ++correct;
                    }
                }
            }
            ++steps;
        }

        RunLogRow row = snapshot_row(network, options.run_id, epoch);
        const auto s = static_cast<double>(steps);
        row.terms = {acc.nll / s, acc.kl_weights / s, acc.kl_arch / s, config.kl_scale};
        if (network.likelihood().kind == LikelihoodKind::gaussian) {
            row.metrics["train_rmse"] = std::sqrt(sq_err / static_cast<double>(dataset.targets.size()));
        } else {
            row.metrics["train_accuracy"] = static_cast<double>(correct) / static_cast<double>(n);
        }

        if (early_stop) {
            const data::Dataset& val = *options.validation;
            const auto pred = predictive::predict(network, val.features, config.validation_samples, config.seed + epoch);
            const double val_nll = -predictive::test_loglik(pred.samples, val.targets, network.likelihood().obs_sigma);
            row.metrics["val_nll"] = val_nll;
            row.metrics["val_rmse"] = predictive::rmse(pred.mean, val.targets);
            if (val_nll < best_val) {
                best_val = val_nll;
                best_epoch = epoch;
                since_best = 0;
                best_params.clear();
                for (const Parameter* p : params) best_params.push_back(p->value);
            } else {
                ++since_best;
            }
        }
        log.rows.push_back(std::move(row));
        if (options.on_epoch) options.on_epoch(epoch, network);
        if (early_stop && since_best >= config.early_stop_patience) break;
    }

    if (early_stop && !best_params.empty()) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
        log.metadata["best_epoch"] = best_epoch;
        log.metadata["best_val_nll"] = best_val;
    }
    log.metadata["epochs_run"] = log.rows.size();
    return log;
}

}  // namespace bayesarch::train
