// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/experiments.hpp"

#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "bayesarch/predictive.hpp"

namespace bayesarch::experiments {

namespace fs = std::filesystem;

namespace {

std::string seed_dir(const std::string& out_dir, std::uint64_t seed) {
    return (fs::path(out_dir) / fmt::format("seed_{}", seed)).string();
}

class OutFile {
public:
    explicit OutFile(const std::string& path) {
        fs::create_directories(fs::path(path).parent_path());
        out_.open(path, std::ios::binary);
        if (!out_) throw std::runtime_error(fmt::format("cannot write '{}'", path));
    }
    template <typename... Args>
    void line(fmt::format_string<Args...> f, Args&&... args) {
        out_ << fmt::format(f, std::forward<Args>(args)...) << '\n';
    }
    std::ofstream& stream() { return out_; }

private:
    std::ofstream out_;
};

void write_text(const std::string& path, const std::string& text) {
    OutFile f(path);
    f.stream() << text;
}

nlohmann::json stamped(nlohmann::json doc, const config::ExperimentMeta& meta, std::uint64_t seed) {
    doc["config_hash"] = meta.hash;
    doc["version"] = config::kVersion;
    doc["seed"] = seed;
    return doc;
}

double train_rmse_of(const train::RunLog& log) {
    if (log.rows.empty()) return std::nan("");
    const auto& m = log.rows.back().metrics;
    auto it = m.find("train_rmse");
    return it == m.end() ? std::nan("") : it->second;
}

template <typename F>
void for_each_seed(const std::vector<std::uint64_t>& seeds, F&& f) {
    std::exception_ptr failure;
    const auto n = static_cast<std::ptrdiff_t>(seeds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        try {
            f(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string artifact_header(const config::ExperimentMeta& meta, std::uint64_t seed) {
    return fmt::format("# bayesarch {} config_hash={} seed={}", config::kVersion, meta.hash, seed);
}

void write_config_copy(const config::ExperimentMeta& meta, const std::string& out_dir) {
    if (out_dir.empty()) return;
    write_text((fs::path(out_dir) / "config.ini").string(), meta.source_text);
}

// --- toy size -------------------------------------------------------------------

Network build_toy_size_network(const config::ToySizeConfig& c, std::uint64_t seed) {
    NetworkSpec spec;
    LayerSpec hidden;
    hidden.dense = {1, c.max_units, Activation::relu, c.weight_mode};
    hidden.size = c.size_prior;
    LayerSpec out;
    out.dense = {c.max_units, 1, Activation::identity, c.weight_mode};
    spec.layers = {hidden, out};
    spec.likelihood = {LikelihoodKind::gaussian, c.obs_sigma};
    spec.weight_prior_sigma = c.weight_prior_sigma;
    InitOptions init;
    init.init_sigma = c.init_sigma;
    init.seed = seed;
    return Network(spec, init);
}

ToySizeResult run_toy_size(const config::ToySizeConfig& c, std::uint64_t seed, const std::string& out_dir) {
    const data::Dataset ds = data::toy_periodic(c.n_points, c.noise_sigma, seed);
    Network net = build_toy_size_network(c, seed);
    train::TrainConfig tc = c.train;
    tc.seed = seed;

    const std::size_t epochs = tc.epochs;
    const std::size_t mid = (epochs + 1) / 2;
    Tensor grid(Shape{c.snapshot_grid, 1});
    for (std::size_t i = 0; i < c.snapshot_grid; ++i) {
        grid[i] = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(c.snapshot_grid - 1);
    }
    struct Snapshot {
        std::size_t epoch;
        Tensor pred;
    };
    std::vector<Snapshot> snapshots;
    std::vector<train::RunLogRow> trajectory{train::snapshot_row(net, "toy-size", 0)};

    train::FitOptions opts;
    opts.run_id = fmt::format("toy-size-{}", seed);
    opts.on_epoch = [&](std::size_t epoch, const Network& n) {
        if (epoch == 1 || epoch == mid || epoch == epochs) {
            dist::Rng unused(0);  // decoded point weights draw nothing
            RandomNoise noise(unused);
            snapshots.push_back({epoch, n.predict_once(grid, noise, ForwardMode::decoded)});
        }
    };
    train::RunLog log = train::fit(net, ds, tc, opts);
    for (const auto& row : log.rows) trajectory.push_back(row);

    const SizeAdapter& adapter = *net.layers().front().size_adapter();
    ToySizeResult result{seed, decode_size(adapter), adapter.mu(), adapter.sigma(), train_rmse_of(log), log};
    result.log.metadata["config_hash"] = c.meta.hash;
    result.log.metadata["version"] = config::kVersion;
    result.log.metadata["seed"] = seed;

    if (!out_dir.empty()) {
        const std::string dir = seed_dir(out_dir, seed);
        const std::string header = artifact_header(c.meta, seed);
        OutFile pi((fs::path(dir) / "pi_trajectory.csv").string());
        pi.line("{}", header);
        std::vector<std::string> cols{"epoch", "mu", "sigma", "decoded"};
        for (std::size_t k = 1; k <= c.max_units; ++k) cols.push_back(fmt::format("pi_{}", k));
        pi.line("{}", fmt::join(cols, ","));
        for (const auto& row : trajectory) {
            const auto& s = row.sizes.front();
            const auto k = static_cast<std::size_t>(std::max_element(s.pi.begin(), s.pi.end()) - s.pi.begin()) + 1;
            pi.line("{},{},{},{},{}", row.epoch, s.mu, s.sigma, k, fmt::join(s.pi, ","));
        }
        OutFile snap((fs::path(dir) / "snapshots.csv").string());
        snap.line("{}", header);
        snap.line("epoch,x,prediction");
        for (const auto& s : snapshots) {
            for (std::size_t i = 0; i < grid.size(); ++i) snap.line("{},{},{}", s.epoch, grid[i], s.pred[i]);
        }
        write_text((fs::path(dir) / "runlog.jsonl").string(), result.log.to_jsonl());
        write_text((fs::path(dir) / "architecture.json").string(), stamped(describe(net), c.meta, seed).dump(2) + "\n");
        nlohmann::json summary{{"config_hash", c.meta.hash}, {"version", config::kVersion}, {"seed", seed},
                               {"decoded_size", result.decoded_size}, {"mu", result.mu}, {"sigma", result.sigma},
                               {"train_rmse", result.train_rmse}};
        write_text((fs::path(dir) / "summary.json").string(), summary.dump(2) + "\n");
    }
    return result;
}

std::vector<ToySizeResult> run_toy_size_suite(const config::ToySizeConfig& c, const std::string& out_dir) {
    std::vector<ToySizeResult> out(c.meta.seeds.size());
    for_each_seed(c.meta.seeds, [&](std::size_t i) { out[i] = run_toy_size(c, c.meta.seeds[i], out_dir); });
    return out;
}

// --- toy depth ------------------------------------------------------------------

Network build_toy_depth_network(const config::ToyDepthConfig& c, std::uint64_t seed) {
    NetworkSpec spec;
    LayerSpec first;
    first.dense = {1, c.width, Activation::relu, c.weight_mode};
    spec.layers.push_back(first);
    for (std::size_t l = 0; l < c.skip_layers; ++l) {
        LayerSpec ls;
        ls.dense = {c.width, c.width, Activation::relu, c.weight_mode};
        ls.skip = c.skip_prior;
        spec.layers.push_back(ls);
    }
    LayerSpec out;
    out.dense = {c.width, 1, Activation::identity, c.weight_mode};
    spec.layers.push_back(out);
    spec.likelihood = {LikelihoodKind::gaussian, c.obs_sigma};
    spec.weight_prior_sigma = c.weight_prior_sigma;
    InitOptions init;
    init.init_sigma = c.init_sigma;
    init.seed = seed;
    return Network(spec, init);
}

ToyDepthResult run_toy_depth(const config::ToyDepthConfig& c, std::uint64_t seed, const std::string& out_dir) {
    const data::Dataset ds = data::toy_periodic(c.n_points, c.noise_sigma, seed);
    Network net = build_toy_depth_network(c, seed);
    train::TrainConfig tc = c.train;
    tc.seed = seed;
    std::vector<train::RunLogRow> trajectory{train::snapshot_row(net, "toy-depth", 0)};
    train::FitOptions opts;
    opts.run_id = fmt::format("toy-depth-{}", seed);
    train::RunLog log = train::fit(net, ds, tc, opts);
    for (const auto& row : log.rows) trajectory.push_back(row);

    ToyDepthResult result;
    result.seed = seed;
    for (const DenseLayer& layer : net.layers()) {
        if (layer.skip_adapter()) result.skip_probs.push_back(layer.skip_adapter()->prob());
    }
    const DepthDecision depth = decode_depth(net);
    result.kept_hidden = depth.kept_count() - 1;  // the readout layer is not hidden
    result.train_rmse = train_rmse_of(log);
    result.log = std::move(log);
    result.log.metadata["config_hash"] = c.meta.hash;
    result.log.metadata["version"] = config::kVersion;
    result.log.metadata["seed"] = seed;

    if (!out_dir.empty()) {
        const std::string dir = seed_dir(out_dir, seed);
        OutFile f((fs::path(dir) / "skip_trajectory.csv").string());
        f.line("{}", artifact_header(c.meta, seed));
        std::vector<std::string> cols{"epoch"};
        for (std::size_t l = 1; l <= c.skip_layers; ++l) cols.push_back(fmt::format("skip_pi_{}", l));
        f.line("{}", fmt::join(cols, ","));
        for (const auto& row : trajectory) {
            std::vector<double> pis;
            for (const auto& s : row.skips) pis.push_back(s.pi);
            f.line("{},{}", row.epoch, fmt::join(pis, ","));
        }
        write_text((fs::path(dir) / "runlog.jsonl").string(), result.log.to_jsonl());
        write_text((fs::path(dir) / "architecture.json").string(), stamped(describe(net), c.meta, seed).dump(2) + "\n");
        nlohmann::json summary{{"config_hash", c.meta.hash}, {"version", config::kVersion}, {"seed", seed},
                               {"skip_pi", result.skip_probs},   {"kept_hidden_layers", result.kept_hidden},
                               {"train_rmse", result.train_rmse}};
        write_text((fs::path(dir) / "summary.json").string(), summary.dump(2) + "\n");
    }
    return result;
}

std::vector<ToyDepthResult> run_toy_depth_suite(const config::ToyDepthConfig& c, const std::string& out_dir) {
    std::vector<ToyDepthResult> out(c.meta.seeds.size());
    for_each_seed(c.meta.seeds, [&](std::size_t i) { out[i] = run_toy_depth(c, c.meta.seeds[i], out_dir); });
    return out;
}

// --- UCI --------------------------------------------------------------------------

std::string to_string(UciVariant v) {
    switch (v) {
        case UciVariant::shallow_rigid: return "shallow_rigid";
        case UciVariant::shallow_adaptive: return "shallow_adaptive";
        case UciVariant::deep_rigid: return "deep_rigid";
        case UciVariant::deep_adaptive: return "deep_adaptive";
    }
    return "?";
}

NetworkSpec uci_network_spec(const config::UciConfig& c, UciVariant v, std::size_t input_dim) {
    const bool deep = v == UciVariant::deep_rigid || v == UciVariant::deep_adaptive;
    const bool adaptive = v == UciVariant::shallow_adaptive || v == UciVariant::deep_adaptive;
    const std::size_t depth = deep ? c.deep_layers : 1;
    NetworkSpec spec;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < depth; ++l) {
        LayerSpec ls;
        ls.dense = {in, c.width, Activation::relu, WeightMode::gaussian};
        if (adaptive) {
            ls.size = c.size_prior;
            if (l > 0) ls.skip = c.skip_prior;
        }
        spec.layers.push_back(ls);
        in = c.width;
    }
    LayerSpec out;
    out.dense = {in, 1, Activation::identity, WeightMode::gaussian};
    spec.layers.push_back(out);
    spec.likelihood = {LikelihoodKind::gaussian, c.obs_sigma};
    spec.weight_prior_sigma = c.weight_prior_sigma;
    return spec;
}

UciRun run_uci_single(const config::UciConfig& c, const std::string& dataset, UciVariant v, std::uint64_t seed,
                      const std::string& out_dir) {
    const data::Dataset full = data::load_csv((fs::path(c.data_dir) / (dataset + ".csv")).string(), "", true);
    auto [train_full, test] = data::split(full, c.test_fraction, seed);

    // held-out part for early stopping, carved from the training rows with the training statistics
    std::vector<std::size_t> order(train_full.size());
    std::iota(order.begin(), order.end(), 0);
    dist::Rng rng(seed ^ 0x5bd1e995ULL);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);
    const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(order.size()) * c.validation_fraction));
    if (n_val == 0 || n_val >= order.size()) throw std::invalid_argument("uci: validation split leaves an empty part");
    const data::Dataset val = train_full.subset({order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val)});
    const data::Dataset train = train_full.subset({order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end()});

    InitOptions init;
    init.mean_init = c.mean_init;
    init.init_sigma = c.init_sigma;
    init.seed = seed;
    Network net(uci_network_spec(c, v, train.input_dim()), init);
    train::TrainConfig tc = c.train;
    tc.seed = seed;
    train::FitOptions opts;
    opts.run_id = fmt::format("uci-{}-{}-{}", dataset, to_string(v), seed);
    opts.validation = &val;
    train::RunLog log = train::fit(net, train, tc, opts);

    const auto pred = predictive::predict(net, test.features, c.predictive_samples, seed + 7919);
    const double scale = test.target_stds.front();
    UciRun run;
    run.dataset = dataset;
    run.variant = v;
    run.seed = seed;
    run.rmse = predictive::rmse(pred.mean, test.targets) * scale;
    run.loglik = predictive::test_loglik(pred.samples, test.targets, c.obs_sigma) - std::log(scale);
    run.epochs_run = log.rows.size();
    for (const DenseLayer& layer : net.layers()) {
        if (layer.size_adapter()) run.decoded_sizes.push_back(decode_size(*layer.size_adapter()));
    }
    run.kept_layers = decode_depth(net).kept_count();

    if (!out_dir.empty()) {
        const std::string dir = (fs::path(seed_dir(out_dir, seed)) / dataset / to_string(v)).string();
        log.metadata["config_hash"] = c.meta.hash;
        log.metadata["version"] = config::kVersion;
        log.metadata["seed"] = seed;
        write_text((fs::path(dir) / "runlog.jsonl").string(), log.to_jsonl());
        write_text((fs::path(dir) / "architecture.json").string(), stamped(describe(net), c.meta, seed).dump(2) + "\n");
        nlohmann::json summary{{"config_hash", c.meta.hash}, {"version", config::kVersion}, {"seed", seed},
                               {"dataset", dataset},         {"variant", to_string(v)},      {"rmse", run.rmse},
                               {"test_loglik", run.loglik},  {"epochs_run", run.epochs_run},
                               {"decoded_sizes", run.decoded_sizes}, {"kept_layers", run.kept_layers}};
        write_text((fs::path(dir) / "summary.json").string(), summary.dump(2) + "\n");
    }
    return run;
}

std::vector<UciSummary> summarize_uci(const std::vector<UciRun>& runs) {
    std::vector<UciSummary> out;
    std::vector<std::string> datasets;
    for (const UciRun& r : runs) {
        if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) datasets.push_back(r.dataset);
    }
    for (const std::string& d : datasets) {
        for (UciVariant v : kUciVariants) {
            std::vector<double> rm, ll;
            for (const UciRun& r : runs) {
                if (r.dataset == d && r.variant == v) {
                    rm.push_back(r.rmse);
                    ll.push_back(r.loglik);
                }
            }
            if (rm.empty()) continue;
            out.push_back({d, v, mean_of(rm), std_of(rm), mean_of(ll), std_of(ll), rm.size()});
        }
    }
    return out;
}

std::vector<UciSummary> run_uci(const config::UciConfig& c, const std::string& out_dir, std::vector<UciRun>* runs_out) {
    struct Job {
        std::string dataset;
        UciVariant variant;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const std::string& d : c.datasets) {
        for (UciVariant v : kUciVariants) {
            for (std::uint64_t s : c.meta.seeds) jobs.push_back({d, v, s});
        }
    }
    std::vector<UciRun> runs(jobs.size());
    std::vector<std::uint64_t> index(jobs.size());
    std::iota(index.begin(), index.end(), 0);
    for_each_seed(index, [&](std::size_t i) { runs[i] = run_uci_single(c, jobs[i].dataset, jobs[i].variant, jobs[i].seed, out_dir); });

    std::vector<UciSummary> table = summarize_uci(runs);
    if (!out_dir.empty()) {
        const std::uint64_t first_seed = c.meta.seeds.empty() ? 0 : c.meta.seeds.front();
        OutFile r((fs::path(out_dir) / "runs.csv").string());
        r.line("{}", artifact_header(c.meta, first_seed));
        r.line("dataset,variant,seed,rmse,test_loglik,epochs_run,decoded_sizes,kept_layers");
        for (const UciRun& u : runs) {
            r.line("{},{},{},{},{},{},{},{}", u.dataset, to_string(u.variant), u.seed, u.rmse, u.loglik, u.epochs_run,
                   fmt::join(u.decoded_sizes, " "), u.kept_layers);
        }
        OutFile t((fs::path(out_dir) / "table.csv").string());
        t.line("{}", artifact_header(c.meta, first_seed));
        t.line("dataset,variant,n_seeds,rmse_mean,rmse_std,loglik_mean,loglik_std");
        for (const UciSummary& s : table) {
            t.line("{},{},{},{},{},{},{}", s.dataset, to_string(s.variant), s.n, s.rmse_mean, s.rmse_std, s.loglik_mean,
                   s.loglik_std);
        }
    }
    if (runs_out) *runs_out = std::move(runs);
    return table;
}

// --- bandit -----------------------------------------------------------------------

namespace {

void write_bandit_run(const config::BanditConfig& c, const bandit::BanditRun& run, std::uint64_t seed,
                      const std::string& out_dir) {
    if (out_dir.empty()) return;
    OutFile f((fs::path(seed_dir(out_dir, seed)) / fmt::format("regret_{}.csv", bandit::to_string(run.config.kind))).string());
    f.line("{}", artifact_header(c.meta, seed));
    f.line("step,cumulative_regret,reward_rmse,action,context_id");
    for (const auto& s : run.steps) {
        f.line("{},{},{},{},{}", s.step, s.cumulative_regret, s.reward_rmse, bandit::to_string(s.action), s.context_id);
    }
}

BanditSummaryRow summarize_run(const bandit::BanditRun& run, std::uint64_t seed) {
    BanditSummaryRow row;
    row.agent = run.config.kind;
    row.seed = seed;
    row.hidden = run.config.hidden;
    row.divergences = run.divergences;
    if (!run.steps.empty()) {
        row.final_regret = run.steps.back().cumulative_regret;
        row.final_reward_rmse = run.steps.back().reward_rmse;
        row.tail_slope = run.steps.size() >= 10 ? bandit::tail_regret_slope(run.steps) : 0.0;
    }
    return row;
}

}  // namespace

std::vector<BanditSummaryRow> run_bandit_seed(const config::BanditConfig& c, const data::MushroomData& data,
                                              std::uint64_t seed, std::size_t interactions,
                                              const std::string& out_dir) {
    std::vector<bandit::AgentKind> order;
    const bool want_warm = std::find(c.agents.begin(), c.agents.end(), bandit::AgentKind::thompson_warmstart) != c.agents.end();
    for (bandit::AgentKind k : c.agents) {
        if (k != bandit::AgentKind::thompson_warmstart) order.push_back(k);
    }
    const bool has_adaptive =
        std::find(order.begin(), order.end(), bandit::AgentKind::thompson_adaptive) != order.end();
    if (want_warm && !has_adaptive) order.push_back(bandit::AgentKind::thompson_adaptive);

    std::vector<BanditSummaryRow> rows;
    std::optional<Network> adaptive_net;
    for (bandit::AgentKind k : order) {
        bandit::AgentConfig ac = c.agent;
        ac.kind = k;
        bandit::BanditRun run = bandit::run_bandit(ac, data, interactions, seed);
        write_bandit_run(c, run, seed, out_dir);
        if (k == bandit::AgentKind::thompson_adaptive) adaptive_net = run.network;
        const bool listed = std::find(c.agents.begin(), c.agents.end(), k) != c.agents.end();
        if (listed) rows.push_back(summarize_run(run, seed));
    }
    if (want_warm) {
        bandit::AgentConfig ac = c.agent;
        ac.kind = bandit::AgentKind::thompson_adaptive;
        const bandit::AgentConfig warm = adaptive_net ? bandit::warmstart_from(*adaptive_net, ac)
                                                      : bandit::warmstart_from(Network(bandit::reward_network_spec(ac, data.contexts.cols()), {}), ac);
        bandit::BanditRun run = bandit::run_bandit(warm, data, interactions, seed);
        write_bandit_run(c, run, seed, out_dir);
        rows.push_back(summarize_run(run, seed));
    }
    return rows;
}

std::vector<BanditSummaryRow> run_bandit_suite(const config::BanditConfig& c, std::size_t interactions,
                                               const std::string& out_dir) {
    const data::MushroomData data = data::encode_mushroom(c.mushroom_path);
    std::vector<std::vector<BanditSummaryRow>> per_seed(c.meta.seeds.size());
    for_each_seed(c.meta.seeds, [&](std::size_t i) {
        per_seed[i] = run_bandit_seed(c, data, c.meta.seeds[i], interactions, out_dir);
    });
    std::vector<BanditSummaryRow> rows;
    for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
    if (!out_dir.empty()) {
        const std::uint64_t first_seed = c.meta.seeds.empty() ? 0 : c.meta.seeds.front();
        OutFile f((fs::path(out_dir) / "summary.csv").string());
        f.line("{}", artifact_header(c.meta, first_seed));
        f.line("agent,seed,interactions,final_cumulative_regret,final_reward_rmse,tail_slope,divergences,hidden");
        for (const auto& r : rows) {
            f.line("{},{},{},{},{},{},{},{}", bandit::to_string(r.agent), r.seed, interactions, r.final_regret,
                   r.final_reward_rmse, r.tail_slope, r.divergences, fmt::join(r.hidden, " "));
        }
    }
    return rows;
}

}  // namespace bayesarch::experiments
