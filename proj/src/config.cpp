// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace bayesarch::config {

namespace pt = boost::property_tree;

namespace {

std::string join_problems(const std::vector<std::string>& problems) {
    std::string msg = fmt::format("invalid config ({} problem{}):", problems.size(), problems.size() == 1 ? "" : "s");
    for (const auto& p : problems) msg += "\n  " + p;
    return msg;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
std::optional<T> parse_number(const std::string& s) {
    T v{};
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return v;
}

// Tracks which keys were read so that leftovers can be reported as unknown.
class Reader {
public:
    explicit Reader(const pt::ptree& tree) : tree_(tree) {}

    std::optional<std::string> raw(const std::string& section, const std::string& key, bool required) {
        used_.insert(section + "." + key);
        const auto sec = tree_.get_child_optional(section);
        if (sec) {
            if (auto v = sec->get_optional<std::string>(pt::ptree::path_type(key, '\0'))) return trim(*v);
        }
        if (required) problems.push_back(fmt::format("[{}] missing key '{}'", section, key));
        return std::nullopt;
    }

    template <typename T>
    std::optional<T> number(const std::string& section, const std::string& key, bool required = true) {
        auto s = raw(section, key, required);
        if (!s) return std::nullopt;
        auto v = parse_number<T>(*s);
        if (!v) problems.push_back(fmt::format("[{}] {} = '{}' is not a valid number", section, key, *s));
        return v;
    }

    double real(const std::string& section, const std::string& key, double fallback = 0.0) {
        return number<double>(section, key).value_or(fallback);
    }
    std::size_t count(const std::string& section, const std::string& key, std::size_t fallback = 0) {
        return number<std::size_t>(section, key).value_or(fallback);
    }
    std::string text(const std::string& section, const std::string& key) { return raw(section, key, true).value_or(""); }

    double positive(const std::string& section, const std::string& key) {
        auto v = number<double>(section, key);
        if (v && !(*v > 0.0)) problems.push_back(fmt::format("[{}] {} must be > 0, got {}", section, key, *v));
        return v.value_or(1.0);
    }

    void check_unknown() {
        for (const auto& [section, keys] : tree_) {
            if (keys.empty() && !keys.data().empty()) {
                problems.push_back(fmt::format("key '{}' outside any section", section));
                continue;
            }
            for (const auto& [key, value] : keys) {
                if (!used_.contains(section + "." + key)) problems.push_back(fmt::format("[{}] unknown key '{}'", section, key));
            }
        }
    }

    std::vector<std::string> problems;

private:
    const pt::ptree& tree_;
    std::set<std::string> used_;
};

WeightMode read_weight_mode(Reader& r, const std::string& section) {
    const std::string s = r.text(section, "weight_mode");
    if (s == "point") return WeightMode::point;
    if (s == "gaussian") return WeightMode::gaussian;
    if (!s.empty()) r.problems.push_back(fmt::format("[{}] weight_mode must be point or gaussian, got '{}'", section, s));
    return WeightMode::point;
}

SizeAdapterSpec read_size_prior(Reader& r) {
    return {r.real("size_prior", "mu"), r.positive("size_prior", "sigma"), r.positive("size_prior", "temperature")};
}

SkipAdapterSpec read_skip_prior(Reader& r) {
    const double p = r.real("skip_prior", "prob", 0.5);
    if (!(p > 0.0 && p < 1.0)) r.problems.push_back(fmt::format("[skip_prior] prob must be in (0, 1), got {}", p));
    return {p, r.positive("skip_prior", "temperature")};
}

train::TrainConfig read_train(Reader& r, bool early_stopping) {
    train::TrainConfig t;
    t.epochs = r.count("train", "epochs");
    t.batch_size = r.count("train", "batch_size", 1);
    t.learning_rate = r.positive("train", "learning_rate");
    t.arch_learning_rate = r.number<double>("train", "arch_learning_rate", false);
    t.beta1 = r.real("train", "beta1", 0.9);
    t.beta2 = r.real("train", "beta2", 0.999);
    t.eps = r.positive("train", "eps");
    t.kl_scale = r.real("train", "kl_scale", 1.0);
    if (early_stopping) {
        t.early_stop_patience = r.count("train", "early_stop_patience");
        t.validation_samples = r.count("train", "validation_samples", 1);
    }
    try {
        t.validate();
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        r.problems.push_back("[train] " + msg.substr(msg.find(':') + 1));
    }
    return t;
}

std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

}  // namespace

ConfigError::ConfigError(const std::vector<std::string>& problems)
    : std::runtime_error(join_problems(problems)), problems_(problems) {}

std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const std::string& item : split_list(text)) {
        if (auto dash = item.find('-'); dash != std::string::npos && dash > 0) {
            auto lo = parse_number<std::uint64_t>(trim(item.substr(0, dash)));
            auto hi = parse_number<std::uint64_t>(trim(item.substr(dash + 1)));
            if (!lo || !hi || *hi < *lo) throw std::invalid_argument(fmt::format("bad seed range '{}'", item));
            for (std::uint64_t s = *lo; s <= *hi; ++s) seeds.push_back(s);
            continue;
        }
        auto v = parse_number<std::uint64_t>(item);
        if (!v) throw std::invalid_argument(fmt::format("bad seed '{}'", item));
        seeds.push_back(*v);
    }
    if (seeds.empty()) throw std::invalid_argument("empty seed list");
    return seeds;
}

ExperimentConfig parse_config(const std::string& text, const std::string& base_dir) {
    pt::ptree tree;
    try {
        std::istringstream in(text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError({fmt::format("line {}: {}", e.line(), e.message())});
    }
    Reader r(tree);
    ExperimentMeta meta;
    meta.kind = r.text("experiment", "kind");
    meta.name = r.text("experiment", "name");
    const std::string seeds = r.text("experiment", "seeds");
    if (!seeds.empty()) {
        try {
            meta.seeds = parse_seed_list(seeds);
        } catch (const std::invalid_argument& e) {
            r.problems.push_back(fmt::format("[experiment] seeds: {}", e.what()));
        }
    }
    meta.source_text = text;
    meta.hash = fnv1a_hex(text);

    ExperimentConfig out;
    if (meta.kind == "toy-size") {
        ToySizeConfig c;
        c.n_points = r.count("data", "n_points", 1);
        c.noise_sigma = r.real("data", "noise_sigma");
        c.max_units = r.count("network", "max_units", 1);
        c.weight_mode = read_weight_mode(r, "network");
        c.obs_sigma = r.positive("network", "obs_sigma");
        c.weight_prior_sigma = r.positive("network", "weight_prior_sigma");
        c.init_sigma = r.positive("network", "init_sigma");
        c.size_prior = read_size_prior(r);
        c.train = read_train(r, false);
        c.snapshot_grid = r.count("output", "snapshot_grid", 2);
        c.meta = meta;
        out = c;
    } else if (meta.kind == "toy-depth") {
        ToyDepthConfig c;
        c.n_points = r.count("data", "n_points", 1);
        c.noise_sigma = r.real("data", "noise_sigma");
        c.width = r.count("network", "width", 1);
        c.skip_layers = r.count("network", "skip_layers");
        c.weight_mode = read_weight_mode(r, "network");
        c.obs_sigma = r.positive("network", "obs_sigma");
        c.weight_prior_sigma = r.positive("network", "weight_prior_sigma");
        c.init_sigma = r.positive("network", "init_sigma");
        c.skip_prior = read_skip_prior(r);
        c.train = read_train(r, false);
        c.meta = meta;
        out = c;
    } else if (meta.kind == "uci") {
        UciConfig c;
        c.data_dir = resolve(base_dir, r.text("data", "dir"));
        c.datasets = split_list(r.text("data", "datasets"));
        c.test_fraction = r.real("data", "test_fraction", 0.1);
        c.validation_fraction = r.real("data", "validation_fraction", 0.1);
        for (const auto& [name, v] : {std::pair{"test_fraction", c.test_fraction}, {"validation_fraction", c.validation_fraction}}) {
            if (!(v > 0.0 && v < 1.0)) r.problems.push_back(fmt::format("[data] {} must be in (0, 1), got {}", name, v));
        }
        c.width = r.count("network", "width", 1);
        c.deep_layers = r.count("network", "deep_layers", 2);
        c.obs_sigma = r.positive("network", "obs_sigma");
        c.weight_prior_sigma = r.positive("network", "weight_prior_sigma");
        c.init_sigma = r.positive("network", "init_sigma");
        const std::string init = r.text("network", "mean_init");
        if (init == "prior") {
            c.mean_init = MeanInit::prior;
        } else if (init == "fan_in") {
            c.mean_init = MeanInit::fan_in;
        } else if (!init.empty()) {
            r.problems.push_back(fmt::format("[network] mean_init must be prior or fan_in, got '{}'", init));
        }
        c.size_prior = read_size_prior(r);
        c.skip_prior = read_skip_prior(r);
        c.train = read_train(r, true);
        c.predictive_samples = r.count("eval", "predictive_samples", 1);
        c.meta = meta;
        out = c;
    } else if (meta.kind == "bandit") {
        BanditConfig c;
        c.mushroom_path = resolve(base_dir, r.text("data", "mushroom"));
        c.interactions = r.count("bandit", "interactions");
        c.full_scale_interactions = r.count("bandit", "full_scale_interactions");
        for (const std::string& a : split_list(r.text("bandit", "agents"))) {
            try {
                c.agents.push_back(bandit::agent_kind_from_string(a));
            } catch (const std::invalid_argument& e) {
                r.problems.push_back(fmt::format("[bandit] agents: {}", e.what()));
            }
        }
        bandit::AgentConfig& a = c.agent;
        a.epsilon = r.real("bandit", "epsilon");
        a.hidden.clear();
        for (const std::string& h : split_list(r.text("network", "hidden"))) {
            if (auto v = parse_number<std::size_t>(h)) {
                a.hidden.push_back(*v);
            } else {
                r.problems.push_back(fmt::format("[network] hidden: '{}' is not a layer size", h));
            }
        }
        a.weight_prior_sigma = r.positive("network", "weight_prior_sigma");
        a.init_sigma = r.positive("network", "init_sigma");
        a.obs_sigma = r.positive("network", "obs_sigma");
        a.size_prior = read_size_prior(r);
        a.learning_rate = r.positive("train", "learning_rate");
        a.kl_scale = r.real("train", "kl_scale", 1.0);
        a.arch_learning_rate = r.number<double>("train", "arch_learning_rate", false);
        a.batch_size = r.count("train", "batch_size", 1);
        a.buffer_capacity = r.count("bandit", "buffer_capacity", 1);
        a.reward_scale = r.positive("bandit", "reward_scale");
        try {
            a.validate();
        } catch (const std::invalid_argument& e) {
            r.problems.push_back(e.what());
        }
        c.meta = meta;
        out = c;
    } else if (!meta.kind.empty()) {
        r.problems.push_back(
            fmt::format("[experiment] kind must be toy-size, toy-depth, uci or bandit, got '{}'", meta.kind));
    }
    r.check_unknown();
    if (!r.problems.empty()) throw ConfigError(r.problems);
    return out;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError({fmt::format("cannot open config '{}'", path)});
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string dir = std::filesystem::path(path).parent_path().string();
    return parse_config(buf.str(), dir.empty() ? "." : dir);
}

const ExperimentMeta& meta_of(const ExperimentConfig& config) {
    return std::visit([](const auto& c) -> const ExperimentMeta& { return c.meta; }, config);
}

ExperimentMeta& meta_of(ExperimentConfig& config) {
    return std::visit([](auto& c) -> ExperimentMeta& { return c.meta; }, config);
}

}  // namespace bayesarch::config
