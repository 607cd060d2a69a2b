// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <optional>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace bayesarch::data {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\"");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\"");
    return s.substr(b, e - b + 1);
}

bool is_missing(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "?";
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
    return v;
}

Tensor standardize(const Tensor& m, const std::vector<double>& means, const std::vector<double>& stds) {
    Tensor out = m;
    const std::size_t n = m.rows();
    const std::size_t d = m.cols();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) out.at(r, c) = (m.at(r, c) - means[c]) / stds[c];
    }
    return out;
}

void apply_stats(Dataset& ds) {
    if (ds.standardized) {
        column_stats(ds.raw_features, ds.feature_means, ds.feature_stds);
        column_stats(ds.raw_targets, ds.target_means, ds.target_stds);
        for (std::size_t c = 0; c < ds.target_stds.size(); ++c) {
            if (!(ds.target_stds[c] > 0.0)) {
                throw std::invalid_argument(fmt::format("dataset {}: target column {} is constant", ds.name, c));
            }
        }
        // A feature that is constant on this part only keeps unit scale.
        for (double& s : ds.feature_stds) {
            if (!(s > 0.0)) s = 1.0;
        }
        ds.features = standardize(ds.raw_features, ds.feature_means, ds.feature_stds);
        ds.targets = standardize(ds.raw_targets, ds.target_means, ds.target_stds);
    } else {
        ds.feature_means.assign(ds.raw_features.cols(), 0.0);
        ds.feature_stds.assign(ds.raw_features.cols(), 1.0);
        ds.target_means.assign(ds.raw_targets.cols(), 0.0);
        ds.target_stds.assign(ds.raw_targets.cols(), 1.0);
        ds.features = ds.raw_features;
        ds.targets = ds.raw_targets;
    }
}

Tensor select_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
    const std::size_t d = m.cols();
    Tensor out(Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) throw std::out_of_range(fmt::format("row {} out of range {}", rows[i], m.rows()));
        std::copy_n(m.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d,
                    out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
}

}  // namespace

void column_stats(const Tensor& m, std::vector<double>& means, std::vector<double>& stds) {
    const std::size_t n = m.rows();
    const std::size_t d = m.cols();
    means.assign(d, 0.0);
    stds.assign(d, 0.0);
    if (n == 0) return;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) means[c] += m.at(r, c);
    }
    for (double& v : means) v /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
            const double e = m.at(r, c) - means[c];
            stds[c] += e * e;
        }
    }
    for (double& v : stds) v = std::sqrt(v / static_cast<double>(n));
}

Tensor Dataset::destandardize_targets(const Tensor& t) const {
    Tensor out = t;
    const std::size_t cols = target_means.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t c = i % cols;
        out[i] = out[i] * target_stds[c] + target_means[c];
    }
    return out;
}

Tensor Dataset::destandardize_features(const Tensor& x) const {
    Tensor out = x;
    const std::size_t cols = feature_means.size();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::size_t c = i % cols;
        out[i] = out[i] * feature_stds[c] + feature_means[c];
    }
    return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Dataset out = *this;
    out.features = select_rows(features, rows);
    out.targets = select_rows(targets, rows);
    out.raw_features = select_rows(raw_features, rows);
    out.raw_targets = select_rows(raw_targets, rows);
    return out;
}

Dataset toy_periodic(std::size_t n, double noise_sigma, std::uint64_t seed, ToyOptions options) {
    if (n < 1) throw std::invalid_argument("toy_periodic: n must be >= 1");
    if (noise_sigma < 0.0) throw std::invalid_argument("toy_periodic: noise_sigma must be >= 0");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> ux(options.x_lo, options.x_hi);
    std::normal_distribution<double> eps(0.0, 1.0);
    Dataset ds;
    ds.name = "toy_periodic";
    ds.seed = seed;
    ds.raw_features = Tensor(Shape{n, 1});
    ds.raw_targets = Tensor(Shape{n, 1});
    for (std::size_t i = 0; i < n; ++i) {
        const double x = ux(rng);
        const double e = eps(rng);
        ds.raw_features[i] = x;
        ds.raw_targets[i] = options.amplitude * std::sin(options.omega * x) + noise_sigma * e;
    }
    ds.feature_names = {"x"};
    ds.target_name = "y";
    apply_stats(ds);
    return ds;
}

Dataset load_csv(const std::string& path, const std::string& target_column, bool standardize_data) {
    std::ifstream in(path);
    if (!in) throw CsvError(fmt::format("cannot open '{}'", path));
    std::string line;
    if (!std::getline(in, line)) throw CsvError(fmt::format("'{}' is empty", path));
    std::vector<std::string> header = split_fields(line);
    for (auto& h : header) h = trim(h);
    const std::size_t cols = header.size();
    if (cols < 2) throw CsvError(fmt::format("'{}': need at least one feature and one target column", path));

    std::size_t target = cols - 1;
    if (!target_column.empty()) {
        auto it = std::find(header.begin(), header.end(), target_column);
        if (it == header.end()) throw CsvError(fmt::format("'{}': no column named '{}'", path, target_column));
        target = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> missing_rows;
    std::vector<std::string> problems;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != cols) {
            problems.push_back(fmt::format("row {}: {} fields, header has {}", row, fields.size(), cols));
            continue;
        }
        std::vector<double> values(cols);
        bool missing = false;
        for (std::size_t c = 0; c < cols; ++c) {
            const std::string f = trim(fields[c]);
            if (is_missing(f)) {
                missing = true;
                continue;
            }
            if (auto v = parse_double(f)) {
                values[c] = *v;
            } else {
                problems.push_back(fmt::format("row {}, column '{}': non-numeric value '{}'", row, header[c], f));
            }
        }
        if (missing) missing_rows.push_back(row);
        rows.push_back(std::move(values));
    }
    if (!missing_rows.empty()) {
        problems.push_back(fmt::format("missing values in rows {}", fmt::join(missing_rows, ", ")));
    }
    if (!problems.empty()) throw CsvError(fmt::format("'{}':\n  {}", path, fmt::join(problems, "\n  ")));
    if (rows.empty()) throw CsvError(fmt::format("'{}': no data rows", path));

    const std::size_t n = rows.size();
    std::vector<std::size_t> keep;
    Dataset ds;
    for (std::size_t c = 0; c < cols; ++c) {
        if (c == target) continue;
        const double first = rows.front()[c];
        const bool constant = std::all_of(rows.begin(), rows.end(), [&](const auto& r) { return r[c] == first; });
        if (constant) {
            ds.warnings.push_back(fmt::format("dropping constant column '{}'", header[c]));
            continue;
        }
        keep.push_back(c);
    }
    if (keep.empty()) throw CsvError(fmt::format("'{}': every feature column is constant", path));

    ds.name = path.substr(path.find_last_of('/') == std::string::npos ? 0 : path.find_last_of('/') + 1);
    if (auto dot = ds.name.rfind('.'); dot != std::string::npos) ds.name.resize(dot);
    ds.standardized = standardize_data;
    ds.raw_features = Tensor(Shape{n, keep.size()});
    ds.raw_targets = Tensor(Shape{n, 1});
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < keep.size(); ++j) ds.raw_features.at(r, j) = rows[r][keep[j]];
        ds.raw_targets[r] = rows[r][target];
    }
    for (std::size_t c : keep) ds.feature_names.push_back(header[c]);
    ds.target_name = header[target];
    apply_stats(ds);
    return ds;
}

MushroomData encode_mushroom(const std::string& path) {
    constexpr std::size_t kColumns = 23;
    std::ifstream in(path);
    if (!in) throw CsvError(fmt::format("cannot open '{}'", path));
    std::vector<std::vector<char>> rows;
    MushroomData out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields = split_fields(line);
        if (fields.size() != kColumns) {
            throw CsvError(fmt::format("'{}' line {}: expected {} columns, got {}", path, lineno, kColumns,
                                                 fields.size()));
        }
        std::vector<char> symbols;
        for (std::size_t c = 0; c < kColumns; ++c) {
            if (fields[c].size() != 1) {
                throw CsvError(
                    fmt::format("'{}' line {}, column {}: expected a single character, got '{}'", path, lineno, c, fields[c]));
            }
            symbols.push_back(fields[c][0]);
        }
        switch (symbols[0]) {
            case 'e': out.labels.push_back(MushroomLabel::edible); break;
            case 'p': out.labels.push_back(MushroomLabel::poisonous); break;
            default:
                throw CsvError(fmt::format("'{}' line {}: unknown label '{}'", path, lineno, symbols[0]));
        }
        rows.push_back(std::move(symbols));
    }
    if (rows.empty()) throw CsvError(fmt::format("'{}': no rows", path));

    std::vector<std::map<char, std::size_t>> index(kColumns - 1);
    for (const auto& r : rows) {
        for (std::size_t c = 1; c < kColumns; ++c) index[c - 1].emplace(r[c], 0);
    }
    std::size_t width = 0;
    out.categories.resize(kColumns - 1);
    std::vector<std::size_t> offsets(kColumns - 1);
    for (std::size_t c = 0; c + 1 < kColumns; ++c) {
        offsets[c] = width;
        std::size_t k = 0;
        for (auto& [symbol, pos] : index[c]) {
            pos = k++;
            out.categories[c].push_back(symbol);
        }
        width += k;
    }
    out.contexts = Tensor(Shape{rows.size(), width});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 1; c < kColumns; ++c) {
            out.contexts.at(r, offsets[c - 1] + index[c - 1].at(rows[r][c])) = 1.0;
        }
    }
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument(fmt::format("split: test fraction {} outside (0, 1)", test_fraction));
    }
    const std::size_t n = dataset.size();
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    if (n_test == 0 || n_test >= n) {
        throw std::invalid_argument(
            fmt::format("split: fraction {} of {} rows leaves an empty part ({} test rows)", test_fraction, n, n_test));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    // Fisher-Yates with explicit draws so the permutation only depends on the engine
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng() % (i + 1);
        std::swap(order[i], order[j]);
    }
    std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());

    Dataset train = dataset.subset(train_rows);
    Dataset test = dataset.subset(test_rows);
    train.seed = test.seed = seed;
    if (dataset.standardized) {
        apply_stats(train);
        test.feature_means = train.feature_means;
        test.feature_stds = train.feature_stds;
        test.target_means = train.target_means;
        test.target_stds = train.target_stds;
        test.features = standardize(test.raw_features, test.feature_means, test.feature_stds);
        test.targets = standardize(test.raw_targets, test.target_means, test.target_stds);
    }
    return {std::move(train), std::move(test)};
}

}  // namespace bayesarch::data
