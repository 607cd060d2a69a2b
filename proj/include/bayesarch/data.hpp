// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bayesarch/tensor.hpp"

namespace bayesarch::data {

// Feature matrix (n x d) and target matrix (n x t). When standardized, the
// stored statistics map back to the original units; otherwise means are 0 and
// stds are 1. raw_* always hold the original values so that a split can
// recompute statistics on its training part.
struct Dataset {
    std::string name;
    std::uint64_t seed = 0;
    bool standardized = false;

    Tensor features;
    Tensor targets;
    Tensor raw_features;
    Tensor raw_targets;

    std::vector<double> feature_means, feature_stds;
    std::vector<double> target_means, target_stds;
    std::vector<std::string> feature_names;
    std::string target_name;

    // Non-fatal notes from loading (dropped constant columns, ...).
    std::vector<std::string> warnings;

    std::size_t size() const { return features.rows(); }
    std::size_t input_dim() const { return features.cols(); }
    std::size_t output_dim() const { return targets.cols(); }

    // Maps standardized targets (or predictions) back to original units.
    Tensor destandardize_targets(const Tensor& t) const;
    Tensor destandardize_features(const Tensor& x) const;

    // Rows selected by index, statistics unchanged.
    Dataset subset(const std::vector<std::size_t>& rows) const;
};

struct ToyOptions {
    double amplitude = 1.0;
    double omega = 2.0 * std::numbers::pi * 0.75;
    double x_lo = -2.0;
    double x_hi = 2.0;
};

// x ~ U(x_lo, x_hi), y = amplitude * sin(omega * x) + N(0, noise_sigma^2).
Dataset toy_periodic(std::size_t n = 2000, double noise_sigma = 0.1, std::uint64_t seed = 0, ToyOptions options = {});

// Every problem found in the file, reported together.
class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numeric CSV with a header row. target_column names the target; empty picks
// the last column. Constant feature columns are dropped with a warning.
Dataset load_csv(const std::string& path, const std::string& target_column, bool standardize);

enum class MushroomLabel { edible, poisonous };

struct MushroomData {
    Tensor contexts;  // n x total categories, one-hot per feature column
    std::vector<MushroomLabel> labels;
    std::vector<std::vector<char>> categories;  // observed symbols per feature column, sorted
    std::size_t feature_columns() const { return categories.size(); }
    std::size_t size() const { return labels.size(); }
};

// agaricus-lepiota.data layout: 23 comma-separated single characters, label
// (e/p) first. '?' is kept as a category of its own.
MushroomData encode_mushroom(const std::string& path);

// Seeded shuffle split; n_test = round(n * test_fraction). Standardization
// statistics (if the input was standardized) are recomputed on the train part
// and applied to both.
std::pair<Dataset, Dataset> split(const Dataset& dataset, double test_fraction, std::uint64_t seed);

// Column means and population standard deviations.
void column_stats(const Tensor& m, std::vector<double>& means, std::vector<double>& stds);

}  // namespace bayesarch::data
