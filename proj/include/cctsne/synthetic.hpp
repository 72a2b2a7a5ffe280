#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cctsne/classifier.hpp"
#include "cctsne/core_model.hpp"

namespace cctsne::synthetic {

/// Which generating cluster an instance came from.
enum class Cluster : int { A = 0, B = 1, C = 2, D1 = 3, D2 = 4, Noise = 5 };

inline constexpr std::size_t kDims = 10;
inline constexpr std::size_t kNoisePoints = 8;
inline constexpr std::size_t kInstances = 408;

/// Five unit-variance isotropic Gaussian clusters in 10D:
///   A (100, label 0) and B (100, label 1) with centers 1.5 apart,
///   C (100, label 2), D1 and D2 (50 each, label 3),
/// plus 8 noise points drawn from D1/D2 (4 each) but labelled 0.
/// Every center pair other than A/B is at least 8 apart.
struct Dataset {
    FeatureMatrix features;
    std::vector<int> labels;
    std::vector<Cluster> clusters;
};

/// Cluster centers, indexed by Cluster (A..D2).
std::vector<std::vector<double>> centers();

Dataset generate(std::uint64_t seed);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Per-class shuffled split; each class contributes round(fraction * count)
/// instances to the training side.
Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed);

Matrix select_rows(const Matrix& X, std::span<const std::size_t> rows);
std::vector<int> select(std::span<const int> values, std::span<const std::size_t> rows);

/// Generate, split 70/30, train the classifier on the training part and
/// predict probabilities for every instance.
struct Experiment {
    Dataset data;
    Split split;
    MlpModel model;
    ClassProbabilityMatrix probabilities;
    double test_accuracy = 0.0;
};

TrainConfig default_train_config(std::uint64_t seed);

Experiment run_experiment(std::uint64_t seed);
Experiment run_experiment(std::uint64_t seed, const TrainConfig& config);

}  // namespace cctsne::synthetic
