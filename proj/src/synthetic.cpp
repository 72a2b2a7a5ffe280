#include "cctsne/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace cctsne::synthetic {

namespace {

constexpr std::size_t kClusterSizes[] = {100, 100, 100, 50, 50};
constexpr int kClusterLabels[] = {0, 1, 2, 3, 3};

void append_point(std::vector<double>& values, const std::vector<double>& center, Rng& rng) {
    for (double c : center) {
        values.push_back(c + rng.normal());
    }
}

}  // namespace

std::vector<std::vector<double>> centers() {
    std::vector<std::vector<double>> out(5, std::vector<double>(kDims, 0.0));
    out[static_cast<int>(Cluster::B)][0] = 1.5;
    out[static_cast<int>(Cluster::C)][1] = 10.0;
    out[static_cast<int>(Cluster::D1)][2] = 10.0;
    out[static_cast<int>(Cluster::D2)][3] = 10.0;
    return out;
}

Dataset generate(std::uint64_t seed) {
    Rng rng(seed);
    const auto mu = centers();
    std::vector<double> values;
    values.reserve(kInstances * kDims);
    std::vector<int> labels;
    std::vector<Cluster> clusters;
    for (int c = 0; c < 5; ++c) {
        for (std::size_t k = 0; k < kClusterSizes[c]; ++k) {
            append_point(values, mu[c], rng);
            labels.push_back(kClusterLabels[c]);
            clusters.push_back(static_cast<Cluster>(c));
        }
    }
    for (std::size_t k = 0; k < kNoisePoints; ++k) {
        const int source = k % 2 == 0 ? static_cast<int>(Cluster::D1) : static_cast<int>(Cluster::D2);
        append_point(values, mu[source], rng);
        labels.push_back(0);
        clusters.push_back(Cluster::Noise);
    }
    return {FeatureMatrix::from(Matrix(labels.size(), kDims, std::move(values))), std::move(labels),
            std::move(clusters)};
}

Split stratified_split(std::span<const int> labels, double train_fraction, std::uint64_t seed) {
    Rng rng(seed);
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    Split split;
    for (auto& [label, members] : by_class) {
        std::shuffle(members.begin(), members.end(), rng.engine());
        const auto take = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(members.size())));
        split.train.insert(split.train.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
        split.test.insert(split.test.end(), members.begin() + static_cast<std::ptrdiff_t>(take), members.end());
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

Matrix select_rows(const Matrix& X, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), X.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::copy(X.row(rows[r]).begin(), X.row(rows[r]).end(), out.row(r).begin());
    }
    return out;
}

std::vector<int> select(std::span<const int> values, std::span<const std::size_t> rows) {
    std::vector<int> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out[r] = values[rows[r]];
    }
    return out;
}

TrainConfig default_train_config(std::uint64_t seed) {
    TrainConfig config;
    config.hidden = 64;
    config.epochs = 100;
    config.learning_rate = 0.02;
    config.batch = 16;
    config.seed = seed;
    config.num_classes = 4;
    config.class_names = {"0", "1", "2", "3"};
    return config;
}

Experiment run_experiment(std::uint64_t seed) { return run_experiment(seed, default_train_config(seed)); }

Experiment run_experiment(std::uint64_t seed, const TrainConfig& config) {
    Dataset data = generate(seed);
    Split split = stratified_split(data.labels, 0.7, seed);
    const Matrix& X = data.features.values();
    const Matrix train_X = select_rows(X, split.train);
    const auto train_y = select(data.labels, split.train);
    MlpModel model = train(train_X, train_y, config);
    const double acc = accuracy(model, select_rows(X, split.test), select(data.labels, split.test));
    ClassProbabilityMatrix probs = predict_proba(model, X);
    return {std::move(data), std::move(split), std::move(model), std::move(probs), acc};
}

}  // namespace cctsne::synthetic
