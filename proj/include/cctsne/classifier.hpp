#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cctsne/core_model.hpp"

namespace cctsne {

/// One-hidden-layer perceptron: ReLU hidden units, softmax output.
///
/// Inputs are z-scored with statistics frozen at the first (cold) training
/// call, so incremental updates see the same input scale.
struct MlpModel {
    std::size_t d = 0;
    std::size_t hidden = 0;
    std::size_t m = 0;
    std::vector<double> input_mean;   // d
    std::vector<double> input_scale;  // d, 1 / stddev (1 for constant columns)
    Matrix W1;                        // d x hidden
    std::vector<double> b1;           // hidden
    Matrix W2;                        // hidden x m
    std::vector<double> b2;           // m
    std::vector<std::string> class_names;

    /// Model whose weights are all zero (uniform predictions).
    static MlpModel zeros(std::size_t d, std::size_t hidden, std::size_t m);

    bool all_finite() const;
};

struct TrainConfig {
    std::size_t hidden = 64;
    int epochs = 200;
    double learning_rate = 0.05;
    std::size_t batch = 16;
    std::uint64_t seed = 1;
    /// Class count; 0 means max(label) + 1. Ignored when continuing from a model.
    std::size_t num_classes = 0;
    std::vector<std::string> class_names;
};

/// Minibatch SGD on softmax cross-entropy. With `init` training continues
/// from the given parameters instead of a fresh seeded initialization.
MlpModel train(const Matrix& X, std::span<const int> labels, const TrainConfig& config,
               const std::optional<MlpModel>& init = std::nullopt);

/// Pre-softmax class scores, n x m.
Matrix decision_scores(const MlpModel& model, const Matrix& X);

ClassProbabilityMatrix predict_proba(const MlpModel& model, const Matrix& X);

std::vector<int> predict(const MlpModel& model, const Matrix& X);

/// Fraction of argmax predictions equal to `labels`. Empty input -> EmptySet.
double accuracy(const MlpModel& model, const Matrix& X, std::span<const int> labels);

/// Structure weight from held-out accuracy: acc^2.
inline double alpha_for(double test_accuracy) { return test_accuracy * test_accuracy; }

/// Text serialization with a versioned header ("cctsne-mlp 1").
void save_model(std::ostream& out, const MlpModel& model);
MlpModel load_model(std::istream& in);
std::string model_to_string(const MlpModel& model);
MlpModel model_from_string(const std::string& text);

}  // namespace cctsne
