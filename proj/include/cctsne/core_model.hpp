#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cctsne/error.hpp"
#include "cctsne/matrix.hpp"

namespace cctsne {

inline constexpr double kRowStochasticTolerance = 1e-6;

/// n x d instance features. Always n >= 2, d >= 1 and finite.
class FeatureMatrix {
public:
    static FeatureMatrix from(Matrix values);

    const Matrix& values() const noexcept { return values_; }
    std::size_t n() const noexcept { return values_.rows(); }
    std::size_t d() const noexcept { return values_.cols(); }

private:
    explicit FeatureMatrix(Matrix values) : values_(std::move(values)) {}
    Matrix values_;
};

/// n x m class probabilities; rows are renormalized to sum exactly to one
/// after passing the 1e-6 tolerance check. Class columns stand in for the
/// unit vectors of the probability simplex.
///
/// The type itself admits m == 1 (the degenerate single-landmark system is
/// useful for analysis); `validate_inputs` and the file loaders require m >= 2.
class ClassProbabilityMatrix {
public:
    static ClassProbabilityMatrix from(Matrix values, std::vector<std::string> class_names = {});
    static ClassProbabilityMatrix uniform(std::size_t n, std::vector<std::string> class_names);

    const Matrix& values() const noexcept { return values_; }
    std::size_t n() const noexcept { return values_.rows(); }
    std::size_t m() const noexcept { return values_.cols(); }
    const std::vector<std::string>& class_names() const noexcept { return names_; }

    /// Highest-probability class per row, ties to the lowest class index.
    std::vector<int> argmax_labels() const;

private:
    ClassProbabilityMatrix(Matrix values, std::vector<std::string> names)
        : values_(std::move(values)), names_(std::move(names)) {}
    Matrix values_;
    std::vector<std::string> names_;
};

/// 2D positions of the data points (Y) and class landmarks (V) together with
/// the momentum buffers of the optimizer.
struct EmbeddingState {
    Matrix Y;
    Matrix V;
    int iteration = 0;
    Matrix velocity_Y;
    Matrix velocity_V;

    static EmbeddingState from_positions(Matrix Y, Matrix V);

    std::size_t n() const noexcept { return Y.rows(); }
    std::size_t m() const noexcept { return V.rows(); }
    bool all_finite() const;
};

struct Hyperparams {
    double alpha = 0.5;
    double lambda = 0.25;
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 200.0;
    int momentum_switch_iter = 250;
    double momentum_early = 0.5;
    double momentum_late = 0.8;
    double early_exaggeration_factor = 4.0;
    int early_exaggeration_iters = 100;
    std::uint64_t seed = 42;

    double momentum(int iteration) const {
        return iteration < momentum_switch_iter ? momentum_early : momentum_late;
    }

    /// Throws InvalidArgument naming the offending field. `n` is the instance
    /// count the parameters will be used with (perplexity must stay below it).
    void validate(std::size_t n) const;
};

struct ValidatedInputs {
    FeatureMatrix features;
    ClassProbabilityMatrix probabilities;
};

ValidatedInputs validate_inputs(const Matrix& X, const Matrix& T, std::vector<std::string> class_names = {});

/// The single seeded generator every stochastic step draws from.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    std::size_t index(std::size_t bound) {
        return std::uniform_int_distribution<std::size_t>(0, bound - 1)(engine_);
    }
    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
};

/// rows x 2 draws from N(0, 1e-4 I), row by row, x before y.
Matrix gaussian_init(Rng& rng, std::size_t rows);
Matrix seeded_gaussian_init(std::size_t rows, std::uint64_t seed);

}  // namespace cctsne
