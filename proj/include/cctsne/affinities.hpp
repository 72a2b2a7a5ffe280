#pragma once

#include <vector>

#include "cctsne/core_model.hpp"
#include "cctsne/matrix.hpp"

namespace cctsne {

inline constexpr double kProbabilityFloor = 1e-12;

/// Symmetric n x n joint distribution over instance pairs: non-negative,
/// zero diagonal, total mass one.
class PairwiseAffinityMatrix {
public:
    /// Checks the invariants (symmetry and mass within 1e-9).
    static PairwiseAffinityMatrix from(Matrix values);

    const Matrix& values() const noexcept { return values_; }
    std::size_t n() const noexcept { return values_.rows(); }

    /// (1 - alpha) a + alpha b, entrywise. Both operands must share n.
    static PairwiseAffinityMatrix convex_combination(const PairwiseAffinityMatrix& a, const PairwiseAffinityMatrix& b,
                                                     double alpha);

private:
    friend PairwiseAffinityMatrix symmetrize(Matrix conditional);
    explicit PairwiseAffinityMatrix(Matrix values) : values_(std::move(values)) {}
    Matrix values_;
};

/// Per-point Gaussian bandwidths.
struct BandwidthVector {
    std::vector<double> sigma;
};

struct ConditionalAffinities {
    Matrix conditional;  // row i holds p_{j|i}
    BandwidthVector bandwidths;
};

/// Entry (i, j) = ||x_i - x_j||^2 over the rows of `points`.
Matrix pairwise_squared_distances(const Matrix& points);

/// Gaussian conditionals whose per-row perplexity matches `perplexity`.
/// Precision is binary-searched on beta = 1 / (2 sigma^2): the bracket starts
/// at beta = 1 and grows or shrinks geometrically (at most 64 times), then at
/// most 50 bisection steps bring log2-entropy within 1e-5 of log2 perplexity.
/// Entries are floored at 1e-12 before the row is normalized.
ConditionalAffinities calibrate_conditional(const Matrix& sq_distances, double perplexity);

/// p_ij = (p_{j|i} + p_{i|j}) / (2n). Works in place on the argument.
PairwiseAffinityMatrix symmetrize(Matrix conditional);

/// Instance-to-class affinities: the class probabilities themselves.
Matrix class_affinities(const ClassProbabilityMatrix& T);

/// distances -> calibration -> symmetrization for a full feature matrix.
PairwiseAffinityMatrix data_affinities(const Matrix& points, double perplexity);

}  // namespace cctsne
