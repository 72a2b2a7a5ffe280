#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cctsne/matrix.hpp"

namespace cctsne {

enum class Method { CcTsne, Baseline, Vanilla };

std::string to_string(Method method);
/// Accepts "cctsne", "baseline", "vanilla".
Method parse_method(std::string_view name);

struct MetricsReport {
    Method method = Method::CcTsne;
    double alpha = 0.0;
    std::uint64_t seed = 0;
    double trustworthiness = 0.0;
    double continuity = 0.0;
    double ccm = 0.0;
    int k = 7;
    std::string source;  // embedding file or run label
};

/// Exact k nearest neighbours per row (self excluded), ordered by distance
/// with ties going to the lower index. Flat n x k, row-major.
struct NeighborIndices {
    std::size_t k = 0;
    std::vector<std::size_t> indices;

    std::span<const std::size_t> row(std::size_t i) const { return {indices.data() + i * k, k}; }
};

NeighborIndices knn_indices(const Matrix& points, std::size_t k);

/// Neighbourhood trustworthiness of `low` with respect to `high`:
///   1 - 2 / (n k (2n - 3k - 1)) * sum_i sum_{j in U_k(i)} (r(i, j) - k)
/// where U_k(i) are the low-space neighbours of i that are not among its k
/// high-space neighbours and r(i, j) is the 1-based high-space rank.
/// Requires 1 <= k < n / 2.
double trustworthiness(const Matrix& high, const Matrix& low, std::size_t k = 7);

/// trustworthiness with the two spaces swapped.
double continuity(const Matrix& high, const Matrix& low, std::size_t k = 7);

/// Fraction of points strictly closer to another class centroid than to
/// their own. Needs at least two distinct labels.
double ccm(const Matrix& Y, std::span<const int> labels);

MetricsReport evaluate(const Matrix& features, const Matrix& Y, std::span<const int> labels, Method method,
                       double alpha, std::uint64_t seed, std::size_t k = 7);

/// method,alpha,seed,k,trustworthiness,continuity,ccm,source
void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> rows);

}  // namespace cctsne
