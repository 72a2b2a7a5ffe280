#pragma once

#include <cstddef>

namespace cctsne::kernels {

// Inner loops of the O(n^2) passes. Every table implements the same
// contract; the scalar table is the reference the SIMD variants are tested
// against.
//
// Layouts: `xt` is feature-major (d rows of n values), 2D positions are
// split into separate x and y arrays.

/// out[j] = ||x_i - x_j||^2 for every j (out[i] = 0). Per-pair sums run over
/// features in order, so every variant is bit-identical to the scalar one.
using SqDistRowFn = void (*)(const double* xt, std::size_t n, std::size_t d, std::size_t i, double* out);

/// sum_{j != i} 1 / (1 + ||y_i - y_j||^2)
using KernelRowSumFn = double (*)(const double* yx, const double* yy, std::size_t n, std::size_t i);

/// Accumulates sum_{j != i} (p_scale * p_ij - q_ij) Z_ij (y_i - y_j) with
/// Z_ij = 1 / (1 + ||y_i - y_j||^2) and q_ij = max(Z_ij * inv_z, q_floor).
/// Writes the x and y components to force[0], force[1].
using PairwiseForceRowFn = void (*)(const double* yx, const double* yy, const double* prow, std::size_t n, std::size_t i,
                                    double p_scale, double inv_z, double q_floor, double* force);

struct KernelTable {
    const char* name;
    SqDistRowFn sq_dist_row;
    KernelRowSumFn kernel_row_sum;
    PairwiseForceRowFn pairwise_force_row;
};

const KernelTable& scalar_table();

/// Null when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

/// The table used by the library. Picked once: AVX2 when available unless
/// CCTSNE_SIMD=scalar is set in the environment.
const KernelTable& active();

/// Override the active table (tests, benchmarks). Not thread-safe with
/// respect to running computations.
void set_active(const KernelTable& table);

}  // namespace cctsne::kernels
