#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cctsne/affinities.hpp"
#include "cctsne/core_model.hpp"

namespace cctsne {

/// Floor applied to every low-dimensional probability.
inline constexpr double kQFloor = 1e-12;

struct LowDimAffinities {
    Matrix Qd;                     // n x n, Student-t pairwise
    Matrix Qc;                     // n x m, Student-t point-to-landmark, row-normalized
    double Zd = 0.0;               // sum_{k != l} (1 + ||y_k - y_l||^2)^-1
    std::vector<double> Zrows_c;   // per-row sum_s (1 + ||y_i - v_s||^2)^-1
};

Matrix low_dim_pairwise(const Matrix& Y, double* normalizer = nullptr);
Matrix low_dim_class(const Matrix& Y, const Matrix& V, std::vector<double>* row_normalizers = nullptr);
LowDimAffinities low_dim_affinities(const Matrix& Y, const Matrix& V);

/// fc1 is the pairwise KL term; fc2 = fc2_kl + lambda * fc2_penalty where
/// fc2_penalty is the averaged (unweighted) squared-distance pull.
/// C_d = (1 - alpha) fc1 + alpha fc2, C_c = fc2.
struct CostBreakdown {
    double fc1 = 0.0;
    double fc2_kl = 0.0;
    double fc2_penalty = 0.0;
    double C_d = 0.0;
    double C_c = 0.0;
};

CostBreakdown cost(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc, const Matrix& Y, const Matrix& V,
                   double alpha, double lambda);

/// KL(P || Q^d(Y)) with the 1e-12 floor on q; pairs with p = 0 add nothing.
double pairwise_kl(const Matrix& P, const Matrix& Y);

/// 4 sum_j (p_scale p_ij - q_ij)(y_i - y_j) Z_ij, the gradient of KL(P || Q^d).
Matrix pairwise_kl_gradient(const Matrix& P, const Matrix& Y, double p_scale = 1.0);

/// dC_d/dY = (1 - alpha) dfc1/dY + alpha dfc2/dY.
Matrix grad_data_points(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc, const Matrix& Y,
                        const Matrix& V, double alpha, double lambda);

/// dC_c/dV.
Matrix grad_landmarks(const ClassProbabilityMatrix& Pc, const Matrix& Y, const Matrix& V, double lambda);

struct StepOptions {
    double p_scale = 1.0;        // early exaggeration multiplier on P^d
    bool fix_landmarks = false;  // keep V in place (analysis only)
};

/// One momentum step on Y and V. Both gradients are taken at the incoming
/// state; positions move against the gradient and the landmark step is
/// scaled by m/n. Throws NonFiniteUpdate (carrying the iteration) if any
/// updated coordinate is not finite.
EmbeddingState step(EmbeddingState state, const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc,
                    const Hyperparams& h, const StepOptions& options = {});

struct TracePoint {
    int iteration = 0;  // iterations completed when the cost was taken
    CostBreakdown cost;
};

struct RunOptions {
    /// Record the cost every this many iterations (and after the last one);
    /// 0 disables the trace.
    int trace_every = 1;
    bool fix_landmarks = false;
    /// Call `on_progress` every this many iterations (0 = never). The callback
    /// also sees the initial state (iteration 0) and the final state.
    int progress_every = 0;
    std::function<void(const EmbeddingState&)> on_progress;
    /// Checked between iterations; a set flag ends the run early.
    const std::atomic<bool>* stop = nullptr;
};

struct RunResult {
    EmbeddingState initial;  // positions the descent started from
    EmbeddingState state;
    std::vector<TracePoint> trace;
    bool warm_start = false;
};

/// Class-constrained embedding of (Pd, Pc). Without `init` the positions are
/// drawn from the seeded generator (Y first, then V) and P^d is exaggerated
/// for the configured leading iterations. With `init` only the positions are
/// reused: velocities and the iteration counter restart at zero and there is
/// no exaggeration.
RunResult run(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc, const Hyperparams& h,
              const std::optional<EmbeddingState>& init = std::nullopt, const RunOptions& options = {});

struct SweepStep {
    double alpha = 0.0;
    RunResult result;
};

/// Chained runs over `alphas`: the first starts from `init` (cold when
/// absent), each later run is warm-started from its predecessor's final state.
std::vector<SweepStep> sweep_alpha(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc,
                                   const Hyperparams& h, std::span<const double> alphas,
                                   const std::optional<EmbeddingState>& init = std::nullopt,
                                   const RunOptions& options = {});

/// Plain t-SNE on a single pairwise distribution with the same schedule,
/// floors and kernels. The returned states carry no landmarks; the trace
/// reports KL(P || Q) in `fc1` and `C_d`.
RunResult run_vanilla(const PairwiseAffinityMatrix& P, const Hyperparams& h,
                      const std::optional<EmbeddingState>& init = std::nullopt, const RunOptions& options = {});

}  // namespace cctsne
