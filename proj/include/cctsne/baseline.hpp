#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cctsne/affinities.hpp"
#include "cctsne/optimizer.hpp"

namespace cctsne {

/// Pairwise affinities built from Euclidean distances between probability
/// rows, calibrated with the same perplexity machinery as the feature space.
PairwiseAffinityMatrix class_space_affinities(const ClassProbabilityMatrix& T, double perplexity);

/// (1 - alpha) KL(Pd || Q) + alpha KL(Pprob || Q) at positions Y.
double baseline_cost(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob, const Matrix& Y,
                     double alpha);

/// Gradient of `baseline_cost` with respect to Y.
Matrix baseline_gradient(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob, const Matrix& Y,
                         double alpha);

/// Minimizes the combined objective over Y only, with `h.alpha` as the
/// weight. Because KL gradients are linear in the target distribution this is
/// plain t-SNE on the mixed affinities; exaggeration applies to the mixture.
/// The state has no landmarks. Trace entries hold KL(Pd||Q) in fc1,
/// KL(Pprob||Q) in fc2_kl and the combined cost in C_d.
RunResult run_baseline(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob, const Hyperparams& h,
                       const std::optional<EmbeddingState>& init = std::nullopt, const RunOptions& options = {});

std::vector<SweepStep> sweep_baseline(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob,
                                      const Hyperparams& h, std::span<const double> alphas,
                                      const std::optional<EmbeddingState>& init = std::nullopt,
                                      const RunOptions& options = {});

}  // namespace cctsne
