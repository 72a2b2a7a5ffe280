#include "cctsne/baseline.hpp"

#include <string>

namespace cctsne {

PairwiseAffinityMatrix class_space_affinities(const ClassProbabilityMatrix& T, double perplexity) {
    return data_affinities(T.values(), perplexity);
}

double baseline_cost(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob, const Matrix& Y,
                     double alpha) {
    return (1.0 - alpha) * pairwise_kl(Pd.values(), Y) + alpha * pairwise_kl(Pprob.values(), Y);
}

Matrix baseline_gradient(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob, const Matrix& Y,
                         double alpha) {
    const auto mixed = PairwiseAffinityMatrix::convex_combination(Pd, Pprob, alpha);
    return pairwise_kl_gradient(mixed.values(), Y);
}

RunResult run_baseline(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob, const Hyperparams& h,
                       const std::optional<EmbeddingState>& init, const RunOptions& options) {
    const auto mixed = PairwiseAffinityMatrix::convex_combination(Pd, Pprob, h.alpha);
    if (options.trace_every <= 0) {
        return run_vanilla(mixed, h, init, options);
    }

    // The vanilla trace would report KL(mixed || Q); evaluate the two terms
    // separately at the traced iterations instead.
    std::vector<TracePoint> trace;
    const bool forward = options.on_progress && options.progress_every > 0;
    RunOptions inner = options;
    inner.trace_every = 0;
    inner.progress_every = 1;
    inner.on_progress = [&](const EmbeddingState& s) {
        const int it = s.iteration;
        if (it > 0 && (it % options.trace_every == 0 || it == h.iterations)) {
            CostBreakdown c;
            c.fc1 = pairwise_kl(Pd.values(), s.Y);
            c.fc2_kl = pairwise_kl(Pprob.values(), s.Y);
            c.C_d = (1.0 - h.alpha) * c.fc1 + h.alpha * c.fc2_kl;
            trace.push_back({it, c});
        }
        if (forward && (it % options.progress_every == 0 || it == h.iterations)) {
            options.on_progress(s);
        }
    };
    RunResult result = run_vanilla(mixed, h, init, inner);
    result.trace = std::move(trace);
    return result;
}

std::vector<SweepStep> sweep_baseline(const PairwiseAffinityMatrix& Pd, const PairwiseAffinityMatrix& Pprob,
                                      const Hyperparams& h, std::span<const double> alphas,
                                      const std::optional<EmbeddingState>& init, const RunOptions& options) {
    if (alphas.empty()) {
        throw Error(ErrorCode::InvalidArgument, "alpha sweep needs at least one value");
    }
    std::vector<SweepStep> steps;
    std::optional<EmbeddingState> previous = init;
    for (double a : alphas) {
        Hyperparams hk = h;
        hk.alpha = a;
        try {
            steps.push_back({a, run_baseline(Pd, Pprob, hk, previous, options)});
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " (alpha " + std::to_string(a) + ")", e.index());
        }
        previous = steps.back().result.state;
    }
    return steps;
}

}  // namespace cctsne
