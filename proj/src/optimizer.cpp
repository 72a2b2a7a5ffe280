#include "cctsne/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cctsne/kernels.hpp"

namespace cctsne {

namespace {

struct SplitPositions {
    std::vector<double> x;
    std::vector<double> y;

    explicit SplitPositions(const Matrix& Y) : x(Y.rows()), y(Y.rows()) {
        for (std::size_t i = 0; i < Y.rows(); ++i) {
            x[i] = Y(i, 0);
            y[i] = Y(i, 1);
        }
    }
};

double pairwise_normalizer(const SplitPositions& s) {
    const std::size_t n = s.x.size();
    const auto& kern = kernels::active();
    std::vector<double> rows(n);
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        rows[i] = kern.kernel_row_sum(s.x.data(), s.y.data(), n, i);
    }
    double total = 0.0;
    for (double r : rows) {
        total += r;
    }
    return total;
}

// out = 4 * sum_j (p_scale p_ij - q_ij) Z_ij (y_i - y_j)
void pairwise_gradient_into(const Matrix& P, double p_scale, const Matrix& Y, Matrix& out) {
    const std::size_t n = Y.rows();
    const SplitPositions s(Y);
    const double inv_z = 1.0 / pairwise_normalizer(s);
    const auto& kern = kernels::active();
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        double force[2];
        kern.pairwise_force_row(s.x.data(), s.y.data(), P.row(i).data(), n, i, p_scale, inv_z, kQFloor, force);
        out(i, 0) = 4.0 * force[0];
        out(i, 1) = 4.0 * force[1];
    }
}

// Point-to-landmark terms. Per pair (i, u) the force coefficient is
// (p - q) Z + (lambda / m) p; dfc2/dy_i and dC_c/dv_u share it with opposite
// displacement signs.
void class_gradients(const Matrix& Pc, const Matrix& Y, const Matrix& V, double lambda, Matrix* grad_Y,
                     Matrix* grad_V) {
    const std::size_t n = Y.rows();
    const std::size_t m = V.rows();
    const double pull = lambda / static_cast<double>(m);
    const double scale = 2.0 / static_cast<double>(n);
    Matrix coeff(n, m);

#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        auto c = coeff.row(i);
        double total = 0.0;
        for (std::size_t u = 0; u < m; ++u) {
            const double dx = Y(i, 0) - V(u, 0);
            const double dy = Y(i, 1) - V(u, 1);
            c[u] = 1.0 / (1.0 + (dx * dx + dy * dy));
            total += c[u];
        }
        double gx = 0.0;
        double gy = 0.0;
        for (std::size_t u = 0; u < m; ++u) {
            const double z = c[u];
            const double p = Pc(i, u);
            const double q = std::max(z / total, kQFloor);
            c[u] = (p - q) * z + pull * p;
            gx += c[u] * (Y(i, 0) - V(u, 0));
            gy += c[u] * (Y(i, 1) - V(u, 1));
        }
        if (grad_Y != nullptr) {
            (*grad_Y)(i, 0) = scale * gx;
            (*grad_Y)(i, 1) = scale * gy;
        }
    }

    if (grad_V != nullptr) {
        for (std::size_t u = 0; u < m; ++u) {
            double gx = 0.0;
            double gy = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                gx += coeff(i, u) * (V(u, 0) - Y(i, 0));
                gy += coeff(i, u) * (V(u, 1) - Y(i, 1));
            }
            (*grad_V)(u, 0) = scale * gx;
            (*grad_V)(u, 1) = scale * gy;
        }
    }
}

// vel <- mu vel - rate grad; pos <- pos + vel
bool momentum_update(Matrix& pos, Matrix& vel, const Matrix& grad, double mu, double rate) {
    bool finite = true;
    for (std::size_t i = 0; i < pos.rows(); ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            const double v = mu * vel(i, c) - rate * grad(i, c);
            vel(i, c) = v;
            pos(i, c) = pos(i, c) + v;
            finite = finite && std::isfinite(pos(i, c)) && std::isfinite(v);
        }
    }
    return finite;
}

void require_positions(const Matrix& M, std::size_t rows, const char* what) {
    if (M.rows() != rows || M.cols() != 2) {
        throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must be " + std::to_string(rows) + " x 2");
    }
}

void check_problem(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc) {
    if (Pd.n() != Pc.n()) {
        throw Error(ErrorCode::DimensionMismatch, "pairwise and class affinities disagree on n");
    }
}

double class_kl_and_penalty(const Matrix& Pc, const Matrix& Y, const Matrix& V, double* penalty_out) {
    const std::size_t n = Y.rows();
    const std::size_t m = V.rows();
    const Matrix Qc = low_dim_class(Y, V);
    double kl = 0.0;
    double penalty = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double row_kl = 0.0;
        double row_pen = 0.0;
        for (std::size_t u = 0; u < m; ++u) {
            const double p = Pc(i, u);
            if (p > 0.0) {
                row_kl += p * std::log(p / Qc(i, u));
            }
            const double dx = Y(i, 0) - V(u, 0);
            const double dy = Y(i, 1) - V(u, 1);
            row_pen += p * (dx * dx + dy * dy);
        }
        kl += row_kl;
        penalty += row_pen / static_cast<double>(m);
    }
    *penalty_out = penalty / static_cast<double>(n);
    return kl / static_cast<double>(n);
}

CostBreakdown vanilla_breakdown(double kl) {
    CostBreakdown c;
    c.fc1 = kl;
    c.C_d = kl;
    return c;
}

bool wants_trace(const RunOptions& o, int done, int total) {
    return o.trace_every > 0 && (done % o.trace_every == 0 || done == total);
}

bool wants_progress(const RunOptions& o, int done, int total) {
    return o.on_progress && o.progress_every > 0 && (done % o.progress_every == 0 || done == total);
}

bool stop_requested(const RunOptions& o) { return o.stop != nullptr && o.stop->load(std::memory_order_relaxed); }

}  // namespace

Matrix low_dim_pairwise(const Matrix& Y, double* normalizer) {
    const std::size_t n = Y.rows();
    const SplitPositions s(Y);
    const double z = pairwise_normalizer(s);
    Matrix Q(n, n);
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                continue;
            }
            const double dx = s.x[i] - s.x[j];
            const double dy = s.y[i] - s.y[j];
            Q(i, j) = std::max(1.0 / (1.0 + (dx * dx + dy * dy)) / z, kQFloor);
        }
    }
    if (normalizer != nullptr) {
        *normalizer = z;
    }
    return Q;
}

Matrix low_dim_class(const Matrix& Y, const Matrix& V, std::vector<double>* row_normalizers) {
    const std::size_t n = Y.rows();
    const std::size_t m = V.rows();
    Matrix Q(n, m);
    if (row_normalizers != nullptr) {
        row_normalizers->assign(n, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (std::size_t u = 0; u < m; ++u) {
            const double dx = Y(i, 0) - V(u, 0);
            const double dy = Y(i, 1) - V(u, 1);
            Q(i, u) = 1.0 / (1.0 + (dx * dx + dy * dy));
            total += Q(i, u);
        }
        for (std::size_t u = 0; u < m; ++u) {
            Q(i, u) = std::max(Q(i, u) / total, kQFloor);
        }
        if (row_normalizers != nullptr) {
            (*row_normalizers)[i] = total;
        }
    }
    return Q;
}

LowDimAffinities low_dim_affinities(const Matrix& Y, const Matrix& V) {
    LowDimAffinities out;
    out.Qd = low_dim_pairwise(Y, &out.Zd);
    out.Qc = low_dim_class(Y, V, &out.Zrows_c);
    return out;
}

double pairwise_kl(const Matrix& P, const Matrix& Y) {
    const std::size_t n = Y.rows();
    const SplitPositions s(Y);
    const double inv_z = 1.0 / pairwise_normalizer(s);
    std::vector<double> rows(n, 0.0);
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double p = P(i, j);
            if (j == i || !(p > 0.0)) {
                continue;
            }
            const double dx = s.x[i] - s.x[j];
            const double dy = s.y[i] - s.y[j];
            const double q = std::max(inv_z / (1.0 + (dx * dx + dy * dy)), kQFloor);
            acc += p * std::log(p / q);
        }
        rows[i] = acc;
    }
    double total = 0.0;
    for (double r : rows) {
        total += r;
    }
    return total;
}

Matrix pairwise_kl_gradient(const Matrix& P, const Matrix& Y, double p_scale) {
    Matrix out(Y.rows(), 2);
    pairwise_gradient_into(P, p_scale, Y, out);
    return out;
}

CostBreakdown cost(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc, const Matrix& Y, const Matrix& V,
                   double alpha, double lambda) {
    check_problem(Pd, Pc);
    require_positions(Y, Pd.n(), "Y");
    require_positions(V, Pc.m(), "V");
    CostBreakdown c;
    c.fc1 = pairwise_kl(Pd.values(), Y);
    c.fc2_kl = class_kl_and_penalty(Pc.values(), Y, V, &c.fc2_penalty);
    c.C_c = c.fc2_kl + lambda * c.fc2_penalty;
    c.C_d = (1.0 - alpha) * c.fc1 + alpha * c.C_c;
    return c;
}

Matrix grad_data_points(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc, const Matrix& Y,
                        const Matrix& V, double alpha, double lambda) {
    check_problem(Pd, Pc);
    require_positions(Y, Pd.n(), "Y");
    require_positions(V, Pc.m(), "V");
    const std::size_t n = Y.rows();
    Matrix g1(n, 2);
    Matrix g2(n, 2);
    pairwise_gradient_into(Pd.values(), 1.0, Y, g1);
    class_gradients(Pc.values(), Y, V, lambda, &g2, nullptr);
    Matrix out(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 2; ++c) {
            out(i, c) = (1.0 - alpha) * g1(i, c) + alpha * g2(i, c);
        }
    }
    return out;
}

Matrix grad_landmarks(const ClassProbabilityMatrix& Pc, const Matrix& Y, const Matrix& V, double lambda) {
    require_positions(Y, Pc.n(), "Y");
    require_positions(V, Pc.m(), "V");
    Matrix out(V.rows(), 2);
    class_gradients(Pc.values(), Y, V, lambda, nullptr, &out);
    return out;
}

EmbeddingState step(EmbeddingState state, const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc,
                    const Hyperparams& h, const StepOptions& options) {
    check_problem(Pd, Pc);
    const std::size_t n = state.n();
    const std::size_t m = state.m();
    require_positions(state.Y, Pd.n(), "Y");
    require_positions(state.V, Pc.m(), "V");

    Matrix grad_Y(n, 2);
    Matrix grad_V(m, 2);
    Matrix class_Y(n, 2);
    class_gradients(Pc.values(), state.Y, state.V, h.lambda, &class_Y, &grad_V);
    if (h.alpha == 1.0) {
        // fc1 carries zero weight; skip the O(n^2) pass.
        grad_Y = class_Y;
    } else {
        pairwise_gradient_into(Pd.values(), options.p_scale, state.Y, grad_Y);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < 2; ++c) {
                grad_Y(i, c) = (1.0 - h.alpha) * grad_Y(i, c) + h.alpha * class_Y(i, c);
            }
        }
    }

    const double mu = h.momentum(state.iteration);
    bool finite = momentum_update(state.Y, state.velocity_Y, grad_Y, mu, h.learning_rate);
    if (!options.fix_landmarks) {
        const double landmark_rate = h.learning_rate * static_cast<double>(m) / static_cast<double>(n);
        finite = momentum_update(state.V, state.velocity_V, grad_V, mu, landmark_rate) && finite;
    }
    if (!finite) {
        throw Error(ErrorCode::NonFiniteUpdate,
                    "non-finite position at iteration " + std::to_string(state.iteration) + " (learning rate too large?)",
                    static_cast<std::size_t>(state.iteration));
    }
    ++state.iteration;
    return state;
}

RunResult run(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc, const Hyperparams& h,
              const std::optional<EmbeddingState>& init, const RunOptions& options) {
    check_problem(Pd, Pc);
    h.validate(0);
    const std::size_t n = Pd.n();
    const std::size_t m = Pc.m();

    RunResult result;
    result.warm_start = init.has_value();
    if (init) {
        require_positions(init->Y, n, "initial Y");
        require_positions(init->V, m, "initial V");
        result.initial = EmbeddingState::from_positions(init->Y, init->V);
    } else {
        Rng rng(h.seed);
        Matrix Y = gaussian_init(rng, n);
        Matrix V = gaussian_init(rng, m);
        result.initial = EmbeddingState::from_positions(std::move(Y), std::move(V));
    }

    EmbeddingState state = result.initial;
    if (options.on_progress && options.progress_every > 0) {
        options.on_progress(state);
    }
    for (int it = 0; it < h.iterations; ++it) {
        if (stop_requested(options)) {
            break;
        }
        StepOptions so;
        so.fix_landmarks = options.fix_landmarks;
        if (!result.warm_start && it < h.early_exaggeration_iters) {
            so.p_scale = h.early_exaggeration_factor;
        }
        state = step(std::move(state), Pd, Pc, h, so);
        const int done = it + 1;
        if (wants_trace(options, done, h.iterations)) {
            result.trace.push_back({done, cost(Pd, Pc, state.Y, state.V, h.alpha, h.lambda)});
        }
        if (wants_progress(options, done, h.iterations)) {
            options.on_progress(state);
        }
    }
    result.state = std::move(state);
    return result;
}

std::vector<SweepStep> sweep_alpha(const PairwiseAffinityMatrix& Pd, const ClassProbabilityMatrix& Pc,
                                   const Hyperparams& h, std::span<const double> alphas,
                                   const std::optional<EmbeddingState>& init, const RunOptions& options) {
    if (alphas.empty()) {
        throw Error(ErrorCode::InvalidArgument, "alpha sweep needs at least one value");
    }
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "alpha " + std::to_string(a) + " outside [0, 1]");
        }
    }
    std::vector<SweepStep> steps;
    std::optional<EmbeddingState> previous = init;
    for (double a : alphas) {
        Hyperparams hk = h;
        hk.alpha = a;
        try {
            steps.push_back({a, run(Pd, Pc, hk, previous, options)});
        } catch (const Error& e) {
            throw Error(e.code(), std::string(e.what()) + " (alpha " + std::to_string(a) + ")", e.index());
        }
        previous = steps.back().result.state;
    }
    return steps;
}

RunResult run_vanilla(const PairwiseAffinityMatrix& P, const Hyperparams& h, const std::optional<EmbeddingState>& init,
                      const RunOptions& options) {
    h.validate(0);
    const std::size_t n = P.n();

    RunResult result;
    result.warm_start = init.has_value();
    if (init) {
        require_positions(init->Y, n, "initial Y");
        result.initial = EmbeddingState::from_positions(init->Y, Matrix(0, 2));
    } else {
        Rng rng(h.seed);
        result.initial = EmbeddingState::from_positions(gaussian_init(rng, n), Matrix(0, 2));
    }

    EmbeddingState state = result.initial;
    Matrix grad(n, 2);
    if (options.on_progress && options.progress_every > 0) {
        options.on_progress(state);
    }
    for (int it = 0; it < h.iterations; ++it) {
        if (stop_requested(options)) {
            break;
        }
        const double p_scale =
            (!result.warm_start && it < h.early_exaggeration_iters) ? h.early_exaggeration_factor : 1.0;
        pairwise_gradient_into(P.values(), p_scale, state.Y, grad);
        if (!momentum_update(state.Y, state.velocity_Y, grad, h.momentum(state.iteration), h.learning_rate)) {
            throw Error(ErrorCode::NonFiniteUpdate, "non-finite position at iteration " + std::to_string(state.iteration),
                        static_cast<std::size_t>(state.iteration));
        }
        ++state.iteration;
        const int done = it + 1;
        if (wants_trace(options, done, h.iterations)) {
            result.trace.push_back({done, vanilla_breakdown(pairwise_kl(P.values(), state.Y))});
        }
        if (wants_progress(options, done, h.iterations)) {
            options.on_progress(state);
        }
    }
    result.state = std::move(state);
    return result;
}

}  // namespace cctsne
