#include <cmath>
#include <random>

#include "cctsne/affinities.hpp"
#include "cctsne/optimizer.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cctsne;

namespace {

struct Problem {
    PairwiseAffinityMatrix Pd;
    ClassProbabilityMatrix Pc;
    Matrix Y;
    Matrix V;
};

Problem random_problem(std::mt19937_64& rng, std::size_t n, std::size_t m, std::size_t d = 4) {
    const auto X = oracle::random_matrix(rng, n, d);
    return {data_affinities(X, std::min(2.5, static_cast<double>(n) - 1.0)),
            ClassProbabilityMatrix::from(oracle::random_stochastic(rng, n, m)), oracle::random_matrix(rng, n, 2),
            oracle::random_matrix(rng, m, 2)};
}

Matrix translated(Matrix M, double dx, double dy) {
    for (std::size_t r = 0; r < M.rows(); ++r) {
        M(r, 0) += dx;
        M(r, 1) += dy;
    }
    return M;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    double worst = 0;
    for (std::size_t k = 0; k < a.values().size(); ++k) worst = std::max(worst, std::abs(a.values()[k] - b.values()[k]));
    return worst;
}

Hyperparams small_hyper(double alpha, int iterations) {
    Hyperparams h;
    h.alpha = alpha;
    h.iterations = iterations;
    h.perplexity = 5;
    return h;
}

RunOptions no_trace() {
    RunOptions o;
    o.trace_every = 0;
    return o;
}

}  // namespace

TEST_CASE("equilateral triangle gives equal pairwise q of 1/6") {
    const double s = std::sqrt(3.0) / 2.0;
    const auto Q = low_dim_pairwise(Matrix(3, 2, std::vector<double>{0, 0, 1, 0, 0.5, s}));
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 3; ++j) CHECK(Q(i, j) == doctest::Approx(i == j ? 0.0 : 1.0 / 6.0).epsilon(1e-14));
    }
}

TEST_CASE("pairwise and class q match the long-double oracle") {
    std::mt19937_64 rng(21);
    const auto Y = oracle::random_matrix(rng, 5, 2);
    double z = 0;
    const auto Q = low_dim_pairwise(Y, &z);
    const auto ref = oracle::q_pairwise(Y);
    double total = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 5; ++j) {
            CHECK(std::abs(Q(i, j) - static_cast<double>(ref[i][j])) <= 1e-12);
            total += Q(i, j);
        }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(z > 0);

    const auto Yc = oracle::random_matrix(rng, 7, 2);
    const auto V = oracle::random_matrix(rng, 4, 2);
    const auto Qc = low_dim_class(Yc, V);
    const auto refc = oracle::q_class(Yc, V);
    for (std::size_t i = 0; i < 7; ++i) {
        double row = 0;
        for (std::size_t u = 0; u < 4; ++u) {
            CHECK(std::abs(Qc(i, u) - static_cast<double>(refc[i][u])) <= 1e-12);
            CHECK(Qc(i, u) > 0);
            row += Qc(i, u);
        }
        CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("class q examples") {
    const auto mid = low_dim_class(Matrix(1, 2, std::vector<double>{0, 0}), Matrix(2, 2, std::vector<double>{1, 0, -1, 0}));
    CHECK(mid(0, 0) == doctest::Approx(0.5));
    CHECK(mid(0, 1) == doctest::Approx(0.5));
    const auto on = low_dim_class(Matrix(1, 2, std::vector<double>{0, 0}), Matrix(2, 2, std::vector<double>{0, 0, 1, 0}));
    CHECK(on(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(on(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("cost matches the scalar-loop oracle") {
    std::mt19937_64 rng(22);
    for (double alpha : {0.0, 0.4, 1.0}) {
        for (double lambda : {0.1, 2.0}) {
            auto p = random_problem(rng, 6, 3);
            const auto c = cost(p.Pd, p.Pc, p.Y, p.V, alpha, lambda);
            const auto ref = oracle::costs(p.Pd.values(), p.Pc.values(), p.Y, p.V, alpha, lambda);
            CHECK(std::abs(c.fc1 - static_cast<double>(ref.fc1)) <= 1e-10);
            CHECK(std::abs(c.C_c - static_cast<double>(ref.fc2)) <= 1e-10);
            CHECK(std::abs(c.C_d - static_cast<double>(ref.C_d)) <= 1e-10);
            CHECK(std::abs(c.C_c - static_cast<double>(ref.C_c)) <= 1e-10);
            CHECK(c.C_c == doctest::Approx(c.fc2_kl + lambda * c.fc2_penalty).epsilon(1e-14));
            CHECK(c.C_d == doctest::Approx((1 - alpha) * c.fc1 + alpha * c.C_c).epsilon(1e-14));
            CHECK(c.fc1 >= 0);
            CHECK(c.fc2_kl >= 0);
            CHECK(c.fc2_penalty >= 0);
        }
    }
}

TEST_CASE("fc1 vanishes when Q equals P") {
    const double s = std::sqrt(3.0) / 2.0;
    const Matrix Y(3, 2, std::vector<double>{0, 0, 1, 0, 0.5, s});
    const auto Pd = PairwiseAffinityMatrix::from(low_dim_pairwise(Y));
    CHECK(std::abs(pairwise_kl(Pd.values(), Y)) <= 1e-15);
}

TEST_CASE("point mass on a coinciding landmark") {
    // one instance sitting on its class landmark, the other landmark far away
    const auto Pd = PairwiseAffinityMatrix::from(Matrix(2, 2, std::vector<double>{0, 0.5, 0.5, 0}));
    const auto Pc = ClassProbabilityMatrix::from(Matrix(2, 2, std::vector<double>{1, 0, 1, 0}));
    const Matrix Y(2, 2, std::vector<double>{0, 0, 0, 0});
    for (double far : {10.0, 1e3, 1e6}) {
        const Matrix V(2, 2, std::vector<double>{0, 0, far, 0});
        const auto c = cost(Pd, Pc, Y, V, 1.0, 3.0);
        const double q = 1.0 / (1.0 + 1.0 / (1.0 + far * far));
        CHECK(c.fc2_kl == doctest::Approx(-std::log(q)).epsilon(1e-12));
        CHECK(c.fc2_penalty == 0.0);
    }
    const auto c = cost(Pd, Pc, Y, Matrix(2, 2, std::vector<double>{0, 0, 1e6, 0}), 1.0, 3.0);
    CHECK(c.C_c < 1e-11);
}

TEST_CASE("analytic gradients match central finite differences") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 6; ++trial) {
        const double alpha = trial % 3 == 0 ? 0.0 : (trial % 3 == 1 ? 0.5 : 1.0);
        const double lambda = trial < 3 ? 0.2 : 1.5;
        auto p = random_problem(rng, 5, 3);
        const auto gY = grad_data_points(p.Pd, p.Pc, p.Y, p.V, alpha, lambda);
        const auto gV = grad_landmarks(p.Pc, p.Y, p.V, lambda);
        const auto fY = oracle::finite_difference(p.Y, [&](const Matrix& Yp) {
            return oracle::costs(p.Pd.values(), p.Pc.values(), Yp, p.V, alpha, lambda).C_d;
        });
        const auto fV = oracle::finite_difference(p.V, [&](const Matrix& Vp) {
            return oracle::costs(p.Pd.values(), p.Pc.values(), p.Y, Vp, alpha, lambda).C_c;
        });
        CHECK(oracle::max_relative_error(gY, fY) <= 1e-4);
        CHECK(oracle::max_relative_error(gV, fV) <= 1e-4);
    }
}

TEST_CASE("pairwise KL gradient matches finite differences") {
    std::mt19937_64 rng(24);
    auto p = random_problem(rng, 7, 2);
    const auto g = pairwise_kl_gradient(p.Pd.values(), p.Y);
    const auto f = oracle::finite_difference(p.Y, [&](const Matrix& Yp) {
        return oracle::costs(p.Pd.values(), p.Pc.values(), Yp, p.V, 0.0L, 1.0L).fc1;
    });
    CHECK(oracle::max_relative_error(g, f) <= 1e-4);
}

TEST_CASE("alpha endpoints isolate their terms") {
    std::mt19937_64 rng(25);
    auto p = random_problem(rng, 8, 3);
    const auto at0 = grad_data_points(p.Pd, p.Pc, p.Y, p.V, 0.0, 0.5);
    CHECK(at0 == pairwise_kl_gradient(p.Pd.values(), p.Y));
    const auto moved_V = translated(p.V, 3.0, -1.0);
    CHECK(grad_data_points(p.Pd, p.Pc, p.Y, moved_V, 0.0, 0.5) == at0);

    const auto at1 = grad_data_points(p.Pd, p.Pc, p.Y, p.V, 1.0, 0.5);
    auto other = random_problem(rng, 8, 3);
    CHECK(grad_data_points(other.Pd, p.Pc, p.Y, p.V, 1.0, 0.5) == at1);
}

TEST_CASE("unused landmarks are repelled by the data") {
    // landmark 1 carries no probability mass; its gradient points towards the data
    const auto Pc = ClassProbabilityMatrix::from(Matrix(3, 2, std::vector<double>{1, 0, 1, 0, 1, 0}));
    const Matrix Y(3, 2, std::vector<double>{0, 0, 0.2, 0.1, -0.1, 0.3});
    const Matrix V(2, 2, std::vector<double>{0, 0, 2, 0});
    const auto g = grad_landmarks(Pc, Y, V, 0.5);
    // moving against the gradient increases the distance to every point
    CHECK(g(1, 0) < 0);
}

TEST_CASE("single-landmark stationarity at the weighted mean") {
    const auto Pc = ClassProbabilityMatrix::from(Matrix(3, 1, std::vector<double>{1, 1, 1}));
    const Matrix Y(3, 2, std::vector<double>{0, 0, 3, 1, -1, 2});
    const Matrix V(1, 2, std::vector<double>{2.0 / 3.0, 1.0});
    const auto g = grad_landmarks(Pc, Y, V, 0.7);
    CHECK(std::abs(g(0, 0)) <= 1e-15);
    CHECK(std::abs(g(0, 1)) <= 1e-15);
}

TEST_CASE("coinciding point and landmark have zero class gradient") {
    const auto Pd = PairwiseAffinityMatrix::from(Matrix(2, 2, std::vector<double>{0, 0.5, 0.5, 0}));
    const auto Pc = ClassProbabilityMatrix::from(Matrix(2, 1, std::vector<double>{1, 1}));
    const Matrix Y(2, 2, std::vector<double>{1, 1, 1, 1});
    const Matrix V(1, 2, std::vector<double>{1, 1});
    const auto g = grad_data_points(Pd, Pc, Y, V, 1.0, 2.0);
    for (double v : g.values()) CHECK(v == 0.0);
}

TEST_CASE("class permutation leaves the cost unchanged") {
    std::mt19937_64 rng(26);
    auto p = random_problem(rng, 7, 4);
    const std::vector<std::size_t> perm = {2, 0, 3, 1};
    Matrix Pc2(7, 4), V2(4, 2);
    for (std::size_t u = 0; u < 4; ++u) {
        for (std::size_t i = 0; i < 7; ++i) Pc2(i, u) = p.Pc.values()(i, perm[u]);
        V2(u, 0) = p.V(perm[u], 0);
        V2(u, 1) = p.V(perm[u], 1);
    }
    const auto a = cost(p.Pd, p.Pc, p.Y, p.V, 0.6, 0.8);
    const auto b = cost(p.Pd, ClassProbabilityMatrix::from(Pc2), p.Y, V2, 0.6, 0.8);
    CHECK(a.C_d == doctest::Approx(b.C_d).epsilon(1e-13));
    CHECK(a.C_c == doctest::Approx(b.C_c).epsilon(1e-13));
}

TEST_CASE("common translation leaves the cost unchanged") {
    std::mt19937_64 rng(27);
    auto p = random_problem(rng, 7, 3);
    const auto a = cost(p.Pd, p.Pc, p.Y, p.V, 0.3, 0.5);
    const auto b = cost(p.Pd, p.Pc, translated(p.Y, 5.5, -2.25), translated(p.V, 5.5, -2.25), 0.3, 0.5);
    CHECK(a.fc1 == doctest::Approx(b.fc1).epsilon(1e-12));
    CHECK(a.fc2_kl == doctest::Approx(b.fc2_kl).epsilon(1e-12));
    CHECK(a.C_d == doctest::Approx(b.C_d).epsilon(1e-12));
    CHECK(a.C_c == doctest::Approx(b.C_c).epsilon(1e-12));
}

TEST_CASE("step with zero gradient only advances the iteration") {
    // two points on their own landmarks, far enough apart that the pairwise force
    // is balanced: symmetric layout with P equal to Q
    const Matrix Y(2, 2, std::vector<double>{-1, 0, 1, 0});
    const auto Pd = PairwiseAffinityMatrix::from(low_dim_pairwise(Y));
    const auto Pc = ClassProbabilityMatrix::from(Matrix(2, 1, std::vector<double>{1, 1}));
    const Matrix V(1, 2, std::vector<double>{0, 0});
    // class gradient on Y is non-zero here, so use alpha = 0 and fix landmarks
    Hyperparams h = small_hyper(0.0, 1);
    StepOptions opt;
    opt.fix_landmarks = true;
    auto s0 = EmbeddingState::from_positions(Y, V);
    s0.iteration = 7;
    const auto s1 = step(s0, Pd, Pc, h, opt);
    CHECK(s1.iteration == 8);
    CHECK(max_abs_diff(s1.Y, s0.Y) <= 1e-16);
    CHECK(s1.V == s0.V);
}

TEST_CASE("steps are deterministic") {
    std::mt19937_64 rng(28);
    auto p = random_problem(rng, 9, 3);
    const auto s = EmbeddingState::from_positions(p.Y, p.V);
    const Hyperparams h = small_hyper(0.5, 1);
    const auto a = step(s, p.Pd, p.Pc, h);
    const auto b = step(s, p.Pd, p.Pc, h);
    CHECK(a.Y == b.Y);
    CHECK(a.V == b.V);
    CHECK(a.velocity_Y == b.velocity_Y);
}

TEST_CASE("point and landmark approach each other") {
    const auto Pd = PairwiseAffinityMatrix::from(Matrix(2, 2, std::vector<double>{0, 0.5, 0.5, 0}));
    const auto Pc = ClassProbabilityMatrix::from(Matrix(2, 1, std::vector<double>{1, 1}));
    const Matrix Y(2, 2, std::vector<double>{1, 0, 2, 0});
    const Matrix V(1, 2, std::vector<double>{0, 0});
    Hyperparams h = small_hyper(1.0, 1);
    h.lambda = 0.5;
    h.learning_rate = 0.1;
    const auto s = step(EmbeddingState::from_positions(Y, V), Pd, Pc, h);
    CHECK(s.Y(0, 0) < 1.0);
    CHECK(s.Y(1, 0) < 2.0);
    CHECK(s.V(0, 0) > 0.0);
    CHECK(s.V(0, 0) < s.Y(0, 0));
}

TEST_CASE("landmark step is scaled by m/n") {
    std::mt19937_64 rng(29);
    auto p = random_problem(rng, 6, 3);
    Hyperparams h = small_hyper(0.5, 1);
    h.learning_rate = 0.01;
    const auto s = step(EmbeddingState::from_positions(p.Y, p.V), p.Pd, p.Pc, h);
    const auto g = grad_landmarks(p.Pc, p.Y, p.V, h.lambda);
    for (std::size_t u = 0; u < 3; ++u) {
        for (std::size_t c = 0; c < 2; ++c) {
            CHECK(s.V(u, c) == doctest::Approx(p.V(u, c) - 0.01 * 3.0 / 6.0 * g(u, c)).epsilon(1e-14));
        }
    }
}

TEST_CASE("huge learning rates raise NonFiniteUpdate") {
    std::mt19937_64 rng(30);
    auto p = random_problem(rng, 6, 2);
    Hyperparams h = small_hyper(0.5, 50);
    h.learning_rate = 1e308;
    try {
        run(p.Pd, p.Pc, h, std::nullopt, no_trace());
        FAIL("divergent run completed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonFiniteUpdate);
        CHECK(e.index().has_value());
    }
}

TEST_CASE("cold runs start from the seeded draws, Y before V") {
    std::mt19937_64 rng(31);
    auto p = random_problem(rng, 10, 3);
    const auto r = run(p.Pd, p.Pc, small_hyper(0.5, 3), std::nullopt, no_trace());
    Rng draws(42);
    const auto Y0 = gaussian_init(draws, 10);
    const auto V0 = gaussian_init(draws, 3);
    CHECK(r.initial.Y == Y0);
    CHECK(r.initial.V == V0);
    CHECK_FALSE(r.warm_start);
    CHECK(r.state.iteration == 3);
}

TEST_CASE("alpha zero trajectory equals vanilla t-SNE") {
    std::mt19937_64 rng(32);
    auto p = random_problem(rng, 30, 3);
    const Hyperparams h = small_hyper(0.0, 150);
    const auto cc = run(p.Pd, p.Pc, h, std::nullopt, no_trace());
    const auto vanilla = run_vanilla(p.Pd, h, std::nullopt, no_trace());
    CHECK(cc.state.Y == vanilla.state.Y);
}

TEST_CASE("cost trace descends after exaggeration") {
    std::mt19937_64 rng(33);
    auto p = random_problem(rng, 40, 3);
    Hyperparams h = small_hyper(0.5, 400);
    h.learning_rate = 20;
    const auto r = run(p.Pd, p.Pc, h);
    REQUIRE(r.trace.size() >= 400);
    for (std::size_t k = 150; k + 50 < r.trace.size(); k += 10) {
        CHECK(r.trace[k + 50].cost.C_d <= r.trace[k].cost.C_d + 50 * 1e-3);
    }
    for (const auto& t : r.trace) {
        CHECK(t.cost.fc1 >= 0);
        CHECK(t.cost.fc2_kl >= 0);
    }
}

TEST_CASE("warm starts reuse positions only") {
    std::mt19937_64 rng(34);
    auto p = random_problem(rng, 12, 3);
    Hyperparams h = small_hyper(0.5, 20);
    h.learning_rate = 10;
    const auto cold = run(p.Pd, p.Pc, h, std::nullopt, no_trace());
    h.alpha = 0.8;
    h.iterations = 5;
    const auto warm = run(p.Pd, p.Pc, h, cold.state, no_trace());
    CHECK(warm.warm_start);
    CHECK(warm.initial.Y == cold.state.Y);
    CHECK(warm.initial.V == cold.state.V);
    CHECK(warm.initial.iteration == 0);
    for (double v : warm.initial.velocity_Y.values()) CHECK(v == 0.0);
    CHECK(warm.state.iteration == 5);
}

TEST_CASE("alpha sweeps chain their initializations") {
    std::mt19937_64 rng(35);
    auto p = random_problem(rng, 20, 3);
    const std::vector<double> alphas = {0.0, 0.25, 0.5, 0.75, 1.0};
    const auto steps = sweep_alpha(p.Pd, p.Pc, small_hyper(0.0, 30), alphas, std::nullopt, no_trace());
    REQUIRE(steps.size() == 5);
    CHECK_FALSE(steps[0].result.warm_start);
    for (std::size_t k = 1; k < 5; ++k) {
        CHECK(steps[k].alpha == alphas[k]);
        CHECK(steps[k].result.warm_start);
        CHECK(steps[k].result.initial.Y == steps[k - 1].result.state.Y);
        CHECK(steps[k].result.initial.V == steps[k - 1].result.state.V);
    }

    const std::vector<double> single = {0.5};
    const auto one = sweep_alpha(p.Pd, p.Pc, small_hyper(0.0, 30), single, std::nullopt, no_trace());
    const auto direct = run(p.Pd, p.Pc, small_hyper(0.5, 30), std::nullopt, no_trace());
    CHECK(one[0].result.state.Y == direct.state.Y);
    CHECK(one[0].result.state.V == direct.state.V);
}

TEST_CASE("repeating an alpha keeps descending") {
    std::mt19937_64 rng(36);
    auto p = random_problem(rng, 25, 3);
    Hyperparams h = small_hyper(0.0, 300);
    h.learning_rate = 10;
    const std::vector<double> alphas = {0.5, 0.5};
    const auto steps = sweep_alpha(p.Pd, p.Pc, h, alphas, std::nullopt, no_trace());
    const auto c0 = cost(p.Pd, p.Pc, steps[0].result.state.Y, steps[0].result.state.V, 0.5, h.lambda);
    const auto c1 = cost(p.Pd, p.Pc, steps[1].result.state.Y, steps[1].result.state.V, 0.5, h.lambda);
    CHECK(c1.C_d <= c0.C_d + 1e-6);
}

TEST_CASE("sweeps reject out-of-range alphas") {
    std::mt19937_64 rng(37);
    auto p = random_problem(rng, 10, 2);
    const std::vector<double> alphas = {0.5, 1.5};
    CHECK_THROWS_AS(sweep_alpha(p.Pd, p.Pc, small_hyper(0.0, 5), alphas, std::nullopt, no_trace()), Error);
    CHECK_THROWS_AS(sweep_alpha(p.Pd, p.Pc, small_hyper(0.0, 5), std::span<const double>{}, std::nullopt, no_trace()),
                    Error);
}

TEST_CASE("single-landmark systems collapse onto the data mean") {
    std::mt19937_64 rng(38);
    auto p = random_problem(rng, 10, 2);
    const auto Pc = ClassProbabilityMatrix::from(Matrix(10, 1, 1.0));
    Hyperparams h = small_hyper(1.0, 2000);
    h.learning_rate = 5;
    h.lambda = 1.0;
    const auto r = run(p.Pd, Pc, h, std::nullopt, no_trace());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < 10; ++i) {
        mx += r.state.Y(i, 0) / 10.0;
        my += r.state.Y(i, 1) / 10.0;
    }
    CHECK(std::abs(r.state.V(0, 0) - mx) <= 1e-6);
    CHECK(std::abs(r.state.V(0, 1) - my) <= 1e-6);
}

TEST_CASE("progress callbacks see the initial and final states") {
    std::mt19937_64 rng(39);
    auto p = random_problem(rng, 10, 2);
    RunOptions o = no_trace();
    o.progress_every = 4;
    std::vector<int> seen;
    o.on_progress = [&](const EmbeddingState& s) { seen.push_back(s.iteration); };
    run(p.Pd, p.Pc, small_hyper(0.5, 10), std::nullopt, o);
    REQUIRE(!seen.empty());
    CHECK(seen.front() == 0);
    CHECK(seen.back() == 10);
}
