#include <cmath>
#include <random>

#include "cctsne/affinities.hpp"
#include "cctsne/kernels.hpp"
#include "cctsne/optimizer.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cctsne;

namespace {

struct Positions {
    std::vector<double> x, y, p;
};

Positions random_positions(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> normal(0.0, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Positions out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.x[j] = normal(rng);
        out.y[j] = normal(rng);
        out.p[j] = unit(rng) / static_cast<double>(n);
    }
    return out;
}

const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 33, 100, 257};

}  // namespace

TEST_CASE("scalar squared distances match a double loop") {
    std::mt19937_64 rng(1);
    const auto X = oracle::random_matrix(rng, 11, 5);
    const auto Xt = X.transposed();
    std::vector<double> row(11);
    for (std::size_t i = 0; i < 11; ++i) {
        kernels::scalar_table().sq_dist_row(Xt.data(), 11, 5, i, row.data());
        for (std::size_t j = 0; j < 11; ++j) {
            double acc = 0;
            for (std::size_t c = 0; c < 5; ++c) acc += (X(i, c) - X(j, c)) * (X(i, c) - X(j, c));
            CHECK(row[j] == acc);
        }
    }
}

TEST_CASE("AVX2 kernels agree with the scalar reference") {
    const kernels::KernelTable* simd = kernels::avx2_table();
    if (simd == nullptr) {
        MESSAGE("AVX2 unavailable on this machine; equivalence not exercised");
        return;
    }
    const auto& ref = kernels::scalar_table();
    std::mt19937_64 rng(2);
    for (std::size_t n : kSizes) {
        CAPTURE(n);
        for (std::size_t d : {1, 3, 4, 10}) {
            const auto X = oracle::random_matrix(rng, n, d);
            const auto Xt = X.transposed();
            std::vector<double> a(n), b(n);
            for (std::size_t i = 0; i < n; ++i) {
                ref.sq_dist_row(Xt.data(), n, d, i, a.data());
                simd->sq_dist_row(Xt.data(), n, d, i, b.data());
                CHECK(a == b);  // bit-identical by contract
            }
        }
        const auto P = random_positions(rng, n);
        for (std::size_t i = 0; i < n; ++i) {
            const double s_ref = ref.kernel_row_sum(P.x.data(), P.y.data(), n, i);
            const double s_simd = simd->kernel_row_sum(P.x.data(), P.y.data(), n, i);
            CHECK(s_simd == doctest::Approx(s_ref).epsilon(1e-12));
            double f_ref[2], f_simd[2];
            for (double scale : {1.0, 4.0}) {
                ref.pairwise_force_row(P.x.data(), P.y.data(), P.p.data(), n, i, scale, 0.01, 1e-12, f_ref);
                simd->pairwise_force_row(P.x.data(), P.y.data(), P.p.data(), n, i, scale, 0.01, 1e-12, f_simd);
                const double mag = std::abs(f_ref[0]) + std::abs(f_ref[1]) + 1e-300;
                CHECK(std::abs(f_ref[0] - f_simd[0]) <= 1e-12 * mag);
                CHECK(std::abs(f_ref[1] - f_simd[1]) <= 1e-12 * mag);
            }
        }
    }
}

TEST_CASE("the q floor is applied per pair in every variant") {
    std::vector<const kernels::KernelTable*> tables = {&kernels::scalar_table()};
    if (kernels::avx2_table()) tables.push_back(kernels::avx2_table());
    // two far points: Z is tiny, so q = max(Z * inv_z, floor) = floor
    const double x[] = {0.0, 1e5, 1.0, 2.0, 3.0};
    const double y[] = {0.0, 0.0, 0.0, 0.0, 0.0};
    const double p[] = {0.0, 0.0, 0.0, 0.0, 0.0};
    for (const auto* t : tables) {
        CAPTURE(t->name);
        double f[2];
        t->pairwise_force_row(x, y, p, 5, 0, 1.0, 1e-3, 0.5, f);
        // with p = 0 every pair pushes with weight -q Z; q is the floor 0.5 for all pairs
        double expect = 0;
        for (int j = 1; j < 5; ++j) {
            const double z = 1.0 / (1.0 + x[j] * x[j]);
            expect += -0.5 * z * (0.0 - x[j]);
        }
        CHECK(f[0] == doctest::Approx(expect).epsilon(1e-12));
        CHECK(f[1] == 0.0);
    }
}

TEST_CASE("optimizer results agree between kernel tables") {
    const kernels::KernelTable* simd = kernels::avx2_table();
    if (simd == nullptr) {
        MESSAGE("AVX2 unavailable on this machine; equivalence not exercised");
        return;
    }
    std::mt19937_64 rng(3);
    const auto X = oracle::random_matrix(rng, 61, 7);
    const auto Pc = ClassProbabilityMatrix::from(oracle::random_stochastic(rng, 61, 3));
    Hyperparams h;
    // early exaggeration amplifies rounding differences exponentially, so
    // the comparison stays within the first iterations
    h.iterations = 10;
    h.perplexity = 10;
    RunOptions quiet;
    quiet.trace_every = 0;

    const auto& previous = kernels::active();
    kernels::set_active(kernels::scalar_table());
    const auto Pd_ref = data_affinities(X, h.perplexity);
    const auto ref = run(Pd_ref, Pc, h, std::nullopt, quiet);
    kernels::set_active(*simd);
    const auto Pd_simd = data_affinities(X, h.perplexity);
    const auto got = run(Pd_simd, Pc, h, std::nullopt, quiet);
    kernels::set_active(previous);

    CHECK(Pd_ref.values() == Pd_simd.values());
    double worst = 0;
    for (std::size_t k = 0; k < ref.state.Y.values().size(); ++k) {
        worst = std::max(worst, std::abs(ref.state.Y.values()[k] - got.state.Y.values()[k]));
    }
    CHECK(worst < 1e-10);
}
