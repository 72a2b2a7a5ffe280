#include "cctsne/affinities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cctsne/kernels.hpp"

namespace cctsne {

namespace {

constexpr int kMaxBracketSteps = 64;
constexpr int kMaxBisectionSteps = 50;
// 1e-5 in log2 units, expressed in nats.
const double kEntropyTolerance = 1e-5 * std::log(2.0);

struct RowFit {
    double entropy;  // nats
    double mass;
};

// Gaussian weights relative to the smallest off-diagonal distance so at least
// one weight is exactly 1 and the normalizer never underflows.
RowFit fill_row(std::span<const double> d2, std::size_t i, double min_d2, double beta, std::span<double> out) {
    double mass = 0.0;
    double weighted = 0.0;
    for (std::size_t j = 0; j < d2.size(); ++j) {
        if (j == i) {
            out[j] = 0.0;
            continue;
        }
        const double shifted = d2[j] - min_d2;
        const double w = std::exp(-beta * shifted);
        out[j] = w;
        mass += w;
        weighted += w * shifted;
    }
    return {std::log(mass) + beta * weighted / mass, mass};
}

}  // namespace

PairwiseAffinityMatrix PairwiseAffinityMatrix::from(Matrix values) {
    const std::size_t n = values.rows();
    if (n != values.cols() || n < 2) {
        throw Error(ErrorCode::DimensionMismatch, "pairwise affinities must be square with n >= 2");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (values(i, i) != 0.0) {
            throw Error(ErrorCode::InvalidArgument, "pairwise affinities need a zero diagonal", i);
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double v = values(i, j);
            if (!std::isfinite(v) || v < 0.0) {
                throw Error(ErrorCode::NonFiniteValue, "pairwise affinities must be finite and non-negative", i);
            }
            if (std::abs(v - values(j, i)) > 1e-12) {
                throw Error(ErrorCode::InvalidArgument, "pairwise affinities must be symmetric", i);
            }
            total += v;
        }
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorCode::NotRowStochastic, "pairwise affinities must sum to one");
    }
    return PairwiseAffinityMatrix(std::move(values));
}

PairwiseAffinityMatrix PairwiseAffinityMatrix::convex_combination(const PairwiseAffinityMatrix& a,
                                                                  const PairwiseAffinityMatrix& b, double alpha) {
    if (a.n() != b.n()) {
        throw Error(ErrorCode::DimensionMismatch, "affinity matrices differ in size");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "mixing weight must lie in [0, 1]");
    }
    Matrix out(a.n(), a.n());
    const auto& av = a.values().values();
    const auto& bv = b.values().values();
    double* dst = out.data();
    for (std::size_t k = 0; k < av.size(); ++k) {
        dst[k] = (1.0 - alpha) * av[k] + alpha * bv[k];
    }
    return PairwiseAffinityMatrix(std::move(out));
}

Matrix pairwise_squared_distances(const Matrix& points) {
    const std::size_t n = points.rows();
    const std::size_t d = points.cols();
    const Matrix xt = points.transposed();
    Matrix out(n, n);
    const auto& kern = kernels::active();
#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        kern.sq_dist_row(xt.data(), n, d, i, out.row(i).data());
    }
    return out;
}

ConditionalAffinities calibrate_conditional(const Matrix& sq_distances, double perplexity) {
    const std::size_t n = sq_distances.rows();
    if (n != sq_distances.cols()) {
        throw Error(ErrorCode::DimensionMismatch, "distance matrix must be square");
    }
    if (!(perplexity >= 2.0) || !(perplexity < static_cast<double>(n))) {
        throw Error(ErrorCode::InvalidArgument, "perplexity must satisfy 2 <= perplexity < n");
    }
    const double target = std::log(perplexity);
    ConditionalAffinities result{Matrix(n, n), BandwidthVector{std::vector<double>(n)}};
    std::vector<char> failed(n, 0);

#pragma omp parallel for schedule(static) if (n > 256)
    for (std::size_t i = 0; i < n; ++i) {
        auto d2 = sq_distances.row(i);
        auto out = result.conditional.row(i);
        double min_d2 = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                min_d2 = std::min(min_d2, d2[j]);
            }
        }

        // Entropy falls as beta grows. Find [lo, hi] with H(lo) >= target >= H(hi).
        double beta = 1.0;
        RowFit fit = fill_row(d2, i, min_d2, beta, out);
        double lo = 0.0;
        double hi = 0.0;
        bool bracketed = std::abs(fit.entropy - target) <= kEntropyTolerance;
        if (!bracketed) {
            const bool grow = fit.entropy > target;
            double prev = beta;
            for (int step = 0; step < kMaxBracketSteps; ++step) {
                prev = beta;
                beta = grow ? beta * 2.0 : beta * 0.5;
                fit = fill_row(d2, i, min_d2, beta, out);
                if (std::abs(fit.entropy - target) <= kEntropyTolerance) {
                    bracketed = true;
                    lo = hi = beta;
                    break;
                }
                if (grow ? fit.entropy < target : fit.entropy > target) {
                    lo = grow ? prev : beta;
                    hi = grow ? beta : prev;
                    break;
                }
            }
            if (!bracketed && lo == 0.0 && hi == 0.0) {
                failed[i] = 1;
                continue;
            }
            if (!bracketed) {
                for (int step = 0; step < kMaxBisectionSteps; ++step) {
                    beta = 0.5 * (lo + hi);
                    fit = fill_row(d2, i, min_d2, beta, out);
                    if (std::abs(fit.entropy - target) <= kEntropyTolerance) {
                        break;
                    }
                    if (fit.entropy > target) {
                        lo = beta;
                    } else {
                        hi = beta;
                    }
                }
            }
        }

        double mass = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                out[j] = std::max(out[j] / fit.mass, kProbabilityFloor);
                mass += out[j];
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[j] /= mass;
        }
        result.bandwidths.sigma[i] = std::sqrt(1.0 / (2.0 * beta));
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (failed[i]) {
            throw Error(ErrorCode::CalibrationFailed,
                        "cannot bracket the bandwidth for row " + std::to_string(i) + " (degenerate distances)", i);
        }
    }
    return result;
}

PairwiseAffinityMatrix symmetrize(Matrix conditional) {
    const std::size_t n = conditional.rows();
    const double scale = 1.0 / (2.0 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        conditional(i, i) = 0.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = (conditional(i, j) + conditional(j, i)) * scale;
            conditional(i, j) = v;
            conditional(j, i) = v;
        }
    }
    return PairwiseAffinityMatrix(std::move(conditional));
}

Matrix class_affinities(const ClassProbabilityMatrix& T) {
    // Already row-stochastic by construction of the type.
    return T.values();
}

PairwiseAffinityMatrix data_affinities(const Matrix& points, double perplexity) {
    Matrix conditional = calibrate_conditional(pairwise_squared_distances(points), perplexity).conditional;
    return symmetrize(std::move(conditional));
}

}  // namespace cctsne
