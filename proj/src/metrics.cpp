#include "cctsne/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "cctsne/error.hpp"
#include "cctsne/kernels.hpp"

namespace cctsne {

std::string to_string(Method method) {
    switch (method) {
    case Method::CcTsne: return "cctsne";
    case Method::Baseline: return "baseline";
    case Method::Vanilla: return "vanilla";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    if (name == "cctsne") return Method::CcTsne;
    if (name == "baseline") return Method::Baseline;
    if (name == "vanilla") return Method::Vanilla;
    throw Error(ErrorCode::InvalidArgument, "unknown method '" + std::string(name) + "'");
}

namespace {

// Row i of squared distances, then indices j != i ordered by (distance, j).
class RankedRows {
public:
    explicit RankedRows(const Matrix& points)
        : xt_(points.transposed()), n_(points.rows()), d_(points.cols()), dist_(n_), order_(n_ - 1) {}

    std::span<const std::size_t> order(std::size_t i) {
        kernels::active().sq_dist_row(xt_.data(), n_, d_, i, dist_.data());
        std::size_t w = 0;
        for (std::size_t j = 0; j < n_; ++j) {
            if (j != i) {
                order_[w++] = j;
            }
        }
        std::sort(order_.begin(), order_.end(), [this](std::size_t a, std::size_t b) {
            return dist_[a] < dist_[b] || (dist_[a] == dist_[b] && a < b);
        });
        return order_;
    }

private:
    Matrix xt_;
    std::size_t n_;
    std::size_t d_;
    std::vector<double> dist_;
    std::vector<std::size_t> order_;
};

}  // namespace

NeighborIndices knn_indices(const Matrix& points, std::size_t k) {
    const std::size_t n = points.rows();
    if (k < 1 || k >= n) {
        throw Error(ErrorCode::InvalidK, "k must satisfy 1 <= k < n");
    }
    NeighborIndices out{k, std::vector<std::size_t>(n * k)};
    RankedRows ranked(points);
    for (std::size_t i = 0; i < n; ++i) {
        auto order = ranked.order(i);
        std::copy_n(order.begin(), k, out.indices.begin() + static_cast<std::ptrdiff_t>(i * k));
    }
    return out;
}

double trustworthiness(const Matrix& high, const Matrix& low, std::size_t k) {
    const std::size_t n = high.rows();
    if (low.rows() != n) {
        throw Error(ErrorCode::DimensionMismatch, "both spaces must hold the same points");
    }
    if (k < 1 || 2 * k >= n) {
        throw Error(ErrorCode::InvalidK, "k must satisfy 1 <= k < n/2");
    }
    RankedRows high_rows(high);
    RankedRows low_rows(low);
    std::vector<std::size_t> rank(n);
    long long penalty = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto high_order = high_rows.order(i);
        for (std::size_t r = 0; r < high_order.size(); ++r) {
            rank[high_order[r]] = r + 1;
        }
        auto low_order = low_rows.order(i);
        for (std::size_t t = 0; t < k; ++t) {
            const std::size_t r = rank[low_order[t]];
            if (r > k) {
                penalty += static_cast<long long>(r - k);
            }
        }
    }
    const double nd = static_cast<double>(n);
    const double kd = static_cast<double>(k);
    return 1.0 - 2.0 / (nd * kd * (2.0 * nd - 3.0 * kd - 1.0)) * static_cast<double>(penalty);
}

double continuity(const Matrix& high, const Matrix& low, std::size_t k) { return trustworthiness(low, high, k); }

double ccm(const Matrix& Y, std::span<const int> labels) {
    const std::size_t n = Y.rows();
    if (labels.size() != n) {
        throw Error(ErrorCode::DimensionMismatch, "one label per point required");
    }
    std::map<int, std::size_t> slot;
    for (int l : labels) {
        slot.emplace(l, 0);
    }
    if (slot.size() < 2) {
        throw Error(ErrorCode::SingleClass, "class consistency needs at least two classes");
    }
    std::size_t next = 0;
    for (auto& [label, s] : slot) {
        s = next++;
    }
    const std::size_t dims = Y.cols();
    Matrix centroid(slot.size(), dims);
    std::vector<double> count(slot.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t s = slot[labels[i]];
        count[s] += 1.0;
        for (std::size_t c = 0; c < dims; ++c) {
            centroid(s, c) += Y(i, c);
        }
    }
    for (std::size_t s = 0; s < slot.size(); ++s) {
        for (std::size_t c = 0; c < dims; ++c) {
            centroid(s, c) /= count[s];
        }
    }
    auto dist2 = [&](std::size_t i, std::size_t s) {
        double acc = 0.0;
        for (std::size_t c = 0; c < dims; ++c) {
            const double diff = Y(i, c) - centroid(s, c);
            acc += diff * diff;
        }
        return acc;
    };
    std::size_t violations = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = slot[labels[i]];
        const double d_own = dist2(i, own);
        for (std::size_t s = 0; s < slot.size(); ++s) {
            if (s != own && dist2(i, s) < d_own) {
                ++violations;
                break;
            }
        }
    }
    return static_cast<double>(violations) / static_cast<double>(n);
}

MetricsReport evaluate(const Matrix& features, const Matrix& Y, std::span<const int> labels, Method method,
                       double alpha, std::uint64_t seed, std::size_t k) {
    MetricsReport r;
    r.method = method;
    r.alpha = alpha;
    r.seed = seed;
    r.k = static_cast<int>(k);
    r.trustworthiness = trustworthiness(features, Y, k);
    r.continuity = continuity(features, Y, k);
    r.ccm = ccm(Y, labels);
    return r;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> rows) {
    out << "method,alpha,seed,k,trustworthiness,continuity,ccm,source\n";
    const auto old_precision = out.precision(17);
    for (const auto& r : rows) {
        out << to_string(r.method) << ',' << r.alpha << ',' << r.seed << ',' << r.k << ',' << r.trustworthiness << ','
            << r.continuity << ',' << r.ccm << ',' << r.source << '\n';
    }
    out.precision(old_precision);
}

}  // namespace cctsne
