#include "cctsne/kernels.hpp"

#include <algorithm>

namespace cctsne::kernels {

namespace {

void sq_dist_row_scalar(const double* xt, std::size_t n, std::size_t d, std::size_t i, double* out) {
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = 0.0;
    }
    for (std::size_t k = 0; k < d; ++k) {
        const double* feature = xt + k * n;
        const double xi = feature[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double diff = xi - feature[j];
            out[j] = out[j] + diff * diff;
        }
    }
}

double kernel_row_sum_scalar(const double* yx, const double* yy, std::size_t n, std::size_t i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
            continue;
        }
        const double dx = yx[i] - yx[j];
        const double dy = yy[i] - yy[j];
        sum += 1.0 / (1.0 + (dx * dx + dy * dy));
    }
    return sum;
}

void pairwise_force_row_scalar(const double* yx, const double* yy, const double* prow, std::size_t n, std::size_t i,
                               double p_scale, double inv_z, double q_floor, double* force) {
    double fx = 0.0;
    double fy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
            continue;
        }
        const double dx = yx[i] - yx[j];
        const double dy = yy[i] - yy[j];
        const double z = 1.0 / (1.0 + (dx * dx + dy * dy));
        const double q = std::max(z * inv_z, q_floor);
        const double w = (p_scale * prow[j] - q) * z;
        fx += w * dx;
        fy += w * dy;
    }
    force[0] = fx;
    force[1] = fy;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar", sq_dist_row_scalar, kernel_row_sum_scalar, pairwise_force_row_scalar};
    return table;
}

}  // namespace cctsne::kernels
