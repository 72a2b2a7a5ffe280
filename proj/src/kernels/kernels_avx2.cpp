#include "cctsne/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace cctsne::kernels {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

void sq_dist_row_avx2(const double* xt, std::size_t n, std::size_t d, std::size_t i, double* out) {
    const std::size_t blocked = n - n % 4;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = 0.0;
    }
    for (std::size_t k = 0; k < d; ++k) {
        const double* feature = xt + k * n;
        const double xi = feature[i];
        const __m256d vxi = _mm256_set1_pd(xi);
        std::size_t j = 0;
        for (; j < blocked; j += 4) {
            __m256d diff = _mm256_sub_pd(vxi, _mm256_loadu_pd(feature + j));
            __m256d acc = _mm256_loadu_pd(out + j);
            _mm256_storeu_pd(out + j, _mm256_add_pd(acc, _mm256_mul_pd(diff, diff)));
        }
        for (; j < n; ++j) {
            const double diff = xi - feature[j];
            out[j] = out[j] + diff * diff;
        }
    }
}

double kernel_row_sum_avx2(const double* yx, const double* yy, std::size_t n, std::size_t i) {
    const std::size_t blocked = n - n % 4;
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d xi = _mm256_set1_pd(yx[i]);
    const __m256d yi = _mm256_set1_pd(yy[i]);
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j < blocked; j += 4) {
        __m256d dx = _mm256_sub_pd(xi, _mm256_loadu_pd(yx + j));
        __m256d dy = _mm256_sub_pd(yi, _mm256_loadu_pd(yy + j));
        __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
        acc = _mm256_add_pd(acc, _mm256_div_pd(one, _mm256_add_pd(one, d2)));
    }
    double sum = hsum(acc);
    for (; j < n; ++j) {
        const double dx = yx[i] - yx[j];
        const double dy = yy[i] - yy[j];
        sum += 1.0 / (1.0 + (dx * dx + dy * dy));
    }
    // the self pair was included and contributes exactly 1
    return sum - 1.0;
}

void pairwise_force_row_avx2(const double* yx, const double* yy, const double* prow, std::size_t n, std::size_t i,
                             double p_scale, double inv_z, double q_floor, double* force) {
    const std::size_t blocked = n - n % 4;
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d xi = _mm256_set1_pd(yx[i]);
    const __m256d yi = _mm256_set1_pd(yy[i]);
    const __m256d scale = _mm256_set1_pd(p_scale);
    const __m256d vinv = _mm256_set1_pd(inv_z);
    const __m256d vfloor = _mm256_set1_pd(q_floor);
    __m256d fx = _mm256_setzero_pd();
    __m256d fy = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j < blocked; j += 4) {
        __m256d dx = _mm256_sub_pd(xi, _mm256_loadu_pd(yx + j));
        __m256d dy = _mm256_sub_pd(yi, _mm256_loadu_pd(yy + j));
        __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
        __m256d z = _mm256_div_pd(one, _mm256_add_pd(one, d2));
        __m256d q = _mm256_max_pd(_mm256_mul_pd(z, vinv), vfloor);
        __m256d p = _mm256_mul_pd(scale, _mm256_loadu_pd(prow + j));
        __m256d w = _mm256_mul_pd(_mm256_sub_pd(p, q), z);
        // the self pair has dx = dy = 0 and adds nothing
        fx = _mm256_add_pd(fx, _mm256_mul_pd(w, dx));
        fy = _mm256_add_pd(fy, _mm256_mul_pd(w, dy));
    }
    double sx = hsum(fx);
    double sy = hsum(fy);
    for (; j < n; ++j) {
        if (j == i) {
            continue;
        }
        const double dx = yx[i] - yx[j];
        const double dy = yy[i] - yy[j];
        const double z = 1.0 / (1.0 + (dx * dx + dy * dy));
        const double q = std::max(z * inv_z, q_floor);
        const double w = (p_scale * prow[j] - q) * z;
        sx += w * dx;
        sy += w * dy;
    }
    force[0] = sx;
    force[1] = sy;
}

}  // namespace

const KernelTable& avx2_table_unchecked() {
    static const KernelTable table{"avx2", sq_dist_row_avx2, kernel_row_sum_avx2, pairwise_force_row_avx2};
    return table;
}

}  // namespace cctsne::kernels
