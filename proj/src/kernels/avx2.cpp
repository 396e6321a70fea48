// Built with -mavx2 -mfma. Nothing here may run before the dispatcher has
// confirmed CPU support.

#include <immintrin.h>

#include <cmath>

#include "smpc/kernels.hpp"

namespace smpc::kernels {
namespace {

constexpr std::size_t kLanes = 4;

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void fma_avx2(const double* a, const double* x, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] = std::fma(a[i], x[i], y[i]);
}

void polyval_avx2(const double* coeffs, std::size_t m, const double* t, double* out, std::size_t n) {
    if (m == 0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
        return;
    }
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256d vt = _mm256_loadu_pd(t + i);
        __m256d acc = _mm256_set1_pd(coeffs[m - 1]);
        for (std::size_t k = m - 1; k-- > 0;) acc = _mm256_fmadd_pd(acc, vt, _mm256_set1_pd(coeffs[k]));
        _mm256_storeu_pd(out + i, acc);
    }
    for (; i < n; ++i) {
        double acc = coeffs[m - 1];
        for (std::size_t k = m - 1; k-- > 0;) acc = std::fma(acc, t[i], coeffs[k]);
        out[i] = acc;
    }
}

double horizontal_sum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + kLanes));
    }
    double s = horizontal_sum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i];
    return s;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 2 * kLanes <= n; i += 2 * kLanes) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + kLanes), _mm256_loadu_pd(y + i + kLanes), acc1);
    }
    double s = horizontal_sum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

}  // namespace

const KernelTable& avx2_table_impl() {
    static const KernelTable table{Isa::avx2, axpy_avx2, fma_avx2, polyval_avx2, sum_avx2, dot_avx2};
    return table;
}

}  // namespace smpc::kernels
