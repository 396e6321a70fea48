#include <cmath>

#include "smpc/kernels.hpp"

namespace smpc::kernels {
namespace {

// std::fma keeps the reference bit-compatible with fused vector variants.
void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a, x[i], y[i]);
}

void fma_scalar(const double* a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fma(a[i], x[i], y[i]);
}

void polyval_scalar(const double* coeffs, std::size_t m, const double* t, double* out, std::size_t n) {
    if (m == 0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double acc = coeffs[m - 1];
        for (std::size_t k = m - 1; k-- > 0;) acc = std::fma(acc, t[i], coeffs[k]);
        out[i] = acc;
    }
}

double sum_scalar(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::scalar, axpy_scalar, fma_scalar, polyval_scalar, sum_scalar, dot_scalar};
    return table;
}

}  // namespace smpc::kernels
