#pragma once

// Data-parallel inner loops used by the ensemble simulator and the basis
// evaluator. Every kernel has a portable scalar reference; wider variants are
// selected once at runtime and must agree with the reference (elementwise
// kernels bit-for-bit, reductions up to summation order).

#include <cstddef>
#include <span>
#include <string_view>

namespace smpc::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    // y += a * x
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // y += a ∘ x
    void (*fma_elementwise)(const double* a, const double* x, double* y, std::size_t n);
    // out[i] = Σ_k coeffs[k] t[i]^k (Horner, highest coefficient last)
    void (*polyval)(const double* coeffs, std::size_t degree_plus_one, const double* t, double* out,
                    std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the AVX2 translation unit is not compiled in.
const KernelTable* avx2_table();

// Table chosen for this process: AVX2+FMA when the CPU reports both, scalar
// otherwise. Setting SMPC_FORCE_SCALAR=1 pins the scalar table.
const KernelTable& active();

std::string_view isa_name(Isa isa);

// Span conveniences over the active table.
void axpy(double a, std::span<const double> x, std::span<double> y);
void fma_elementwise(std::span<const double> a, std::span<const double> x, std::span<double> y);
void polyval(std::span<const double> coeffs, std::span<const double> t, std::span<double> out);
double sum(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);

}  // namespace smpc::kernels
