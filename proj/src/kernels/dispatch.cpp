#include <cassert>
#include <cstdlib>
#include <string>

#include "smpc/kernels.hpp"

namespace smpc::kernels {

#ifdef SMPC_HAVE_AVX2_TU
const KernelTable& avx2_table_impl();
#endif

namespace {

bool cpu_has_avx2_fma() {
#if defined(SMPC_HAVE_AVX2_TU) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

bool scalar_forced() {
    const char* env = std::getenv("SMPC_FORCE_SCALAR");
    return env != nullptr && std::string(env) != "0" && std::string(env) != "";
}

}  // namespace

const KernelTable* avx2_table() {
#ifdef SMPC_HAVE_AVX2_TU
    if (cpu_has_avx2_fma()) return &avx2_table_impl();
#endif
    return nullptr;
}

const KernelTable& active() {
    static const KernelTable& table = [] () -> const KernelTable& {
        if (!scalar_forced()) {
            if (const KernelTable* wide = avx2_table()) return *wide;
        }
        return scalar_table();
    }();
    return table;
}

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::scalar: return "scalar";
        case Isa::avx2: return "avx2";
    }
    return "unknown";
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active().axpy(a, x.data(), y.data(), y.size());
}

void fma_elementwise(std::span<const double> a, std::span<const double> x, std::span<double> y) {
    assert(a.size() == y.size() && x.size() == y.size());
    active().fma_elementwise(a.data(), x.data(), y.data(), y.size());
}

void polyval(std::span<const double> coeffs, std::span<const double> t, std::span<double> out) {
    assert(t.size() == out.size());
    active().polyval(coeffs.data(), coeffs.size(), t.data(), out.data(), out.size());
}

double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }

double dot(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    return active().dot(x.data(), y.data(), x.size());
}

}  // namespace smpc::kernels
