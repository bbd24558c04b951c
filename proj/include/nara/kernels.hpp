#pragma once

// Dense float64 inner-loop kernels.
//
// Every kernel exists as a portable scalar reference and, where the target
// supports it, an AVX2+FMA (x86-64) or NEON (aarch64) variant. The active
// table is chosen once at first use from the CPU feature set; the
// NARA_LAB_KERNEL environment variable ("scalar", "avx2", "neon") overrides
// the choice. SIMD variants use a fixed lane-reduction order so results are
// reproducible run to run on the same variant, but they are not bitwise
// equal to the scalar reference (FMA contraction, different summation
// order). tests/test_kernels.cpp checks them against each other.

#include <cstddef>
#include <string_view>
#include <vector>

namespace nara::kernels {

enum class Variant { Scalar, Avx2, Neon };

struct KernelTable {
    Variant variant;
    const char* name;
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] += x[i]
    void (*add)(const double* x, double* y, std::size_t n);
    // z[i] = x[i] * y[i]
    void (*mul)(const double* x, const double* y, double* z, std::size_t n);
    // y[i] *= alpha
    void (*scale)(double alpha, double* y, std::size_t n);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
#if defined(__aarch64__)
const KernelTable& neon_table();
#endif

/// True when the running CPU can execute `v`.
bool supported(Variant v);

/// Table for a specific variant; throws std::runtime_error if unsupported.
const KernelTable& table_for(Variant v);

/// The dispatched table used by all tensor arithmetic.
const KernelTable& active();

/// Every variant the running CPU supports, scalar first.
std::vector<Variant> available_variants();

std::string_view variant_name(Variant v);

// Matrix products over row-major storage, built on the active table.
// All of them accumulate into `c` (c += ...), so callers zero it first
// when they want a plain product.

/// c[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, const KernelTable& kt = active());
/// c[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, const KernelTable& kt = active());
/// c[m×n] += a[k×m]ᵀ · b[k×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, const KernelTable& kt = active());

}  // namespace nara::kernels
