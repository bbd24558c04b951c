#include "nara/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace nara::kernels {

bool supported(Variant v) {
    switch (v) {
        case Variant::Scalar:
            return true;
        case Variant::Avx2:
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Variant::Neon:
#if defined(__aarch64__)
            return true;
#else
            return false;
#endif
    }
    return false;
}

const KernelTable& table_for(Variant v) {
    if (!supported(v)) {
        throw std::runtime_error("kernel variant not supported on this CPU: " +
                                 std::string(variant_name(v)));
    }
    switch (v) {
#if defined(__x86_64__) || defined(_M_X64)
        case Variant::Avx2:
            return avx2_table();
#endif
#if defined(__aarch64__)
        case Variant::Neon:
            return neon_table();
#endif
        default:
            return scalar_table();
    }
}

std::vector<Variant> available_variants() {
    std::vector<Variant> out{Variant::Scalar};
    for (Variant v : {Variant::Avx2, Variant::Neon}) {
        if (supported(v)) out.push_back(v);
    }
    return out;
}

std::string_view variant_name(Variant v) {
    switch (v) {
        case Variant::Scalar:
            return "scalar";
        case Variant::Avx2:
            return "avx2";
        case Variant::Neon:
            return "neon";
    }
    return "unknown";
}

namespace {

const KernelTable& select() {
    if (const char* env = std::getenv("NARA_LAB_KERNEL")) {
        const std::string want(env);
        for (Variant v : {Variant::Scalar, Variant::Avx2, Variant::Neon}) {
            if (want == variant_name(v)) return table_for(v);
        }
        throw std::runtime_error("NARA_LAB_KERNEL: unknown variant '" + want + "'");
    }
    if (supported(Variant::Avx2)) return table_for(Variant::Avx2);
    if (supported(Variant::Neon)) return table_for(Variant::Neon);
    return scalar_table();
}

}  // namespace

const KernelTable& active() {
    static const KernelTable& table = select();
    return table;
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, const KernelTable& kt) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) kt.axpy(arow[p], b + p * n, crow, n);
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, const KernelTable& kt) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += kt.dot(arow, b + j * k, k);
    }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, const KernelTable& kt) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) kt.axpy(arow[i], brow, c + i * n, n);
    }
}

}  // namespace nara::kernels
