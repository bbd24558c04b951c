#pragma once

// Shared-basis factorization of several target updates:
// ΔW_i ≈ B·C_i·A with B (d×r, orthonormal columns) spanning the union of the
// column spaces, A (r×k, orthonormal rows) spanning the union of the row
// spaces, and C_i = Bᵀ·ΔW_i·Aᵀ. Exact whenever r covers both unions.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nara/rng.hpp"
#include "nara/tensor.hpp"

namespace nara {

enum class BasisMode { Column, Row };

/// Orthonormal vectors of length `ambient`, in pivot order.
struct Basis {
    std::size_t ambient = 0;
    std::vector<std::vector<double>> vectors;

    std::size_t dim() const { return vectors.size(); }
};

inline constexpr double kRankTolerance = 1e-10;

/// Column-pivoted modified Gram–Schmidt with one reorthogonalization pass
/// over the columns (or rows) of every matrix. A residual is accepted while
/// its norm exceeds tol × the largest input column (row) norm. Zero inputs
/// give an empty basis.
Basis union_basis(std::span<const Tensor> matrices, BasisMode mode, double tol = kRankTolerance);

struct FactorizationProblem {
    std::vector<Tensor> targets;  // N matrices, all d × k
    int rank = 1;
};

struct FactorizationResult {
    Tensor B;                      // d × r
    Tensor A;                      // r × k
    std::vector<Tensor> cores;     // r × r each
    std::vector<double> residuals; // ‖ΔW_i − B C_i A‖_F / ‖ΔW_i‖_F (absolute when ΔW_i = 0)
    std::size_t column_rank = 0;
    std::size_t row_rank = 0;

    /// True when r covers both union dimensions.
    bool rank_sufficient() const;
    double max_residual() const;
};

/// When the unions are smaller than r, B and A are completed with further
/// orthonormal directions; when larger, the first r pivots are kept and the
/// projection loss shows up in the residuals. Throws std::invalid_argument
/// for an empty problem, mismatched shapes, or r outside [1, min(d, k)].
FactorizationResult factorize(const FactorizationProblem& problem);

/// Max |QᵀQ − I| for the basis stored in B (columns) or A (rows).
double orthonormality_error(const Tensor& m, BasisMode mode);

struct ProblemShape {
    std::size_t d = 8;
    std::size_t k = 6;
    std::size_t targets = 3;
    std::size_t shared_rank = 3;  // dimension of the shared column and row spaces
    std::size_t target_rank = 0;  // rank of each target; 0 means shared_rank
};

/// ΔW_i = U·P_i·Vᵀ with random orthonormal U (d×q), V (k×q) and P_i of rank
/// target_rank whose nonzero singular values lie in [0.5, 1.5].
FactorizationProblem random_shared_problem(const ProblemShape& shape, RngStream& rng);

struct TheoremCase {
    ProblemShape shape;
    std::size_t column_rank = 0;
    std::size_t row_rank = 0;
    double residual_at_rank = 0.0;        // max over targets at r = q
    double residual_below_rank = 0.0;     // max over targets at r = q − 1
    double orthonormality = 0.0;          // worst of B and A at r = q
    bool passed = false;
};

struct TheoremReport {
    std::vector<TheoremCase> cases;
    std::size_t passed() const;
};

inline constexpr double kExactResidual = 1e-8;
inline constexpr double kNecessityResidual = 0.01;
inline constexpr double kOrthonormalityTol = 1e-10;

/// Random problems with q ≥ 2, checked for exactness at r = q and a residual
/// above the necessity threshold at r = q − 1.
TheoremReport run_theorem_suite(std::uint64_t seed, std::size_t count);

}  // namespace nara
