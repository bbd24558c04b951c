#include "nara/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "nara/ops.hpp"

namespace nara {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void remove_component(std::vector<double>& v, const std::vector<double>& q) {
    const double c = dot(q, v);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= c * q[i];
}

std::vector<std::vector<double>> candidates(std::span<const Tensor> matrices, BasisMode mode) {
    std::vector<std::vector<double>> out;
    for (const auto& m : matrices) {
        const std::size_t rows = m.rows(), cols = m.cols();
        if (mode == BasisMode::Column) {
            for (std::size_t j = 0; j < cols; ++j) {
                std::vector<double> v(rows);
                for (std::size_t i = 0; i < rows; ++i) v[i] = m.at(i, j);
                out.push_back(std::move(v));
            }
        } else {
            for (std::size_t i = 0; i < rows; ++i) {
                out.emplace_back(m.data().begin() + static_cast<std::ptrdiff_t>(i * cols),
                                 m.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
            }
        }
    }
    return out;
}

// Appends standard basis directions (orthogonalized) until `basis` has `target` vectors.
void complete(Basis& basis, std::size_t target) {
    for (std::size_t e = 0; e < basis.ambient && basis.dim() < target; ++e) {
        std::vector<double> v(basis.ambient, 0.0);
        v[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& q : basis.vectors) remove_component(v, q);
        const double n = norm(v);
        if (n < 1e-6) continue;
        for (auto& x : v) x /= n;
        basis.vectors.push_back(std::move(v));
    }
}

Tensor basis_matrix(const Basis& basis, std::size_t r, BasisMode mode) {
    const std::size_t n = basis.ambient;
    if (mode == BasisMode::Column) {
        Tensor m({n, r});
        auto d = m.data_mut();
        for (std::size_t j = 0; j < r; ++j)
            for (std::size_t i = 0; i < n; ++i) d[i * r + j] = basis.vectors[j][i];
        return m;
    }
    Tensor m({r, n});
    auto d = m.data_mut();
    for (std::size_t i = 0; i < r; ++i) std::copy(basis.vectors[i].begin(), basis.vectors[i].end(), d.begin() + i * n);
    return m;
}

double frobenius(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return std::sqrt(s);
}

}  // namespace

Basis union_basis(std::span<const Tensor> matrices, BasisMode mode, double tol) {
    if (matrices.empty()) throw std::invalid_argument("union_basis: no matrices");
    Basis basis;
    basis.ambient = mode == BasisMode::Column ? matrices[0].rows() : matrices[0].cols();
    auto work = candidates(matrices, mode);
    for (const auto& v : work) {
        if (v.size() != basis.ambient) throw DimensionError("union_basis: matrices disagree in shape");
    }
    double largest = 0.0;
    for (const auto& v : work) largest = std::max(largest, norm(v));
    if (largest == 0.0) return basis;
    const double threshold = tol * largest;

    std::vector<bool> used(work.size(), false);
    while (basis.dim() < basis.ambient) {
        std::size_t pivot = work.size();
        double best = threshold;
        for (std::size_t j = 0; j < work.size(); ++j) {
            if (used[j]) continue;
            const double n = norm(work[j]);
            if (n > best) {
                best = n;
                pivot = j;
            }
        }
        if (pivot == work.size()) break;
        used[pivot] = true;
        auto q = work[pivot];
        for (const auto& b : basis.vectors) remove_component(q, b);
        const double n = norm(q);
        if (!(n > threshold)) continue;
        for (auto& x : q) x /= n;
        for (std::size_t j = 0; j < work.size(); ++j)
            if (!used[j]) remove_component(work[j], q);
        basis.vectors.push_back(std::move(q));
    }
    return basis;
}

bool FactorizationResult::rank_sufficient() const {
    const auto r = A.rows();
    return column_rank <= r && row_rank <= r;
}

double FactorizationResult::max_residual() const {
    double m = 0.0;
    for (double r : residuals) m = std::max(m, r);
    return m;
}

FactorizationResult factorize(const FactorizationProblem& problem) {
    if (problem.targets.empty()) throw std::invalid_argument("factorize: no targets");
    const std::size_t d = problem.targets[0].rows(), k = problem.targets[0].cols();
    for (const auto& t : problem.targets) {
        if (t.ndim() != 2 || t.rows() != d || t.cols() != k) {
            throw DimensionError("factorize: target " + shape_str(t.shape()) + " does not match " +
                                 shape_str(problem.targets[0].shape()));
        }
    }
    if (problem.rank < 1 || static_cast<std::size_t>(problem.rank) > std::min(d, k)) {
        throw std::invalid_argument("factorize: rank " + std::to_string(problem.rank) + " outside [1, min(d, k) = " +
                                    std::to_string(std::min(d, k)) + "]");
    }
    const auto r = static_cast<std::size_t>(problem.rank);

    auto cols = union_basis(problem.targets, BasisMode::Column);
    auto rows = union_basis(problem.targets, BasisMode::Row);
    FactorizationResult res;
    res.column_rank = cols.dim();
    res.row_rank = rows.dim();
    complete(cols, r);
    complete(rows, r);
    res.B = basis_matrix(cols, r, BasisMode::Column);
    res.A = basis_matrix(rows, r, BasisMode::Row);

    NoGradGuard guard;
    const auto Bt = transpose(res.B);
    for (const auto& t : problem.targets) {
        auto C = matmul_nt(matmul(Bt, t), res.A);
        auto recon = matmul(matmul(res.B, C), res.A);
        const double denom = frobenius(t);
        const double err = frobenius(sub(t, recon));
        res.residuals.push_back(denom > 0.0 ? err / denom : err);
        res.cores.push_back(C.detach());
    }
    return res;
}

double orthonormality_error(const Tensor& m, BasisMode mode) {
    NoGradGuard guard;
    const auto g = mode == BasisMode::Column ? matmul(transpose(m), m) : matmul_nt(m, m);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) worst = std::max(worst, std::abs(g.at(i, j) - (i == j ? 1.0 : 0.0)));
    return worst;
}

namespace {

Tensor gaussian(RngStream& rng, std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    for (auto& v : t.data_mut()) v = rng.normal();
    return t;
}

// n × q with orthonormal columns, from Gram–Schmidt on Gaussian columns.
Tensor random_orthonormal(RngStream& rng, std::size_t n, std::size_t q) {
    Basis basis;
    basis.ambient = n;
    while (basis.dim() < q) {
        std::vector<double> v(n);
        for (auto& x : v) x = rng.normal();
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& b : basis.vectors) remove_component(v, b);
        const double len = norm(v);
        if (len < 1e-3) continue;
        for (auto& x : v) x /= len;
        basis.vectors.push_back(std::move(v));
    }
    return basis_matrix(basis, q, BasisMode::Column);
}

}  // namespace

FactorizationProblem random_shared_problem(const ProblemShape& shape, RngStream& rng) {
    const std::size_t q = shape.shared_rank;
    const std::size_t s = shape.target_rank == 0 ? q : shape.target_rank;
    if (q == 0 || q > std::min(shape.d, shape.k) || s > q || shape.targets == 0) {
        throw std::invalid_argument("random_shared_problem: need 1 <= target_rank <= shared_rank <= min(d, k)");
    }
    NoGradGuard guard;
    const auto U = random_orthonormal(rng, shape.d, q);
    const auto V = random_orthonormal(rng, shape.k, q);
    FactorizationProblem p;
    p.rank = static_cast<int>(q);
    for (std::size_t i = 0; i < shape.targets; ++i) {
        // P_i = L·diag(σ)·Rᵀ with s singular values in [0.5, 1.5].
        const auto L = random_orthonormal(rng, q, s);
        auto R = random_orthonormal(rng, q, s);
        auto rd = R.data_mut();
        for (std::size_t j = 0; j < s; ++j) {
            const double sigma = rng.uniform(0.5, 1.5);
            for (std::size_t a = 0; a < q; ++a) rd[a * s + j] *= sigma;
        }
        const auto P = matmul_nt(L, R);
        p.targets.push_back(matmul_nt(matmul(U, P), V).detach());
    }
    return p;
}

std::size_t TheoremReport::passed() const {
    return static_cast<std::size_t>(std::count_if(cases.begin(), cases.end(), [](const auto& c) { return c.passed; }));
}

TheoremReport run_theorem_suite(std::uint64_t seed, std::size_t count) {
    const RngStream root(seed, "verify-theorem");
    TheoremReport report;
    for (std::size_t n = 0; n < count; ++n) {
        auto rng = root.substream(n);
        ProblemShape shape;
        shape.d = 4 + rng.below(9);
        shape.k = 4 + rng.below(9);
        shape.targets = 1 + rng.below(5);
        shape.shared_rank = 2 + rng.below(std::min(shape.d, shape.k) - 2);
        // Every target full rank in the shared space so that the union is q-dimensional.
        shape.target_rank = shape.shared_rank;
        auto problem = random_shared_problem(shape, rng);

        TheoremCase c;
        c.shape = shape;
        auto exact = factorize(problem);
        c.column_rank = exact.column_rank;
        c.row_rank = exact.row_rank;
        c.residual_at_rank = exact.max_residual();
        c.orthonormality =
            std::max(orthonormality_error(exact.B, BasisMode::Column), orthonormality_error(exact.A, BasisMode::Row));
        problem.rank -= 1;
        c.residual_below_rank = factorize(problem).max_residual();
        c.passed = c.column_rank == shape.shared_rank && c.row_rank == shape.shared_rank &&
                   c.residual_at_rank < kExactResidual && c.residual_below_rank > kNecessityResidual &&
                   c.orthonormality < kOrthonormalityTol;
        report.cases.push_back(c);
    }
    return report;
}

}  // namespace nara
