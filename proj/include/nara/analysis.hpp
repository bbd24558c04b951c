#pragma once

// Diagnostics: ‖ΔW(λ)‖_F sweeps, loss versus noise level, LOWESS smoothing.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/diffusion.hpp"
#include "nara/model.hpp"

namespace nara {

/// One CSV row. `layer` is a layer index, or "mean" / "std" for the
/// across-layer aggregates of a norm sweep, or "all" for loss records.
struct SweepRecord {
    double lambda = 0.0;
    double value = 0.0;
    std::string layer;
    std::string module;
    std::string method;
    std::size_t rep = 0;
};

inline constexpr const char* kSweepCsvHeader = "lambda,value,layer,module,method,rep";

void write_sweep_csv(std::ostream& out, std::span<const SweepRecord> records);
void write_sweep_csv(const std::string& path, std::span<const SweepRecord> records);
/// Parses a file written by write_sweep_csv; throws on a bad header or row.
std::vector<SweepRecord> read_sweep_csv(std::istream& in);

/// n evenly spaced points covering [0, 1] inclusive.
std::vector<double> lambda_grid(std::size_t n = 101);

/// ΔW(λ) for one module: B·C(λ)·A, B·A for LoRA, B_i·A_i for Multi-LoRA.
Tensor delta_w(const AdapterState& adapter, ModuleId module, double lambda, const CoreSet& cores);

/// ‖ΔW(λ)‖_F per (λ, layer, module), then per (λ, module) the mean and
/// population standard deviation across layers. Cores are computed once
/// per λ.
std::vector<SweepRecord> delta_w_norm_sweep(const AdapterState& adapter, std::span<const double> lambdas,
                                            const std::string& method);

/// Per sample and repetition: λ ~ U[0, 1], m = ⌊λ·L_s⌋ random response
/// positions masked, record (m/L_s, mean masked-token cross-entropy). Draws
/// with m = 0 are skipped. Records are ordered by (sample, repetition).
/// Response logits (L_s × V) for a masked item.
using ResponseScorer = std::function<Tensor(const MaskedItem&)>;

std::vector<SweepRecord> loss_vs_noise(const ResponseScorer& scorer, std::span<const Sequence> samples,
                                       std::size_t repetitions, std::uint64_t seed, const std::string& method,
                                       const Vocab& vocab);

std::vector<SweepRecord> loss_vs_noise(const ModelState& model, const AdapterState* adapter,
                                       std::span<const Sequence> samples, std::size_t repetitions,
                                       std::uint64_t seed, const std::string& method);

struct LowessCurve {
    std::vector<double> x;  // sorted
    std::vector<double> y;  // smoothed value at each x
    double fraction = 0.5;
};

/// Single-pass LOWESS: at each point, a tricube-weighted linear fit over its
/// ⌈fraction·n⌉ nearest neighbours (at least 2). Throws std::invalid_argument
/// on fewer than 2 points, mismatched lengths, or fraction outside (0, 1].
LowessCurve lowess(std::span<const double> x, std::span<const double> y, double fraction = 0.5);

/// Neighbour count used by lowess.
std::size_t lowess_span(std::size_t n, double fraction);

}  // namespace nara
