#pragma once

// Self-checks shared by the CLI and the acceptance harness: end-to-end
// finite-difference checking of adapter parameters on a micro model, and the
// LoRA-equivalence of a NaRA adapter whose core is pinned to I.

#include <cstdint>
#include <string>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/diffusion.hpp"
#include "nara/grad_check.hpp"
#include "nara/model.hpp"

namespace nara {

/// d_model 8, 2 layers, 2 heads, d_ff 16, V 12, max_len 6.
ModelConfig micro_model_config();
/// Rank 2 with hypernetwork widths (4, 6, 8), η 0.5, no dropout.
AdapterSpec micro_adapter_spec(AdapterVariant variant, EmbeddingMode embedding = EmbeddingMode::Fourier);
/// A prompt of 3 and a response of 3 (L = 6) with 2 masked response tokens.
MaskedItem micro_item(const Vocab& vocab, std::uint64_t seed);

/// Adds U(−scale, scale) to every tensor, so zero-initialised factors and
/// output layers carry signal.
void jitter(const std::vector<NamedParam>& tensors, std::uint64_t seed, double scale);

/// Finite differences of the masked loss of `item` against every trainable
/// adapter tensor (A, B, hypernetwork, free cores).
GradCheckReport adapter_gradient_check(const ModelState& model, const AdapterState& adapter, const MaskedItem& item,
                                       GradCheckOptions options = {});

struct GradSuiteCase {
    std::string label;  // e.g. "nara/fourier"
    GradCheckReport report;
};

/// Every variant (and every embedding mode of NaRA) on the micro config with
/// jittered parameters.
std::vector<GradSuiteCase> run_grad_check_suite(std::uint64_t seed);

struct EquivalenceReport {
    std::size_t batches = 0;
    double max_rel_error = 0.0;  // over ∇A and ∇B elements
};

/// NaRA with a zeroed hypernetwork output layer against LoRA sharing A and B:
/// gradients of A and B on `batches` random micro-batches of the micro config.
EquivalenceReport lora_gradient_equivalence(std::uint64_t seed, std::size_t batches);

}  // namespace nara
