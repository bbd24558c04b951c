#pragma once

// Semi-autoregressive block decoding with confidence-greedy unmasking and
// block-wise early termination.

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/diffusion.hpp"
#include "nara/model.hpp"

namespace nara {

struct SampleConfig {
    std::size_t answer_length = 9;  // matches the default task response length
    std::size_t block_size = 3;
    std::size_t steps = 0;  // 0 means answer_length
    bool early_termination = true;

    /// Throws std::invalid_argument naming the offending "sample.<field>".
    void validate() const;
    std::size_t resolved_steps() const { return steps ? steps : answer_length; }
    std::size_t blocks() const { return answer_length / block_size; }
};

struct DecodeStep {
    std::size_t block = 0;
    double lambda = 0.0;  // masked fraction of the response before the step
    std::size_t position = 0;
    int token = 0;
    double confidence = 0.0;
};

enum class Termination { Completed, EarlyStop };
std::string_view to_string(Termination t);

struct DecodeTrace {
    std::vector<DecodeStep> steps;
    Termination reason = Termination::Completed;
    std::size_t blocks_decoded = 0;
    std::vector<int> response;

    /// JSON object: steps, termination, blocks_decoded, response.
    std::string to_json() const;
};

/// Response logits (answer_length × V) for the current response tokens at
/// noise level λ. The prompt is bound by whoever builds the denoiser.
using Denoiser = std::function<Tensor(std::span<const int> response, double lambda)>;

/// Toy-model denoiser. Cores are computed once per call and shared by every
/// adapted projection.
Denoiser model_denoiser(const ModelState& model, const AdapterState* adapter, std::span<const int> prompt);

enum class BlockDecision { Continue, Stop };

/// Called after each completed block. `blocks_since_eos` is empty until a
/// block containing EOS completes; then it counts the blocks finished after
/// that one. One further block is allowed, then decoding stops.
BlockDecision early_terminate_check(std::span<const int> block, std::optional<std::size_t>& blocks_since_eos,
                                    int eos_id);

/// Starts from an all-MASK response and unmasks, one token per step, the
/// masked position of the active block whose argmax probability is highest
/// (lowest position on ties). MASK is never emitted. After early
/// termination the unresolved positions are filled with EOS.
DecodeTrace decode(const Denoiser& denoiser, const SampleConfig& config, const Vocab& vocab);

DecodeTrace decode(const ModelState& model, const AdapterState* adapter, std::span<const int> prompt,
                   const SampleConfig& config);

/// Independent prompts decoded in parallel; output order follows input order.
std::vector<DecodeTrace> decode_all(const ModelState& model, const AdapterState* adapter,
                                    std::span<const std::vector<int>> prompts, const SampleConfig& config);

}  // namespace nara
