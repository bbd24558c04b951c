#pragma once

// Forward masking process and the re-weighted masked cross-entropy.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nara/rng.hpp"
#include "nara/tensor.hpp"

namespace nara {

/// Lower bound of the training-time corruption probability t ~ U(ε, 1).
inline constexpr double kNoiseFloor = 1e-6;

/// Token id layout. MASK and EOS are the two highest ids.
struct Vocab {
    int size = 64;
    int mask_id() const { return size - 1; }
    int eos_id() const { return size - 2; }
    /// Ids usable as task content: [0, size - 2).
    int content_size() const { return size - 2; }
};

struct Sequence {
    std::vector<int> prompt;
    std::vector<int> response;
};

/// Throws std::invalid_argument if any id is out of range, the response is
/// empty, or the response contains MASK.
void validate_sequence(const Sequence& seq, const Vocab& vocab);

struct MaskDraw {
    std::vector<int> corrupted;      // response with masked positions set to MASK
    std::vector<std::uint8_t> mask;  // 1 where masked
    std::size_t masked = 0;
    double lambda = 0.0;             // masked / response length
};

/// Independently masks each response token with probability t.
/// Throws std::invalid_argument when t is outside [kNoiseFloor, 1].
MaskDraw forward_mask(const Sequence& seq, double t, RngStream& rng, const Vocab& vocab);

/// Masks exactly `count` response positions chosen uniformly at random.
MaskDraw mask_exact(const Sequence& seq, std::size_t count, RngStream& rng, const Vocab& vocab);

/// t ~ U(kNoiseFloor, 1).
double sample_noise_level(RngStream& rng);

/// One corrupted training example.
struct MaskedItem {
    Sequence source;
    MaskDraw draw;
    double t = 1.0;

    double lambda() const { return draw.lambda; }
    bool contributes() const { return draw.masked > 0; }
    /// Model input: prompt followed by the corrupted response.
    std::vector<int> input() const;
    std::size_t response_offset() const { return source.prompt.size(); }
};

struct MaskedBatch {
    double t = 1.0;
    std::vector<MaskedItem> items;
};

/// Samples one t for the batch and masks each sequence independently.
MaskedBatch corrupt_batch(std::span<const Sequence> sequences, RngStream& rng, const Vocab& vocab);

struct MaskedLoss {
    Tensor loss;               // scalar
    bool contributes = false;  // false when the mask was empty; loss is then exactly 0
};

/// (1/t) Σ_{i masked} −log softmax(logits_i)[target_i], logits given for
/// response positions only (shape L_s × V).
MaskedLoss masked_loss(const Tensor& response_logits, std::span<const int> targets,
                       std::span<const std::uint8_t> mask, double t);

MaskedLoss masked_loss(const Tensor& response_logits, const MaskedItem& item);

}  // namespace nara
