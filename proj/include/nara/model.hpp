#pragma once

// Toy bidirectional transformer: learned token, position and segment embeddings,
// pre-norm blocks (attention without a causal mask, SiLU feed-forward), a
// final layer norm and an untied output head. Q/K/V/O projections have no
// bias and route through the adapter when one is bound.

#include <cstdint>
#include <span>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/diffusion.hpp"
#include "nara/grad_check.hpp"
#include "nara/tensor.hpp"

namespace nara {

struct ModelConfig {
    Vocab vocab;
    int d_model = 64;
    int n_layer = 2;
    int n_head = 2;
    int max_len = 64;
    int d_ff = 256;
    double init_std = 0.02;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    int head_dim() const { return d_model / n_head; }
};

/// Sequence longer than the configured maximum.
class SequenceLengthError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct Block {
    Tensor ln1_gain, ln1_bias;
    std::array<Tensor, 4> proj;  // W0 for Q, K, V, O, each d × d (out × in)
    Tensor ln2_gain, ln2_bias;
    Tensor ff1_w, ff1_b;  // d_ff × d
    Tensor ff2_w, ff2_b;  // d × d_ff
};

/// What the adapted projections see during one forward pass.
struct AdapterBinding {
    const AdapterState* adapter = nullptr;
    const CoreSet* cores = nullptr;
    double lambda = 0.0;
    const Dropout* dropout = nullptr;
};

class ModelState {
public:
    ModelState() = default;

    const ModelConfig& config() const { return config_; }
    std::vector<Block>& blocks() { return blocks_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    /// Named base tensors in a fixed order.
    std::vector<NamedParam> parameters() const;
    /// Turns gradient tracking of every base tensor on or off.
    void set_trainable(bool on);
    ModelState clone() const;

    /// Logits for every position, shape seq_len × V. Without a layout the
    /// tokens take positions 0, 1, 2, ... in segment 0.
    Tensor forward(std::span<const int> tokens, const AdapterBinding* binding = nullptr,
                   const struct Layout* layout = nullptr) const;

    friend ModelState init_model(const ModelConfig& config, std::uint64_t seed);

private:
    ModelConfig config_;
    Tensor tok_emb_, pos_emb_, seg_emb_;
    std::vector<Block> blocks_;
    Tensor lnf_gain_, lnf_bias_;
    Tensor head_w_, head_b_;
};

/// Weights ~ N(0, init_std²), biases 0, norm gains 1. Trainable.
ModelState init_model(const ModelConfig& config, std::uint64_t seed);

/// Rows [offset, offset + count) of a logits matrix.
Tensor slice_rows(const Tensor& logits, std::size_t offset, std::size_t count);

/// Position and segment ids per token.
struct Layout {
    std::vector<int> positions;
    std::vector<int> segments;  // 0 prompt, 1 response
};

/// Prompt tokens at positions 0..P−1 in segment 0, response tokens at
/// positions 0..R−1 in segment 1, so response token i and prompt token i
/// share a position id. Throws SequenceLengthError past max_len.
Layout prompt_response_layout(const ModelConfig& config, std::size_t prompt_len, std::size_t response_len);

/// Logits of the response positions of a masked item.
Tensor response_logits(const ModelState& model, const MaskedItem& item, const AdapterBinding* binding);

}  // namespace nara
