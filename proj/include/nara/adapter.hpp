#pragma once

// Low-rank adapters for the attention projections.
//
//   LoRA       h = W0·x + B·A·x
//   NaRA       h = W0·x + B·C(λ)·A·x,  C(λ) = I + η·reshape(F_φ(e_λ))
//   NaRA-C     h = W0·x + B·C·A·x with C a free r×r parameter (starts at I)
//   Multi-LoRA h = W0·x + B_i·A_i·x, i = interval of λ among N equal bins
//
// B and A belong to one (layer, projection) module. The hypernetwork F_φ
// (or the free core of NaRA-C) is shared according to a partition of
// {Q, K, V, O}; the default is one instance for the whole model, so C(λ)
// is computed once per noise level and reused by every module.

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nara/grad_check.hpp"
#include "nara/rng.hpp"
#include "nara/tensor.hpp"

namespace nara {

enum class AdapterVariant { None, LoRA, NaRA, NaRAC, MultiLoRA };
enum class EmbeddingMode { Fourier, MLP, Scalar };
enum class Projection { Q = 0, K = 1, V = 2, O = 3 };

inline constexpr std::array<Projection, 4> kProjections{Projection::Q, Projection::K, Projection::V,
                                                         Projection::O};

std::string_view to_string(AdapterVariant v);
std::string_view to_string(EmbeddingMode m);
char to_char(Projection p);
AdapterVariant parse_variant(std::string_view s);
EmbeddingMode parse_embedding(std::string_view s);

/// Partition of {Q, K, V, O} into hypernetwork groups.
class Sharing {
public:
    /// One global instance.
    Sharing() = default;
    /// "shared", or groups separated by '/', e.g. "Q/K/V/O", "QV/KO".
    static Sharing parse(std::string_view text);

    int group_of(Projection p) const { return group_[static_cast<int>(p)]; }
    int groups() const;
    std::string str() const;
    bool operator==(const Sharing&) const = default;

private:
    std::array<int, 4> group_{0, 0, 0, 0};
};

struct AdapterSpec {
    AdapterVariant variant = AdapterVariant::NaRA;
    int rank = 32;
    double eta = 0.1;
    int embed_dim = 64;
    std::array<int, 2> hidden{256, 512};
    EmbeddingMode embedding = EmbeddingMode::Fourier;
    Sharing sharing;
    double fourier_sigma = 1.0;
    int num_intervals = 4;
    double dropout = 0.05;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    bool uses_hypernetwork() const { return variant == AdapterVariant::NaRA; }
    bool uses_core() const { return variant == AdapterVariant::NaRA || variant == AdapterVariant::NaRAC; }
};

/// Hypernetwork widths scaled with rank: (d_emb, d_h1, d_h2).
struct HypernetWidths {
    int embed_dim;
    int hidden1;
    int hidden2;
    bool operator==(const HypernetWidths&) const = default;
};

/// Reference widths for ranks 8, 16, 32, 64; nullopt for any other rank.
std::optional<HypernetWidths> hypernet_widths_for_rank(int rank);

struct ModuleId {
    int layer = 0;
    Projection proj = Projection::Q;
    std::string str() const;
};

struct LowRankPair {
    Tensor B;  // d × r
    Tensor A;  // r × k
    ModuleId module;
};

/// y = x·Wᵀ + b with weight stored out × in.
struct Linear {
    Tensor weight;
    Tensor bias;
    Tensor forward(const Tensor& x) const;
};

/// cos(2π k λ) ⊕ sin(2π k λ) for frozen frequencies k. λ must lie in [0, 1].
Tensor fourier_embed(double lambda, const Tensor& freqs);

struct Hypernetwork {
    EmbeddingMode mode = EmbeddingMode::Fourier;
    Tensor freqs;          // d_emb/2, Fourier mode only; never trained
    Linear lift_in, lift_out;  // MLP mode only: 1 → d_emb → d_emb
    Linear hidden1, hidden2, output;  // SiLU between layers; output is r²

    /// The embedding fed to the MLP, shape 1 × width.
    Tensor embed(double lambda) const;
    /// Raw output F_φ(e_λ), shape 1 × r².
    Tensor forward(double lambda) const;
};

struct CoreMatrix {
    Tensor C;  // r × r
    double lambda = 0.0;
};

/// I_r + η·reshape(F, r×r), F of r² entries, row-major reshape.
Tensor core_from_output(const Tensor& hyper_output, int rank, double eta);

/// C(λ) from one hypernetwork.
CoreMatrix core_matrix(double lambda, const AdapterSpec& spec, const Hypernetwork& hyper);

/// Interval of λ among `num_intervals` equal right-open bins, last bin closed.
int multi_lora_select(double lambda, int num_intervals);

/// Hypernetwork (or free core) instance serving a module.
int sharing_resolve(const Sharing& sharing, ModuleId module);

/// Training-mode dropout on the adapter input.
struct Dropout {
    RngStream* rng = nullptr;
    double p = 0.0;
};

/// W0·x + B·C·A·x for row-stacked inputs x (n × k). `core` may be null
/// (plain LoRA). Dropout, when given, applies to x on the adapter branch.
Tensor adapter_forward(const Tensor& x, const Tensor& W0, const LowRankPair& pair, const Tensor* core,
                       const Dropout* dropout = nullptr);

/// Cores for every sharing group at one noise level.
struct CoreSet {
    std::vector<Tensor> cores;
    double lambda = 0.0;
};

class AdapterState {
public:
    AdapterState() = default;

    const AdapterSpec& spec() const { return spec_; }
    int layers() const { return layers_; }
    int width() const { return width_; }
    bool active() const { return spec_.variant != AdapterVariant::None; }

    /// Pair for a module; `interval` selects the Multi-LoRA bin.
    const LowRankPair& pair(ModuleId module, int interval = 0) const;
    LowRankPair& pair(ModuleId module, int interval = 0);
    std::size_t pair_count() const { return pairs_.size(); }

    const std::vector<Hypernetwork>& hypernetworks() const { return hypernets_; }
    std::vector<Hypernetwork>& hypernetworks() { return hypernets_; }
    const std::vector<Tensor>& free_cores() const { return free_cores_; }

    /// Trainable tensors (B, A, hypernetwork weights, free cores).
    std::vector<NamedParam> parameters() const;
    /// Frozen tensors (Fourier frequencies).
    std::vector<NamedParam> buffers() const;
    /// Everything, for checkpoints.
    std::vector<NamedParam> tensors() const;

    /// Cores for λ (empty for LoRA / Multi-LoRA). Counts one computation.
    CoreSet compute_cores(double lambda) const;
    std::size_t core_computations() const { return counter_ ? counter_->load() : 0; }
    void reset_core_counter() const {
        if (counter_) counter_->store(0);
    }

    /// Deep copy with independent storage.
    AdapterState clone() const;

    /// Adapted projection for one module (W0·x when the adapter is inactive).
    Tensor project(const Tensor& x, const Tensor& W0, ModuleId module, const CoreSet* cores, double lambda,
                   const Dropout* dropout) const;

    friend AdapterState init_adapter(const AdapterSpec& spec, int layers, int width, std::uint64_t seed);

private:
    std::size_t index(ModuleId module, int interval) const;

    AdapterSpec spec_;
    int layers_ = 0;
    int width_ = 0;
    int intervals_ = 1;
    std::vector<LowRankPair> pairs_;
    std::vector<Hypernetwork> hypernets_;
    std::vector<Tensor> free_cores_;
    std::shared_ptr<std::atomic<std::size_t>> counter_ = std::make_shared<std::atomic<std::size_t>>(0);
};

/// B = 0, A Kaiming-uniform, hypernetwork hidden layers Kaiming-uniform with
/// a zero output layer, Fourier frequencies ~ N(0, σ²), free cores = I.
/// Randomness comes from named streams under `seed` so that, for example,
/// A is identical between a LoRA and a NaRA adapter with the same seed.
AdapterState init_adapter(const AdapterSpec& spec, int layers, int width, std::uint64_t seed);

/// U(−1/√fan_in, 1/√fan_in) fill used for every Kaiming-uniform tensor.
void kaiming_uniform(Tensor& t, std::size_t fan_in, RngStream& rng);

}  // namespace nara
