#pragma once

// Synthetic tasks, the AdamW optimizer, the warmup schedule and the masked
// diffusion fine-tuning loop.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/diffusion.hpp"
#include "nara/grad_check.hpp"
#include "nara/model.hpp"

namespace nara {

// ---- tasks -------------------------------------------------------------

enum class TaskKind { Copy, Sort, Map };

std::string_view to_string(TaskKind k);
TaskKind parse_task(std::string_view s);

struct TaskSpec {
    TaskKind kind = TaskKind::Copy;
    int min_len = 3;  // prompt length range, inclusive
    int max_len = 8;
    /// Response length including EOS padding; 0 means content + one EOS.
    int answer_length = 9;
    /// Content tokens drawn from [0, alphabet); 0 means every content id.
    int alphabet = 0;
    std::size_t n_train = 512;
    std::size_t n_val = 128;
    std::size_t n_test = 128;

    void validate(const Vocab& vocab) const;
};

struct Dataset {
    std::vector<Sequence> train, val, test;
};

/// Task generators sharing one substitution cipher (a permutation of the
/// content ids fixed by the seed).
class SyntheticTasks {
public:
    SyntheticTasks(std::uint64_t seed, Vocab vocab);

    const Vocab& vocab() const { return vocab_; }
    const std::vector<int>& cipher() const { return cipher_; }

    /// COPY repeats the prompt, SORT sorts it, MAP applies the cipher; the
    /// response ends with EOS and is padded with EOS to `answer_length`.
    Sequence make(TaskKind kind, std::span<const int> prompt, int answer_length = 0) const;

    /// Distinct random prompts split into train / val / test. No prompt
    /// appears in two splits.
    Dataset dataset(const TaskSpec& spec) const;

private:
    std::uint64_t seed_;
    Vocab vocab_;
    std::vector<int> cipher_;
};

SyntheticTasks make_synthetic_tasks(std::uint64_t seed, Vocab vocab = {});

// ---- optimizer ---------------------------------------------------------

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Decoupled weight decay Adam: p ← p(1 − lr·wd), then the bias-corrected
/// moment step p ← p − lr·m̂/(√v̂ + eps).
class AdamW {
public:
    AdamW(std::vector<NamedParam> params, AdamWConfig config = {});

    /// Applies one update from the gradients currently stored on the
    /// parameters (missing gradients count as zero).
    void step(double lr);
    void zero_grad();
    std::size_t steps() const { return t_; }
    const std::vector<NamedParam>& params() const { return params_; }

private:
    std::vector<NamedParam> params_;
    AdamWConfig config_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

/// Linear warmup over ceil(warmup_ratio · total) steps, then linear decay:
/// lr·(s+1)/W during warmup and lr·(total − s)/(total − W) afterwards.
double scheduled_lr(std::size_t step, std::size_t total, double warmup_ratio, double base_lr);

// ---- training ----------------------------------------------------------

enum class Selection { MinValLoss, Last };

struct TrainConfig {
    int epochs = 1;
    /// When positive, overrides the epoch count; data cycles as needed.
    std::size_t max_steps = 0;
    double lr = 1e-4;
    double warmup_ratio = 0.05;
    int accumulation = 32;
    int batch_size = 1;
    AdamWConfig adam;
    std::size_t val_interval = 64;
    Selection selection = Selection::MinValLoss;
    std::uint64_t seed = 0;
    std::string config_hash = "none";

    void validate() const;
    /// Optimizer steps for a training set of n sequences.
    std::size_t total_steps(std::size_t n) const;
};

struct TrainRecord {
    std::size_t step = 0;  // 1-based optimizer step
    double loss = 0.0;     // mean over contributing sequences
    double lambda = 0.0;   // mean λ over contributing sequences
    double t = 0.0;        // mean t over micro-batches
    double grad_norm = 0.0;
    double lr = 0.0;
    std::size_t contributing = 0;
    std::optional<double> val_loss;
};

struct TrainLog {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<TrainRecord> records;

    /// One JSON object per line.
    std::string to_jsonl() const;
};

/// Non-finite loss. `batch_json` holds the offending micro-batches.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, std::string batch_json)
        : std::runtime_error(what), batch_json(std::move(batch_json)) {}
    std::string batch_json;
};

std::string batches_to_json(std::span<const MaskedBatch> batches);

struct StepResult {
    double loss = 0.0;
    double lambda = 0.0;
    double t = 0.0;
    double grad_norm = 0.0;
    std::size_t contributing = 0;
    bool updated = false;
};

/// One optimizer step over an accumulation window of corrupted micro-batches.
/// Each sequence gets its own core C(λ_s). Gradients of the per-sequence
/// losses are summed and divided by the number of contributing sequences;
/// when none contribute, nothing changes. `adapter` may be null (base-model
/// training); the optimizer decides which tensors move.
StepResult train_step(const ModelState& model, const AdapterState* adapter, std::span<const MaskedBatch> window,
                      AdamW& optimizer, double lr, RngStream* dropout_rng = nullptr);

/// Index of the first minimum.
std::size_t select_best(std::span<const double> val_losses);

/// Mean masked loss over sequences with a fixed corruption stream derived
/// from `seed` (identical masks on every call). Runs items in parallel.
double evaluate_loss(const ModelState& model, const AdapterState* adapter, std::span<const Sequence> seqs,
                     std::uint64_t seed);

/// Fraction of masked response tokens whose argmax (over non-MASK ids) is right.
double masked_accuracy(const ModelState& model, const AdapterState* adapter, std::span<const Sequence> seqs,
                       std::uint64_t seed);

struct FitResult {
    AdapterState best;
    AdapterState last;
    std::size_t best_step = 0;  // 0 when no step ran
    double best_val = 0.0;
    TrainLog log;
};

/// Fine-tunes a copy of `init` on a frozen model.
FitResult fit(const ModelState& model, const AdapterState& init, const Dataset& data, const TrainConfig& config);

struct PretrainResult {
    ModelState model;
    TrainLog log;
};

/// Trains every base tensor (no adapter); returns the selected model frozen.
PretrainResult pretrain(const ModelState& init, const Dataset& data, const TrainConfig& config);

/// Fixed desk recipe: batch 8, no accumulation, lr 1e-3, warmup 0.05.
PretrainResult pretrain_toy(const ModelConfig& config, const TaskSpec& task, std::size_t steps, std::uint64_t seed);

}  // namespace nara
