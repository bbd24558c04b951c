#include "nara/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "json.hpp"

#include "nara/ops.hpp"
#include "nara/parallel.hpp"

namespace nara {

using ojson = nlohmann::ordered_json;

// ---- tasks -------------------------------------------------------------

std::string_view to_string(TaskKind k) {
    switch (k) {
        case TaskKind::Copy: return "copy";
        case TaskKind::Sort: return "sort";
        case TaskKind::Map: return "map";
    }
    return "?";
}

TaskKind parse_task(std::string_view s) {
    for (auto k : {TaskKind::Copy, TaskKind::Sort, TaskKind::Map})
        if (s == to_string(k)) return k;
    throw std::invalid_argument("unknown task '" + std::string(s) + "' (expected copy|sort|map)");
}

void TaskSpec::validate(const Vocab& vocab) const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("task." + field + ": " + why);
    };
    if (min_len < 1) fail("min_len", "must be >= 1");
    if (max_len < min_len) fail("max_len", "must be >= task.min_len");
    if (answer_length != 0 && answer_length < max_len + 1) fail("answer_length", "must be 0 or >= task.max_len + 1");
    if (alphabet < 0 || alphabet > vocab.content_size()) {
        fail("alphabet", "must lie in [0, " + std::to_string(vocab.content_size()) + "]");
    }
}

SyntheticTasks::SyntheticTasks(std::uint64_t seed, Vocab vocab) : seed_(seed), vocab_(vocab) {
    cipher_.resize(static_cast<std::size_t>(vocab.content_size()));
    std::iota(cipher_.begin(), cipher_.end(), 0);
    RngStream rng(seed, "task.cipher");
    for (std::size_t i = cipher_.size(); i > 1; --i) std::swap(cipher_[i - 1], cipher_[rng.below(i)]);
}

SyntheticTasks make_synthetic_tasks(std::uint64_t seed, Vocab vocab) { return SyntheticTasks(seed, vocab); }

Sequence SyntheticTasks::make(TaskKind kind, std::span<const int> prompt, int answer_length) const {
    Sequence s;
    s.prompt.assign(prompt.begin(), prompt.end());
    for (int t : s.prompt) {
        if (t < 0 || t >= vocab_.content_size()) {
            throw std::invalid_argument("task prompt token " + std::to_string(t) + " is not a content id");
        }
    }
    s.response = s.prompt;
    if (kind == TaskKind::Sort) std::sort(s.response.begin(), s.response.end());
    if (kind == TaskKind::Map)
        for (auto& t : s.response) t = cipher_[static_cast<std::size_t>(t)];
    s.response.push_back(vocab_.eos_id());
    if (answer_length > 0) {
        if (static_cast<std::size_t>(answer_length) < s.response.size()) {
            throw std::invalid_argument("answer_length " + std::to_string(answer_length) + " too short for prompt");
        }
        s.response.resize(static_cast<std::size_t>(answer_length), vocab_.eos_id());
    }
    return s;
}

Dataset SyntheticTasks::dataset(const TaskSpec& spec) const {
    spec.validate(vocab_);
    const int alphabet = spec.alphabet == 0 ? vocab_.content_size() : spec.alphabet;
    const std::size_t want = spec.n_train + spec.n_val + spec.n_test;
    RngStream rng(seed_, "task.prompts");
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> prompts;
    const std::size_t limit = 100 * want + 1000;
    for (std::size_t attempt = 0; prompts.size() < want; ++attempt) {
        if (attempt >= limit) throw std::invalid_argument("task: not enough distinct prompts for the requested splits");
        const auto len = static_cast<std::size_t>(spec.min_len) +
                         rng.below(static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1));
        std::vector<int> p(len);
        for (auto& t : p) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(alphabet)));
        if (seen.insert(p).second) prompts.push_back(std::move(p));
    }
    Dataset d;
    for (std::size_t i = 0; i < want; ++i) {
        auto seq = make(spec.kind, prompts[i], spec.answer_length);
        if (i < spec.n_train) {
            d.train.push_back(std::move(seq));
        } else if (i < spec.n_train + spec.n_val) {
            d.val.push_back(std::move(seq));
        } else {
            d.test.push_back(std::move(seq));
        }
    }
    return d;
}

// ---- optimizer ---------------------------------------------------------

AdamW::AdamW(std::vector<NamedParam> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void AdamW::step(double lr) {
    ++t_;
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto data = params_[i].tensor.data_mut();
        const auto& g = params_[i].tensor.node()->grad;
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < data.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            if (config_.weight_decay != 0.0) data[j] *= 1.0 - lr * config_.weight_decay;
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            const double mhat = m[j] / c1;
            const double vhat = v[j] / c2;
            data[j] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        }
    }
}

void AdamW::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

double scheduled_lr(std::size_t step, std::size_t total, double warmup_ratio, double base_lr) {
    const auto warm = static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total)));
    if (step < warm) return base_lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    if (total <= warm) return base_lr;
    return base_lr * static_cast<double>(total - step) / static_cast<double>(total - warm);
}

// ---- training ----------------------------------------------------------

void TrainConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("train." + field + ": " + why);
    };
    if (epochs < 0) fail("epochs", "must be >= 0");
    if (!(lr >= 0.0)) fail("lr", "must be >= 0");
    if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) fail("warmup_ratio", "must lie in [0, 1]");
    if (accumulation < 1) fail("accumulation", "must be >= 1");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (val_interval < 1) fail("val_interval", "must be >= 1");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
    if (!(adam.eps > 0.0)) fail("adam_eps", "must be positive");
    if (!(adam.weight_decay >= 0.0)) fail("weight_decay", "must be >= 0");
}

std::size_t TrainConfig::total_steps(std::size_t n) const {
    if (max_steps > 0) return max_steps;
    const std::size_t micro = (n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size);
    const std::size_t per_epoch = (micro + static_cast<std::size_t>(accumulation) - 1) /
                                  static_cast<std::size_t>(accumulation);
    return static_cast<std::size_t>(epochs) * per_epoch;
}

namespace {

ojson finite_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

}  // namespace

std::string TrainLog::to_jsonl() const {
    std::string out;
    for (const auto& r : records) {
        ojson j;
        j["step"] = r.step;
        j["loss"] = finite_or_null(r.loss);
        j["lambda"] = finite_or_null(r.lambda);
        j["t"] = finite_or_null(r.t);
        j["grad_norm"] = finite_or_null(r.grad_norm);
        j["lr"] = r.lr;
        j["contributing"] = r.contributing;
        j["val_loss"] = r.val_loss ? finite_or_null(*r.val_loss) : ojson(nullptr);
        j["seed"] = seed;
        j["config_hash"] = config_hash;
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string batches_to_json(std::span<const MaskedBatch> batches) {
    ojson arr = ojson::array();
    for (const auto& b : batches) {
        ojson jb;
        jb["t"] = b.t;
        jb["items"] = ojson::array();
        for (const auto& it : b.items) {
            ojson ji;
            ji["prompt"] = it.source.prompt;
            ji["response"] = it.source.response;
            ji["corrupted"] = it.draw.corrupted;
            ji["mask"] = it.draw.mask;
            ji["lambda"] = it.draw.lambda;
            jb["items"].push_back(std::move(ji));
        }
        arr.push_back(std::move(jb));
    }
    return arr.dump(2);
}

namespace {

struct ItemLoss {
    Tensor loss;
    bool contributes = false;
};

ItemLoss item_loss(const ModelState& model, const AdapterState* adapter, const MaskedItem& item,
                   RngStream* dropout_rng) {
    if (!item.contributes()) return {Tensor::scalar(0.0), false};
    CoreSet cores;
    if (adapter && adapter->spec().uses_core()) cores = adapter->compute_cores(item.lambda());
    Dropout drop{dropout_rng, adapter ? adapter->spec().dropout : 0.0};
    AdapterBinding bind{adapter, &cores, item.lambda(), dropout_rng && drop.p > 0.0 ? &drop : nullptr};
    auto logits = response_logits(model, item, adapter ? &bind : nullptr);
    auto ml = masked_loss(logits, item);
    return {ml.loss, ml.contributes};
}

}  // namespace

StepResult train_step(const ModelState& model, const AdapterState* adapter, std::span<const MaskedBatch> window,
                      AdamW& optimizer, double lr, RngStream* dropout_rng) {
    StepResult res;
    double sum_loss = 0.0, sum_lambda = 0.0, sum_t = 0.0;
    for (const auto& batch : window) {
        sum_t += batch.t;
        for (const auto& item : batch.items) {
            auto l = item_loss(model, adapter, item, dropout_rng);
            if (!l.contributes) continue;
            const double v = l.loss.item();
            if (!std::isfinite(v)) {
                optimizer.zero_grad();
                throw DivergenceError("non-finite loss " + std::to_string(v) + " at lambda " +
                                          std::to_string(item.lambda()) + ", t " + std::to_string(item.t),
                                      batches_to_json(window));
            }
            backward(l.loss);
            sum_loss += v;
            sum_lambda += item.lambda();
            ++res.contributing;
        }
    }
    if (!window.empty()) res.t = sum_t / static_cast<double>(window.size());
    if (res.contributing == 0) {
        optimizer.zero_grad();
        return res;
    }
    const auto n = static_cast<double>(res.contributing);
    res.loss = sum_loss / n;
    res.lambda = sum_lambda / n;
    double sq = 0.0;
    for (const auto& p : optimizer.params()) {
        for (auto& g : p.tensor.node()->grad) {
            g /= n;
            sq += g * g;
        }
    }
    res.grad_norm = std::sqrt(sq);
    optimizer.step(lr);
    optimizer.zero_grad();
    res.updated = true;
    return res;
}

std::size_t select_best(std::span<const double> val_losses) {
    if (val_losses.empty()) throw std::invalid_argument("select_best: no validation losses");
    std::size_t best = 0;
    for (std::size_t i = 1; i < val_losses.size(); ++i)
        if (val_losses[i] < val_losses[best]) best = i;
    return best;
}

namespace {

std::vector<MaskedItem> fixed_corruption(std::span<const Sequence> seqs, std::uint64_t seed, const Vocab& vocab) {
    RngStream rng(seed, "eval.mask");
    std::vector<MaskedItem> items;
    items.reserve(seqs.size());
    for (const auto& s : seqs) {
        MaskedItem it;
        it.source = s;
        it.t = sample_noise_level(rng);
        it.draw = forward_mask(s, it.t, rng, vocab);
        items.push_back(std::move(it));
    }
    return items;
}

CoreSet cores_for(const AdapterState* adapter, double lambda) {
    if (adapter && adapter->spec().uses_core()) return adapter->compute_cores(lambda);
    return {};
}

}  // namespace

double evaluate_loss(const ModelState& model, const AdapterState* adapter, std::span<const Sequence> seqs,
                     std::uint64_t seed) {
    const auto items = fixed_corruption(seqs, seed, model.config().vocab);
    std::vector<double> losses(items.size(), 0.0);
    std::vector<char> contributes(items.size(), 0);
    parallel_for(items.size(), [&](std::size_t i) {
        NoGradGuard guard;
        auto l = item_loss(model, adapter, items[i], nullptr);
        losses[i] = l.loss.item();
        contributes[i] = l.contributes;
    });
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (!contributes[i]) continue;
        sum += losses[i];
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

double masked_accuracy(const ModelState& model, const AdapterState* adapter, std::span<const Sequence> seqs,
                       std::uint64_t seed) {
    const auto& vocab = model.config().vocab;
    const auto items = fixed_corruption(seqs, seed, vocab);
    std::vector<std::size_t> correct(items.size(), 0), total(items.size(), 0);
    parallel_for(items.size(), [&](std::size_t i) {
        NoGradGuard guard;
        const auto& it = items[i];
        if (!it.contributes()) return;
        auto cores = cores_for(adapter, it.lambda());
        AdapterBinding bind{adapter, &cores, it.lambda(), nullptr};
        auto logits = response_logits(model, it, adapter ? &bind : nullptr);
        for (std::size_t p = 0; p < it.draw.mask.size(); ++p) {
            if (!it.draw.mask[p]) continue;
            int best = 0;
            for (int v = 1; v < vocab.size; ++v) {
                if (v == vocab.mask_id()) continue;
                if (logits.at(p, static_cast<std::size_t>(v)) > logits.at(p, static_cast<std::size_t>(best))) best = v;
            }
            ++total[i];
            if (best == it.source.response[p]) ++correct[i];
        }
    });
    const auto c = std::accumulate(correct.begin(), correct.end(), std::size_t{0});
    const auto t = std::accumulate(total.begin(), total.end(), std::size_t{0});
    return t ? static_cast<double>(c) / static_cast<double>(t) : 0.0;
}

namespace {

struct LoopOutcome {
    std::size_t best_step = 0;
    double best_val = 0.0;
    bool selected = false;
};

// Shared optimisation loop for fine-tuning (adapter set) and pretraining.
LoopOutcome run_loop(const ModelState& model, const AdapterState* adapter, AdamW& opt, const Dataset& data,
                     const TrainConfig& cfg, TrainLog& log, const std::function<void()>& on_best) {
    if (data.train.empty()) throw std::invalid_argument("training set is empty");
    cfg.validate();
    const auto& vocab = model.config().vocab;
    const std::size_t total = cfg.total_steps(data.train.size());
    log.seed = cfg.seed;
    log.config_hash = cfg.config_hash;

    const RngStream order_root(cfg.seed, "train.order");
    RngStream noise(cfg.seed, "train.noise");
    RngStream dropout(cfg.seed, "train.dropout");
    std::vector<std::size_t> perm;
    std::size_t cursor = 0, epoch = 0;
    auto next_sequence = [&]() -> const Sequence& {
        if (cursor == perm.size()) {
            perm.resize(data.train.size());
            std::iota(perm.begin(), perm.end(), 0);
            auto rng = order_root.substream(epoch++);
            for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
            cursor = 0;
        }
        return data.train[perm[cursor++]];
    };

    LoopOutcome out;
    for (std::size_t s = 0; s < total; ++s) {
        std::vector<MaskedBatch> window;
        for (int a = 0; a < cfg.accumulation; ++a) {
            std::vector<Sequence> mb;
            for (int b = 0; b < cfg.batch_size; ++b) mb.push_back(next_sequence());
            window.push_back(corrupt_batch(mb, noise, vocab));
        }
        const double lr = scheduled_lr(s, total, cfg.warmup_ratio, cfg.lr);
        const auto res = train_step(model, adapter, window, opt, lr, &dropout);
        TrainRecord rec;
        rec.step = s + 1;
        rec.loss = res.loss;
        rec.lambda = res.lambda;
        rec.t = res.t;
        rec.grad_norm = res.grad_norm;
        rec.lr = lr;
        rec.contributing = res.contributing;
        if (!data.val.empty() && ((s + 1) % cfg.val_interval == 0 || s + 1 == total)) {
            const double v = evaluate_loss(model, adapter, data.val, cfg.seed);
            rec.val_loss = v;
            if (cfg.selection == Selection::MinValLoss && (!out.selected || v < out.best_val)) {
                out.selected = true;
                out.best_val = v;
                out.best_step = s + 1;
                on_best();
            }
        }
        log.records.push_back(rec);
    }
    return out;
}

}  // namespace

FitResult fit(const ModelState& model, const AdapterState& init, const Dataset& data, const TrainConfig& config) {
    auto frozen = model.clone();
    frozen.set_trainable(false);
    FitResult res;
    auto adapter = init.clone();
    AdamW opt(adapter.parameters(), config.adam);
    const auto outcome = run_loop(frozen, &adapter, opt, data, config, res.log, [&] { res.best = adapter.clone(); });
    res.last = adapter.clone();
    if (outcome.selected) {
        res.best_step = outcome.best_step;
        res.best_val = outcome.best_val;
    } else {
        res.best = res.last.clone();
        res.best_step = res.log.records.size();
        res.best_val = data.val.empty() ? 0.0 : evaluate_loss(frozen, &res.best, data.val, config.seed);
    }
    return res;
}

PretrainResult pretrain(const ModelState& init, const Dataset& data, const TrainConfig& config) {
    auto model = init.clone();
    model.set_trainable(true);
    PretrainResult res;
    AdamW opt(model.parameters(), config.adam);
    ModelState best;
    const auto outcome = run_loop(model, nullptr, opt, data, config, res.log, [&] { best = model.clone(); });
    res.model = outcome.selected ? best : model.clone();
    res.model.set_trainable(false);
    return res;
}

PretrainResult pretrain_toy(const ModelConfig& config, const TaskSpec& task, std::size_t steps, std::uint64_t seed) {
    const auto data = make_synthetic_tasks(seed, config.vocab).dataset(task);
    TrainConfig tc;
    tc.epochs = 0;
    tc.max_steps = steps;
    tc.batch_size = 8;
    tc.accumulation = 1;
    tc.lr = 1e-3;
    tc.warmup_ratio = 0.05;
    tc.val_interval = std::max<std::size_t>(1, steps / 10);
    tc.seed = seed;
    const auto init = init_model(config, seed);
    if (steps == 0) {
        PretrainResult r{init.clone(), {}};
        r.model.set_trainable(false);
        r.log.seed = seed;
        return r;
    }
    return pretrain(init, data, tc);
}

}  // namespace nara
