#include "nara/diffusion.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

#include "nara/ops.hpp"

namespace nara {

void validate_sequence(const Sequence& seq, const Vocab& vocab) {
    if (seq.response.empty()) throw std::invalid_argument("sequence response must be non-empty");
    auto check = [&](int id, const char* where) {
        if (id < 0 || id >= vocab.size) {
            throw std::invalid_argument(std::string("token id ") + std::to_string(id) + " out of range in " +
                                        where);
        }
    };
    for (int id : seq.prompt) check(id, "prompt");
    for (int id : seq.response) {
        check(id, "response");
        if (id == vocab.mask_id()) throw std::invalid_argument("response contains MASK before corruption");
    }
}

namespace {

MaskDraw finish(const Sequence& seq, std::vector<std::uint8_t> mask, const Vocab& vocab) {
    MaskDraw d;
    d.corrupted = seq.response;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            d.corrupted[i] = vocab.mask_id();
            ++d.masked;
        }
    }
    d.mask = std::move(mask);
    d.lambda = static_cast<double>(d.masked) / static_cast<double>(seq.response.size());
    return d;
}

}  // namespace

MaskDraw forward_mask(const Sequence& seq, double t, RngStream& rng, const Vocab& vocab) {
    if (!(t >= kNoiseFloor && t <= 1.0)) {
        throw std::invalid_argument("noise level t=" + std::to_string(t) + " outside [1e-6, 1]");
    }
    std::vector<std::uint8_t> mask(seq.response.size());
    for (auto& m : mask) m = rng.uniform() < t ? 1 : 0;
    return finish(seq, std::move(mask), vocab);
}

MaskDraw mask_exact(const Sequence& seq, std::size_t count, RngStream& rng, const Vocab& vocab) {
    const std::size_t n = seq.response.size();
    if (count > n) throw std::invalid_argument("mask_exact: count exceeds response length");
    std::vector<std::size_t> pos(n);
    std::iota(pos.begin(), pos.end(), 0);
    for (std::size_t i = 0; i < count; ++i) std::swap(pos[i], pos[i + rng.below(n - i)]);
    std::vector<std::uint8_t> mask(n, 0);
    for (std::size_t i = 0; i < count; ++i) mask[pos[i]] = 1;
    return finish(seq, std::move(mask), vocab);
}

double sample_noise_level(RngStream& rng) { return rng.uniform(kNoiseFloor, 1.0); }

std::vector<int> MaskedItem::input() const {
    std::vector<int> out = source.prompt;
    out.insert(out.end(), draw.corrupted.begin(), draw.corrupted.end());
    return out;
}

MaskedBatch corrupt_batch(std::span<const Sequence> sequences, RngStream& rng, const Vocab& vocab) {
    MaskedBatch batch;
    batch.t = sample_noise_level(rng);
    for (const auto& seq : sequences) {
        MaskedItem item;
        item.source = seq;
        item.t = batch.t;
        item.draw = forward_mask(seq, batch.t, rng, vocab);
        batch.items.push_back(std::move(item));
    }
    return batch;
}

MaskedLoss masked_loss(const Tensor& response_logits, std::span<const int> targets,
                       std::span<const std::uint8_t> mask, double t) {
    if (response_logits.ndim() != 2 || response_logits.shape()[0] != targets.size() ||
        mask.size() != targets.size()) {
        throw DimensionError("masked_loss: logits " + shape_str(response_logits.shape()) + " vs " +
                             std::to_string(targets.size()) + " targets");
    }
    if (!(t > 0.0)) throw std::invalid_argument("masked_loss: t must be positive");
    std::vector<int> rows, tgt;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            rows.push_back(static_cast<int>(i));
            tgt.push_back(targets[i]);
        }
    }
    if (rows.empty()) return {Tensor::scalar(0.0), false};
    auto logp = pick(log_softmax_rows(gather_rows(response_logits, rows)), tgt);
    return {scale(sum(logp), -1.0 / t), true};
}

MaskedLoss masked_loss(const Tensor& response_logits, const MaskedItem& item) {
    return masked_loss(response_logits, item.source.response, item.draw.mask, item.t);
}

}  // namespace nara
