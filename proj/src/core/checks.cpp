#include "nara/checks.hpp"

#include <algorithm>
#include <cmath>

#include "nara/rng.hpp"

namespace nara {

ModelConfig micro_model_config() {
    ModelConfig c;
    c.vocab.size = 12;
    c.d_model = 8;
    c.n_layer = 2;
    c.n_head = 2;
    c.max_len = 6;
    c.d_ff = 16;
    return c;
}

AdapterSpec micro_adapter_spec(AdapterVariant variant, EmbeddingMode embedding) {
    AdapterSpec s;
    s.variant = variant;
    s.rank = 2;
    s.eta = 0.5;
    s.embed_dim = 4;
    s.hidden = {6, 8};
    s.embedding = embedding;
    s.dropout = 0.0;
    return s;
}

MaskedItem micro_item(const Vocab& vocab, std::uint64_t seed) {
    RngStream rng(seed, "micro.item");
    const auto content = static_cast<std::uint64_t>(vocab.content_size());
    Sequence s;
    for (int i = 0; i < 3; ++i) s.prompt.push_back(static_cast<int>(rng.below(content)));
    for (int i = 0; i < 2; ++i) s.response.push_back(static_cast<int>(rng.below(content)));
    s.response.push_back(vocab.eos_id());
    MaskedItem it;
    it.source = s;
    it.draw = mask_exact(s, 2, rng, vocab);
    it.t = 0.4 + 0.5 * rng.uniform();
    return it;
}

void jitter(const std::vector<NamedParam>& tensors, std::uint64_t seed, double scale) {
    RngStream rng(seed, "jitter");
    for (const auto& p : tensors) {
        auto t = p.tensor;
        for (auto& v : t.data_mut()) v += rng.uniform(-scale, scale);
    }
}

namespace {

Tensor item_loss(const ModelState& model, const AdapterState& adapter, const MaskedItem& item) {
    const CoreSet cores = adapter.spec().uses_core() ? adapter.compute_cores(item.lambda()) : CoreSet{};
    AdapterBinding bind{&adapter, &cores, item.lambda(), nullptr};
    return masked_loss(response_logits(model, item, &bind), item).loss;
}

ModelState micro_model(std::uint64_t seed) {
    auto model = init_model(micro_model_config(), seed);
    jitter(model.parameters(), seed + 1, 0.3);
    model.set_trainable(false);
    return model;
}

}  // namespace

GradCheckReport adapter_gradient_check(const ModelState& model, const AdapterState& adapter, const MaskedItem& item,
                                       GradCheckOptions options) {
    return finite_diff_check([&] { return item_loss(model, adapter, item); }, adapter.parameters(), options);
}

std::vector<GradSuiteCase> run_grad_check_suite(std::uint64_t seed) {
    const auto model = micro_model(seed);
    const auto item = micro_item(model.config().vocab, seed);
    const auto cfg = model.config();
    std::vector<std::pair<AdapterVariant, EmbeddingMode>> cases{
        {AdapterVariant::LoRA, EmbeddingMode::Fourier},  {AdapterVariant::NaRA, EmbeddingMode::Fourier},
        {AdapterVariant::NaRA, EmbeddingMode::MLP},      {AdapterVariant::NaRA, EmbeddingMode::Scalar},
        {AdapterVariant::NaRAC, EmbeddingMode::Fourier}, {AdapterVariant::MultiLoRA, EmbeddingMode::Fourier}};
    std::vector<GradSuiteCase> out;
    for (const auto& [v, e] : cases) {
        auto adapter = init_adapter(micro_adapter_spec(v, e), cfg.n_layer, cfg.d_model, seed + 2);
        jitter(adapter.parameters(), seed + 3, 0.4);
        std::string label(to_string(v));
        if (v == AdapterVariant::NaRA) label += "/" + std::string(to_string(e));
        out.push_back({label, adapter_gradient_check(model, adapter, item)});
    }
    return out;
}

EquivalenceReport lora_gradient_equivalence(std::uint64_t seed, std::size_t batches) {
    const auto model = micro_model(seed);
    const auto cfg = model.config();
    auto nara = init_adapter(micro_adapter_spec(AdapterVariant::NaRA), cfg.n_layer, cfg.d_model, seed + 2);
    jitter(nara.parameters(), seed + 3, 0.4);
    for (auto& h : nara.hypernetworks()) {
        for (auto* t : {&h.output.weight, &h.output.bias}) std::fill(t->data_mut().begin(), t->data_mut().end(), 0.0);
    }
    auto lora = init_adapter(micro_adapter_spec(AdapterVariant::LoRA), cfg.n_layer, cfg.d_model, seed + 2);
    for (int l = 0; l < cfg.n_layer; ++l) {
        for (auto p : kProjections) {
            const auto& src = nara.pair({l, p});
            auto& dst = lora.pair({l, p});
            std::ranges::copy(src.A.data(), dst.A.data_mut().begin());
            std::ranges::copy(src.B.data(), dst.B.data_mut().begin());
        }
    }
    EquivalenceReport rep;
    for (std::size_t b = 0; b < batches; ++b) {
        const auto item = micro_item(cfg.vocab, seed * 1000003 + b);
        for (auto* a : {&nara, &lora}) {
            for (auto& p : a->parameters()) p.tensor.zero_grad();
            backward(item_loss(model, *a, item));
        }
        for (int l = 0; l < cfg.n_layer; ++l) {
            for (auto p : kProjections) {
                for (int which = 0; which < 2; ++which) {
                    const auto& tn = which ? nara.pair({l, p}).A : nara.pair({l, p}).B;
                    const auto& tl = which ? lora.pair({l, p}).A : lora.pair({l, p}).B;
                    const auto gn = tn.grad(), gl = tl.grad();
                    for (std::size_t i = 0; i < gn.size(); ++i) {
                        const double den = std::max({std::abs(gn[i]), std::abs(gl[i]), 1e-300});
                        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(gn[i] - gl[i]) / den);
                    }
                }
            }
        }
        ++rep.batches;
    }
    return rep;
}

}  // namespace nara
