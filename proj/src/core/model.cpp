#include "nara/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "nara/ops.hpp"

namespace nara {

void ModelConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("model." + field + ": " + why);
    };
    if (vocab.size < 3) fail("vocab_size", "must be at least 3 (content, EOS, MASK)");
    if (d_model < 1) fail("d_model", "must be positive");
    if (n_layer < 1) fail("n_layer", "must be positive");
    if (n_head < 1) fail("n_head", "must be positive");
    if (d_model % n_head != 0) fail("n_head", "must divide d_model");
    if (max_len < 1) fail("max_len", "must be positive");
    if (d_ff < 1) fail("d_ff", "must be positive");
    if (!(init_std > 0.0)) fail("init_std", "must be positive");
}

namespace {

Tensor normal_tensor(Shape shape, double std, RngStream& rng) {
    Tensor t(std::move(shape), true);
    for (auto& v : t.data_mut()) v = std * rng.normal();
    return t;
}

Tensor filled(Shape shape, double value) {
    Tensor t(std::move(shape), true);
    for (auto& v : t.data_mut()) v = value;
    return t;
}

Tensor copy_param(const Tensor& t) {
    auto c = t.detach();
    c.set_requires_grad(t.requires_grad());
    return c;
}

}  // namespace

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelState m;
    m.config_ = config;
    const auto V = static_cast<std::size_t>(config.vocab.size);
    const auto d = static_cast<std::size_t>(config.d_model);
    const auto ff = static_cast<std::size_t>(config.d_ff);
    const double s = config.init_std;
    const RngStream root(seed, "init.model");
    auto emb = root.substream("embeddings");
    m.tok_emb_ = normal_tensor({V, d}, s, emb);
    m.pos_emb_ = normal_tensor({static_cast<std::size_t>(config.max_len), d}, s, emb);
    m.seg_emb_ = normal_tensor({2, d}, s, emb);
    for (int l = 0; l < config.n_layer; ++l) {
        auto rng = root.substream(static_cast<std::uint64_t>(l));
        Block b;
        b.ln1_gain = filled({d}, 1.0);
        b.ln1_bias = filled({d}, 0.0);
        for (auto& w : b.proj) w = normal_tensor({d, d}, s, rng);
        b.ln2_gain = filled({d}, 1.0);
        b.ln2_bias = filled({d}, 0.0);
        b.ff1_w = normal_tensor({ff, d}, s, rng);
        b.ff1_b = filled({ff}, 0.0);
        b.ff2_w = normal_tensor({d, ff}, s, rng);
        b.ff2_b = filled({d}, 0.0);
        m.blocks_.push_back(std::move(b));
    }
    auto head = root.substream("head");
    m.lnf_gain_ = filled({d}, 1.0);
    m.lnf_bias_ = filled({d}, 0.0);
    m.head_w_ = normal_tensor({V, d}, s, head);
    m.head_b_ = filled({V}, 0.0);
    return m;
}

std::vector<NamedParam> ModelState::parameters() const {
    std::vector<NamedParam> out{{"base.tok_emb", tok_emb_}, {"base.pos_emb", pos_emb_},
                                {"base.seg_emb", seg_emb_}};
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const auto p = "base.l" + std::to_string(l) + ".";
        const auto& b = blocks_[l];
        out.push_back({p + "ln1.gain", b.ln1_gain});
        out.push_back({p + "ln1.bias", b.ln1_bias});
        for (std::size_t i = 0; i < 4; ++i) out.push_back({p + "w" + static_cast<char>("qkvo"[i]), b.proj[i]});
        out.push_back({p + "ln2.gain", b.ln2_gain});
        out.push_back({p + "ln2.bias", b.ln2_bias});
        out.push_back({p + "ff1.weight", b.ff1_w});
        out.push_back({p + "ff1.bias", b.ff1_b});
        out.push_back({p + "ff2.weight", b.ff2_w});
        out.push_back({p + "ff2.bias", b.ff2_b});
    }
    out.push_back({"base.ln_f.gain", lnf_gain_});
    out.push_back({"base.ln_f.bias", lnf_bias_});
    out.push_back({"base.head.weight", head_w_});
    out.push_back({"base.head.bias", head_b_});
    return out;
}

void ModelState::set_trainable(bool on) {
    for (auto& p : parameters()) p.tensor.set_requires_grad(on);
}

ModelState ModelState::clone() const {
    ModelState c;
    c.config_ = config_;
    c.tok_emb_ = copy_param(tok_emb_);
    c.pos_emb_ = copy_param(pos_emb_);
    c.seg_emb_ = copy_param(seg_emb_);
    for (const auto& b : blocks_) {
        Block n;
        n.ln1_gain = copy_param(b.ln1_gain);
        n.ln1_bias = copy_param(b.ln1_bias);
        for (std::size_t i = 0; i < 4; ++i) n.proj[i] = copy_param(b.proj[i]);
        n.ln2_gain = copy_param(b.ln2_gain);
        n.ln2_bias = copy_param(b.ln2_bias);
        n.ff1_w = copy_param(b.ff1_w);
        n.ff1_b = copy_param(b.ff1_b);
        n.ff2_w = copy_param(b.ff2_w);
        n.ff2_b = copy_param(b.ff2_b);
        c.blocks_.push_back(std::move(n));
    }
    c.lnf_gain_ = copy_param(lnf_gain_);
    c.lnf_bias_ = copy_param(lnf_bias_);
    c.head_w_ = copy_param(head_w_);
    c.head_b_ = copy_param(head_b_);
    return c;
}

Tensor slice_rows(const Tensor& logits, std::size_t offset, std::size_t count) {
    if (offset + count > logits.rows()) {
        throw DimensionError("slice_rows: rows [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                             ") of " + shape_str(logits.shape()));
    }
    std::vector<int> idx(count);
    std::iota(idx.begin(), idx.end(), static_cast<int>(offset));
    return gather_rows(logits, idx);
}

Layout prompt_response_layout(const ModelConfig& config, std::size_t prompt_len, std::size_t response_len) {
    const auto limit = static_cast<std::size_t>(config.max_len);
    if (prompt_len > limit || response_len > limit) {
        throw SequenceLengthError("model: prompt length " + std::to_string(prompt_len) + " or response length " +
                                  std::to_string(response_len) + " exceeds max_len " + std::to_string(limit));
    }
    Layout l;
    l.positions.resize(prompt_len + response_len);
    const auto mid = l.positions.begin() + static_cast<std::ptrdiff_t>(prompt_len);
    std::iota(l.positions.begin(), mid, 0);
    std::iota(mid, l.positions.end(), 0);
    l.segments.assign(prompt_len, 0);
    l.segments.resize(prompt_len + response_len, 1);
    return l;
}

Tensor ModelState::forward(std::span<const int> tokens, const AdapterBinding* binding, const Layout* layout) const {
    const std::size_t n = tokens.size();
    if (n == 0) throw std::invalid_argument("model: empty token sequence");
    Layout fallback;
    if (!layout) {
        if (n > static_cast<std::size_t>(config_.max_len)) {
            throw SequenceLengthError("model: sequence length " + std::to_string(n) + " exceeds max_len " +
                                      std::to_string(config_.max_len));
        }
        fallback.positions.resize(n);
        std::iota(fallback.positions.begin(), fallback.positions.end(), 0);
        fallback.segments.assign(n, 0);
        layout = &fallback;
    }
    if (layout->positions.size() != n || layout->segments.size() != n) {
        throw DimensionError("model: layout does not match " + std::to_string(n) + " tokens");
    }
    for (int p : layout->positions) {
        if (p < 0 || p >= config_.max_len) {
            throw SequenceLengthError("model: position " + std::to_string(p) + " outside [0, max_len)");
        }
    }
    for (int g : layout->segments) {
        if (g != 0 && g != 1) throw std::invalid_argument("model: segment id must be 0 or 1");
    }
    for (int t : tokens) {
        if (t < 0 || t >= config_.vocab.size) {
            throw std::invalid_argument("model: token id " + std::to_string(t) + " out of range");
        }
    }
    const AdapterState* adapter = binding ? binding->adapter : nullptr;
    if (adapter && adapter->active()) {
        if (adapter->layers() != config_.n_layer || adapter->width() != config_.d_model) {
            throw DimensionError("model: adapter built for " + std::to_string(adapter->layers()) + " layers of width " +
                                 std::to_string(adapter->width()));
        }
    }

    auto h = add(add(gather_rows(tok_emb_, tokens), gather_rows(pos_emb_, layout->positions)),
                 gather_rows(seg_emb_, layout->segments));

    const auto dh = static_cast<std::size_t>(config_.head_dim());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        const auto& b = blocks_[l];
        auto project = [&](const Tensor& x, Projection p) {
            const auto& W0 = b.proj[static_cast<std::size_t>(p)];
            if (!adapter) return matmul_nt(x, W0);
            return adapter->project(x, W0, {static_cast<int>(l), p}, binding->cores, binding->lambda,
                                    binding->dropout);
        };
        auto x = layer_norm(h, b.ln1_gain, b.ln1_bias);
        auto q = project(x, Projection::Q);
        auto k = project(x, Projection::K);
        auto v = project(x, Projection::V);
        std::vector<Tensor> heads;
        for (int hd = 0; hd < config_.n_head; ++hd) {
            const std::size_t lo = static_cast<std::size_t>(hd) * dh, hi = lo + dh;
            auto scores = scale(matmul_nt(slice_cols(q, lo, hi), slice_cols(k, lo, hi)), inv_sqrt);
            heads.push_back(matmul(softmax_rows(scores), slice_cols(v, lo, hi)));
        }
        auto attn = heads.size() == 1 ? heads[0] : concat(heads, 1);
        h = add(h, project(attn, Projection::O));
        auto y = layer_norm(h, b.ln2_gain, b.ln2_bias);
        y = add_bias(matmul_nt(silu(add_bias(matmul_nt(y, b.ff1_w), b.ff1_b)), b.ff2_w), b.ff2_b);
        h = add(h, y);
    }
    h = layer_norm(h, lnf_gain_, lnf_bias_);
    return add_bias(matmul_nt(h, head_w_), head_b_);
}

Tensor response_logits(const ModelState& model, const MaskedItem& item, const AdapterBinding* binding) {
    const auto input = item.input();
    const auto layout = prompt_response_layout(model.config(), item.source.prompt.size(), item.source.response.size());
    return slice_rows(model.forward(input, binding, &layout), item.response_offset(), item.source.response.size());
}

}  // namespace nara
