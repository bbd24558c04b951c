#include "nara/adapter.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nara/ops.hpp"

namespace nara {

std::string_view to_string(AdapterVariant v) {
    switch (v) {
        case AdapterVariant::None: return "none";
        case AdapterVariant::LoRA: return "lora";
        case AdapterVariant::NaRA: return "nara";
        case AdapterVariant::NaRAC: return "nara-c";
        case AdapterVariant::MultiLoRA: return "multi-lora";
    }
    return "?";
}

std::string_view to_string(EmbeddingMode m) {
    switch (m) {
        case EmbeddingMode::Fourier: return "fourier";
        case EmbeddingMode::MLP: return "mlp";
        case EmbeddingMode::Scalar: return "scalar";
    }
    return "?";
}

char to_char(Projection p) { return "QKVO"[static_cast<int>(p)]; }

AdapterVariant parse_variant(std::string_view s) {
    for (auto v : {AdapterVariant::None, AdapterVariant::LoRA, AdapterVariant::NaRA, AdapterVariant::NaRAC,
                   AdapterVariant::MultiLoRA}) {
        if (s == to_string(v)) return v;
    }
    throw std::invalid_argument("unknown adapter variant '" + std::string(s) +
                                "' (expected none|lora|nara|nara-c|multi-lora)");
}

EmbeddingMode parse_embedding(std::string_view s) {
    for (auto m : {EmbeddingMode::Fourier, EmbeddingMode::MLP, EmbeddingMode::Scalar}) {
        if (s == to_string(m)) return m;
    }
    throw std::invalid_argument("unknown embedding mode '" + std::string(s) + "' (expected fourier|mlp|scalar)");
}

Sharing Sharing::parse(std::string_view text) {
    Sharing s;
    if (text == "shared") return s;
    std::array<int, 4> group{-1, -1, -1, -1};
    int g = 0;
    bool empty_group = true;
    for (char c : text) {
        if (c == '/') {
            if (empty_group) throw std::invalid_argument("sharing: empty group in '" + std::string(text) + "'");
            ++g;
            empty_group = true;
            continue;
        }
        const auto pos = std::string_view("QKVO").find(static_cast<char>(std::toupper(c)));
        if (pos == std::string_view::npos) {
            throw std::invalid_argument("sharing: unknown projection '" + std::string(1, c) + "'");
        }
        if (group[pos] != -1) {
            throw std::invalid_argument("sharing: projection " + std::string(1, c) + " appears in two groups");
        }
        group[pos] = g;
        empty_group = false;
    }
    if (empty_group) throw std::invalid_argument("sharing: empty group in '" + std::string(text) + "'");
    for (std::size_t i = 0; i < 4; ++i) {
        if (group[i] == -1) {
            throw std::invalid_argument(std::string("sharing: projection ") + "QKVO"[i] + " not covered by '" +
                                        std::string(text) + "'");
        }
    }
    s.group_ = group;
    return s;
}

int Sharing::groups() const {
    int mx = 0;
    for (int g : group_) mx = std::max(mx, g);
    return mx + 1;
}

std::string Sharing::str() const {
    if (groups() == 1) return "shared";
    std::string out;
    for (int g = 0; g < groups(); ++g) {
        if (g) out += '/';
        for (int i = 0; i < 4; ++i)
            if (group_[i] == g) out += "QKVO"[i];
    }
    return out;
}

void AdapterSpec::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("adapter." + field + ": " + why);
    };
    if (variant == AdapterVariant::None) return;
    if (rank < 1) fail("rank", "must be >= 1");
    if (!(eta >= 0.0) || !std::isfinite(eta)) fail("eta", "must be >= 0");
    if (embed_dim < 1) fail("embed_dim", "must be positive");
    if (embedding == EmbeddingMode::Fourier && embed_dim % 2 != 0) {
        fail("embed_dim", "must be even for Fourier embeddings");
    }
    if (hidden[0] < 1 || hidden[1] < 1) fail("hidden_sizes", "must be positive");
    if (!(fourier_sigma > 0.0)) fail("fourier_sigma", "must be positive");
    if (num_intervals < 1) fail("num_intervals", "must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0, 1)");
}

std::optional<HypernetWidths> hypernet_widths_for_rank(int rank) {
    switch (rank) {
        case 8: return HypernetWidths{4, 16, 32};
        case 16: return HypernetWidths{16, 64, 128};
        case 32: return HypernetWidths{64, 256, 512};
        case 64: return HypernetWidths{128, 512, 1024};
        default: return std::nullopt;
    }
}

std::string ModuleId::str() const { return "l" + std::to_string(layer) + "." + static_cast<char>(std::tolower(to_char(proj))); }

Tensor Linear::forward(const Tensor& x) const { return add_bias(matmul_nt(x, weight), bias); }

Tensor fourier_embed(double lambda, const Tensor& freqs) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("fourier_embed: lambda " + std::to_string(lambda) + " outside [0, 1]");
    }
    const std::size_t half = freqs.numel();
    std::vector<double> e(2 * half);
    for (std::size_t j = 0; j < half; ++j) {
        const double angle = 2.0 * std::numbers::pi * freqs.at(j) * lambda;
        e[j] = std::cos(angle);
        e[half + j] = std::sin(angle);
    }
    return Tensor({1, 2 * half}, std::move(e));
}

Tensor Hypernetwork::embed(double lambda) const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("hypernetwork: lambda " + std::to_string(lambda) + " outside [0, 1]");
    }
    switch (mode) {
        case EmbeddingMode::Fourier:
            return fourier_embed(lambda, freqs);
        case EmbeddingMode::Scalar:
            return Tensor({1, 1}, std::vector<double>{lambda});
        case EmbeddingMode::MLP:
            return lift_out.forward(silu(lift_in.forward(Tensor({1, 1}, std::vector<double>{lambda}))));
    }
    throw std::logic_error("unreachable");
}

Tensor Hypernetwork::forward(double lambda) const {
    auto h = silu(hidden1.forward(embed(lambda)));
    h = silu(hidden2.forward(h));
    return output.forward(h);
}

Tensor core_from_output(const Tensor& hyper_output, int rank, double eta) {
    const auto r = static_cast<std::size_t>(rank);
    if (hyper_output.numel() != r * r) {
        throw DimensionError("core: hypernetwork output " + shape_str(hyper_output.shape()) + " is not r² for r=" +
                             std::to_string(rank));
    }
    return add(Tensor::identity(r), scale(reshape(hyper_output, {r, r}), eta));
}

CoreMatrix core_matrix(double lambda, const AdapterSpec& spec, const Hypernetwork& hyper) {
    return {core_from_output(hyper.forward(lambda), spec.rank, spec.eta), lambda};
}

int multi_lora_select(double lambda, int num_intervals) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("multi_lora_select: lambda outside [0, 1]");
    }
    const int idx = static_cast<int>(std::floor(lambda * num_intervals));
    return std::min(idx, num_intervals - 1);
}

int sharing_resolve(const Sharing& sharing, ModuleId module) { return sharing.group_of(module.proj); }

Tensor adapter_forward(const Tensor& x, const Tensor& W0, const LowRankPair& pair, const Tensor* core,
                       const Dropout* dropout) {
    const std::size_t r = pair.A.shape()[0];
    if (pair.B.shape()[1] != r) {
        throw DimensionError("adapter: B " + shape_str(pair.B.shape()) + " and A " + shape_str(pair.A.shape()) +
                             " disagree on rank");
    }
    if (core && (core->shape() != Shape{r, r})) {
        throw DimensionError("adapter: core " + shape_str(core->shape()) + " does not match rank " +
                             std::to_string(r));
    }
    auto out = matmul_nt(x, W0);
    Tensor xa = x;
    if (dropout && dropout->rng && dropout->p > 0.0) {
        const double keep = 1.0 - dropout->p;
        std::vector<double> mask(x.numel());
        for (auto& m : mask) m = dropout->rng->uniform() < keep ? 1.0 / keep : 0.0;
        xa = mul_const(x, mask);
    }
    auto u = matmul_nt(xa, pair.A);
    if (core) u = matmul_nt(u, *core);
    return add(out, matmul_nt(u, pair.B));
}

void kaiming_uniform(Tensor& t, std::size_t fan_in, RngStream& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data_mut()) v = rng.uniform(-bound, bound);
}

namespace {

Linear make_linear(std::size_t in, std::size_t out, RngStream& rng, bool zero) {
    Linear l{Tensor({out, in}, true), Tensor({out}, true)};
    if (!zero) {
        kaiming_uniform(l.weight, in, rng);
        kaiming_uniform(l.bias, in, rng);
    }
    return l;
}

Tensor copy_param(const Tensor& t) {
    auto c = t.detach();
    c.set_requires_grad(t.requires_grad());
    return c;
}

Linear copy_linear(const Linear& l) {
    if (!l.weight.defined()) return {};
    return {copy_param(l.weight), copy_param(l.bias)};
}

void push_linear(std::vector<NamedParam>& out, const std::string& prefix, const Linear& l) {
    if (!l.weight.defined()) return;
    out.push_back({prefix + ".weight", l.weight});
    out.push_back({prefix + ".bias", l.bias});
}

}  // namespace

std::size_t AdapterState::index(ModuleId module, int interval) const {
    if (module.layer < 0 || module.layer >= layers_) {
        throw std::out_of_range("adapter: layer " + std::to_string(module.layer) + " out of range");
    }
    if (interval < 0 || interval >= intervals_) throw std::out_of_range("adapter: interval out of range");
    return (static_cast<std::size_t>(module.layer) * 4 + static_cast<std::size_t>(module.proj)) * intervals_ +
           static_cast<std::size_t>(interval);
}

const LowRankPair& AdapterState::pair(ModuleId module, int interval) const {
    return pairs_.at(index(module, interval));
}

LowRankPair& AdapterState::pair(ModuleId module, int interval) { return pairs_.at(index(module, interval)); }

std::vector<NamedParam> AdapterState::parameters() const {
    std::vector<NamedParam> out;
    for (const auto& p : pairs_) {
        std::string name = "adapter." + p.module.str();
        if (spec_.variant == AdapterVariant::MultiLoRA) {
            const auto bin = (&p - pairs_.data()) % intervals_;
            name += ".bin" + std::to_string(bin);
        }
        out.push_back({name + ".A", p.A});
        out.push_back({name + ".B", p.B});
    }
    for (std::size_t g = 0; g < hypernets_.size(); ++g) {
        const std::string prefix = "adapter.hyper" + std::to_string(g);
        const auto& h = hypernets_[g];
        push_linear(out, prefix + ".lift_in", h.lift_in);
        push_linear(out, prefix + ".lift_out", h.lift_out);
        push_linear(out, prefix + ".hidden1", h.hidden1);
        push_linear(out, prefix + ".hidden2", h.hidden2);
        push_linear(out, prefix + ".output", h.output);
    }
    for (std::size_t g = 0; g < free_cores_.size(); ++g) {
        out.push_back({"adapter.core" + std::to_string(g), free_cores_[g]});
    }
    return out;
}

std::vector<NamedParam> AdapterState::buffers() const {
    std::vector<NamedParam> out;
    for (std::size_t g = 0; g < hypernets_.size(); ++g) {
        if (hypernets_[g].freqs.defined()) {
            out.push_back({"adapter.hyper" + std::to_string(g) + ".freqs", hypernets_[g].freqs});
        }
    }
    return out;
}

std::vector<NamedParam> AdapterState::tensors() const {
    auto out = parameters();
    for (auto& b : buffers()) out.push_back(std::move(b));
    return out;
}

CoreSet AdapterState::compute_cores(double lambda) const {
    CoreSet set;
    set.lambda = lambda;
    if (spec_.variant == AdapterVariant::NaRA) {
        for (const auto& h : hypernets_) set.cores.push_back(core_matrix(lambda, spec_, h).C);
    } else if (spec_.variant == AdapterVariant::NaRAC) {
        set.cores = free_cores_;
    }
    if (counter_) counter_->fetch_add(1);
    return set;
}

AdapterState AdapterState::clone() const {
    AdapterState c;
    c.spec_ = spec_;
    c.layers_ = layers_;
    c.width_ = width_;
    c.intervals_ = intervals_;
    for (const auto& p : pairs_) c.pairs_.push_back({copy_param(p.B), copy_param(p.A), p.module});
    for (const auto& h : hypernets_) {
        Hypernetwork nh;
        nh.mode = h.mode;
        if (h.freqs.defined()) nh.freqs = h.freqs.detach();
        nh.lift_in = copy_linear(h.lift_in);
        nh.lift_out = copy_linear(h.lift_out);
        nh.hidden1 = copy_linear(h.hidden1);
        nh.hidden2 = copy_linear(h.hidden2);
        nh.output = copy_linear(h.output);
        c.hypernets_.push_back(std::move(nh));
    }
    for (const auto& t : free_cores_) c.free_cores_.push_back(copy_param(t));
    return c;
}

Tensor AdapterState::project(const Tensor& x, const Tensor& W0, ModuleId module, const CoreSet* cores,
                             double lambda, const Dropout* dropout) const {
    if (!active()) return matmul_nt(x, W0);
    const int bin = spec_.variant == AdapterVariant::MultiLoRA ? multi_lora_select(lambda, intervals_) : 0;
    const Tensor* core = nullptr;
    if (spec_.uses_core()) {
        const auto g = static_cast<std::size_t>(sharing_resolve(spec_.sharing, module));
        if (!cores || g >= cores->cores.size()) {
            throw std::invalid_argument("adapter: " + std::string(to_string(spec_.variant)) +
                                        " forward needs a core matrix for " + module.str());
        }
        core = &cores->cores[g];
    }
    return adapter_forward(x, W0, pair(module, bin), core, dropout);
}

AdapterState init_adapter(const AdapterSpec& spec, int layers, int width, std::uint64_t seed) {
    spec.validate();
    if (layers < 1 || width < 1) throw std::invalid_argument("init_adapter: layers and width must be positive");
    AdapterState s;
    s.spec_ = spec;
    s.layers_ = layers;
    s.width_ = width;
    if (spec.variant == AdapterVariant::None) return s;
    s.intervals_ = spec.variant == AdapterVariant::MultiLoRA ? spec.num_intervals : 1;

    const auto r = static_cast<std::size_t>(spec.rank);
    const auto d = static_cast<std::size_t>(width);
    const RngStream lora_root(seed, "init.lora");
    std::uint64_t module_index = 0;
    for (int l = 0; l < layers; ++l) {
        for (Projection p : kProjections) {
            for (int bin = 0; bin < s.intervals_; ++bin) {
                auto rng = lora_root.substream(module_index++);
                LowRankPair pair{Tensor({d, r}, true), Tensor({r, d}, true), {l, p}};
                kaiming_uniform(pair.A, d, rng);
                s.pairs_.push_back(std::move(pair));
            }
        }
    }

    const int groups = spec.sharing.groups();
    if (spec.variant == AdapterVariant::NaRA) {
        const RngStream hyper_root(seed, "init.hyper");
        const RngStream fourier_root(seed, "init.fourier");
        const auto emb = static_cast<std::size_t>(spec.embed_dim);
        const auto h1 = static_cast<std::size_t>(spec.hidden[0]);
        const auto h2 = static_cast<std::size_t>(spec.hidden[1]);
        for (int g = 0; g < groups; ++g) {
            auto rng = hyper_root.substream(static_cast<std::uint64_t>(g));
            Hypernetwork h;
            h.mode = spec.embedding;
            std::size_t in = emb;
            if (spec.embedding == EmbeddingMode::Fourier) {
                auto frng = fourier_root.substream(static_cast<std::uint64_t>(g));
                h.freqs = Tensor({emb / 2});
                for (auto& k : h.freqs.data_mut()) k = spec.fourier_sigma * frng.normal();
            } else if (spec.embedding == EmbeddingMode::MLP) {
                h.lift_in = make_linear(1, emb, rng, false);
                h.lift_out = make_linear(emb, emb, rng, false);
            } else {
                in = 1;
            }
            h.hidden1 = make_linear(in, h1, rng, false);
            h.hidden2 = make_linear(h1, h2, rng, false);
            h.output = make_linear(h2, r * r, rng, true);
            s.hypernets_.push_back(std::move(h));
        }
    } else if (spec.variant == AdapterVariant::NaRAC) {
        for (int g = 0; g < groups; ++g) {
            auto c = Tensor::identity(r);
            c.set_requires_grad(true);
            s.free_cores_.push_back(std::move(c));
        }
    }
    return s;
}

}  // namespace nara
