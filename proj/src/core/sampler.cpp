#include "nara/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "nara/parallel.hpp"

namespace nara {

void SampleConfig::validate() const {
    if (answer_length == 0) throw std::invalid_argument("sample.answer_length must be positive");
    if (block_size == 0) throw std::invalid_argument("sample.block_size must be positive");
    if (answer_length % block_size != 0) {
        throw std::invalid_argument("sample.block_size " + std::to_string(block_size) +
                                    " does not divide sample.answer_length " + std::to_string(answer_length));
    }
    if (steps != 0 && steps < answer_length) {
        throw std::invalid_argument("sample.steps " + std::to_string(steps) +
                                    " is fewer than the tokens to resolve (" + std::to_string(answer_length) + ")");
    }
}

std::string_view to_string(Termination t) { return t == Termination::EarlyStop ? "early_stop" : "completed"; }

std::string DecodeTrace::to_json() const {
    nlohmann::ordered_json j;
    j["termination"] = std::string(to_string(reason));
    j["blocks_decoded"] = blocks_decoded;
    j["response"] = response;
    auto& arr = j["steps"] = nlohmann::ordered_json::array();
    for (const auto& s : steps) {
        arr.push_back({{"block", s.block},
                       {"lambda", s.lambda},
                       {"positions", {s.position}},
                       {"tokens", {s.token}},
                       {"confidences", {s.confidence}}});
    }
    return j.dump();
}

Denoiser model_denoiser(const ModelState& model, const AdapterState* adapter, std::span<const int> prompt) {
    std::vector<int> p(prompt.begin(), prompt.end());
    return [&model, adapter, p](std::span<const int> response, double lambda) {
        NoGradGuard guard;
        std::vector<int> tokens = p;
        tokens.insert(tokens.end(), response.begin(), response.end());
        const auto layout = prompt_response_layout(model.config(), p.size(), response.size());
        CoreSet cores;
        if (adapter && adapter->spec().uses_core()) cores = adapter->compute_cores(lambda);
        AdapterBinding bind{adapter, &cores, lambda, nullptr};
        auto logits = model.forward(tokens, adapter ? &bind : nullptr, &layout);
        return slice_rows(logits, p.size(), response.size());
    };
}

BlockDecision early_terminate_check(std::span<const int> block, std::optional<std::size_t>& blocks_since_eos,
                                    int eos_id) {
    if (blocks_since_eos) {
        ++*blocks_since_eos;
        return BlockDecision::Stop;
    }
    if (std::find(block.begin(), block.end(), eos_id) != block.end()) blocks_since_eos = 0;
    return BlockDecision::Continue;
}

DecodeTrace decode(const Denoiser& denoiser, const SampleConfig& config, const Vocab& vocab) {
    config.validate();
    const std::size_t L = config.answer_length, bs = config.block_size;
    const auto V = static_cast<std::size_t>(vocab.size);
    DecodeTrace trace;
    std::vector<int> response(L, vocab.mask_id());
    std::size_t masked = L;
    std::optional<std::size_t> since_eos;

    for (std::size_t b = 0; b < config.blocks(); ++b) {
        const std::size_t lo = b * bs, hi = lo + bs;
        for (std::size_t k = 0; k < bs; ++k) {
            const double lambda = static_cast<double>(masked) / static_cast<double>(L);
            const Tensor logits = denoiser(response, lambda);
            if (logits.ndim() != 2 || logits.shape()[0] != L || logits.shape()[1] != V) {
                throw DimensionError("decode: denoiser returned " + shape_str(logits.shape()));
            }
            DecodeStep best{b, lambda, 0, -1, -1.0};
            for (std::size_t pos = lo; pos < hi; ++pos) {
                if (response[pos] != vocab.mask_id()) continue;
                double top = -INFINITY;
                int arg = -1;
                for (std::size_t v = 0; v < V; ++v) {
                    if (static_cast<int>(v) == vocab.mask_id()) continue;
                    if (logits.at(pos, v) > top) {
                        top = logits.at(pos, v);
                        arg = static_cast<int>(v);
                    }
                }
                double z = 0.0;
                for (std::size_t v = 0; v < V; ++v) {
                    if (static_cast<int>(v) != vocab.mask_id()) z += std::exp(logits.at(pos, v) - top);
                }
                const double conf = 1.0 / z;
                if (conf > best.confidence) {
                    best.position = pos;
                    best.token = arg;
                    best.confidence = conf;
                }
            }
            response[best.position] = best.token;
            --masked;
            trace.steps.push_back(best);
        }
        trace.blocks_decoded = b + 1;
        if (config.early_termination &&
            early_terminate_check(std::span(response).subspan(lo, bs), since_eos, vocab.eos_id()) ==
                BlockDecision::Stop) {
            if (b + 1 < config.blocks()) trace.reason = Termination::EarlyStop;
            break;
        }
    }
    for (auto& t : response) {
        if (t == vocab.mask_id()) t = vocab.eos_id();
    }
    trace.response = std::move(response);
    return trace;
}

DecodeTrace decode(const ModelState& model, const AdapterState* adapter, std::span<const int> prompt,
                   const SampleConfig& config) {
    return decode(model_denoiser(model, adapter, prompt), config, model.config().vocab);
}

std::vector<DecodeTrace> decode_all(const ModelState& model, const AdapterState* adapter,
                                    std::span<const std::vector<int>> prompts, const SampleConfig& config) {
    config.validate();
    std::vector<DecodeTrace> out(prompts.size());
    parallel_for(prompts.size(), [&](std::size_t i) { out[i] = decode(model, adapter, prompts[i], config); });
    return out;
}

}  // namespace nara
