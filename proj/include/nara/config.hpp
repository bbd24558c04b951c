#pragma once

// Run configuration: flat "key = value" text with dotted keys.
//
//   # comment
//   seed = 7
//   adapter.variant = nara
//   adapter.hidden = 256,512
//
// Unknown keys, duplicate keys and malformed values are rejected with a
// ConfigError naming the key. adapter.embed_dim and adapter.hidden accept
// "auto", which resolves to the reference widths for the adapter rank.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nara/adapter.hpp"
#include "nara/model.hpp"
#include "nara/sampler.hpp"
#include "nara/trainer.hpp"

namespace nara {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct SweepConfig {
    std::size_t points = 101;      // norm-sweep λ grid
    std::size_t repetitions = 4;   // loss-vs-noise draws per sample
    double fraction = 0.5;         // LOWESS smoothing fraction
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out = "out";
    ModelConfig model;
    AdapterSpec adapter;
    bool auto_embed_dim = true;
    bool auto_hidden = true;
    TrainConfig train;
    TaskSpec task;
    SampleConfig sample;
    std::string prompts;  // sample.prompts: file of token-id lines
    SweepConfig sweep;
    std::size_t theorem_count = 100;
    double grad_tolerance = 1e-4;

    /// Fills "auto" widths, copies seed and hash into the training config and
    /// validates every section. Throws ConfigError.
    void resolve();
    /// Deterministic "key = value" listing of every key except `out`, in
    /// registry order.
    std::string snapshot() const;
    /// 16 hex digits of FNV-1a over the snapshot.
    std::string hash() const;
};

/// Raw key/value pairs of a config text; rejects unknown or repeated keys.
std::map<std::string, std::string> parse_config_text(std::string_view text);
/// Applies parsed pairs on top of `base` (no resolve).
void apply_config(RunConfig& base, const std::map<std::string, std::string>& values);
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Defaults overlaid with the text, then resolved.
RunConfig parse_config(std::string_view text);
std::string read_text_file(const std::string& path);

/// Every recognised key, in snapshot order.
std::vector<std::string> config_keys();

}  // namespace nara
