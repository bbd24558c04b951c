#pragma once

// Experiment front end. Subcommands: pretrain, finetune, sample,
// sweep-noise, sweep-norm, verify-theorem, grad-check.
//
// Exit codes: 0 success, 1 a check failed (or training diverged),
// 2 usage, configuration or input error.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nara/checkpoint.hpp"
#include "nara/config.hpp"

namespace nara::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kUsageError = 2 };

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Model config from a checkpoint's embedded snapshot.
RunConfig checkpoint_config(const Checkpoint& ckpt);
ModelState load_model(const Checkpoint& ckpt, const ModelConfig& config);
/// nullopt when the checkpoint holds base weights only.
std::optional<AdapterState> load_adapter(const Checkpoint& ckpt, const RunConfig& config);

/// Token-id lines; blank lines are empty prompts.
std::vector<std::vector<int>> parse_prompts(const std::string& text, const Vocab& vocab);

}  // namespace nara::cli
