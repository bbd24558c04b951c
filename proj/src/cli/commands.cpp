#include "nara/cli.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "nara/analysis.hpp"
#include "nara/checks.hpp"
#include "nara/factorization.hpp"

namespace nara::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
    std::string base;
};

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

bool locked(const std::string& key, const std::vector<std::string>& prefixes) {
    for (const auto& p : prefixes)
        if (key.starts_with(p)) return true;
    return false;
}

// defaults ← inherited checkpoint keys ← --config ← --seed/--out, then resolve.
// Keys under a locked prefix must agree with the checkpoint.
RunConfig build_config(const Flags& flags, const Checkpoint* inherit_from, bool inherit_all,
                       const std::vector<std::string>& locked_prefixes) {
    RunConfig cfg;
    std::map<std::string, std::string> inherited;
    if (inherit_from) {
        inherited = parse_config_text(inherit_from->config);
        for (const auto& [k, v] : inherited)
            if (inherit_all || locked(k, locked_prefixes)) set_config_value(cfg, k, v);
    }
    if (!flags.config.empty()) {
        for (const auto& [k, v] : parse_config_text(read_text_file(flags.config))) {
            if (inherit_from && locked(k, locked_prefixes) && inherited.count(k) && inherited.at(k) != v) {
                throw ConfigError(k + ": " + v + " conflicts with the checkpoint value " + inherited.at(k));
            }
            set_config_value(cfg, k, v);
        }
    }
    if (flags.seed) cfg.seed = *flags.seed;
    if (!flags.out.empty()) cfg.out = flags.out;
    cfg.resolve();
    return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
    fs::path dir(cfg.out);
    fs::create_directories(dir);
    write_file(dir / "config.resolved", cfg.snapshot());
    return dir;
}

Checkpoint require_checkpoint(const std::string& path, const char* flag) {
    if (path.empty()) throw ConfigError(std::string(flag) + " is required");
    return Checkpoint::load(path);
}

std::string method_label(const std::optional<AdapterState>& adapter) {
    return adapter ? std::string(to_string(adapter->spec().variant)) : "base";
}

int cmd_pretrain(const Flags& flags, std::ostream& out) {
    const auto cfg = build_config(flags, nullptr, false, {});
    const auto dir = prepare_out(cfg);
    const auto data = make_synthetic_tasks(cfg.seed, cfg.model.vocab).dataset(cfg.task);
    const auto res = pretrain(init_model(cfg.model, cfg.seed), data, cfg.train);
    Checkpoint ck;
    ck.seed = cfg.seed;
    ck.config = cfg.snapshot();
    add_entries(ck, res.model.parameters());
    ck.save((dir / "checkpoint.bin").string());
    write_file(dir / "train_log.jsonl", res.log.to_jsonl());
    out << "pretrain: " << res.log.records.size() << " steps, config " << cfg.hash() << ", wrote " << dir.string()
        << "\n";
    return kSuccess;
}

int cmd_finetune(const Flags& flags, std::ostream& out, std::ostream& err) {
    const auto base = require_checkpoint(flags.base, "--base");
    const auto cfg = build_config(flags, &base, false, {"model."});
    const auto dir = prepare_out(cfg);
    const auto model = load_model(base, cfg.model);
    const auto data = make_synthetic_tasks(cfg.seed, cfg.model.vocab).dataset(cfg.task);
    const auto init = init_adapter(cfg.adapter, cfg.model.n_layer, cfg.model.d_model, cfg.seed);
    FitResult res;
    try {
        res = fit(model, init, data, cfg.train);
    } catch (const DivergenceError& e) {
        write_file(dir / "divergence.json", e.batch_json);
        err << "finetune: " << e.what() << " (batch written to " << (dir / "divergence.json").string() << ")\n";
        return kCheckFailed;
    }
    Checkpoint ck;
    ck.seed = cfg.seed;
    ck.config = cfg.snapshot();
    add_entries(ck, model.parameters());
    add_entries(ck, res.best.tensors());
    ck.save((dir / "checkpoint.bin").string());
    write_file(dir / "train_log.jsonl", res.log.to_jsonl());
    out << "finetune: " << res.log.records.size() << " steps, best step " << res.best_step << " val "
        << res.best_val << ", wrote " << dir.string() << "\n";
    return kSuccess;
}

int cmd_sample(const Flags& flags, std::ostream& out) {
    const auto ck = require_checkpoint(flags.checkpoint, "--checkpoint");
    const auto cfg = build_config(flags, &ck, true, {"model.", "adapter."});
    if (cfg.prompts.empty()) throw ConfigError("sample.prompts: a prompts file is required");
    if (cfg.sample.answer_length > static_cast<std::size_t>(cfg.model.max_len)) {
        throw ConfigError("sample.answer_length: exceeds model.max_len " + std::to_string(cfg.model.max_len));
    }
    const auto prompts = parse_prompts(read_text_file(cfg.prompts), cfg.model.vocab);
    const auto dir = prepare_out(cfg);
    const auto model = load_model(ck, cfg.model);
    const auto adapter = load_adapter(ck, cfg);
    const auto traces = decode_all(model, adapter ? &*adapter : nullptr, prompts, cfg.sample);
    std::string gen, tr;
    for (const auto& t : traces) {
        for (std::size_t i = 0; i < t.response.size(); ++i) gen += (i ? " " : "") + std::to_string(t.response[i]);
        gen += "\n";
        tr += t.to_json() + "\n";
    }
    write_file(dir / "generations.txt", gen);
    write_file(dir / "traces.jsonl", tr);
    out << "sample: " << traces.size() << " prompts decoded, wrote " << dir.string() << "\n";
    return kSuccess;
}

int cmd_sweep_noise(const Flags& flags, std::ostream& out) {
    const auto ck = require_checkpoint(flags.checkpoint, "--checkpoint");
    const auto cfg = build_config(flags, &ck, true, {"model.", "adapter.", "task."});
    const auto dir = prepare_out(cfg);
    const auto model = load_model(ck, cfg.model);
    const auto adapter = load_adapter(ck, cfg);
    // The evaluation split is the one the checkpoint was trained against.
    const auto data = make_synthetic_tasks(ck.seed, cfg.model.vocab).dataset(cfg.task);
    const auto method = method_label(adapter);
    const auto recs =
        loss_vs_noise(model, adapter ? &*adapter : nullptr, data.test, cfg.sweep.repetitions, cfg.seed, method);
    write_sweep_csv((dir / "loss_vs_noise.csv").string(), recs);
    bool finite = true;
    std::vector<double> xs, ys;
    for (const auto& r : recs) {
        finite = finite && std::isfinite(r.value);
        xs.push_back(r.lambda);
        ys.push_back(r.value);
    }
    std::vector<SweepRecord> smooth;
    if (xs.size() >= 2) {
        const auto curve = lowess(xs, ys, cfg.sweep.fraction);
        for (std::size_t i = 0; i < curve.x.size(); ++i)
            smooth.push_back({curve.x[i], curve.y[i], "all", "all", method + "-lowess", 0});
    }
    write_sweep_csv((dir / "loss_vs_noise_lowess.csv").string(), smooth);
    out << "sweep-noise: " << recs.size() << " records (" << method << "), wrote " << dir.string() << "\n";
    if (!finite) {
        out << "sweep-noise: non-finite loss values\n";
        return kCheckFailed;
    }
    return kSuccess;
}

int cmd_sweep_norm(const Flags& flags, std::ostream& out) {
    const auto ck = require_checkpoint(flags.checkpoint, "--checkpoint");
    const auto cfg = build_config(flags, &ck, true, {"model.", "adapter."});
    const auto adapter = load_adapter(ck, cfg);
    if (!adapter) throw ConfigError("--checkpoint holds no adapter");
    const auto dir = prepare_out(cfg);
    const auto grid = lambda_grid(cfg.sweep.points);
    const auto recs = delta_w_norm_sweep(*adapter, grid, method_label(adapter));
    write_sweep_csv((dir / "norm_sweep.csv").string(), recs);

    std::map<std::pair<std::string, std::string>, std::pair<double, double>> range;
    bool finite = true;
    for (const auto& r : recs) {
        finite = finite && std::isfinite(r.value);
        auto [it, fresh] = range.try_emplace({r.layer, r.module}, r.value, r.value);
        if (!fresh) {
            it->second.first = std::min(it->second.first, r.value);
            it->second.second = std::max(it->second.second, r.value);
        }
    }
    double spread = 0.0;
    for (const auto& [k, v] : range) spread = std::max(spread, v.second - v.first);
    const auto& spec = adapter->spec();
    const bool must_be_constant = spec.variant == AdapterVariant::LoRA || spec.variant == AdapterVariant::NaRAC ||
                                  (spec.variant == AdapterVariant::NaRA && spec.eta == 0.0);
    out << "sweep-norm: " << grid.size() << " lambda points, max spread over lambda " << spread << ", wrote "
        << dir.string() << "\n";
    if (!finite) {
        out << "sweep-norm: non-finite norms\n";
        return kCheckFailed;
    }
    if (must_be_constant) {
        const bool ok = spread < 1e-12;
        out << "sweep-norm: constant-in-lambda check " << (ok ? "passed" : "FAILED") << "\n";
        return ok ? kSuccess : kCheckFailed;
    }
    return kSuccess;
}

int cmd_verify_theorem(const Flags& flags, std::ostream& out) {
    const auto cfg = build_config(flags, nullptr, false, {});
    const auto dir = prepare_out(cfg);
    const auto report = run_theorem_suite(cfg.seed, cfg.theorem_count);
    ojson j;
    j["seed"] = cfg.seed;
    j["passed"] = report.passed();
    j["count"] = report.cases.size();
    auto& cases = j["cases"] = ojson::array();
    for (const auto& c : report.cases) {
        cases.push_back({{"d", c.shape.d},
                         {"k", c.shape.k},
                         {"targets", c.shape.targets},
                         {"rank", c.column_rank},
                         {"residual_at_rank", c.residual_at_rank},
                         {"residual_below_rank", c.residual_below_rank},
                         {"orthonormality", c.orthonormality},
                         {"passed", c.passed}});
    }
    write_file(dir / "theorem.json", j.dump(2) + "\n");
    out << "verify-theorem: " << report.passed() << "/" << report.cases.size() << " problems passed\n";
    return report.passed() == report.cases.size() ? kSuccess : kCheckFailed;
}

int cmd_grad_check(const Flags& flags, std::ostream& out) {
    const auto cfg = build_config(flags, nullptr, false, {});
    const auto dir = prepare_out(cfg);
    const auto suite = run_grad_check_suite(cfg.seed);
    const auto eq = lora_gradient_equivalence(cfg.seed, 50);
    ojson j;
    j["seed"] = cfg.seed;
    j["tolerance"] = cfg.grad_tolerance;
    bool ok = true;
    double worst = 0.0;
    auto& cases = j["cases"] = ojson::array();
    for (const auto& c : suite) {
        const bool pass = c.report.passed(cfg.grad_tolerance);
        ok = ok && pass;
        worst = std::max(worst, c.report.max_rel_error);
        ojson entries = ojson::array();
        for (const auto& e : c.report.entries)
            entries.push_back({{"name", e.name}, {"count", e.count}, {"max_rel_error", e.max_rel_error}});
        cases.push_back({{"adapter", c.label},
                         {"elements", c.report.elements},
                         {"max_rel_error", c.report.max_rel_error},
                         {"passed", pass},
                         {"tensors", entries}});
        out << "grad-check: " << c.label << " max rel err " << c.report.max_rel_error << (pass ? "" : "  FAILED")
            << "\n";
    }
    const bool eq_ok = eq.max_rel_error <= 1e-10;
    j["lora_equivalence"] = {{"batches", eq.batches}, {"max_rel_error", eq.max_rel_error}, {"passed", eq_ok}};
    write_file(dir / "grad_check.json", j.dump(2) + "\n");
    out << "grad-check: identity-core NaRA vs LoRA gradients, max rel err " << eq.max_rel_error << "\n";
    out << "grad-check: max rel err " << worst << " (tolerance " << cfg.grad_tolerance << ")\n";
    return ok && eq_ok ? kSuccess : kCheckFailed;
}

}  // namespace

RunConfig checkpoint_config(const Checkpoint& ckpt) { return parse_config(ckpt.config); }

ModelState load_model(const Checkpoint& ckpt, const ModelConfig& config) {
    auto model = init_model(config, 0);
    restore_entries(ckpt, model.parameters());
    model.set_trainable(false);
    return model;
}

std::optional<AdapterState> load_adapter(const Checkpoint& ckpt, const RunConfig& config) {
    if (!ckpt.has_prefix("adapter.")) return std::nullopt;
    auto adapter = init_adapter(config.adapter, config.model.n_layer, config.model.d_model, 0);
    restore_entries(ckpt, adapter.tensors());
    return adapter;
}

std::vector<std::vector<int>> parse_prompts(const std::string& text, const Vocab& vocab) {
    std::vector<std::vector<int>> out;
    std::istringstream in(text);
    std::string line;
    for (int no = 1; std::getline(in, line); ++no) {
        std::istringstream ls(line);
        std::vector<int> p;
        std::string tok;
        while (ls >> tok) {
            std::size_t used = 0;
            int id = -1;
            try {
                id = std::stoi(tok, &used);
            } catch (const std::logic_error&) {
                used = 0;
            }
            if (used != tok.size() || id < 0 || id >= vocab.size || id == vocab.mask_id()) {
                throw std::invalid_argument("prompts line " + std::to_string(no) + ": bad token '" + tok + "'");
            }
            p.push_back(id);
        }
        out.push_back(std::move(p));
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Masked-diffusion adapter lab"};
    app.require_subcommand(1);
    Flags flags;
    std::uint64_t seed = 0;
    auto add_common = [&](CLI::App* sub, bool checkpoint, bool base) {
        sub->add_option("--config", flags.config, "config file (key = value lines)")->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "root seed (overrides the config)");
        sub->add_option("--out", flags.out, "output directory (overrides the config)");
        if (checkpoint) sub->add_option("--checkpoint", flags.checkpoint, "input checkpoint")->required();
        if (base) sub->add_option("--base", flags.base, "pretrained base checkpoint")->required();
    };
    auto* pre = app.add_subcommand("pretrain", "train the base model on a synthetic task");
    add_common(pre, false, false);
    auto* fine = app.add_subcommand("finetune", "train an adapter on a frozen base");
    add_common(fine, false, true);
    auto* sample = app.add_subcommand("sample", "block-wise decoding of prompts");
    add_common(sample, true, false);
    auto* noise = app.add_subcommand("sweep-noise", "loss versus noise level with LOWESS");
    add_common(noise, true, false);
    auto* norm = app.add_subcommand("sweep-norm", "Frobenius norm of the weight update versus noise level");
    add_common(norm, true, false);
    auto* theorem = app.add_subcommand("verify-theorem", "shared-subspace factorization oracle suite");
    add_common(theorem, false, false);
    auto* grad = app.add_subcommand("grad-check", "finite-difference check of adapter gradients");
    add_common(grad, false, false);

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kSuccess : kUsageError;
    }
    for (auto* sub : app.get_subcommands()) {
        if (sub->count("--seed")) flags.seed = seed;
    }

    try {
        if (pre->parsed()) return cmd_pretrain(flags, out);
        if (fine->parsed()) return cmd_finetune(flags, out, err);
        if (sample->parsed()) return cmd_sample(flags, out);
        if (noise->parsed()) return cmd_sweep_noise(flags, out);
        if (norm->parsed()) return cmd_sweep_norm(flags, out);
        if (theorem->parsed()) return cmd_verify_theorem(flags, out);
        if (grad->parsed()) return cmd_grad_check(flags, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kUsageError;
    } catch (const CheckpointError& e) {
        err << "checkpoint error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kCheckFailed;
    }
    return kUsageError;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace nara::cli
