#include "nara/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "nara/rng.hpp"

namespace nara {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) { throw ConfigError(key + ": " + what); }

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
    T out{};
    const auto* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || p != end || v.empty()) bad(key, "cannot parse '" + v + "'");
    return out;
}

int as_int(const std::string& k, const std::string& v) { return parse_number<int>(k, v); }
std::size_t as_size(const std::string& k, const std::string& v) { return parse_number<std::size_t>(k, v); }
double as_double(const std::string& k, const std::string& v) { return parse_number<double>(k, v); }

bool as_bool(const std::string& k, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad(k, "expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    (void)ec;
    return std::string(buf, p);
}

template <class T>
std::string fmt_int(T v) {
    return std::to_string(v);
}

template <class F>
auto rethrow_as(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        bad(key, e.what());
    }
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define NUM_FIELD(KEY, MEMBER, PARSE, FMT)                                          \
    Field {                                                                         \
        KEY, [](RunConfig& c, const std::string& v) { c.MEMBER = PARSE(KEY, v); }, \
            [](const RunConfig& c) { return FMT(c.MEMBER); }                        \
    }

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); },
         [](const RunConfig& c) { return std::to_string(c.seed); }},
        {"out", [](RunConfig& c, const std::string& v) { c.out = v; }, [](const RunConfig& c) { return c.out; }},

        NUM_FIELD("model.vocab", model.vocab.size, as_int, fmt_int),
        NUM_FIELD("model.d_model", model.d_model, as_int, fmt_int),
        NUM_FIELD("model.n_layer", model.n_layer, as_int, fmt_int),
        NUM_FIELD("model.n_head", model.n_head, as_int, fmt_int),
        NUM_FIELD("model.max_len", model.max_len, as_int, fmt_int),
        NUM_FIELD("model.d_ff", model.d_ff, as_int, fmt_int),
        NUM_FIELD("model.init_std", model.init_std, as_double, fmt),

        {"adapter.variant",
         [](RunConfig& c, const std::string& v) {
             c.adapter.variant = rethrow_as("adapter.variant", [&] { return parse_variant(v); });
         },
         [](const RunConfig& c) { return std::string(to_string(c.adapter.variant)); }},
        NUM_FIELD("adapter.rank", adapter.rank, as_int, fmt_int),
        NUM_FIELD("adapter.eta", adapter.eta, as_double, fmt),
        {"adapter.embed_dim",
         [](RunConfig& c, const std::string& v) {
             c.auto_embed_dim = v == "auto";
             if (!c.auto_embed_dim) c.adapter.embed_dim = as_int("adapter.embed_dim", v);
         },
         [](const RunConfig& c) { return std::to_string(c.adapter.embed_dim); }},
        {"adapter.hidden",
         [](RunConfig& c, const std::string& v) {
             c.auto_hidden = v == "auto";
             if (c.auto_hidden) return;
             const auto comma = v.find(',');
             if (comma == std::string::npos) bad("adapter.hidden", "expected two widths 'h1,h2', got '" + v + "'");
             c.adapter.hidden = {as_int("adapter.hidden", trim(v.substr(0, comma))),
                                 as_int("adapter.hidden", trim(v.substr(comma + 1)))};
         },
         [](const RunConfig& c) {
             return std::to_string(c.adapter.hidden[0]) + "," + std::to_string(c.adapter.hidden[1]);
         }},
        {"adapter.embedding",
         [](RunConfig& c, const std::string& v) {
             c.adapter.embedding = rethrow_as("adapter.embedding", [&] { return parse_embedding(v); });
         },
         [](const RunConfig& c) { return std::string(to_string(c.adapter.embedding)); }},
        {"adapter.sharing",
         [](RunConfig& c, const std::string& v) {
             c.adapter.sharing = rethrow_as("adapter.sharing", [&] { return Sharing::parse(v); });
         },
         [](const RunConfig& c) { return c.adapter.sharing.str(); }},
        NUM_FIELD("adapter.fourier_sigma", adapter.fourier_sigma, as_double, fmt),
        NUM_FIELD("adapter.num_intervals", adapter.num_intervals, as_int, fmt_int),
        NUM_FIELD("adapter.dropout", adapter.dropout, as_double, fmt),

        NUM_FIELD("train.epochs", train.epochs, as_int, fmt_int),
        NUM_FIELD("train.max_steps", train.max_steps, as_size, fmt_int),
        NUM_FIELD("train.lr", train.lr, as_double, fmt),
        NUM_FIELD("train.warmup_ratio", train.warmup_ratio, as_double, fmt),
        NUM_FIELD("train.accumulation", train.accumulation, as_int, fmt_int),
        NUM_FIELD("train.batch_size", train.batch_size, as_int, fmt_int),
        NUM_FIELD("train.beta1", train.adam.beta1, as_double, fmt),
        NUM_FIELD("train.beta2", train.adam.beta2, as_double, fmt),
        NUM_FIELD("train.adam_eps", train.adam.eps, as_double, fmt),
        NUM_FIELD("train.weight_decay", train.adam.weight_decay, as_double, fmt),
        NUM_FIELD("train.val_interval", train.val_interval, as_size, fmt_int),
        {"train.selection",
         [](RunConfig& c, const std::string& v) {
             if (v == "min_val_loss") c.train.selection = Selection::MinValLoss;
             else if (v == "last") c.train.selection = Selection::Last;
             else bad("train.selection", "expected min_val_loss or last, got '" + v + "'");
         },
         [](const RunConfig& c) {
             return std::string(c.train.selection == Selection::Last ? "last" : "min_val_loss");
         }},

        {"task.kind",
         [](RunConfig& c, const std::string& v) {
             c.task.kind = rethrow_as("task.kind", [&] { return parse_task(v); });
         },
         [](const RunConfig& c) { return std::string(to_string(c.task.kind)); }},
        NUM_FIELD("task.min_len", task.min_len, as_int, fmt_int),
        NUM_FIELD("task.max_len", task.max_len, as_int, fmt_int),
        NUM_FIELD("task.answer_length", task.answer_length, as_int, fmt_int),
        NUM_FIELD("task.alphabet", task.alphabet, as_int, fmt_int),
        NUM_FIELD("task.n_train", task.n_train, as_size, fmt_int),
        NUM_FIELD("task.n_val", task.n_val, as_size, fmt_int),
        NUM_FIELD("task.n_test", task.n_test, as_size, fmt_int),

        NUM_FIELD("sample.answer_length", sample.answer_length, as_size, fmt_int),
        NUM_FIELD("sample.block_size", sample.block_size, as_size, fmt_int),
        NUM_FIELD("sample.steps", sample.steps, as_size, fmt_int),
        {"sample.early_termination",
         [](RunConfig& c, const std::string& v) { c.sample.early_termination = as_bool("sample.early_termination", v); },
         [](const RunConfig& c) { return std::string(c.sample.early_termination ? "true" : "false"); }},
        {"sample.prompts", [](RunConfig& c, const std::string& v) { c.prompts = v; },
         [](const RunConfig& c) { return c.prompts; }},

        NUM_FIELD("sweep.points", sweep.points, as_size, fmt_int),
        NUM_FIELD("sweep.repetitions", sweep.repetitions, as_size, fmt_int),
        NUM_FIELD("sweep.fraction", sweep.fraction, as_double, fmt),

        NUM_FIELD("theorem.count", theorem_count, as_size, fmt_int),
        NUM_FIELD("grad_check.tolerance", grad_tolerance, as_double, fmt),
    };
    return f;
}

#undef NUM_FIELD

const Field* find_field(std::string_view key) {
    for (const auto& f : fields())
        if (f.key == key) return &f;
    return nullptr;
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

std::map<std::string, std::string> parse_config_text(std::string_view text) {
    std::map<std::string, std::string> out;
    std::istringstream in{std::string(text)};
    std::string line;
    for (int no = 1; std::getline(in, line); ++no) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(no) + ": expected 'key = value'");
        const std::string key = trim(body.substr(0, eq)), value = trim(body.substr(eq + 1));
        if (!find_field(key)) throw ConfigError(key + ": unknown key (line " + std::to_string(no) + ")");
        if (!out.emplace(key, value).second) throw ConfigError(key + ": repeated (line " + std::to_string(no) + ")");
    }
    return out;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError(key + ": unknown key");
    f->set(cfg, value);
}

void apply_config(RunConfig& base, const std::map<std::string, std::string>& values) {
    for (const auto& [k, v] : values) set_config_value(base, k, v);
}

void RunConfig::resolve() {
    if (auto_embed_dim || auto_hidden) {
        const auto w = hypernet_widths_for_rank(adapter.rank);
        if (!w) {
            bad(auto_embed_dim ? "adapter.embed_dim" : "adapter.hidden",
                "no reference width for rank " + std::to_string(adapter.rank) + "; set it explicitly");
        }
        if (auto_embed_dim) adapter.embed_dim = w->embed_dim;
        if (auto_hidden) adapter.hidden = {w->hidden1, w->hidden2};
    }
    auto_embed_dim = auto_hidden = false;
    auto check = [](auto&& f) {
        try {
            f();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::invalid_argument& e) {
            throw ConfigError(e.what());
        }
    };
    check([&] { model.validate(); });
    check([&] { adapter.validate(); });
    check([&] { train.validate(); });
    check([&] { task.validate(model.vocab); });
    check([&] { sample.validate(); });
    const int L = model.max_len;
    const int response = task.answer_length ? task.answer_length : task.max_len + 1;
    if (task.max_len > L || response > L) bad("task.max_len", "sequences exceed model.max_len " + std::to_string(L));
    if (sweep.points < 2) bad("sweep.points", "must be >= 2");
    if (!(sweep.fraction > 0.0 && sweep.fraction <= 1.0)) bad("sweep.fraction", "must lie in (0, 1]");
    if (!(grad_tolerance > 0.0)) bad("grad_check.tolerance", "must be positive");
    train.seed = seed;
    train.config_hash = hash();
}

std::string RunConfig::snapshot() const {
    std::string out;
    // The output directory is where a run writes, not what it computes.
    for (const auto& f : fields())
        if (f.key != "out") out += f.key + " = " + f.get(*this) + "\n";
    return out;
}

std::string RunConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(snapshot())));
    return buf;
}

RunConfig parse_config(std::string_view text) {
    RunConfig cfg;
    apply_config(cfg, parse_config_text(text));
    cfg.resolve();
    return cfg;
}

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

}  // namespace nara
