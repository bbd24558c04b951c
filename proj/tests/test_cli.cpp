#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "nara/analysis.hpp"
#include "nara/checks.hpp"
#include "nara/cli.hpp"

using namespace nara;
namespace fs = std::filesystem;

namespace {

struct ScratchDir {
    fs::path path = fs::temp_directory_path() / ("nara_cli_test_" + std::to_string(::getpid()));
    ScratchDir() {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

fs::path scratch() {
    static const ScratchDir dir;
    return dir.path;
}

std::string write(const std::string& name, const std::string& text) {
    const auto p = scratch() / name;
    std::ofstream(p, std::ios::binary) << text;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run lab(std::vector<std::string> args) {
    args.insert(args.begin(), "nara_lab");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string out_dir(const std::string& name) { return (scratch() / name).string(); }

const std::string kTiny = R"(# tiny model and task
model.vocab = 16
model.d_model = 16
model.max_len = 8
model.d_ff = 32
task.min_len = 3
task.max_len = 6
task.answer_length = 7
task.n_train = 64
task.n_val = 16
task.n_test = 16
train.max_steps = 30
train.batch_size = 4
train.accumulation = 1
train.lr = 0.003
train.val_interval = 10
)";

const std::string kFinetune = R"(task.kind = sort
task.min_len = 3
task.max_len = 6
task.answer_length = 7
task.n_train = 32
task.n_val = 8
task.n_test = 16
train.max_steps = 12
train.accumulation = 2
train.lr = 0.01
train.val_interval = 4
adapter.rank = 8
adapter.dropout = 0
sweep.points = 11
)";

const std::string& base_checkpoint() {
    static const std::string path = [] {
        const auto r = lab({"pretrain", "--config", write("tiny.cfg", kTiny), "--seed", "3", "--out", out_dir("base")});
        REQUIRE(r.code == 0);
        return out_dir("base") + "/checkpoint.bin";
    }();
    return path;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("defaults follow the reference hyperparameters and validate") {
        const auto cfg = parse_config("");
        CHECK(cfg.adapter.eta == 0.1);
        CHECK(cfg.adapter.rank == 32);
        CHECK(cfg.adapter.embed_dim == 64);
        CHECK(cfg.adapter.hidden == std::array<int, 2>{256, 512});
        CHECK(cfg.adapter.dropout == 0.05);
        CHECK(cfg.train.lr == 1e-4);
        CHECK(cfg.train.accumulation == 32);
        CHECK(cfg.sweep.repetitions == 4);
        CHECK(cfg.sweep.fraction == 0.5);
        CHECK(cfg.sweep.points == 101);
    }

    TEST_CASE("auto hypernetwork widths come from the rank table") {
        const std::vector<std::pair<int, std::array<int, 3>>> rows{
            {8, {4, 16, 32}}, {16, {16, 64, 128}}, {32, {64, 256, 512}}, {64, {128, 512, 1024}}};
        for (const auto& [r, w] : rows) {
            const auto cfg = parse_config("adapter.rank = " + std::to_string(r));
            CHECK(cfg.adapter.embed_dim == w[0]);
            CHECK(cfg.adapter.hidden == std::array<int, 2>{w[1], w[2]});
        }
        CHECK_THROWS_WITH_AS(parse_config("adapter.rank = 12"), doctest::Contains("adapter.embed_dim"), ConfigError);
        const auto explicit_cfg = parse_config("adapter.rank = 12\nadapter.embed_dim = 8\nadapter.hidden = 10, 20");
        CHECK(explicit_cfg.adapter.hidden == std::array<int, 2>{10, 20});
        const auto pinned = parse_config("adapter.rank = 8\nadapter.embed_dim = 6");
        CHECK(pinned.adapter.embed_dim == 6);
        CHECK(pinned.adapter.hidden == std::array<int, 2>{16, 32});
    }

    TEST_CASE("malformed input is rejected with the key named") {
        CHECK_THROWS_WITH_AS(parse_config("adapter.rnk = 3"), doctest::Contains("adapter.rnk"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("seed = 1\nseed = 2"), doctest::Contains("repeated"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("adapter.rank = 3x"), doctest::Contains("adapter.rank"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("adapter.variant = dora"), doctest::Contains("adapter.variant"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("adapter.eta = -1"), doctest::Contains("adapter.eta"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("model.n_head = 3"), doctest::Contains("model.n_head"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("just words"), doctest::Contains("line 1"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("sample.block_size = 4"), doctest::Contains("sample.block_size"),
                             ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("sample.early_termination = maybe"),
                             doctest::Contains("sample.early_termination"), ConfigError);
        CHECK_THROWS_WITH_AS(parse_config("model.max_len = 8"), doctest::Contains("task.max_len"), ConfigError);
    }

    TEST_CASE("snapshot is a fixed point and the hash tracks content") {
        const auto a = parse_config("seed = 5\nadapter.variant = multi-lora\nadapter.sharing = QV/KO\ntrain.lr = 3e-4");
        const auto b = parse_config(a.snapshot());
        CHECK(a.snapshot() == b.snapshot());
        CHECK(a.hash() == b.hash());
        CHECK(a.hash().size() == 16);
        CHECK(parse_config("seed = 6").hash() != parse_config("seed = 5").hash());
        CHECK(parse_config("out = x").hash() == parse_config("out = y").hash());
        CHECK(a.train.config_hash == a.hash());
        CHECK(a.train.seed == 5);
        // Every key appears once.
        for (const auto& k : config_keys()) {
            if (k == "out") continue;
            const bool listed = a.snapshot().find("\n" + k + " = ") != std::string::npos ||
                                a.snapshot().starts_with(k + " = ");
            CHECK(listed);
        }
    }
}

TEST_SUITE("checkpoint") {
    TEST_CASE("round trip is bit-identical and payloads are little-endian f64") {
        Checkpoint c;
        c.seed = 0x0102030405060708ULL;
        c.config = "seed = 1\n";
        c.entries.push_back({"x", {2, 1}, {1.0, -0.0}});
        c.entries.push_back({"scalar", {}, {std::nextafter(1.0, 2.0)}});
        c.entries.push_back({"empty", {0, 3}, {}});
        const auto bytes = c.serialize();
        CHECK(bytes.substr(0, 8) == std::string("NARALAB\0", 8));
        CHECK(bytes[8] == 1);  // version, little-endian
        const std::string one("\x00\x00\x00\x00\x00\x00\xf0\x3f", 8);
        CHECK(bytes.find(one) != std::string::npos);
        const auto back = Checkpoint::deserialize(bytes);
        CHECK(back.serialize() == bytes);
        CHECK(back.seed == c.seed);
        CHECK(back.config == c.config);
        REQUIRE(back.entries.size() == 3);
        CHECK(std::signbit(back.entries[0].values[1]));
        CHECK(back.entries[1].values[0] == std::nextafter(1.0, 2.0));

        const auto path = (scratch() / "rt.bin").string();
        c.save(path);
        const auto loaded = Checkpoint::load(path);
        loaded.save(path + "2");
        CHECK(slurp(path) == slurp(path + "2"));
    }

    TEST_CASE("version mismatch, bad magic and truncation fail loudly") {
        Checkpoint c;
        c.entries.push_back({"x", {3}, {1, 2, 3}});
        auto bytes = c.serialize();
        auto other = bytes;
        other[8] = 2;
        CHECK_THROWS_WITH_AS(Checkpoint::deserialize(other), doctest::Contains("version 2"), CheckpointError);
        auto magic = bytes;
        magic[0] = 'X';
        CHECK_THROWS_AS(Checkpoint::deserialize(magic), CheckpointError);
        CHECK_THROWS_WITH_AS(Checkpoint::deserialize(bytes.substr(0, bytes.size() - 4)), doctest::Contains("truncated"),
                             CheckpointError);
        CHECK_THROWS_AS(Checkpoint::deserialize(bytes + "x"), CheckpointError);
        CHECK_THROWS_AS(Checkpoint::load((scratch() / "missing.bin").string()), CheckpointError);
    }

    TEST_CASE("restore checks names and shapes") {
        auto model = init_model(micro_model_config(), 1);
        Checkpoint c;
        add_entries(c, model.parameters());
        auto other = init_model(micro_model_config(), 2);
        restore_entries(c, other.parameters());
        for (std::size_t i = 0; i < model.parameters().size(); ++i)
            CHECK(model.parameters()[i].tensor.data()[0] == other.parameters()[i].tensor.data()[0]);
        auto wide = micro_model_config();
        wide.d_model = 16;
        CHECK_THROWS_WITH_AS(restore_entries(c, init_model(wide, 1).parameters()), doctest::Contains("shape"),
                             CheckpointError);
        Checkpoint empty;
        CHECK_THROWS_WITH_AS(restore_entries(empty, model.parameters()), doctest::Contains("no entry"), CheckpointError);
    }
}

TEST_SUITE("commands") {
    TEST_CASE("usage errors exit 2") {
        CHECK(lab({}).code == 2);
        CHECK(lab({"bogus"}).code == 2);
        CHECK(lab({"pretrain", "--nope"}).code == 2);
        CHECK(lab({"finetune"}).code == 2);  // --base missing
        CHECK(lab({"--help"}).code == 0);
        CHECK(lab({"pretrain", "--config", write("unknown.cfg", "adapter.rnk = 3\n")}).code == 2);
        CHECK(lab({"sample", "--checkpoint", (scratch() / "none.bin").string()}).code == 2);
    }

    TEST_CASE("pretrain writes checkpoint, log and resolved config, deterministically") {
        const auto& ck = base_checkpoint();
        const auto again = lab({"pretrain", "--config", write("tiny.cfg", kTiny), "--seed", "3", "--out", out_dir("base2")});
        REQUIRE(again.code == 0);
        CHECK(slurp(ck) == slurp(out_dir("base2") + "/checkpoint.bin"));
        CHECK(slurp(out_dir("base") + "/train_log.jsonl") == slurp(out_dir("base2") + "/train_log.jsonl"));
        const auto snap = slurp(out_dir("base") + "/config.resolved");
        CHECK(snap.find("seed = 3\n") != std::string::npos);
        const auto ckpt = Checkpoint::load(ck);
        CHECK(ckpt.seed == 3);
        CHECK(ckpt.config == snap);
        CHECK(ckpt.has_prefix("base."));
        CHECK_FALSE(ckpt.has_prefix("adapter."));
        std::istringstream log(slurp(out_dir("base") + "/train_log.jsonl"));
        std::string line;
        std::size_t n = 0;
        while (std::getline(log, line)) {
            auto j = nlohmann::json::parse(line);
            CHECK(j["seed"] == 3);
            CHECK(j["config_hash"] == parse_config(snap).hash());
            ++n;
        }
        CHECK(n == 30);
        // A different seed gives different weights.
        REQUIRE(lab({"pretrain", "--config", write("tiny.cfg", kTiny), "--seed", "4", "--out", out_dir("base4")}).code == 0);
        CHECK(slurp(ck) != slurp(out_dir("base4") + "/checkpoint.bin"));
    }

    TEST_CASE("finetune with zero epochs stores the initialization") {
        const auto cfg = write("ft0.cfg", kFinetune + "train.max_steps = 0\ntrain.epochs = 0\nseed = 9\n");
        // max_steps appears twice: rejected.
        CHECK(lab({"finetune", "--config", cfg, "--base", base_checkpoint(), "--out", out_dir("ft0")}).code == 2);
        std::string text = kFinetune;
        text.replace(text.find("train.max_steps = 12"), 20, "train.epochs = 0");
        const auto r = lab({"finetune", "--config", write("ft0.cfg", text + "seed = 9\n"), "--base", base_checkpoint(),
                            "--out", out_dir("ft0")});
        REQUIRE(r.code == 0);
        const auto ck = Checkpoint::load(out_dir("ft0") + "/checkpoint.bin");
        const auto rc = cli::checkpoint_config(ck);
        const auto init = init_adapter(rc.adapter, rc.model.n_layer, rc.model.d_model, 9);
        auto loaded = cli::load_adapter(ck, rc);
        REQUIRE(loaded);
        const auto a = init.tensors(), b = loaded->tensors();
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto x = a[i].tensor.data(), y = b[i].tensor.data();
            CHECK(std::equal(x.begin(), x.end(), y.begin(), y.end()));
        }
        CHECK(slurp(out_dir("ft0") + "/train_log.jsonl").empty());
    }

    TEST_CASE("finetune: model keys must agree with the base") {
        CHECK(lab({"finetune", "--config", write("clash.cfg", kFinetune + "model.d_model = 32\n"), "--base",
                   base_checkpoint(), "--out", out_dir("clash")})
                  .code == 2);
        CHECK(lab({"finetune", "--config", write("same.cfg", kFinetune + "model.d_model = 16\n"), "--base",
                   base_checkpoint(), "--out", out_dir("same")})
                  .code == 0);
    }

    TEST_CASE("LoRA and eta = 0 NaRA fine-tunes give identical A and B") {
        REQUIRE(lab({"finetune", "--config", write("lora.cfg", kFinetune + "adapter.variant = lora\n"), "--base",
                     base_checkpoint(), "--out", out_dir("lora")})
                    .code == 0);
        REQUIRE(lab({"finetune", "--config", write("eta0.cfg", kFinetune + "adapter.variant = nara\nadapter.eta = 0\n"),
                     "--base", base_checkpoint(), "--out", out_dir("eta0")})
                    .code == 0);
        const auto l = Checkpoint::load(out_dir("lora") + "/checkpoint.bin");
        const auto n = Checkpoint::load(out_dir("eta0") + "/checkpoint.bin");
        std::size_t compared = 0;
        for (const auto& e : l.entries) {
            if (!e.name.starts_with("adapter.l")) continue;
            const auto* o = n.find(e.name);
            REQUIRE(o);
            CHECK(o->values == e.values);
            ++compared;
        }
        CHECK(compared == 2 * 4 * 2);
        // And the adapter actually moved.
        const auto rc = cli::checkpoint_config(l);
        const auto init = init_adapter(rc.adapter, 2, 16, rc.seed);
        CHECK(l.find("adapter.l0.q.B")->values != std::vector<double>(init.pair({0, Projection::Q}).B.numel(), 0.0));

        SUBCASE("sweep-norm on the eta = 0 checkpoint is constant") {
            const auto r = lab({"sweep-norm", "--checkpoint", out_dir("eta0") + "/checkpoint.bin", "--out", out_dir("norm0")});
            CHECK(r.code == 0);
            CHECK(r.out.find("constant-in-lambda check passed") != std::string::npos);
            std::ifstream csv(out_dir("norm0") + "/norm_sweep.csv");
            const auto recs = read_sweep_csv(csv);
            CHECK(recs.size() == 11 * 4 * 4);
        }
    }

    TEST_CASE("NaRA fine-tune: sweeps, sampling and early termination through the CLI") {
        REQUIRE(lab({"finetune", "--config", write("nara.cfg", kFinetune + "adapter.variant = nara\nadapter.eta = 0.5\n"),
                     "--base", base_checkpoint(), "--out", out_dir("nara")})
                    .code == 0);
        const auto ck = out_dir("nara") + "/checkpoint.bin";

        const auto norm = lab({"sweep-norm", "--checkpoint", ck, "--out", out_dir("norm")});
        CHECK(norm.code == 0);
        std::ifstream ncsv(out_dir("norm") + "/norm_sweep.csv");
        CHECK(read_sweep_csv(ncsv).size() == 11 * 4 * 4);

        const auto noise = lab({"sweep-noise", "--checkpoint", ck, "--out", out_dir("noise")});
        CHECK(noise.code == 0);
        std::ifstream raw(out_dir("noise") + "/loss_vs_noise.csv"), smooth(out_dir("noise") + "/loss_vs_noise_lowess.csv");
        const auto r1 = read_sweep_csv(raw), r2 = read_sweep_csv(smooth);
        CHECK(r1.size() > 0);
        CHECK(r1.size() <= 16 * 4);
        CHECK(r2.size() == r1.size());
        const auto again = lab({"sweep-noise", "--checkpoint", ck, "--out", out_dir("noise2")});
        CHECK(slurp(out_dir("noise") + "/loss_vs_noise.csv") == slurp(out_dir("noise2") + "/loss_vs_noise.csv"));

        const auto prompts = write("prompts.txt", "1 2 3\n4 5 6 7\n\n9\n");
        const auto on = write("on.cfg", "sample.prompts = " + prompts + "\nsample.answer_length = 8\nsample.block_size = 2\n");
        const auto off = write("off.cfg", "sample.prompts = " + prompts +
                                              "\nsample.answer_length = 8\nsample.block_size = 2\nsample.early_termination = false\n");
        REQUIRE(lab({"sample", "--checkpoint", ck, "--config", on, "--out", out_dir("on")}).code == 0);
        REQUIRE(lab({"sample", "--checkpoint", ck, "--config", off, "--out", out_dir("off")}).code == 0);
        std::istringstream a(slurp(out_dir("on") + "/generations.txt")), b(slurp(out_dir("off") + "/generations.txt"));
        std::string la, lb;
        std::size_t lines = 0;
        while (std::getline(a, la) && std::getline(b, lb)) {
            ++lines;
            std::istringstream sa(la), sb(lb);
            std::vector<int> ta, tb;
            for (int x; sa >> x;) ta.push_back(x);
            for (int x; sb >> x;) tb.push_back(x);
            REQUIRE(ta.size() == 8);
            REQUIRE(tb.size() == 8);
            for (std::size_t i = 0; i < 8; ++i) {
                CHECK(ta[i] == tb[i]);
                if (tb[i] == 14) break;  // EOS of V = 16
            }
        }
        CHECK(lines == 4);
        std::istringstream traces(slurp(out_dir("on") + "/traces.jsonl"));
        std::string tl;
        while (std::getline(traces, tl)) CHECK(nlohmann::json::parse(tl).contains("termination"));

        const auto empty = write("empty.txt", "");
        const auto ecfg = write("empty.cfg", "sample.prompts = " + empty + "\nsample.answer_length = 8\nsample.block_size = 2\n");
        REQUIRE(lab({"sample", "--checkpoint", ck, "--config", ecfg, "--out", out_dir("empty")}).code == 0);
        CHECK(slurp(out_dir("empty") + "/generations.txt").empty());
        CHECK(slurp(out_dir("empty") + "/traces.jsonl").empty());

        const auto bad = write("bad.cfg", "sample.prompts = " + prompts + "\nsample.answer_length = 8\nsample.block_size = 3\n");
        const auto r = lab({"sample", "--checkpoint", ck, "--config", bad, "--out", out_dir("bad")});
        CHECK(r.code == 2);
        CHECK(r.err.find("sample.block_size") != std::string::npos);
        const auto badp = write("badp.cfg", "sample.prompts = " + write("p2.txt", "1 15\n") +
                                                "\nsample.answer_length = 8\nsample.block_size = 2\n");
        CHECK(lab({"sample", "--checkpoint", ck, "--config", badp, "--out", out_dir("bad")}).code == 2);
        CHECK(lab({"sample", "--checkpoint", ck, "--out", out_dir("bad")}).code == 2);  // no prompts file
    }

    TEST_CASE("sweep-norm needs an adapter; a checkpoint from a future format is refused") {
        CHECK(lab({"sweep-norm", "--checkpoint", base_checkpoint(), "--out", out_dir("x")}).code == 2);
        auto bytes = slurp(base_checkpoint());
        bytes[8] = 9;
        const auto path = write("future.bin", bytes);
        const auto r = lab({"sweep-noise", "--checkpoint", path, "--out", out_dir("x")});
        CHECK(r.code == 2);
        CHECK(r.err.find("version 9") != std::string::npos);
    }

    TEST_CASE("verify-theorem and grad-check pass") {
        const auto t = lab({"verify-theorem", "--out", out_dir("thm")});
        CHECK(t.code == 0);
        CHECK(t.out.find("100/100") != std::string::npos);
        auto j = nlohmann::json::parse(slurp(out_dir("thm") + "/theorem.json"));
        CHECK(j["passed"] == 100);
        const auto small = lab({"verify-theorem", "--config", write("thm.cfg", "theorem.count = 5\n"), "--seed", "2",
                                "--out", out_dir("thm2")});
        CHECK(small.out.find("5/5") != std::string::npos);

        const auto g = lab({"grad-check", "--out", out_dir("grad")});
        CHECK(g.code == 0);
        auto gj = nlohmann::json::parse(slurp(out_dir("grad") + "/grad_check.json"));
        CHECK(gj["cases"].size() == 6);
        for (const auto& c : gj["cases"]) CHECK(c["max_rel_error"].get<double>() < 1e-4);
        CHECK(gj["lora_equivalence"]["passed"] == true);
        // An impossible tolerance turns the same run into a check failure.
        CHECK(lab({"grad-check", "--config", write("tight.cfg", "grad_check.tolerance = 1e-300\n"), "--out",
                   out_dir("grad2")})
                  .code == 1);
    }
}

TEST_CASE("prompt parsing") {
    const Vocab v{16};
    const auto p = cli::parse_prompts("1 2 3\n\n 14  0 \n", v);
    REQUIRE(p.size() == 3);
    CHECK(p[0] == std::vector<int>{1, 2, 3});
    CHECK(p[1].empty());
    CHECK(p[2] == std::vector<int>{14, 0});
    CHECK(cli::parse_prompts("", v).empty());
    CHECK_THROWS_AS(cli::parse_prompts("1 x", v), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_prompts("15", v), std::invalid_argument);  // MASK
    CHECK_THROWS_AS(cli::parse_prompts("16", v), std::invalid_argument);
    CHECK_THROWS_AS(cli::parse_prompts("-1", v), std::invalid_argument);
}
