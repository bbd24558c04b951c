#include "doctest.h"

#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nara/ops.hpp"
#include "nara/trainer.hpp"
#include "test_util.hpp"

using namespace nara;
using nara::testing::bitwise_equal;

namespace {

ModelConfig micro_model() {
    ModelConfig c;
    c.vocab.size = 12;
    c.d_model = 8;
    c.n_layer = 2;
    c.n_head = 2;
    c.max_len = 8;
    c.d_ff = 16;
    return c;
}

AdapterSpec micro_adapter(AdapterVariant v) {
    AdapterSpec s;
    s.variant = v;
    s.rank = 2;
    s.embed_dim = 4;
    s.hidden = {6, 8};
    s.eta = 0.5;
    s.dropout = 0.0;
    return s;
}

TaskSpec micro_task(TaskKind kind = TaskKind::Copy) {
    TaskSpec t;
    t.kind = kind;
    t.min_len = 2;
    t.max_len = 4;
    t.answer_length = 6;
    t.n_train = 24;
    t.n_val = 8;
    t.n_test = 8;
    return t;
}

void perturb(const std::vector<NamedParam>& params, std::uint64_t seed, double scale) {
    RngStream rng(seed, "perturb");
    for (const auto& p : params) {
        auto t = p.tensor;
        for (auto& v : t.data_mut()) v += scale * rng.uniform(-1.0, 1.0);
    }
}

std::vector<Tensor> snapshot(const std::vector<NamedParam>& params) {
    std::vector<Tensor> out;
    for (const auto& p : params) out.push_back(p.tensor.detach());
    return out;
}

}  // namespace

TEST_SUITE("tasks") {
    TEST_CASE("task definitions") {
        auto tasks = make_synthetic_tasks(3);
        const int EOS = tasks.vocab().eos_id();
        std::vector<int> p{5, 9, 2};
        CHECK(tasks.make(TaskKind::Copy, p).response == std::vector<int>{5, 9, 2, EOS});
        CHECK(tasks.make(TaskKind::Sort, p).response == std::vector<int>{2, 5, 9, EOS});
        const auto& c = tasks.cipher();
        std::vector<int> ab{7, 1};
        CHECK(tasks.make(TaskKind::Map, ab).response == std::vector<int>{c[7], c[1], EOS});
        CHECK(tasks.make(TaskKind::Copy, p).prompt == p);
        CHECK(tasks.make(TaskKind::Copy, p, 6).response == std::vector<int>{5, 9, 2, EOS, EOS, EOS});
        CHECK_THROWS_AS(tasks.make(TaskKind::Copy, p, 3), std::invalid_argument);
        std::vector<int> bad{62};
        CHECK_THROWS_AS(tasks.make(TaskKind::Copy, bad), std::invalid_argument);
    }

    TEST_CASE("cipher is a permutation of the content ids fixed by the seed") {
        auto a = make_synthetic_tasks(5), b = make_synthetic_tasks(5), c = make_synthetic_tasks(6);
        std::set<int> ids(a.cipher().begin(), a.cipher().end());
        CHECK(ids.size() == 62);
        CHECK(*ids.begin() == 0);
        CHECK(*ids.rbegin() == 61);
        CHECK(a.cipher() == b.cipher());
        CHECK(a.cipher() != c.cipher());
    }

    TEST_CASE("splits are deterministic, disjoint and well formed") {
        TaskSpec spec;
        spec.kind = TaskKind::Sort;
        auto tasks = make_synthetic_tasks(9);
        auto d1 = tasks.dataset(spec), d2 = make_synthetic_tasks(9).dataset(spec);
        CHECK(d1.train.size() == 512);
        CHECK(d1.val.size() == 128);
        CHECK(d1.test.size() == 128);
        std::set<std::vector<int>> prompts;
        for (const auto* split : {&d1.train, &d1.val, &d1.test}) {
            for (const auto& s : *split) {
                CHECK(prompts.insert(s.prompt).second);
                CHECK(s.prompt.size() >= 3);
                CHECK(s.prompt.size() <= 8);
                CHECK(s.response.size() == 9);
                CHECK(s.response.back() == tasks.vocab().eos_id());
                CHECK_NOTHROW(validate_sequence(s, tasks.vocab()));
            }
        }
        for (std::size_t i = 0; i < d1.train.size(); ++i) CHECK(d1.train[i].response == d2.train[i].response);
    }

    TEST_CASE("task spec validation") {
        Vocab v;
        TaskSpec s;
        s.max_len = 9;
        CHECK_THROWS_WITH_AS(s.validate(v), doctest::Contains("answer_length"), std::invalid_argument);
        s = {};
        s.alphabet = 63;
        CHECK_THROWS_AS(s.validate(v), std::invalid_argument);
        s = {};
        s.alphabet = 2;
        s.min_len = s.max_len = 3;
        s.answer_length = 4;
        s.n_train = 100;
        CHECK_THROWS_AS(make_synthetic_tasks(1).dataset(s), std::invalid_argument);
        CHECK(parse_task("map") == TaskKind::Map);
        CHECK_THROWS_AS(parse_task("reverse"), std::invalid_argument);
    }
}

TEST_SUITE("optimizer") {
    TEST_CASE("AdamW matches a scalar reference over several steps") {
        for (double wd : {0.0, 0.1}) {
            Tensor p({3}, {0.5, -1.0, 2.0}, true);
            AdamWConfig cfg;
            cfg.weight_decay = wd;
            AdamW opt({{"p", p}}, cfg);
            std::vector<double> ref{0.5, -1.0, 2.0}, m(3, 0.0), v(3, 0.0);
            const std::vector<std::vector<double>> grads{{0.1, -0.2, 0.3}, {0.0, 0.5, -0.1}, {1.0, 1.0, 1.0}};
            const double lr = 0.01;
            for (std::size_t t = 1; t <= grads.size(); ++t) {
                p.node()->grad = grads[t - 1];
                opt.step(lr);
                opt.zero_grad();
                for (std::size_t j = 0; j < 3; ++j) {
                    const double g = grads[t - 1][j];
                    ref[j] -= lr * wd * ref[j];
                    m[j] = 0.9 * m[j] + 0.1 * g;
                    v[j] = 0.999 * v[j] + 0.001 * g * g;
                    const double mh = m[j] / (1 - std::pow(0.9, t)), vh = v[j] / (1 - std::pow(0.999, t));
                    ref[j] -= lr * mh / (std::sqrt(vh) + 1e-8);
                }
            }
            for (std::size_t j = 0; j < 3; ++j) CHECK(p.at(j) == doctest::Approx(ref[j]).epsilon(1e-14));
            CHECK(opt.steps() == 3);
        }
    }

    TEST_CASE("first Adam step moves every coordinate by about lr") {
        Tensor p({2}, {1.0, 1.0}, true);
        AdamW opt({{"p", p}});
        p.node()->grad = {3.0, -1e-3};
        opt.step(0.1);
        CHECK(p.at(0) == doctest::Approx(0.9).epsilon(1e-6));
        CHECK(p.at(1) == doctest::Approx(1.1).epsilon(1e-4));
    }

    TEST_CASE("learning-rate schedule") {
        CHECK(scheduled_lr(0, 100, 0.05, 1.0) == doctest::Approx(0.2));
        CHECK(scheduled_lr(4, 100, 0.05, 1.0) == doctest::Approx(1.0));
        CHECK(scheduled_lr(5, 100, 0.05, 1.0) == doctest::Approx(1.0));
        CHECK(scheduled_lr(99, 100, 0.05, 1.0) == doctest::Approx(1.0 / 95));
        CHECK(scheduled_lr(0, 10, 0.0, 2.0) == doctest::Approx(2.0));
        double prev = 1e9;
        for (std::size_t s = 5; s < 100; ++s) {
            const double lr = scheduled_lr(s, 100, 0.05, 1.0);
            CHECK(lr <= prev);
            CHECK(lr > 0.0);
            prev = lr;
        }
    }

    TEST_CASE("reference training defaults") {
        TrainConfig c;
        CHECK(c.lr == 1e-4);
        CHECK(c.warmup_ratio == 0.05);
        CHECK(c.accumulation == 32);
        CHECK(c.batch_size == 1);
        CHECK(c.adam.beta1 == 0.9);
        CHECK(c.adam.beta2 == 0.999);
        CHECK(c.adam.eps == 1e-8);
        CHECK(c.adam.weight_decay == 0.0);
        CHECK_NOTHROW(c.validate());
        c.accumulation = 0;
        CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("accumulation"), std::invalid_argument);
        TrainConfig d;
        d.epochs = 2;
        d.batch_size = 3;
        d.accumulation = 2;
        CHECK(d.total_steps(10) == 4);  // 4 micro-batches per epoch → 2 steps per epoch
        d.max_steps = 7;
        CHECK(d.total_steps(10) == 7);
    }
}

TEST_SUITE("train_step") {
    TEST_CASE("empty masks change nothing") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 1);
        model.set_trainable(false);
        auto adapter = init_adapter(micro_adapter(AdapterVariant::NaRA), cfg.n_layer, cfg.d_model, 2);
        perturb(adapter.parameters(), 3, 0.3);
        const auto before = snapshot(adapter.parameters());
        AdamW opt(adapter.parameters());
        Sequence s{{1, 2}, {3, 4, cfg.vocab.eos_id()}};
        RngStream rng(4, "m");
        MaskedBatch b;
        b.t = 0.3;
        b.items.push_back({s, mask_exact(s, 0, rng, cfg.vocab), 0.3});
        b.items.push_back({s, mask_exact(s, 0, rng, cfg.vocab), 0.3});
        auto res = train_step(model, &adapter, std::span(&b, 1), opt, 0.1);
        CHECK_FALSE(res.updated);
        CHECK(res.contributing == 0);
        CHECK(opt.steps() == 0);
        auto after = adapter.parameters();
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(bitwise_equal(before[i], after[i].tensor));
    }

    TEST_CASE("single step matches an independent gradient and optimizer computation") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 5);
        model.set_trainable(false);
        auto adapter = init_adapter(micro_adapter(AdapterVariant::NaRA), cfg.n_layer, cfg.d_model, 6);
        perturb(adapter.parameters(), 7, 0.3);
        auto reference = adapter.clone();

        auto tasks = make_synthetic_tasks(8, cfg.vocab);
        auto data = tasks.dataset(micro_task());
        RngStream rng(9, "noise");
        std::vector<MaskedBatch> window{corrupt_batch(std::span(data.train.data(), 3), rng, cfg.vocab),
                                        corrupt_batch(std::span(data.train.data() + 3, 2), rng, cfg.vocab)};

        // Reference: per-sequence loss gradients averaged by hand, then one scalar Adam step.
        std::vector<std::vector<double>> gsum;
        for (const auto& p : reference.parameters()) gsum.emplace_back(p.tensor.numel(), 0.0);
        std::size_t n = 0;
        for (const auto& b : window) {
            for (const auto& item : b.items) {
                if (!item.contributes()) continue;
                ++n;
                auto cores = reference.compute_cores(item.lambda());
                AdapterBinding bind{&reference, &cores, item.lambda(), nullptr};
                backward(masked_loss(response_logits(model, item, &bind), item).loss);
                auto params = reference.parameters();
                for (std::size_t i = 0; i < params.size(); ++i) {
                    auto g = params[i].tensor.grad();
                    for (std::size_t j = 0; j < g.size(); ++j) gsum[i][j] += g[j];
                    params[i].tensor.zero_grad();
                }
            }
        }
        REQUIRE(n > 0);
        const double lr = 0.01;
        auto rparams = reference.parameters();
        for (std::size_t i = 0; i < rparams.size(); ++i) {
            auto d = rparams[i].tensor.data_mut();
            for (std::size_t j = 0; j < d.size(); ++j) {
                const double g = gsum[i][j] / double(n);
                const double mh = 0.1 * g / 0.1, vh = 0.001 * g * g / (1 - 0.999);
                d[j] -= lr * mh / (std::sqrt(vh) + 1e-8);
            }
        }

        AdamW opt(adapter.parameters());
        auto res = train_step(model, &adapter, window, opt, lr);
        CHECK(res.updated);
        CHECK(res.contributing == n);
        auto got = adapter.parameters();
        double worst = 0.0;
        for (std::size_t i = 0; i < got.size(); ++i)
            worst = std::max(worst, nara::testing::max_abs_diff(got[i].tensor, rparams[i].tensor));
        CHECK(worst < 1e-12);
    }

    TEST_CASE("k micro-batches of one equal one batch of k") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 10);
        model.set_trainable(false);
        auto a1 = init_adapter(micro_adapter(AdapterVariant::NaRA), cfg.n_layer, cfg.d_model, 11);
        perturb(a1.parameters(), 12, 0.3);
        auto a2 = a1.clone();
        auto data = make_synthetic_tasks(13, cfg.vocab).dataset(micro_task(TaskKind::Sort));
        RngStream rng(14, "noise");
        auto big = corrupt_batch(std::span(data.train.data(), 4), rng, cfg.vocab);
        std::vector<MaskedBatch> split;
        for (const auto& item : big.items) split.push_back({big.t, {item}});
        AdamW o1(a1.parameters()), o2(a2.parameters());
        for (int step = 0; step < 3; ++step) {
            train_step(model, &a1, std::span(&big, 1), o1, 0.01);
            train_step(model, &a2, split, o2, 0.01);
        }
        auto p1 = a1.parameters(), p2 = a2.parameters();
        double worst = 0.0;
        for (std::size_t i = 0; i < p1.size(); ++i)
            worst = std::max(worst, nara::testing::max_abs_diff(p1[i].tensor, p2[i].tensor));
        CHECK(worst < 1e-10);
    }

    TEST_CASE("base parameters never move during fine-tuning") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 15);  // base still marked trainable
        const auto before = snapshot(model.parameters());
        auto adapter = init_adapter(micro_adapter(AdapterVariant::LoRA), cfg.n_layer, cfg.d_model, 16);
        AdamW opt(adapter.parameters());
        auto data = make_synthetic_tasks(17, cfg.vocab).dataset(micro_task());
        RngStream rng(18, "noise");
        for (int s = 0; s < 5; ++s) {
            auto b = corrupt_batch(std::span(data.train.data() + s, 2), rng, cfg.vocab);
            train_step(model, &adapter, std::span(&b, 1), opt, 0.05);
        }
        auto after = model.parameters();
        for (std::size_t i = 0; i < before.size(); ++i) CHECK(bitwise_equal(before[i], after[i].tensor));
    }

    TEST_CASE("non-finite loss aborts with the batch serialized") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 19);
        auto adapter = init_adapter(micro_adapter(AdapterVariant::LoRA), cfg.n_layer, cfg.d_model, 20);
        adapter.pair({0, Projection::V}).B.data_mut()[0] = std::nan("");
        AdamW opt(adapter.parameters());
        Sequence s{{1, 2}, {3, 4, cfg.vocab.eos_id()}};
        RngStream rng(21, "m");
        MaskedBatch b{0.5, {{s, mask_exact(s, 2, rng, cfg.vocab), 0.5}}};
        try {
            train_step(model, &adapter, std::span(&b, 1), opt, 0.1);
            FAIL("expected DivergenceError");
        } catch (const DivergenceError& e) {
            auto j = nlohmann::json::parse(e.batch_json);
            REQUIRE(j.size() == 1);
            CHECK(j[0]["t"] == 0.5);
            CHECK(j[0]["items"][0]["prompt"] == std::vector<int>{1, 2});
            CHECK(j[0]["items"][0]["mask"].size() == 3);
        }
    }
}

TEST_SUITE("gradients") {
    TEST_CASE("every adapter parameter passes finite differences on the micro config") {
        ModelConfig cfg = micro_model();
        cfg.max_len = 6;
        auto model = init_model(cfg, 30);
        perturb(model.parameters(), 31, 0.3);
        model.set_trainable(false);
        Sequence seq{{1, 2, 3}, {4, 5, cfg.vocab.eos_id()}};  // L = 6
        RngStream rng(32, "m");
        const MaskedItem item{seq, mask_exact(seq, 2, rng, cfg.vocab), 0.6};
        for (auto v : {AdapterVariant::LoRA, AdapterVariant::NaRA, AdapterVariant::NaRAC, AdapterVariant::MultiLoRA}) {
            for (auto mode : {EmbeddingMode::Fourier, EmbeddingMode::MLP, EmbeddingMode::Scalar}) {
                if (v != AdapterVariant::NaRA && mode != EmbeddingMode::Fourier) continue;
                auto spec = micro_adapter(v);
                spec.embedding = mode;
                auto adapter = init_adapter(spec, cfg.n_layer, cfg.d_model, 33);
                perturb(adapter.parameters(), 34, 0.4);
                auto loss = [&] {
                    auto cores = adapter.spec().uses_core() ? adapter.compute_cores(item.lambda()) : CoreSet{};
                    AdapterBinding bind{&adapter, &cores, item.lambda(), nullptr};
                    return masked_loss(response_logits(model, item, &bind), item).loss;
                };
                auto report = finite_diff_check(loss, adapter.parameters());
                INFO(to_string(v), " ", to_string(mode));
                CHECK(report.max_rel_error < 1e-4);
                CHECK(report.elements > 0);
            }
        }
    }
}

TEST_SUITE("fit") {
    TEST_CASE("best checkpoint is the first minimum") {
        std::vector<double> v{3, 1, 2};
        CHECK(select_best(v) == 1);
        std::vector<double> tie{2, 1, 1};
        CHECK(select_best(tie) == 1);
        CHECK_THROWS_AS(select_best(std::vector<double>{}), std::invalid_argument);
    }

    TEST_CASE("learning rate zero leaves the adapter at its initialization") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 40);
        auto init = init_adapter(micro_adapter(AdapterVariant::NaRA), cfg.n_layer, cfg.d_model, 41);
        auto data = make_synthetic_tasks(42, cfg.vocab).dataset(micro_task());
        TrainConfig tc;
        tc.lr = 0.0;
        tc.accumulation = 2;
        tc.epochs = 1;
        tc.val_interval = 4;
        auto res = fit(model, init, data, tc);
        auto a = init.parameters(), b = res.last.parameters();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(bitwise_equal(a[i].tensor, b[i].tensor));
        CHECK(res.log.records.size() == 12);
    }

    TEST_CASE("fit logs, selects the best validation checkpoint and is deterministic") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 43);
        perturb(model.parameters(), 44, 0.2);
        auto spec = micro_adapter(AdapterVariant::NaRA);
        spec.dropout = 0.05;
        auto init = init_adapter(spec, cfg.n_layer, cfg.d_model, 45);
        auto data = make_synthetic_tasks(46, cfg.vocab).dataset(micro_task());
        TrainConfig tc;
        tc.lr = 0.02;
        tc.accumulation = 2;
        tc.batch_size = 2;
        tc.epochs = 3;
        tc.val_interval = 3;
        tc.seed = 47;
        tc.config_hash = "abc123";
        auto r1 = fit(model, init, data, tc);
        auto r2 = fit(model, init, data, tc);
        CHECK(r1.log.to_jsonl() == r2.log.to_jsonl());
        auto p1 = r1.best.parameters(), p2 = r2.best.parameters();
        for (std::size_t i = 0; i < p1.size(); ++i) CHECK(bitwise_equal(p1[i].tensor, p2[i].tensor));

        std::vector<double> vals;
        std::vector<std::size_t> val_steps;
        std::istringstream lines(r1.log.to_jsonl());
        std::string line;
        std::size_t expect = 1;
        while (std::getline(lines, line)) {
            auto j = nlohmann::json::parse(line);
            CHECK(j["step"] == expect++);
            CHECK(j["seed"] == 47);
            CHECK(j["config_hash"] == "abc123");
            CHECK(j.contains("loss"));
            CHECK(j.contains("lambda"));
            CHECK(j.contains("t"));
            CHECK(j.contains("grad_norm"));
            if (!j["val_loss"].is_null()) {
                vals.push_back(j["val_loss"]);
                val_steps.push_back(j["step"]);
            }
        }
        REQUIRE(!vals.empty());
        CHECK(r1.best_step == val_steps[select_best(vals)]);
        CHECK(r1.best_val == vals[select_best(vals)]);
        CHECK(evaluate_loss(model, &r1.best, data.val, tc.seed) == r1.best_val);
    }

    TEST_CASE("eta = 0 NaRA and LoRA train identically") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 50);
        perturb(model.parameters(), 51, 0.2);
        auto lspec = micro_adapter(AdapterVariant::LoRA), nspec = micro_adapter(AdapterVariant::NaRA);
        lspec.dropout = nspec.dropout = 0.05;
        nspec.eta = 0.0;
        auto data = make_synthetic_tasks(52, cfg.vocab).dataset(micro_task(TaskKind::Sort));
        TrainConfig tc;
        tc.lr = 0.02;
        tc.accumulation = 2;
        tc.max_steps = 10;
        tc.val_interval = 5;
        auto lr = fit(model, init_adapter(lspec, cfg.n_layer, cfg.d_model, 53), data, tc);
        auto nr = fit(model, init_adapter(nspec, cfg.n_layer, cfg.d_model, 53), data, tc);
        REQUIRE(lr.log.records.size() == 10);
        for (std::size_t i = 0; i < 10; ++i) {
            CHECK(std::abs(lr.log.records[i].loss - nr.log.records[i].loss) <= 1e-10);
        }
        for (int l = 0; l < cfg.n_layer; ++l)
            for (auto p : kProjections) {
                CHECK(bitwise_equal(lr.last.pair({l, p}).A, nr.last.pair({l, p}).A));
                CHECK(bitwise_equal(lr.last.pair({l, p}).B, nr.last.pair({l, p}).B));
            }
    }

    TEST_CASE("empty training set is an error") {
        auto cfg = micro_model();
        auto model = init_model(cfg, 1);
        auto init = init_adapter(micro_adapter(AdapterVariant::LoRA), cfg.n_layer, cfg.d_model, 1);
        CHECK_THROWS_AS(fit(model, init, Dataset{}, TrainConfig{}), std::invalid_argument);
    }

    TEST_CASE("training loss halves on a small denoising task") {
        auto cfg = micro_model();
        cfg.d_model = 16;
        cfg.max_len = 10;
        auto task = micro_task();
        task.min_len = task.max_len = 8;
        task.answer_length = 9;
        task.alphabet = 2;
        task.n_train = 200;
        auto data = make_synthetic_tasks(60, cfg.vocab).dataset(task);
        TrainConfig tc;
        tc.max_steps = 500;
        tc.batch_size = 8;
        tc.accumulation = 1;
        tc.lr = 3e-3;
        tc.val_interval = 500;
        auto res = pretrain(init_model(cfg, 61), data, tc);
        // Single-step losses are noisy (1/t weighting); compare 20-step means.
        auto mean = [&](std::size_t from) {
            double s = 0.0;
            for (std::size_t i = from; i < from + 20; ++i) s += res.log.records[i].loss;
            return s / 20.0;
        };
        const double early = mean(9), late = mean(480);
        MESSAGE("early " << early << " late " << late);
        CHECK(late <= 0.5 * early);
    }
}

TEST_CASE("pretraining: 0 steps is near uniform, 2000 copy steps beat chance fivefold") {
    ModelConfig cfg;
    TaskSpec task;
    auto data = make_synthetic_tasks(70, cfg.vocab).dataset(task);
    auto untrained = pretrain_toy(cfg, task, 0, 70);
    // Per-token cross-entropy with every response token masked.
    double nll = 0.0;
    std::size_t count = 0;
    for (const auto& s : data.test) {
        RngStream rng(71, "full");
        MaskedItem item{s, forward_mask(s, 1.0, rng, cfg.vocab), 1.0};
        auto lp = log_softmax_rows(response_logits(untrained.model, item, nullptr));
        for (std::size_t i = 0; i < s.response.size(); ++i, ++count) nll -= lp.at(i, s.response[i]);
    }
    CHECK(std::abs(nll / count - std::log(64.0)) < 0.1);
    for (const auto& p : untrained.model.parameters()) CHECK_FALSE(p.tensor.requires_grad());

    auto trained = pretrain_toy(cfg, task, 2000, 70);
    const double acc = masked_accuracy(trained.model, nullptr, data.test, 72);
    MESSAGE("masked accuracy after 2000 steps: " << acc);
    CHECK(acc > 5.0 / 64.0);
}
