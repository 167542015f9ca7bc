#include "flas/errors.hpp"
#include "flas/training/batch.hpp"
#include "flas/training/checkpoint.hpp"
#include "flas/training/corpus.hpp"
#include "flas/training/losses.hpp"
#include "flas/training/schedule.hpp"
#include "flas/training/trainer.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

using namespace flas;
using namespace flas::train;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("flas_training_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::uint64_t fingerprint(const std::vector<Tensor>& params) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& t : params)
        for (double v : t.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = (h ^ bits) * 1099511628211ull;
        }
    return h;
}

// A small slice of the toy corpus on the tiny model.
struct Fixture {
    lm::LanguageModel base = test_support::tiny_model();
    ToyCorpus corpus = generate_toy_corpus({});
    TrainData data;
    TrainConfig config;

    Fixture() {
        std::vector<TrainingExample> tr, va;
        for (std::size_t i = 0; i < corpus.train.size(); i += 9) tr.push_back(corpus.train[i]);
        for (std::size_t i = 0; i < corpus.val.size(); i += 11) va.push_back(corpus.val[i]);
        data = prepare_data(base, tr, va, 48);
        config.batch_size = 4;
        config.lr = 1e-3;
        config.warmup = 2;
        config.max_steps = 8;
        config.val_interval = 2;
        config.max_len = 48;
        config.seed = 5;
    }
};

}  // namespace

TEST(Corpus, AnswersAndMarkers) {
    EXPECT_EQ(plain_answer("letters from u"), "uvwxyzabcdef");
    EXPECT_EQ(plain_answer("digits from 0"), "012345678901");
    EXPECT_EQ(plain_answer("repeat kl"), "klklklklklkl");
    EXPECT_EQ(insert_markers("abcdefghijkl", '#'), "abcd#efgh#ijkl#");
    EXPECT_EQ(all_task_prompts().size(), 49u);
    EXPECT_EQ(marker_from_concept(concept_description('%')), '%');
    EXPECT_THROW(marker_from_concept("something else"), DataError);
}

TEST(Corpus, CheckerThreshold) {
    EXPECT_FALSE(satisfies_concept("abcdefghijkl", '#'));
    EXPECT_FALSE(satisfies_concept("abcd#efghijkl", '#'));
    EXPECT_TRUE(satisfies_concept("abcd#efgh#ijkl", '#'));
    EXPECT_FALSE(satisfies_concept("abcd@efgh@ijkl", '#'));
    EXPECT_FALSE(satisfies_concept("", '#'));
    EXPECT_TRUE(satisfies_concept("ab#", '#'));
    EXPECT_DOUBLE_EQ(checker_rate({"abcd#efgh#ijkl", "abcdefghijkl"}, '#'), 0.5);
}

TEST(Corpus, DeterministicDisjointSplits) {
    auto a = generate_toy_corpus({}), b = generate_toy_corpus({});
    ASSERT_EQ(a.train.size(), b.train.size());
    for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(a.train[i].output, b.train[i].output);
    EXPECT_EQ(a.held_in.size(), 8u);
    EXPECT_EQ(a.held_out.size(), 2u);
    std::set<std::size_t> in(a.held_in.begin(), a.held_in.end());
    for (auto c : a.held_out) EXPECT_FALSE(in.count(c));
    std::set<std::string> tp(a.train_prompts.begin(), a.train_prompts.end());
    for (const auto& p : a.eval_prompts) EXPECT_FALSE(tp.count(p));
    for (const auto* set : {&a.train, &a.val, &a.held_out_examples})
        for (const auto& ex : *set) EXPECT_TRUE(satisfies_concept(ex.output, marker_from_concept(ex.concept_text)));
    CorpusOptions o;
    o.seed = 99;
    EXPECT_NE(generate_toy_corpus(o).held_out, a.held_out);
}

TEST(Corpus, JsonlRoundTripAndDiagnostics) {
    auto dir = temp_dir("jsonl");
    auto c = generate_toy_corpus({});
    write_jsonl(dir / "train.jsonl", c.val);
    auto back = read_jsonl(dir / "train.jsonl");
    ASSERT_EQ(back.size(), c.val.size());
    EXPECT_EQ(back[3].output, c.val[3].output);
    EXPECT_EQ(back[3].concept_text, c.val[3].concept_text);
    std::ofstream(dir / "bad.jsonl") << "{\"prompt\":\"a\",\"output\":\"b\",\"concept\":\"c\"}\n{\"prompt\":1}\n";
    try {
        read_jsonl(dir / "bad.jsonl");
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    }
}

TEST(Batch, LabelsCoverResponseAndEos) {
    auto b = build_batch({{"abcde", "xyz", "c1"}, {"ab", "longer out", "c2"}}, 64);
    ASSERT_EQ(b.rows(), 2u);
    EXPECT_EQ(b.width(), 2u + 2 + 1 + 10 + 1);
    const auto& l0 = b.labels[0];
    EXPECT_EQ(std::count_if(l0.begin(), l0.end(), [](auto v) { return v != -100; }), 4);
    EXPECT_EQ(l0[7], 'x');
    EXPECT_EQ(l0[10], lm::tok::kEos);
    EXPECT_EQ(b.lengths[0], 12u);
    for (std::size_t i = b.lengths[0]; i < b.width(); ++i) {
        EXPECT_EQ(b.tokens[0][i], lm::tok::kPad);
        EXPECT_EQ(l0[i], -100);
    }
    EXPECT_EQ(b.supervised_tokens(), 4u + 11u);
}

TEST(Batch, TruncationAndSkips) {
    auto b = build_batch({{"abcdefgh", "xyz", "c"}, {"ab", "xyzw", "c"}}, 10);
    EXPECT_EQ(b.skipped, 1u);
    ASSERT_EQ(b.rows(), 1u);
    EXPECT_EQ(b.source_index[0], 1u);
    EXPECT_EQ(b.width(), 10u);
}

TEST(Losses, LmLoss) {
    std::vector<std::int64_t> ignore(3, -100);
    EXPECT_EQ(lm_loss({Tensor::zeros({3, 4})}, {ignore}).item(), 0.0);
    EXPECT_NEAR(lm_loss({Tensor::zeros({3, 4})}, {{1, -100, 2}}).item(), std::log(4.0), 1e-12);
    // Token-weighted, not row-weighted.
    Tensor sharp({2, 2}, {10.0, 0.0, 10.0, 0.0});
    const double a = std::log(2.0), b = std::log1p(std::exp(-10.0));
    EXPECT_NEAR(lm_loss({Tensor::zeros({1, 2}), sharp}, {{0}, {0, 0}}).item(), (a + 2 * b) / 3, 1e-12);
}

TEST(Losses, Diversity) {
    Tensor a({3}, {1, 2, 3}), z = Tensor::zeros({3});
    EXPECT_NEAR(diversity_loss({a, a}, {"x", "y"}).item(), 1.0, 1e-12);
    EXPECT_NEAR(diversity_loss({a, neg(a)}, {"x", "y"}).item(), -1.0, 1e-12);
    EXPECT_EQ(diversity_loss({a, a}, {"x", "x"}).item(), 0.0);
    EXPECT_NEAR(diversity_loss({a, a, z}, {"x", "y", "z"}).item(), 2.0 / 6.0, 1e-12);
    EXPECT_NEAR(mean_inter_concept_cosine({a, a, z}, {"x", "y", "z"}), 2.0 / 6.0, 1e-12);
    Tensor v = test_support::random_tensor({5, 3}, 1);
    auto pooled = pool_velocity(v, 2);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(pooled.data()[c], (v.data()[c] + v.data()[3 + c]) / 2, 1e-15);
}

TEST(Schedule, WarmupThenCosine) {
    EXPECT_EQ(lr_schedule(0, 1.0, 10, 110), 0.0);
    EXPECT_DOUBLE_EQ(lr_schedule(5, 1.0, 10, 110), 0.5);
    EXPECT_DOUBLE_EQ(lr_schedule(10, 1.0, 10, 110), 1.0);
    EXPECT_NEAR(lr_schedule(60, 1.0, 10, 110), 0.5, 1e-12);
    EXPECT_EQ(lr_schedule(110, 1.0, 10, 110), 0.0);
    EXPECT_EQ(lr_schedule(500, 1.0, 10, 110), 0.0);
}

TEST(TrainConfigTest, ValidateAndHeader) {
    TrainConfig c;
    c.lambda_div = 0.0;
    c.seed = 123456789012345ull;
    std::map<std::string, std::string> h;
    c.write_header(h);
    EXPECT_EQ(TrainConfig::read_header(h), c);
    c.t_min = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Trainer, FlowLossWithoutDiversityIsLmLoss) {
    Fixture f;
    flow::FlowModel flow(flow::FlowConfig{}, f.base, 1);
    std::vector<const PreparedExample*> rows{&f.data.train[0], &f.data.train[5]};
    auto zero = flow_loss(flow, f.base, rows, f.data.encodings, 1.3, 0.0);
    EXPECT_EQ(zero.total.item(), zero.lm.item());
    auto some = flow_loss(flow, f.base, rows, f.data.encodings, 1.3, 0.25);
    EXPECT_NEAR(some.total.item(), some.lm.item() + 0.25 * some.div.item(), 1e-12);
    EXPECT_EQ(some.lm.item(), zero.lm.item());
}

TEST(Trainer, StepUpdatesOnlyTheFlow) {
    Fixture f;
    TrainState st(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    const auto base_before = fingerprint(f.base.parameters());
    const auto flow_before = fingerprint(st.flow.parameters());
    auto s = train_step(st, f.base, f.data, f.config);
    EXPECT_EQ(s.step, 1u);
    EXPECT_EQ(s.lr, 0.0);
    s = train_step(st, f.base, f.data, f.config);
    EXPECT_GT(s.lr, 0.0);
    EXPECT_TRUE(std::isfinite(s.lm_loss));
    EXPECT_EQ(fingerprint(f.base.parameters()), base_before);
    EXPECT_NE(fingerprint(st.flow.parameters()), flow_before);
    for (const auto& p : f.base.parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(Trainer, StratifiedBatches) {
    Fixture f;
    for (std::size_t s = 0; s < 50; ++s) {
        auto rng = step_rng(3, s);
        auto batch = sample_batch(f.data, 4, rng);
        ASSERT_EQ(batch.size(), 4u);
        std::set<std::size_t> concepts;
        for (auto* r : batch) concepts.insert(r->concept_index);
        EXPECT_GE(concepts.size(), 2u);
    }
}

TEST(Trainer, HorizonsAreUniform) {
    // Same draw order as train_step: the batch first, then T.
    Fixture f;
    std::vector<double> ts;
    for (std::size_t s = 0; s < 400; ++s) {
        auto rng = step_rng(f.config.seed, s);
        sample_batch(f.data, f.config.batch_size, rng);
        ts.push_back(std::uniform_real_distribution<double>(f.config.t_min, f.config.t_max)(rng));
    }
    std::sort(ts.begin(), ts.end());
    double d = 0.0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double cdf = (ts[i] - f.config.t_min) / (f.config.t_max - f.config.t_min);
        d = std::max({d, std::abs(cdf - double(i) / ts.size()), std::abs(cdf - double(i + 1) / ts.size())});
    }
    EXPECT_LT(d, 1.36 / std::sqrt(400.0));

    TrainState st(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    for (std::size_t s = 0; s < 3; ++s) {
        auto rng = step_rng(f.config.seed, s);
        sample_batch(f.data, f.config.batch_size, rng);
        const double expected = std::uniform_real_distribution<double>(f.config.t_min, f.config.t_max)(rng);
        EXPECT_EQ(train_step(st, f.base, f.data, f.config).T, expected);
    }
}

TEST(Trainer, ResumeIsBitIdentical) {
    Fixture f;
    auto dir = temp_dir("resume");
    TrainState straight(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    for (int i = 0; i < 6; ++i) train_step(straight, f.base, f.data, f.config);

    TrainState first(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    for (int i = 0; i < 3; ++i) train_step(first, f.base, f.data, f.config);
    save_checkpoint(first, f.config, dir / "mid.ckpt");
    auto loaded = load_checkpoint(dir / "mid.ckpt", f.base);
    EXPECT_EQ(loaded.config, f.config);
    EXPECT_EQ(loaded.state.step, 3u);
    for (int i = 0; i < 3; ++i) train_step(loaded.state, f.base, f.data, loaded.config);
    EXPECT_EQ(fingerprint(loaded.state.flow.parameters()), fingerprint(straight.flow.parameters()));

    save_checkpoint(loaded.state, loaded.config, dir / "a.ckpt");
    auto again = load_checkpoint(dir / "a.ckpt", f.base);
    save_checkpoint(again.state, again.config, dir / "b.ckpt");
    EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
}

TEST(Trainer, CheckpointRejectsOtherBase) {
    Fixture f;
    auto dir = temp_dir("mismatch");
    TrainState st(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    save_checkpoint(st, f.config, dir / "x.ckpt");
    auto cfg = test_support::tiny_config();
    cfg.d_model = 24;
    cfg.head_dim = 6;
    EXPECT_THROW(load_checkpoint(dir / "x.ckpt", test_support::tiny_model(7, cfg)), ConfigError);
}

TEST(Trainer, LoopKeepsBestAndWritesLog) {
    Fixture f;
    auto dir = temp_dir("loop");
    TrainState st(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    auto res = train_loop(st, f.base, f.data, f.config, dir);
    EXPECT_EQ(res.steps_run, 8u);
    EXPECT_LE(res.best_val, res.final_val);
    EXPECT_NEAR(validation_loss(st.flow, f.base, f.data.val, f.data.encodings, f.config.val_T), res.best_val, 1e-12);
    EXPECT_TRUE(std::filesystem::exists(dir / "flow.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "last.ckpt"));
    std::ifstream log(dir / "train_log.csv");
    std::string line;
    std::getline(log, line);
    EXPECT_EQ(line, "step,lm_loss,div_loss,T,lr");
    std::size_t n = 0;
    while (std::getline(log, line)) ++n;
    EXPECT_EQ(n, 8u);
}

TEST(Trainer, PatienceStopsEarly) {
    Fixture f;
    // Updates far below one ulp leave every parameter unchanged.
    f.config.lr = 1e-300;
    f.config.max_steps = 40;
    f.config.patience = 2;
    TrainState st(flow::FlowModel(flow::FlowConfig{}, f.base, 1), f.config);
    auto res = train_loop(st, f.base, f.data, f.config);
    EXPECT_TRUE(res.early_stopped);
    EXPECT_EQ(res.steps_run, 6u);
}
