#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "targetamp/data.hpp"
#include "targetamp/errors.hpp"
#include "targetamp/numerics.hpp"
#include "targetamp/training.hpp"

using namespace targetamp;

namespace {

NodePtr scalar_param(double v) {
    Tensor t(1, 1, v);
    return make_param(t);
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.epochs = 1;
    cfg.eval_every = 3;
    cfg.encoder.d_model = 8;
    cfg.encoder.n_heads = 2;
    cfg.encoder.n_layers = 1;
    cfg.encoder.d_ff = 16;
    cfg.encoder.max_len = 32;
    return cfg;
}

DatasetSplit tiny_split(std::size_t size, std::uint64_t seed) {
    auto recs = gen_synthetic(size, seed, default_synthetic_lexicon());
    return make_splits(recs, {0.6, 0.2, 0.2}, 13);
}

}  // namespace

TEST_CASE("target mode names round-trip and cover the grid") {
    auto modes = all_target_modes();
    REQUIRE(modes.size() == 5);
    for (auto m : modes) {
        auto back = target_mode_from_string(to_string(m));
        REQUIRE(back.has_value());
        CHECK(*back == m);
    }
    CHECK_FALSE(target_mode_from_string("novel").has_value());
}

TEST_CASE("each target mode implies the right relation head switches") {
    TrainConfig cfg;
    cfg.lambda = 1.5;
    cfg.value_source = ValueSource::Cls;

    cfg.target_mode = TargetMode::None;
    auto rc = relation_config_for(cfg);
    CHECK(rc.bypass);

    cfg.target_mode = TargetMode::Random20;
    rc = relation_config_for(cfg);
    CHECK_FALSE(rc.bypass);
    CHECK(rc.use_explicit);
    CHECK_FALSE(rc.use_implicit);

    cfg.target_mode = TargetMode::Implicit;
    rc = relation_config_for(cfg);
    CHECK_FALSE(rc.use_explicit);
    CHECK(rc.use_implicit);

    cfg.target_mode = TargetMode::Explicit;
    rc = relation_config_for(cfg);
    CHECK(rc.use_explicit);
    CHECK_FALSE(rc.use_implicit);

    cfg.target_mode = TargetMode::Both;
    rc = relation_config_for(cfg);
    CHECK(rc.use_explicit);
    CHECK(rc.use_implicit);
    CHECK(rc.lambda == 1.5);
    CHECK(rc.value_source == ValueSource::Cls);
}

TEST_CASE("train config validation rejects out-of-range settings") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = TrainConfig{};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = TrainConfig{};
    cfg.eval_every = 0;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = TrainConfig{};
    cfg.random_rate = 1.2;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = TrainConfig{};
    cfg.lambda = 3.0;  // forwarded to the relation head check
    CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("the first optimizer step moves a unit-gradient weight by the learning rate") {
    auto p = scalar_param(1.0);
    auto state = init_adamw({p});
    backward(sum_all(p));  // gradient exactly 1
    adamw_step({p}, state, 0.1, 0.9, 0.999, 1e-8, 0.0);
    // Bias-corrected m_hat = v_hat = 1, so the step is lr / (1 + eps).
    CHECK(p->value.at(0, 0) == doctest::Approx(0.9).epsilon(1e-8));
    CHECK(state.t == 1);
}

TEST_CASE("constant gradients keep moving the weight by the learning rate") {
    auto p = scalar_param(1.0);
    auto state = init_adamw({p});
    for (int i = 0; i < 5; ++i) {
        auto loss = sum_all(p);
        backward(loss);
        adamw_step({p}, state, 0.1, 0.9, 0.999, 1e-8, 0.0);
        zero_grad(loss);
    }
    CHECK(p->value.at(0, 0) == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(state.t == 5);
}

TEST_CASE("weight decay is decoupled from the gradient path") {
    auto p = scalar_param(1.0);
    auto state = init_adamw({p});
    // No backward pass: gradient stays zero, only decay acts.
    adamw_step({p}, state, 0.1, 0.9, 0.999, 1e-8, 0.01);
    CHECK(p->value.at(0, 0) == doctest::Approx(0.999).epsilon(1e-12));
    // Moments remain untouched by the decay term.
    CHECK(state.m[0].at(0, 0) == 0.0);
    CHECK(state.v[0].at(0, 0) == 0.0);
}

TEST_CASE("optimizer state must align with the parameter list") {
    auto p = scalar_param(1.0);
    auto q = scalar_param(2.0);
    auto state = init_adamw({p});
    CHECK_THROWS_AS(adamw_step({p, q}, state, 0.1, 0.9, 0.999, 1e-8, 0.0),
                    std::invalid_argument);
}

TEST_CASE("prepare_example aligns tokens, mask and label per target mode") {
    auto lex = default_synthetic_lexicon();
    auto recs = gen_synthetic(4, 1, lex);
    auto cfg = tiny_train_config();

    std::vector<std::string> sentences;
    for (const auto& r : recs) sentences.push_back(r.text);
    Vocab vocab = build_vocab(sentences, 1);

    cfg.target_mode = TargetMode::Explicit;
    auto prep = prepare_example(recs[0], vocab, cfg, lex, 5, 0);
    CHECK(prep.tok.label == recs[0].label);
    CHECK(prep.tokens.size() == prep.tok.token_count());
    CHECK(prep.mask.token_count() == prep.tok.token_count());
    CHECK(prep.mask == lex.tag(prep.tokens));
    CHECK(prep.mask.any());  // every synthetic sentence names an entity

    cfg.target_mode = TargetMode::None;
    CHECK_FALSE(prepare_example(recs[0], vocab, cfg, lex, 5, 0).mask.any());
    cfg.target_mode = TargetMode::Implicit;
    CHECK_FALSE(prepare_example(recs[0], vocab, cfg, lex, 5, 0).mask.any());
}

TEST_CASE("random target flags are fixed per run seed and example ordinal") {
    auto lex = default_synthetic_lexicon();
    auto recs = gen_synthetic(8, 2, lex);
    auto cfg = tiny_train_config();
    cfg.target_mode = TargetMode::Random20;

    std::vector<std::string> sentences;
    for (const auto& r : recs) sentences.push_back(r.text);
    Vocab vocab = build_vocab(sentences, 1);

    auto a = prepare_example(recs[0], vocab, cfg, lex, 5, 0);
    auto b = prepare_example(recs[0], vocab, cfg, lex, 5, 0);
    CHECK(a.mask == b.mask);

    // Across ordinals and seeds the draws differ somewhere.
    bool any_difference = false;
    for (std::size_t ord = 0; ord < recs.size(); ++ord) {
        auto x = prepare_example(recs[0], vocab, cfg, lex, 5, ord);
        auto y = prepare_example(recs[0], vocab, cfg, lex, 6, ord);
        if (!(x.mask == y.mask)) any_difference = true;
    }
    CHECK(any_difference);

    cfg.random_rate = 1.0;
    auto full = prepare_example(recs[0], vocab, cfg, lex, 5, 0);
    CHECK(full.mask.explicit_indices().size() == full.mask.token_count());
}

TEST_CASE("truncated inputs keep tokens and mask aligned") {
    auto lex = default_synthetic_lexicon();
    auto cfg = tiny_train_config();
    cfg.encoder.max_len = 6;
    cfg.target_mode = TargetMode::Explicit;
    CorpusRecord rec{"long", "one two three four five six seven eight nine", 0, "demo", {}};
    Vocab vocab = build_vocab({rec.text}, 1);
    auto prep = prepare_example(rec, vocab, cfg, lex, 1, 0);
    CHECK(prep.tok.token_count() == 5);  // CLS plus five kept tokens
    CHECK(prep.tokens.size() == 5);
    CHECK(prep.mask.token_count() == 5);
}

TEST_CASE("a full training run produces a consistent record") {
    auto split = tiny_split(80, 3);
    auto cfg = tiny_train_config();
    auto result = train(split, default_synthetic_lexicon(), cfg, 1);
    const auto& rec = result.record;

    CHECK(rec.seed == 1);
    // 48 train examples, batch 8 -> 6 steps per epoch, eval every 3 -> 2 evals.
    CHECK(rec.loss_trace.size() == 6);
    REQUIRE(rec.trace.size() == 2);
    CHECK(rec.trace[0].step == 3);
    CHECK(rec.trace[1].step == 6);

    double best = 0.0;
    for (const auto& pt : rec.trace) best = std::max(best, pt.macro_f1);
    CHECK(rec.valid_macro_f1 == best);
    bool convergence_in_trace = false;
    for (const auto& pt : rec.trace)
        if (pt.step == rec.convergence_step && pt.macro_f1 == rec.valid_macro_f1)
            convergence_in_trace = true;
    CHECK(convergence_in_trace);
    CHECK(rec.test_macro_f1 >= 0.0);
    CHECK(rec.test_macro_f1 <= 1.0);
    CHECK(rec.best_threshold > 0.0);
    CHECK(rec.best_threshold < 1.0);
    for (double l : rec.loss_trace) CHECK(std::isfinite(l));
    CHECK(result.vocab.size() > 3);
    CHECK(result.model.encoder.config.vocab_size == result.vocab.size());
}

TEST_CASE("the convergence step is the earliest one attaining the best score") {
    auto split = tiny_split(80, 4);
    auto cfg = tiny_train_config();
    cfg.eval_every = 2;  // 3 evals over 6 steps
    auto rec = train(split, default_synthetic_lexicon(), cfg, 2).record;
    for (const auto& pt : rec.trace) {
        if (pt.step < rec.convergence_step) CHECK(pt.macro_f1 < rec.valid_macro_f1);
        if (pt.step == rec.convergence_step) CHECK(pt.macro_f1 == rec.valid_macro_f1);
    }
}

TEST_CASE("training is bit-reproducible per seed and diverges across seeds") {
    auto split = tiny_split(80, 5);
    auto cfg = tiny_train_config();
    auto a = train(split, default_synthetic_lexicon(), cfg, 7);
    auto b = train(split, default_synthetic_lexicon(), cfg, 7);
    auto c = train(split, default_synthetic_lexicon(), cfg, 8);

    CHECK(a.record.loss_trace == b.record.loss_trace);
    CHECK(a.record.test_macro_f1 == b.record.test_macro_f1);
    CHECK(a.record.convergence_step == b.record.convergence_step);
    REQUIRE(a.record.trace.size() == b.record.trace.size());
    for (std::size_t i = 0; i < a.record.trace.size(); ++i) {
        CHECK(a.record.trace[i].macro_f1 == b.record.trace[i].macro_f1);
        CHECK(a.record.trace[i].threshold == b.record.trace[i].threshold);
    }
    // The final weights agree coordinate for coordinate.
    auto pa = a.model.encoder.all(), pb = b.model.encoder.all();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->value.data == pb[i]->value.data);

    CHECK(a.record.loss_trace != c.record.loss_trace);
}

TEST_CASE("degenerate split configurations are rejected") {
    auto split = tiny_split(80, 6);
    auto cfg = tiny_train_config();
    auto lex = default_synthetic_lexicon();

    DatasetSplit empty_test = split;
    empty_test.test.clear();
    CHECK_THROWS_AS((void)train(empty_test, lex, cfg, 1), config_error);

    DatasetSplit one_class = split;
    one_class.valid.erase(
        std::remove_if(one_class.valid.begin(), one_class.valid.end(),
                       [](const CorpusRecord& r) { return r.label == 1; }),
        one_class.valid.end());
    CHECK_THROWS_AS((void)train(one_class, lex, cfg, 1), config_error);
}

TEST_CASE("mean and sample standard deviation match hand-computed values") {
    std::vector<double> scores = {82.31, 81.63, 81.87};
    CHECK(mean(scores) == doctest::Approx(81.936666).epsilon(1e-8));
    CHECK(sample_std(scores) == doctest::Approx(0.344867).epsilon(1e-5));
    CHECK_THROWS_AS((void)mean({}), std::invalid_argument);
    CHECK_THROWS_AS((void)sample_std({1.0}), std::invalid_argument);
}

TEST_CASE("multi-seed aggregation averages the per-seed outcomes") {
    auto split = tiny_split(80, 9);
    auto cfg = tiny_train_config();
    cfg.seeds = {1, 2};
    std::vector<Model> models;
    std::vector<Vocab> vocabs;
    auto agg = multi_seed_run(split, default_synthetic_lexicon(), cfg, &models, &vocabs);

    REQUIRE(agg.records.size() == 2);
    CHECK(models.size() == 2);
    CHECK(vocabs.size() == 2);
    std::vector<double> f1s = {agg.records[0].test_macro_f1, agg.records[1].test_macro_f1};
    CHECK(agg.mean_test_f1 == doctest::Approx(mean(f1s)).epsilon(1e-12));
    CHECK(agg.std_test_f1 == doctest::Approx(sample_std(f1s)).epsilon(1e-12));

    cfg.seeds = {1};
    CHECK_THROWS_AS((void)multi_seed_run(split, default_synthetic_lexicon(), cfg), config_error);
}
