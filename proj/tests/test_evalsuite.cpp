#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "targetamp/errors.hpp"
#include "targetamp/evalsuite.hpp"
#include "targetamp/text.hpp"

using namespace targetamp;

namespace {

Model small_model(std::uint64_t seed, std::size_t d_model = 8) {
    EncoderConfig cfg;
    cfg.d_model = d_model;
    cfg.n_heads = 2;
    cfg.n_layers = 1;
    cfg.d_ff = 16;
    cfg.max_len = 12;
    cfg.vocab_size = 20;
    Model m;
    m.encoder = init_params(cfg, seed);
    return m;
}

Vocab demo_vocab() {
    Vocab v;
    for (const char* w : {"the", "crowd", "wrecked", "market", "near", "square"}) v.add(w);
    return v;
}

}  // namespace

TEST_CASE("confusion matrix counts all four cells") {
    auto cm = confusion({1, 0, 1, 0, 1}, {1, 0, 0, 1, 1});
    CHECK(cm.tp == 2);
    CHECK(cm.tn == 1);
    CHECK(cm.fp == 1);
    CHECK(cm.fn == 1);
    CHECK(cm.total() == 5);
    CHECK_THROWS_AS((void)confusion({1}, {1, 0}), std::invalid_argument);
    CHECK_THROWS_AS((void)confusion({}, {}), std::invalid_argument);
}

TEST_CASE("macro F1 equals the hand-computed mean of per-class scores") {
    // Both classes score F1 = 0.5 here.
    CHECK(macro_f1({1, 0, 1, 0}, {1, 1, 0, 0}) == doctest::Approx(0.5).epsilon(1e-15));
    // Predicting all hate on one example each: hate F1 = 2/3, non-hate = 0.
    CHECK(macro_f1({1, 1}, {1, 0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(macro_f1({1, 0}, {1, 0}) == 1.0);
    CHECK(macro_f1({0, 1}, {1, 0}) == 0.0);
}

TEST_CASE("metrics report carries per-class precision and recall") {
    auto report = metrics_report({1, 0, 1, 0}, {1, 1, 0, 0}, 0.4);
    CHECK(report.macro_f1 == doctest::Approx(0.5));
    CHECK(report.hate.precision == doctest::Approx(0.5));
    CHECK(report.hate.recall == doctest::Approx(0.5));
    CHECK(report.non_hate.precision == doctest::Approx(0.5));
    CHECK(report.non_hate.recall == doctest::Approx(0.5));
    CHECK(report.best_threshold == 0.4);
    CHECK(report.confusion.total() == 4);

    auto j = nlohmann::json::parse(to_json(report));
    CHECK(j["macro_f1"].is_number());
    CHECK(j["hate"]["f1"].is_number());
    CHECK(j["non_hate"]["precision"].is_number());
    auto table = to_table(report);
    CHECK(table.find("macro") != std::string::npos);

    // Single-class corner: everything predicted hate.
    auto skew = metrics_report({1, 1}, {1, 0}, 0.5);
    CHECK(skew.non_hate.f1 == 0.0);
    CHECK(skew.macro_f1 == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("threshold sweep walks exactly the 19-point grid") {
    auto sweep = threshold_sweep({0.3, 0.7}, {0, 1});
    REQUIRE(sweep.table.size() == 19);
    for (std::size_t i = 0; i < 19; ++i)
        CHECK(sweep.table[i].threshold ==
              doctest::Approx((static_cast<double>(i) + 1.0) / 20.0).epsilon(1e-15));
    // Perfect separation first becomes available strictly above 0.3.
    CHECK(sweep.best_macro_f1 == 1.0);
    CHECK(sweep.best_threshold == doctest::Approx(0.35).epsilon(1e-15));
}

TEST_CASE("sweep ties keep the lowest threshold") {
    auto sweep = threshold_sweep({0.5, 0.5}, {1, 0});
    // Every grid point classifies these two the same way.
    CHECK(sweep.best_threshold == doctest::Approx(0.05).epsilon(1e-15));
    for (const auto& row : sweep.table)
        CHECK(row.macro_f1 == doctest::Approx(sweep.table[0].macro_f1));
}

TEST_CASE("the sweep winner never loses to the fixed half-way threshold") {
    std::mt19937_64 rng(404);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> probs;
        std::vector<int> labels;
        for (int i = 0; i < 40; ++i) {
            probs.push_back(dist(rng));
            labels.push_back(static_cast<int>(rng() % 2));
        }
        auto sweep = threshold_sweep(probs, labels);
        double at_half = 0.0, best_row = 0.0;
        for (const auto& row : sweep.table) {
            best_row = std::max(best_row, row.macro_f1);
            if (std::abs(row.threshold - 0.5) < 1e-12) at_half = row.macro_f1;
        }
        CHECK(sweep.best_macro_f1 >= at_half);
        CHECK(sweep.best_macro_f1 == doctest::Approx(best_row).epsilon(1e-15));
    }
    CHECK_THROWS_AS((void)threshold_sweep({0.5}, {1, 0}), std::invalid_argument);
    CHECK_THROWS_AS((void)threshold_sweep({1.5}, {1}), std::invalid_argument);
}

TEST_CASE("the t table holds the two-sided 95% critical values") {
    CHECK(t_value_95(1) == doctest::Approx(12.706).epsilon(1e-12));
    CHECK(t_value_95(2) == doctest::Approx(4.303).epsilon(1e-12));
    CHECK(t_value_95(10) == doctest::Approx(2.228).epsilon(1e-12));
    CHECK(t_value_95(30) == doctest::Approx(2.042).epsilon(1e-12));
    CHECK_THROWS_AS((void)t_value_95(0), std::invalid_argument);
    CHECK_THROWS_AS((void)t_value_95(31), std::invalid_argument);
}

TEST_CASE("confidence intervals reproduce the reported three-seed figures") {
    // Reported as mean 81.94, std 0.34 -> CI [81.10, 82.78] at 2 d.p.
    auto ci = confidence_interval({82.31, 81.63, 81.87});
    CHECK(ci.mean == doctest::Approx(81.94).epsilon(1e-12));
    CHECK(ci.std_dev == doctest::Approx(0.34).epsilon(1e-12));
    CHECK(std::abs(ci.lo - 81.10) <= 0.01);
    CHECK(std::abs(ci.hi - 82.78) <= 0.01);

    auto ci2 = confidence_interval({93.83, 92.60, 93.21});
    CHECK(ci2.mean == doctest::Approx(93.21).epsilon(1e-12));
    CHECK(ci2.std_dev == doctest::Approx(0.62).epsilon(1e-12));
    CHECK(std::abs(ci2.lo - 91.67) <= 0.01);
    CHECK(std::abs(ci2.hi - 94.75) <= 0.01);
}

TEST_CASE("confidence interval width follows the closed form and degenerates to zero") {
    auto flat = confidence_interval({5.0, 5.0, 5.0});
    CHECK(flat.lo == 5.0);
    CHECK(flat.hi == 5.0);

    auto ci = confidence_interval({10.0, 12.0, 14.0, 16.0});
    // std of the rounded scores is 2.58; half-width = t(3) * 2.58 / 2.
    const double half = t_value_95(3) * ci.std_dev / 2.0;
    CHECK(ci.hi - ci.mean == doctest::Approx(half).epsilon(1e-12));
    CHECK(ci.mean - ci.lo == doctest::Approx(half).epsilon(1e-12));

    CHECK_THROWS_AS((void)confidence_interval({1.0}), std::invalid_argument);
}

TEST_CASE("speedup is the baseline-to-model step ratio at two decimals") {
    CHECK(speedup(1286, 380) == doctest::Approx(3.38).epsilon(1e-12));
    CHECK(speedup(1358, 1646) == doctest::Approx(0.83).epsilon(1e-12));
    CHECK(speedup(256, 126) == doctest::Approx(2.03).epsilon(1e-12));
    CHECK_THROWS_AS((void)speedup(100, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)speedup(0, 100), std::invalid_argument);
}

TEST_CASE("identical models produce an all-zero attention diff with no highlights") {
    auto model = small_model(3);
    auto vocab = demo_vocab();
    auto ex = encode(tokenize("the crowd wrecked market"), vocab, 12);
    auto texts = token_strings(tokenize("the crowd wrecked market"));

    auto report = attention_diff(model, model, ex, texts);
    REQUIRE(report.tokens.size() == 4);
    for (const auto& t : report.tokens) {
        CHECK(t.diff == 0.0);
        CHECK(t.weight_model == t.weight_baseline);
        CHECK_FALSE(t.highlighted);
    }
    // Each model's weights form a distribution over the real tokens.
    double sum_model = 0.0;
    for (const auto& t : report.tokens) sum_model += t.weight_model;
    CHECK(std::abs(sum_model - 1.0) <= 1e-12);
}

TEST_CASE("differing models highlight only tokens above the diff quantile") {
    auto model = small_model(5);
    auto baseline = small_model(6);
    auto vocab = demo_vocab();
    const char* text = "the crowd wrecked market near square";
    auto ex = encode(tokenize(text), vocab, 12);
    auto texts = token_strings(tokenize(text));

    auto report = attention_diff(model, baseline, ex, texts, 0.8);
    REQUIRE(report.tokens.size() == 6);
    CHECK(report.quantile == 0.8);

    // The quantile level with six tokens sits at the fifth sorted diff, so at
    // most one token can exceed it strictly.
    std::size_t highlighted = 0;
    for (const auto& t : report.tokens) highlighted += t.highlighted ? 1 : 0;
    CHECK(highlighted <= 1);

    bool any_nonzero = false;
    for (const auto& t : report.tokens)
        if (t.diff != 0.0) any_nonzero = true;
    CHECK(any_nonzero);
    for (const auto& t : report.tokens)
        CHECK(t.diff == doctest::Approx(t.weight_model - t.weight_baseline).epsilon(1e-15));

    // Same inputs, same report.
    auto again = attention_diff(model, baseline, ex, texts, 0.8);
    for (std::size_t i = 0; i < report.tokens.size(); ++i) {
        CHECK(report.tokens[i].diff == again.tokens[i].diff);
        CHECK(report.tokens[i].highlighted == again.tokens[i].highlighted);
    }

    CHECK_THROWS_AS((void)attention_diff(model, baseline, ex, texts, 1.5), config_error);
    texts.pop_back();
    CHECK_THROWS_AS((void)attention_diff(model, baseline, ex, texts), std::invalid_argument);
}

TEST_CASE("mismatched checkpoints are named in the comparison error") {
    auto model = small_model(5);
    auto wider = small_model(5, 16);
    auto vocab = demo_vocab();
    auto ex = encode(tokenize("the crowd"), vocab, 12);
    auto texts = token_strings(tokenize("the crowd"));
    CHECK_THROWS_WITH_AS((void)attention_diff(model, wider, ex, texts),
                         doctest::Contains("d_model"), config_error);
}

TEST_CASE("attention reports serialize to JSON, HTML and ANSI") {
    auto model = small_model(7);
    auto baseline = small_model(8);
    auto vocab = demo_vocab();
    auto ex = encode(tokenize("the crowd wrecked market"), vocab, 12);
    auto texts = token_strings(tokenize("the crowd wrecked market"));
    auto report = attention_diff(model, baseline, ex, texts);

    auto j = nlohmann::json::parse(to_json(report));
    REQUIRE(j["tokens"].size() == 4);
    CHECK(j["tokens"][0]["token"] == "the");
    CHECK(j["tokens"][0]["diff"].is_number());
    CHECK(j["quantile"] == 0.8);

    auto html = to_html(report);
    CHECK(html.find("<html") != std::string::npos);
    CHECK(html.find("</html>") != std::string::npos);
    CHECK(html.find("crowd") != std::string::npos);

    auto page = to_html_many({{"ex-1", report}, {"ex-2", report}});
    CHECK(page.find("ex-1") != std::string::npos);
    CHECK(page.find("ex-2") != std::string::npos);

    auto ansi = to_ansi(report);
    CHECK(ansi.find("crowd") != std::string::npos);
}

TEST_CASE("HTML output escapes markup inside tokens") {
    AttentionReport report;
    report.tokens.push_back({"<script>", 0.6, 0.4, 0.2, true});
    report.tokens.push_back({"a&b", 0.4, 0.6, -0.2, false});
    auto html = to_html(report);
    CHECK(html.find("<script>") == std::string::npos);
    CHECK(html.find("&lt;script&gt;") != std::string::npos);
    CHECK(html.find("a&amp;b") != std::string::npos);
}

TEST_CASE("the aggregate splits mean diffs by entity membership") {
    auto model = small_model(9);
    auto baseline = small_model(10);
    auto vocab = demo_vocab();

    std::vector<TokenizedExample> examples;
    std::vector<TargetMask> masks;
    for (const char* text : {"the crowd wrecked market", "near square the crowd"}) {
        auto ex = encode(tokenize(text), vocab, 12);
        TargetMask mask = TargetMask::zeros(ex.token_count());
        mask.mask[1] = 1;
        masks.push_back(mask);
        examples.push_back(std::move(ex));
    }

    auto agg = attention_diff_aggregate(model, baseline, examples, masks);
    CHECK(agg.entity_tokens == 2);
    CHECK(agg.other_tokens == 6);
    CHECK(std::isfinite(agg.entity_mean_diff));
    CHECK(std::isfinite(agg.other_mean_diff));

    // Identical models collapse both averages to zero.
    auto zero = attention_diff_aggregate(model, model, examples, masks);
    CHECK(zero.entity_mean_diff == 0.0);
    CHECK(zero.other_mean_diff == 0.0);

    masks.pop_back();
    CHECK_THROWS_AS((void)attention_diff_aggregate(model, baseline, examples, masks),
                    std::invalid_argument);
}
