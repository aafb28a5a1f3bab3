#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "targetamp/relation.hpp"
#include "targetamp/target_id.hpp"
#include "targetamp/text.hpp"

namespace targetamp {

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;  // positive class = hate (1)
    std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels);

struct ClassScores {
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

// Unweighted mean of both per-class F1 scores; a class with no support in
// either vector contributes 0.
double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels);

struct MetricsReport {
    double macro_f1 = 0.0;
    ClassScores non_hate;  // class 0
    ClassScores hate;      // class 1
    double best_threshold = 0.5;
    ConfusionMatrix confusion;
};

MetricsReport metrics_report(const std::vector<int>& preds, const std::vector<int>& labels,
                             double best_threshold);
std::string to_json(const MetricsReport& report);
std::string to_table(const MetricsReport& report);

struct SweepRow {
    double threshold = 0.0;
    double macro_f1 = 0.0;
};

struct SweepResult {
    double best_threshold = 0.5;
    double best_macro_f1 = 0.0;
    std::vector<SweepRow> table;  // exactly the 19 grid points 0.05 .. 0.95
};

// Grid search over decision thresholds; ties keep the lowest threshold.
SweepResult threshold_sweep(const std::vector<double>& probs, const std::vector<int>& labels);

// Two-sided 95% critical value of Student's t for df in 1..30.
double t_value_95(std::size_t df);

struct ConfidenceInterval {
    double mean = 0.0;     // rounded to 2 d.p. — scores are reported at that precision
    double std_dev = 0.0;  // sample standard deviation, rounded to 2 d.p.
    double lo = 0.0;
    double hi = 0.0;
};

// mean ± t(df = n-1) * std / sqrt(n), computed from the 2 d.p. rounded mean
// and std so the interval matches what the reported figures imply.
ConfidenceInterval confidence_interval(const std::vector<double>& scores);

// baseline_steps / model_steps, rounded to 2 d.p.
double speedup(double baseline_steps, double model_steps);

struct TokenAttention {
    std::string token;
    double weight_model = 0.0;
    double weight_baseline = 0.0;
    double diff = 0.0;  // model - baseline
    bool highlighted = false;
};

struct AttentionReport {
    std::vector<TokenAttention> tokens;
    double quantile = 0.8;
};

// Token-level weights from each model's final embeddings: softmax over
// h0 . h_i / sqrt(d) across real tokens i >= 1 — the same unprojected product
// the relation head uses. Tokens whose diff exceeds the `quantile` level of
// all diffs (strictly) are highlighted.
AttentionReport attention_diff(const Model& model, const Model& baseline,
                               const TokenizedExample& ex,
                               const std::vector<std::string>& token_texts,
                               double quantile = 0.8);

std::string to_json(const AttentionReport& report);
std::string to_html(const AttentionReport& report);
// One self-contained page for a whole corpus; ids become section headings.
std::string to_html_many(const std::vector<std::pair<std::string, AttentionReport>>& reports);
std::string to_ansi(const AttentionReport& report);

struct AttentionDiffAggregate {
    double entity_mean_diff = 0.0;
    double other_mean_diff = 0.0;
    std::size_t entity_tokens = 0;
    std::size_t other_tokens = 0;
};

// Mean attention diff over mask-flagged tokens vs the rest, across a corpus.
AttentionDiffAggregate attention_diff_aggregate(const Model& model, const Model& baseline,
                                                const std::vector<TokenizedExample>& examples,
                                                const std::vector<TargetMask>& entity_masks);

}  // namespace targetamp
