#include "targetamp/evalsuite.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "targetamp/errors.hpp"

namespace targetamp {

namespace {

double round2(double x) { return std::round(x * 100.0) / 100.0; }

ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassScores s;
    if (tp + fp > 0) s.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    if (tp + fn > 0) s.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    if (s.precision + s.recall > 0.0)
        s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

void check_aligned(const std::vector<int>& preds, const std::vector<int>& labels) {
    if (preds.size() != labels.size())
        throw std::invalid_argument("predictions and labels differ in length");
    if (preds.empty()) throw std::invalid_argument("no examples to score");
}

std::string format2(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", x);
    return buf;
}

std::string format4(double x) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", x);
    return buf;
}

}  // namespace

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels) {
    check_aligned(preds, labels);
    ConfusionMatrix m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] == 1)
            preds[i] == 1 ? ++m.tp : ++m.fn;
        else
            preds[i] == 1 ? ++m.fp : ++m.tn;
    }
    return m;
}

double macro_f1(const std::vector<int>& preds, const std::vector<int>& labels) {
    const auto m = confusion(preds, labels);
    const auto hate = class_scores(m.tp, m.fp, m.fn);
    const auto non_hate = class_scores(m.tn, m.fn, m.fp);  // class-0 view of the counts
    return 0.5 * (hate.f1 + non_hate.f1);
}

MetricsReport metrics_report(const std::vector<int>& preds, const std::vector<int>& labels,
                             double best_threshold) {
    MetricsReport r;
    r.confusion = confusion(preds, labels);
    r.hate = class_scores(r.confusion.tp, r.confusion.fp, r.confusion.fn);
    r.non_hate = class_scores(r.confusion.tn, r.confusion.fn, r.confusion.fp);
    r.macro_f1 = 0.5 * (r.hate.f1 + r.non_hate.f1);
    r.best_threshold = best_threshold;
    return r;
}

std::string to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["macro_f1"] = r.macro_f1;
    j["best_threshold"] = r.best_threshold;
    for (const auto& [name, s] : {std::pair{"non_hate", &r.non_hate}, {"hate", &r.hate}}) {
        j[name] = {{"precision", s->precision}, {"recall", s->recall}, {"f1", s->f1}};
    }
    j["confusion"] = {{"tp", r.confusion.tp}, {"fp", r.confusion.fp},
                      {"tn", r.confusion.tn}, {"fn", r.confusion.fn}};
    return j.dump();
}

std::string to_table(const MetricsReport& r) {
    std::ostringstream out;
    out << "class      precision  recall     f1\n";
    out << "non-hate   " << format4(r.non_hate.precision) << "     " << format4(r.non_hate.recall)
        << "     " << format4(r.non_hate.f1) << "\n";
    out << "hate       " << format4(r.hate.precision) << "     " << format4(r.hate.recall)
        << "     " << format4(r.hate.f1) << "\n";
    out << "macro-F1   " << format4(r.macro_f1) << " (threshold " << format2(r.best_threshold)
        << ")\n";
    out << "confusion  tp=" << r.confusion.tp << " fp=" << r.confusion.fp
        << " tn=" << r.confusion.tn << " fn=" << r.confusion.fn << "\n";
    return out.str();
}

SweepResult threshold_sweep(const std::vector<double>& probs, const std::vector<int>& labels) {
    if (probs.size() != labels.size())
        throw std::invalid_argument("probabilities and labels differ in length");
    for (const double p : probs)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("probability outside [0, 1]");

    SweepResult result;
    std::vector<int> preds(probs.size());
    for (int i = 1; i <= 19; ++i) {
        const double threshold = static_cast<double>(i) / 20.0;
        for (std::size_t e = 0; e < probs.size(); ++e) preds[e] = probs[e] >= threshold ? 1 : 0;
        const double score = macro_f1(preds, labels);
        result.table.push_back({threshold, score});
        if (result.table.size() == 1 || score > result.best_macro_f1) {
            result.best_macro_f1 = score;
            result.best_threshold = threshold;
        }
    }
    return result;
}

double t_value_95(std::size_t df) {
    static constexpr std::array<double, 30> kTable = {
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
        2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
        2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1 || df > kTable.size())
        throw std::invalid_argument("t-table covers df 1..30, got " + std::to_string(df));
    return kTable[df - 1];
}

ConfidenceInterval confidence_interval(const std::vector<double>& scores) {
    const std::size_t n = scores.size();
    if (n < 2) throw std::invalid_argument("confidence interval needs at least 2 scores");

    double mean = 0.0;
    for (const double s : scores) mean += s;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const double s : scores) ss += (s - mean) * (s - mean);
    const double std_dev = std::sqrt(ss / static_cast<double>(n - 1));

    // Scores enter reports at 2 d.p.; interval bounds are derived from the
    // rounded figures so the printed mean/std and the printed interval agree.
    ConfidenceInterval ci;
    ci.mean = round2(mean);
    ci.std_dev = round2(std_dev);
    const double half = t_value_95(n - 1) * ci.std_dev / std::sqrt(static_cast<double>(n));
    ci.lo = ci.mean - half;
    ci.hi = ci.mean + half;
    return ci;
}

double speedup(double baseline_steps, double model_steps) {
    if (!(baseline_steps > 0.0) || !(model_steps > 0.0))
        throw std::invalid_argument("step counts must be positive");
    return round2(baseline_steps / model_steps);
}

namespace {

// Relation-head-style weights over real tokens from the final embeddings.
std::vector<double> cls_token_weights(const Model& model, const TokenizedExample& ex) {
    const auto encoded = encode_one(model.encoder, ex, ex.real_len());
    const Tensor& h = encoded.h->value;
    const std::size_t n = ex.token_count();
    std::vector<double> w(n);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h.cols));
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t c = 0; c < h.cols; ++c) dot += h.at(0, c) * h.at(i + 1, c);
        w[i] = dot * inv_sqrt_d;
    }
    if (!w.empty()) softmax_row_inplace(w.data(), w.size());
    return w;
}

std::string escape_html(const std::string& s) {
    std::string out;
    for (const char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

namespace {

void check_same_config(const EncoderConfig& a, const EncoderConfig& b) {
    const auto differs = [](const char* name, std::size_t x, std::size_t y) {
        if (x != y)
            throw config_error(std::string("checkpoints differ in ") + name + ": " +
                               std::to_string(x) + " vs " + std::to_string(y));
    };
    differs("d_model", a.d_model, b.d_model);
    differs("n_heads", a.n_heads, b.n_heads);
    differs("n_layers", a.n_layers, b.n_layers);
    differs("d_ff", a.d_ff, b.d_ff);
    differs("max_len", a.max_len, b.max_len);
    differs("vocab_size", a.vocab_size, b.vocab_size);
}

}  // namespace

AttentionReport attention_diff(const Model& model, const Model& baseline,
                               const TokenizedExample& ex,
                               const std::vector<std::string>& token_texts,
                               double quantile) {
    check_same_config(model.encoder.config, baseline.encoder.config);
    if (!(quantile >= 0.0 && quantile <= 1.0))
        throw config_error("quantile must lie in [0, 1]");
    if (token_texts.size() != ex.token_count())
        throw std::invalid_argument("token_texts must align with the example's real tokens");

    const auto wm = cls_token_weights(model, ex);
    const auto wb = cls_token_weights(baseline, ex);

    AttentionReport report;
    report.quantile = quantile;
    for (std::size_t i = 0; i < wm.size(); ++i)
        report.tokens.push_back({token_texts[i], wm[i], wb[i], wm[i] - wb[i], false});

    if (!report.tokens.empty()) {
        std::vector<double> diffs;
        for (const auto& t : report.tokens) diffs.push_back(t.diff);
        std::sort(diffs.begin(), diffs.end());
        const auto n = diffs.size();
        const auto idx = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(n) - 1.0,
                             std::max(0.0, std::ceil(quantile * static_cast<double>(n)) - 1.0)));
        const double level = diffs[idx];
        for (auto& t : report.tokens) t.highlighted = t.diff > level;
    }
    return report;
}

std::string to_json(const AttentionReport& report) {
    nlohmann::json j;
    j["quantile"] = report.quantile;
    auto tokens = nlohmann::json::array();
    for (const auto& t : report.tokens)
        tokens.push_back({{"token", t.token},
                          {"weight_model", t.weight_model},
                          {"weight_baseline", t.weight_baseline},
                          {"diff", t.diff},
                          {"highlighted", t.highlighted}});
    j["tokens"] = std::move(tokens);
    return j.dump();
}

namespace {

void render_spans(std::ostringstream& out, const AttentionReport& report) {
    double max_abs = 1e-12;
    for (const auto& t : report.tokens) max_abs = std::max(max_abs, std::abs(t.diff));
    out << "<p>\n";
    for (const auto& t : report.tokens) {
        const double alpha = std::abs(t.diff) / max_abs * 0.8;
        const char* hue = t.diff >= 0.0 ? "255,80,80" : "80,80,255";
        out << "<span style=\"background:rgba(" << hue << "," << format2(alpha) << ");padding:2px"
            << (t.highlighted ? ";font-weight:bold;text-decoration:underline" : "")
            << "\" title=\"model " << format4(t.weight_model) << ", baseline "
            << format4(t.weight_baseline) << ", diff " << format4(t.diff) << "\">"
            << escape_html(t.token) << "</span>\n";
    }
    out << "</p>\n";
}

std::string html_document(const std::string& body) {
    return "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
           "<title>token attention diff</title>\n</head>\n"
           "<body style=\"font-family:monospace;line-height:2\">\n" +
           body + "</body>\n</html>\n";
}

}  // namespace

std::string to_html(const AttentionReport& report) {
    std::ostringstream body;
    render_spans(body, report);
    return html_document(body.str());
}

std::string to_html_many(const std::vector<std::pair<std::string, AttentionReport>>& reports) {
    std::ostringstream body;
    for (const auto& [id, report] : reports) {
        body << "<h3 style=\"font-family:monospace\">" << escape_html(id) << "</h3>\n";
        render_spans(body, report);
    }
    return html_document(body.str());
}

std::string to_ansi(const AttentionReport& report) {
    std::ostringstream out;
    for (std::size_t i = 0; i < report.tokens.size(); ++i) {
        const auto& t = report.tokens[i];
        if (i > 0) out << ' ';
        if (t.highlighted)
            out << "\x1b[1;31m" << t.token << "\x1b[0m";
        else
            out << t.token;
    }
    out << '\n';
    for (const auto& t : report.tokens)
        out << (t.highlighted ? "* " : "  ") << t.token << "  model " << format4(t.weight_model)
            << "  baseline " << format4(t.weight_baseline) << "  diff " << format4(t.diff)
            << '\n';
    return out.str();
}

AttentionDiffAggregate attention_diff_aggregate(const Model& model, const Model& baseline,
                                                const std::vector<TokenizedExample>& examples,
                                                const std::vector<TargetMask>& entity_masks) {
    if (examples.size() != entity_masks.size())
        throw std::invalid_argument("masks must align 1:1 with examples");

    AttentionDiffAggregate agg;
    double entity_sum = 0.0, other_sum = 0.0;
    for (std::size_t e = 0; e < examples.size(); ++e) {
        const auto wm = cls_token_weights(model, examples[e]);
        const auto wb = cls_token_weights(baseline, examples[e]);
        const auto& mask = entity_masks[e].mask;
        for (std::size_t i = 0; i < wm.size() && i < mask.size(); ++i) {
            const double diff = wm[i] - wb[i];
            if (mask[i]) {
                entity_sum += diff;
                ++agg.entity_tokens;
            } else {
                other_sum += diff;
                ++agg.other_tokens;
            }
        }
    }
    if (agg.entity_tokens > 0) agg.entity_mean_diff = entity_sum / static_cast<double>(agg.entity_tokens);
    if (agg.other_tokens > 0) agg.other_mean_diff = other_sum / static_cast<double>(agg.other_tokens);
    return agg;
}

}  // namespace targetamp
