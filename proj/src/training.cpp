#include "targetamp/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "targetamp/errors.hpp"
#include "targetamp/evalsuite.hpp"

namespace targetamp {

const char* to_string(TargetMode mode) {
    switch (mode) {
        case TargetMode::None: return "none";
        case TargetMode::Random20: return "random20";
        case TargetMode::Implicit: return "implicit";
        case TargetMode::Explicit: return "explicit";
        case TargetMode::Both: return "both";
    }
    return "?";
}

std::optional<TargetMode> target_mode_from_string(const std::string& s) {
    for (const auto mode : all_target_modes())
        if (s == to_string(mode)) return mode;
    return std::nullopt;
}

std::vector<TargetMode> all_target_modes() {
    return {TargetMode::None, TargetMode::Random20, TargetMode::Implicit, TargetMode::Explicit,
            TargetMode::Both};
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw config_error("learning_rate must be positive");
    if (batch_size == 0) throw config_error("batch_size must be >= 1");
    if (epochs == 0) throw config_error("epochs must be >= 1");
    if (eval_every == 0) throw config_error("eval_every must be >= 1");
    if (seeds.empty()) throw config_error("at least one seed required");
    if (!(random_rate >= 0.0 && random_rate <= 1.0))
        throw config_error("random_rate must lie in [0, 1]");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw config_error("betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw config_error("eps must be positive");
    if (weight_decay < 0.0) throw config_error("weight_decay must be non-negative");
    if (min_freq == 0) throw config_error("min_freq must be >= 1");
    relation_config_for(*this).validate();
}

RelationConfig relation_config_for(const TrainConfig& config) {
    RelationConfig rc;
    rc.lambda = config.lambda;
    rc.value_source = config.value_source;
    switch (config.target_mode) {
        case TargetMode::None:
            rc.bypass = true;
            rc.use_explicit = rc.use_implicit = false;
            break;
        case TargetMode::Random20:
        case TargetMode::Explicit:
            rc.use_explicit = true;
            rc.use_implicit = false;
            break;
        case TargetMode::Implicit:
            rc.use_explicit = false;
            rc.use_implicit = true;
            break;
        case TargetMode::Both:
            rc.use_explicit = rc.use_implicit = true;
            break;
    }
    return rc;
}

AdamWState init_adamw(const std::vector<NodePtr>& params) {
    AdamWState state;
    for (const auto& p : params) {
        state.m.emplace_back(p->value.rows, p->value.cols);
        state.v.emplace_back(p->value.rows, p->value.cols);
    }
    return state;
}

void adamw_step(const std::vector<NodePtr>& params, AdamWState& state, double lr,
                double beta1, double beta2, double eps, double weight_decay) {
    if (params.size() != state.m.size())
        throw std::invalid_argument("adamw_step: state does not match params");
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& value = params[i]->value;
        const auto& grad = params[i]->grad;
        if (!value.same_shape(state.m[i]) || !grad.same_shape(value))
            throw std::invalid_argument("adamw_step: shape mismatch");
        for (std::size_t k = 0; k < value.size(); ++k) {
            const double g = grad.data[k];
            double& m = state.m[i].data[k];
            double& v = state.v[i].data[k];
            m = beta1 * m + (1.0 - beta1) * g;
            v = beta2 * v + (1.0 - beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            value.data[k] -=
                lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * value.data[k]);
        }
    }
}

PreparedExample prepare_example(const CorpusRecord& record, const Vocab& vocab,
                                const TrainConfig& config, const Gazetteer& lexicon,
                                std::uint64_t run_seed, std::size_t ordinal) {
    PreparedExample out;
    const auto tokens = tokenize(record.text);
    out.tok = encode(tokens, vocab, config.encoder.max_len);
    out.tok.label = record.label;
    auto strings = token_strings(tokens);
    strings.resize(out.tok.token_count());
    out.tokens = std::move(strings);

    const auto n = out.tok.token_count();
    switch (config.target_mode) {
        case TargetMode::None:
        case TargetMode::Implicit:
            out.mask = TargetMask::zeros(n);
            break;
        case TargetMode::Random20:
            out.mask = random_mask(n, config.random_rate,
                                   run_seed ^ (0x9e3779b97f4a7c15ULL * (ordinal + 1)));
            break;
        case TargetMode::Explicit:
        case TargetMode::Both: {
            out.mask = lexicon.tag(out.tokens);
            break;
        }
    }
    return out;
}

std::vector<double> predict_probs(const EncoderParams& params, const RelationConfig& relation,
                                  const std::vector<PreparedExample>& examples,
                                  std::size_t batch_size) {
    std::vector<double> probs;
    probs.reserve(examples.size());
    for (std::size_t start = 0; start < examples.size(); start += batch_size) {
        const auto end = std::min(start + batch_size, examples.size());
        std::vector<TokenizedExample> batch;
        std::vector<TargetMask> masks;
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(examples[i].tok);
            masks.push_back(examples[i].mask);
        }
        const auto out = batch_loss(params, relation, batch, masks);
        for (const auto& o : out.outputs) probs.push_back(o.prob_hate);
    }
    return probs;
}

namespace {

std::vector<Tensor> snapshot_values(const std::vector<NodePtr>& params) {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p->value);
    return out;
}

void restore_values(const std::vector<NodePtr>& params, const std::vector<Tensor>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

std::vector<PreparedExample> prepare_all(const std::vector<CorpusRecord>& records,
                                         const Vocab& vocab, const TrainConfig& config,
                                         const Gazetteer& lexicon, std::uint64_t seed) {
    std::vector<PreparedExample> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i)
        out.push_back(prepare_example(records[i], vocab, config, lexicon, seed, i));
    return out;
}

std::vector<int> labels_of(const std::vector<PreparedExample>& examples) {
    std::vector<int> out;
    out.reserve(examples.size());
    for (const auto& e : examples) out.push_back(e.tok.label);
    return out;
}

}  // namespace

TrainResult train(const DatasetSplit& split, const Gazetteer& lexicon,
                  const TrainConfig& config, std::uint64_t seed) {
    config.validate();
    if (split.train.empty() || split.valid.empty() || split.test.empty())
        throw config_error("train/valid/test splits must all be non-empty");
    bool valid_has[2] = {false, false};
    for (const auto& r : split.valid) valid_has[r.label] = true;
    if (!valid_has[0] || !valid_has[1])
        throw config_error("validation split needs at least one example per class");

    std::vector<std::string> train_tokens;
    for (const auto& r : split.train)
        for (auto& t : token_strings(tokenize(r.text))) train_tokens.push_back(std::move(t));
    const Vocab vocab = build_vocab(train_tokens, config.min_freq);

    auto enc_cfg = config.encoder;
    enc_cfg.vocab_size = vocab.size();
    enc_cfg.validate();
    TrainConfig cfg = config;
    cfg.encoder = enc_cfg;

    const auto train_set = prepare_all(split.train, vocab, cfg, lexicon, seed);
    const auto valid_set = prepare_all(split.valid, vocab, cfg, lexicon, seed);
    const auto test_set = prepare_all(split.test, vocab, cfg, lexicon, seed);
    const auto valid_labels = labels_of(valid_set);
    const auto test_labels = labels_of(test_set);

    EncoderParams params = init_params(enc_cfg, seed);
    const RelationConfig relation = relation_config_for(cfg);
    const auto param_list = params.all();
    AdamWState opt = init_adamw(param_list);

    RunRecord record;
    record.seed = seed;
    double best_f1 = -std::numeric_limits<double>::infinity();
    std::vector<Tensor> best_snapshot = snapshot_values(param_list);
    std::size_t best_step = 0;
    double best_threshold = 0.5;

    const auto evaluate = [&](std::size_t step) {
        const auto probs = predict_probs(params, relation, valid_set, cfg.batch_size);
        const auto sweep = threshold_sweep(probs, valid_labels);
        record.trace.push_back({step, sweep.best_macro_f1, sweep.best_threshold});
        if (sweep.best_macro_f1 > best_f1) {
            best_f1 = sweep.best_macro_f1;
            best_snapshot = snapshot_values(param_list);
            best_step = step;
            best_threshold = sweep.best_threshold;
        }
    };

    std::mt19937_64 shuffle_rng(seed);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto end = std::min(start + cfg.batch_size, order.size());
            std::vector<TokenizedExample> batch;
            std::vector<TargetMask> masks;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(train_set[order[i]].tok);
                masks.push_back(train_set[order[i]].mask);
            }
            const auto out = batch_loss(params, relation, batch, masks);
            backward(out.loss);
            adamw_step(param_list, opt, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps,
                       cfg.weight_decay);
            zero_grad(out.loss);
            record.loss_trace.push_back(out.loss->value.data[0]);
            ++step;
            if (step % cfg.eval_every == 0) evaluate(step);
        }
    }
    // Degenerate runs shorter than one eval interval still need a checkpoint.
    if (record.trace.empty()) evaluate(step);

    restore_values(param_list, best_snapshot);
    record.convergence_step = best_step;
    record.best_threshold = best_threshold;
    record.valid_macro_f1 = best_f1;

    const auto test_probs = predict_probs(params, relation, test_set, cfg.batch_size);
    std::vector<int> test_preds;
    test_preds.reserve(test_probs.size());
    for (const double p : test_probs) test_preds.push_back(classify(p, best_threshold));
    record.test_macro_f1 = macro_f1(test_preds, test_labels);

    return {std::move(record), Model{std::move(params), relation}, vocab};
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty list");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("sample std needs at least 2 values");
    const double mu = mean(xs);
    double ss = 0.0;
    for (const double x : xs) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

SeedAggregate multi_seed_run(const DatasetSplit& split, const Gazetteer& lexicon,
                             const TrainConfig& config, std::vector<Model>* models,
                             std::vector<Vocab>* vocabs) {
    if (config.seeds.size() < 2)
        throw config_error("multi_seed_run needs at least 2 seeds");

    SeedAggregate agg;
    std::vector<double> f1s, steps;
    for (const auto seed : config.seeds) {
        auto result = train(split, lexicon, config, seed);
        f1s.push_back(result.record.test_macro_f1);
        steps.push_back(static_cast<double>(result.record.convergence_step));
        agg.records.push_back(std::move(result.record));
        if (models) models->push_back(std::move(result.model));
        if (vocabs) vocabs->push_back(std::move(result.vocab));
    }
    agg.mean_test_f1 = mean(f1s);
    agg.std_test_f1 = sample_std(f1s);
    agg.mean_convergence_step = mean(steps);
    agg.std_convergence_step = sample_std(steps);
    return agg;
}

}  // namespace targetamp
