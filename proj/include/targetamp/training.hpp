#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "targetamp/data.hpp"
#include "targetamp/encoder.hpp"
#include "targetamp/relation.hpp"
#include "targetamp/target_id.hpp"
#include "targetamp/text.hpp"

namespace targetamp {

// Target-provider configurations of the ablation grid.
enum class TargetMode { None, Random20, Implicit, Explicit, Both };

const char* to_string(TargetMode mode);
std::optional<TargetMode> target_mode_from_string(const std::string& s);
std::vector<TargetMode> all_target_modes();

struct TrainConfig {
    // Desk-scale default; tiny randomly-initialized models need bigger steps
    // than a pre-trained encoder, whose conventional 2e-5 stays available.
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    std::size_t epochs = 6;
    std::size_t eval_every = 50;  // optimizer steps between validation passes
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    double lambda = 1.0;
    TargetMode target_mode = TargetMode::Both;
    ValueSource value_source = ValueSource::Targets;
    double random_rate = 0.2;  // flag rate for TargetMode::Random20
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    EncoderConfig encoder;     // vocab_size is overwritten from the training vocab
    std::size_t min_freq = 1;  // vocabulary cutoff

    void validate() const;  // config_error on violation
};

// Relation head settings implied by a target mode.
RelationConfig relation_config_for(const TrainConfig& config);

struct AdamWState {
    std::vector<Tensor> m;  // first moments, aligned with the param list
    std::vector<Tensor> v;  // second moments
    std::size_t t = 0;      // completed steps
};

AdamWState init_adamw(const std::vector<NodePtr>& params);

// Decoupled-weight-decay Adam with bias-corrected moments; reads each param's
// accumulated grad and updates values in place.
void adamw_step(const std::vector<NodePtr>& params, AdamWState& state, double lr,
                double beta1, double beta2, double eps, double weight_decay);

struct EvalPoint {
    std::size_t step = 0;  // optimizer steps completed
    double macro_f1 = 0.0;
    double threshold = 0.5;  // sweep winner at this evaluation
};

struct RunRecord {
    std::uint64_t seed = 0;
    std::vector<EvalPoint> trace;        // one row per validation pass
    std::size_t convergence_step = 0;    // earliest step attaining the trace maximum
    double best_threshold = 0.5;
    double valid_macro_f1 = 0.0;         // at the convergence step
    double test_macro_f1 = 0.0;          // best checkpoint, best threshold
    std::vector<double> loss_trace;      // training loss per optimizer step
};

struct PreparedExample {
    TokenizedExample tok;
    TargetMask mask;
    std::vector<std::string> tokens;  // kept real tokens, aligned with mask
};

// Tokenize + encode one record and attach the mode's target mask. For the
// random mode the mask is fixed per (run seed, example ordinal).
PreparedExample prepare_example(const CorpusRecord& record, const Vocab& vocab,
                                const TrainConfig& config, const Gazetteer& lexicon,
                                std::uint64_t run_seed, std::size_t ordinal);

// Probability of the hate class for each prepared example, in batches.
std::vector<double> predict_probs(const EncoderParams& params, const RelationConfig& relation,
                                  const std::vector<PreparedExample>& examples,
                                  std::size_t batch_size);

struct TrainResult {
    RunRecord record;
    Model model;  // parameters restored to the convergence-step checkpoint
    Vocab vocab;
};

// One seeded run of the full protocol: seeded shuffles each epoch, AdamW
// updates, validation sweep every eval_every steps, best checkpoint kept,
// test metrics computed once from it.
TrainResult train(const DatasetSplit& split, const Gazetteer& lexicon,
                  const TrainConfig& config, std::uint64_t seed);

double mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);  // n - 1 denominator

struct SeedAggregate {
    double mean_test_f1 = 0.0;
    double std_test_f1 = 0.0;
    double mean_convergence_step = 0.0;
    double std_convergence_step = 0.0;
    std::vector<RunRecord> records;
};

// Runs every seed in config.seeds (at least 2) and aggregates.
SeedAggregate multi_seed_run(const DatasetSplit& split, const Gazetteer& lexicon,
                             const TrainConfig& config,
                             std::vector<Model>* models = nullptr,
                             std::vector<Vocab>* vocabs = nullptr);

}  // namespace targetamp
