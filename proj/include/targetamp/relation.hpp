#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "targetamp/encoder.hpp"
#include "targetamp/numerics.hpp"
#include "targetamp/target_id.hpp"

namespace targetamp {

// How the attention over target embeddings turns into a relation vector.
// Targets: weighted sum of the target rows themselves — the reading that
// actually lets explicit targets steer the sentence vector. Cls: the value is
// h0 itself, so the result collapses to h0 regardless of weights; kept as a
// configurable switch because it is algebraically forced by reading the
// attention equation with V = h0.
enum class ValueSource { Targets, Cls };

const char* to_string(ValueSource vs);

struct RelationConfig {
    double lambda = 1.0;  // amplification factor, in [0, 2]
    ValueSource value_source = ValueSource::Targets;
    bool use_explicit = true;
    bool use_implicit = true;
    bool bypass = false;  // no-target baseline: skip the head, classify h0 directly

    void validate() const;  // config_error on violation
    bool operator==(const RelationConfig&) const = default;
};

struct RelationOutput {
    NodePtr r_exp;  // 1 x d, zero when the explicit branch is off or has no targets
    NodePtr r_imp;  // 1 x d, zero when the implicit branch is off
    NodePtr r;      // 1 x d, sum of the enabled branches
    NodePtr z;      // 1 x d, h0 + lambda * r (h0 itself under bypass)
    std::vector<double> weights_exp;  // attention over explicit targets, empty if none
    NodePtr logits;                   // 1 x 2
    double prob_hate = 0.0;
};

// Rows of H at flagged token positions (token i lives at row i + 1), original
// order kept. All-zero mask yields a 0 x d result.
NodePtr gather_explicit(const NodePtr& h, const TargetMask& mask);

struct RelationVector {
    NodePtr r;                    // 1 x d
    std::vector<double> weights;  // k entries, sum to 1
};

// Scaled dot-product attention with Q = h0 and K = the k target rows
// (scale 1/sqrt(d), k >= 1). The value matrix is H_tgt or k copies of h0
// depending on value_source.
RelationVector relation_vector(const NodePtr& h0, const NodePtr& h_tgt, ValueSource vs);

// Full head on one encoded example: branch relation vectors, r = r_exp + r_imp,
// z = h0 + lambda * r, linear d -> 2 classifier, softmax.
RelationOutput inject(const EncodedExample& ex, const TargetMask& mask,
                      const RelationConfig& config, const NodePtr& cls_w,
                      const NodePtr& cls_b);

// 1 iff prob_hate >= threshold; threshold must lie strictly inside (0, 1).
int classify(double prob_hate, double threshold);

// One line of JSON with the vectors, weights and probability of one output.
std::string to_jsonl(const RelationOutput& out);

struct Model {
    EncoderParams encoder;
    RelationConfig relation;
};

// Versioned binary checkpoint: magic, version, both configs, then every
// tensor's values in declaration order as little-endian 64-bit reals.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

struct BatchOutput {
    NodePtr loss;  // 1 x 1 mean cross-entropy
    std::vector<RelationOutput> outputs;
};

// Forward pass of the whole model over one batch; masks align 1:1 with batch.
BatchOutput batch_loss(const EncoderParams& params, const RelationConfig& config,
                       const std::vector<TokenizedExample>& batch,
                       const std::vector<TargetMask>& masks);

}  // namespace targetamp
