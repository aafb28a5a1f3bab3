#pragma once

#include <cstdint>
#include <vector>

#include "targetamp/numerics.hpp"
#include "targetamp/text.hpp"

namespace targetamp {

struct EncoderConfig {
    std::size_t d_model = 64;
    std::size_t n_heads = 2;
    std::size_t n_layers = 2;
    std::size_t d_ff = 128;
    std::size_t max_len = 64;
    std::size_t vocab_size = 0;

    std::size_t d_head() const { return d_model / n_heads; }
    void validate() const;  // config_error on violation
    bool operator==(const EncoderConfig&) const = default;
};

struct LayerParams {
    NodePtr ln1_gain, ln1_bias;
    NodePtr wq, bq, wk, bk, wv, bv, wo, bo;
    NodePtr ln2_gain, ln2_bias;
    NodePtr w1, b1, w2, b2;
};

struct EncoderParams {
    EncoderConfig config;
    NodePtr token_embed;  // vocab_size x d_model
    NodePtr pos_embed;    // max_len x d_model
    std::vector<LayerParams> layers;
    NodePtr ln_final_gain, ln_final_bias;
    // Classifier applied downstream by the relation head; lives here so one
    // seed stream initializes the whole model and checkpoints stay one file.
    NodePtr cls_w;  // d_model x 2
    NodePtr cls_b;  // 1 x 2

    // Declaration order; fixes both optimizer traversal and checkpoint layout.
    std::vector<NodePtr> all() const;
};

// Closed-form trainable scalar count for a config.
std::size_t param_count(const EncoderConfig& config);

// normal(0, 0.02) weights, zero biases, unit layer-norm gains, one generator
// stream consumed in declaration order.
EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed);

// Fresh leaves carrying copies of the values (used to snapshot checkpoints).
EncoderParams clone_params(const EncoderParams& src);
void copy_values(const EncoderParams& from, EncoderParams& to);

struct AttentionTrace {
    // layer_head_probs[l][h] = post-softmax attention matrix of head h at layer l.
    std::vector<std::vector<Tensor>> layer_head_probs;
};

struct EncodedExample {
    NodePtr h;                 // padded_len x d_model
    std::size_t real_len = 0;  // rows >= real_len are batch padding, never read
};

// One pre-norm block's attention half: per-head scaled dot-product over the
// first `real_len` key positions (others excluded via additive -1e9 before the
// softmax), head concat, output projection.
NodePtr multi_head_self_attention(const NodePtr& x, const LayerParams& layer,
                                  const EncoderConfig& config, std::size_t real_len,
                                  std::vector<Tensor>* head_probs = nullptr);

// LN -> attention -> residual, LN -> FFN -> residual per layer, then a final
// norm. A 0-layer config degenerates to the raw token + position lookup.
EncodedExample encode_one(const EncoderParams& params, const TokenizedExample& ex,
                          std::size_t padded_len, AttentionTrace* trace = nullptr);

// Sequences run at the longest real length in the batch. Masked keys get
// exactly zero probability (their shifted scores underflow exp), so real rows
// match the full-width computation bit for bit while skipping dead positions.
std::vector<EncodedExample> encode_batch(const EncoderParams& params,
                                         const std::vector<TokenizedExample>& batch,
                                         std::vector<AttentionTrace>* traces = nullptr);

}  // namespace targetamp
