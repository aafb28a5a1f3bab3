#include "targetamp/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "targetamp/errors.hpp"

namespace targetamp {

void EncoderConfig::validate() const {
    if (d_model == 0 || n_heads == 0 || d_ff == 0 || max_len == 0 || vocab_size == 0)
        throw config_error("encoder extents must all be >= 1");
    if (d_model % n_heads != 0)
        throw config_error("d_model (" + std::to_string(d_model) +
                           ") must be divisible by n_heads (" + std::to_string(n_heads) + ")");
}

std::vector<NodePtr> EncoderParams::all() const {
    std::vector<NodePtr> out{token_embed, pos_embed};
    for (const auto& l : layers) {
        out.insert(out.end(), {l.ln1_gain, l.ln1_bias, l.wq, l.bq, l.wk, l.bk, l.wv, l.bv,
                               l.wo, l.bo, l.ln2_gain, l.ln2_bias, l.w1, l.b1, l.w2, l.b2});
    }
    out.insert(out.end(), {ln_final_gain, ln_final_bias, cls_w, cls_b});
    return out;
}

std::size_t param_count(const EncoderConfig& c) {
    const std::size_t d = c.d_model;
    const std::size_t per_layer = 4 * (d * d + d)        // q/k/v/o projections
                                  + (d * c.d_ff + c.d_ff) + (c.d_ff * d + d)  // ffn
                                  + 4 * d;               // two norms
    return c.vocab_size * d + c.max_len * d + c.n_layers * per_layer + 2 * d  // final norm
           + (d * 2 + 2);                                // classifier
}

namespace {

NodePtr init_weight(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::normal_distribution<double> dist(0.0, 0.02);
    Tensor t(rows, cols);
    for (auto& v : t.data) v = dist(rng);
    return make_param(std::move(t));
}

NodePtr init_const(std::size_t rows, std::size_t cols, double fill) {
    return make_param(Tensor(rows, cols, fill));
}

}  // namespace

EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    const auto d = config.d_model;

    EncoderParams p;
    p.config = config;
    p.token_embed = init_weight(rng, config.vocab_size, d);
    p.pos_embed = init_weight(rng, config.max_len, d);
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        LayerParams lp;
        lp.ln1_gain = init_const(1, d, 1.0);
        lp.ln1_bias = init_const(1, d, 0.0);
        lp.wq = init_weight(rng, d, d);
        lp.bq = init_const(1, d, 0.0);
        lp.wk = init_weight(rng, d, d);
        lp.bk = init_const(1, d, 0.0);
        lp.wv = init_weight(rng, d, d);
        lp.bv = init_const(1, d, 0.0);
        lp.wo = init_weight(rng, d, d);
        lp.bo = init_const(1, d, 0.0);
        lp.ln2_gain = init_const(1, d, 1.0);
        lp.ln2_bias = init_const(1, d, 0.0);
        lp.w1 = init_weight(rng, d, config.d_ff);
        lp.b1 = init_const(1, config.d_ff, 0.0);
        lp.w2 = init_weight(rng, config.d_ff, d);
        lp.b2 = init_const(1, d, 0.0);
        p.layers.push_back(std::move(lp));
    }
    p.ln_final_gain = init_const(1, d, 1.0);
    p.ln_final_bias = init_const(1, d, 0.0);
    p.cls_w = init_weight(rng, d, 2);
    p.cls_b = init_const(1, 2, 0.0);
    return p;
}

EncoderParams clone_params(const EncoderParams& src) {
    EncoderParams dst = init_params(src.config, 0);
    copy_values(src, dst);
    return dst;
}

void copy_values(const EncoderParams& from, EncoderParams& to) {
    const auto a = from.all();
    const auto b = to.all();
    if (a.size() != b.size()) throw std::logic_error("copy_values: mismatched configs");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i]->value.same_shape(b[i]->value))
            throw std::logic_error("copy_values: mismatched tensor shapes");
        b[i]->value.data = a[i]->value.data;
    }
}

NodePtr multi_head_self_attention(const NodePtr& x, const LayerParams& layer,
                                  const EncoderConfig& config, std::size_t real_len,
                                  std::vector<Tensor>* head_probs) {
    const std::size_t rows = x->rows();
    const std::size_t dh = config.d_head();

    const auto q = add(matmul(x, layer.wq), layer.bq);
    const auto k = add(matmul(x, layer.wk), layer.bk);
    const auto v = add(matmul(x, layer.wv), layer.bv);

    NodePtr mask;
    if (real_len < rows) {
        Tensor m(rows, rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = real_len; c < rows; ++c) m.at(r, c) = -1e9;
        mask = make_constant(std::move(m));
    }

    std::vector<NodePtr> heads;
    heads.reserve(config.n_heads);
    for (std::size_t h = 0; h < config.n_heads; ++h) {
        const auto qh = slice_cols(q, h * dh, dh);
        const auto kh = slice_cols(k, h * dh, dh);
        const auto vh = slice_cols(v, h * dh, dh);
        auto scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(static_cast<double>(dh)));
        if (mask) scores = add(scores, mask);
        const auto probs = row_softmax(scores);
        if (head_probs) head_probs->push_back(probs->value);
        heads.push_back(matmul(probs, vh));
    }
    const auto ctx = heads.size() == 1 ? heads.front() : concat_cols(heads);
    return add(matmul(ctx, layer.wo), layer.bo);
}

EncodedExample encode_one(const EncoderParams& params, const TokenizedExample& ex,
                          std::size_t padded_len, AttentionTrace* trace) {
    const auto& cfg = params.config;
    if (ex.ids.size() > cfg.max_len)
        throw data_error("sequence length " + std::to_string(ex.ids.size()) +
                         " exceeds encoder max_len " + std::to_string(cfg.max_len));
    const std::size_t real = ex.real_len();
    if (real == 0 || real > padded_len || padded_len > ex.ids.size())
        throw std::invalid_argument("encode_one: inconsistent lengths");

    std::vector<std::size_t> ids(padded_len), positions(padded_len);
    for (std::size_t t = 0; t < padded_len; ++t) {
        const int id = ex.ids[t];
        if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size)
            throw data_error("token id " + std::to_string(id) + " outside vocab of size " +
                             std::to_string(cfg.vocab_size));
        ids[t] = static_cast<std::size_t>(id);
        positions[t] = t;
    }

    auto x = add(gather_rows(params.token_embed, ids), gather_rows(params.pos_embed, positions));
    if (cfg.n_layers == 0) return {x, real};

    for (const auto& layer : params.layers) {
        std::vector<Tensor>* probs_sink = nullptr;
        if (trace) {
            trace->layer_head_probs.emplace_back();
            probs_sink = &trace->layer_head_probs.back();
        }
        const auto normed = layer_norm(x, layer.ln1_gain, layer.ln1_bias);
        x = add(x, multi_head_self_attention(normed, layer, cfg, real, probs_sink));
        const auto normed2 = layer_norm(x, layer.ln2_gain, layer.ln2_bias);
        const auto hidden = relu(add(matmul(normed2, layer.w1), layer.b1));
        x = add(x, add(matmul(hidden, layer.w2), layer.b2));
    }
    return {layer_norm(x, params.ln_final_gain, params.ln_final_bias), real};
}

std::vector<EncodedExample> encode_batch(const EncoderParams& params,
                                         const std::vector<TokenizedExample>& batch,
                                         std::vector<AttentionTrace>* traces) {
    if (batch.empty()) throw std::invalid_argument("encode_batch: empty batch");
    const std::size_t padded = batch.front().ids.size();
    std::size_t longest = 1;
    for (const auto& ex : batch) {
        if (ex.ids.size() != padded)
            throw data_error("examples in one batch must share a padded length");
        longest = std::max(longest, ex.real_len());
    }
    if (traces) traces->assign(batch.size(), {});

    std::vector<EncodedExample> out;
    out.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        out.push_back(encode_one(params, batch[i], longest, traces ? &(*traces)[i] : nullptr));
    return out;
}

}  // namespace targetamp
