#include "targetamp/relation.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "targetamp/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace targetamp {

const char* to_string(ValueSource vs) {
    return vs == ValueSource::Targets ? "targets" : "cls";
}

void RelationConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 2.0))
        throw config_error("lambda must lie in [0, 2], got " + std::to_string(lambda));
    if (!bypass && !use_explicit && !use_implicit)
        throw config_error("relation head needs use_explicit or use_implicit unless bypassed");
}

NodePtr gather_explicit(const NodePtr& h, const TargetMask& mask) {
    std::vector<std::size_t> rows;
    for (const auto i : mask.explicit_indices()) rows.push_back(i + 1);
    return gather_rows(h, rows);
}

RelationVector relation_vector(const NodePtr& h0, const NodePtr& h_tgt, ValueSource vs) {
    const std::size_t k = h_tgt->rows();
    if (k == 0) throw std::invalid_argument("relation_vector: empty target set");
    if (h0->rows() != 1 || h0->cols() != h_tgt->cols())
        throw std::invalid_argument("relation_vector: shape mismatch");

    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(h0->cols()));
    const auto scores = scale(matmul(h0, transpose(h_tgt)), inv_sqrt_d);
    const auto weights = row_softmax(scores);  // 1 x k

    RelationVector out;
    out.weights = weights->value.data;
    const auto values = vs == ValueSource::Targets ? h_tgt : tile_rows(h0, k);
    out.r = matmul(weights, values);
    return out;
}

RelationOutput inject(const EncodedExample& ex, const TargetMask& mask,
                      const RelationConfig& config, const NodePtr& cls_w,
                      const NodePtr& cls_b) {
    config.validate();
    if (mask.token_count() + 1 != ex.real_len)
        throw std::invalid_argument("inject: mask does not align with the example");

    const auto h0 = gather_rows(ex.h, {0});
    const std::size_t d = h0->cols();

    RelationOutput out;
    if (config.bypass) {
        const auto zero = make_constant(Tensor(1, d, 0.0));
        out.r_exp = out.r_imp = out.r = zero;
        out.z = h0;
    } else {
        NodePtr r_exp, r_imp;
        if (config.use_explicit && mask.any()) {
            const auto rv = relation_vector(h0, gather_explicit(ex.h, mask), config.value_source);
            r_exp = rv.r;
            out.weights_exp = rv.weights;
        }
        if (config.use_implicit) r_imp = relation_vector(h0, h0, config.value_source).r;

        const auto zero = make_constant(Tensor(1, d, 0.0));
        out.r_exp = r_exp ? r_exp : zero;
        out.r_imp = r_imp ? r_imp : zero;
        out.r = r_exp && r_imp ? add(r_exp, r_imp) : (r_exp ? r_exp : (r_imp ? r_imp : zero));
        out.z = add(h0, scale(out.r, config.lambda));
    }
    out.logits = add(matmul(out.z, cls_w), cls_b);

    double probs[2] = {out.logits->value.data[0], out.logits->value.data[1]};
    softmax_row_inplace(probs, 2);
    out.prob_hate = probs[1];
    return out;
}

int classify(double prob_hate, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        throw config_error("threshold must lie in (0, 1), got " + std::to_string(threshold));
    return prob_hate >= threshold ? 1 : 0;
}

std::string to_jsonl(const RelationOutput& out) {
    nlohmann::json j;
    j["r_exp"] = out.r_exp->value.data;
    j["r_imp"] = out.r_imp->value.data;
    j["r"] = out.r->value.data;
    j["z"] = out.z->value.data;
    j["weights_exp"] = out.weights_exp;
    j["logits"] = out.logits->value.data;
    j["prob_hate"] = out.prob_hate;
    return j.dump();
}

namespace {

constexpr char kMagic[4] = {'T', 'A', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_raw(std::ifstream& in, const std::filesystem::path& path) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v)))
        throw data_error("truncated checkpoint: " + path.string());
    return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open checkpoint for writing: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    write_raw(out, kVersion);
    const auto& ec = model.encoder.config;
    for (const std::uint64_t field : {ec.d_model, ec.n_heads, ec.n_layers, ec.d_ff, ec.max_len,
                                      ec.vocab_size})
        write_raw(out, field);
    write_raw(out, model.relation.lambda);
    write_raw(out, static_cast<std::uint8_t>(model.relation.value_source));
    write_raw(out, static_cast<std::uint8_t>(model.relation.use_explicit));
    write_raw(out, static_cast<std::uint8_t>(model.relation.use_implicit));
    write_raw(out, static_cast<std::uint8_t>(model.relation.bypass));
    for (const auto& p : model.encoder.all())
        out.write(reinterpret_cast<const char*>(p->value.data.data()),
                  static_cast<std::streamsize>(p->value.data.size() * sizeof(double)));
    if (!out) throw data_error("failed writing checkpoint: " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open checkpoint: " + path.string());
    char magic[4];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, 4) != 0)
        throw data_error("not a model checkpoint: " + path.string());
    const auto version = read_raw<std::uint32_t>(in, path);
    if (version != kVersion)
        throw data_error("unsupported checkpoint version " + std::to_string(version) + " in " +
                         path.string());

    EncoderConfig ec;
    for (auto* field : {&ec.d_model, &ec.n_heads, &ec.n_layers, &ec.d_ff, &ec.max_len,
                        &ec.vocab_size})
        *field = static_cast<std::size_t>(read_raw<std::uint64_t>(in, path));
    ec.validate();

    RelationConfig rc;
    rc.lambda = read_raw<double>(in, path);
    const auto vs = read_raw<std::uint8_t>(in, path);
    if (vs > 1) throw data_error("corrupt value_source byte in " + path.string());
    rc.value_source = static_cast<ValueSource>(vs);
    rc.use_explicit = read_raw<std::uint8_t>(in, path) != 0;
    rc.use_implicit = read_raw<std::uint8_t>(in, path) != 0;
    rc.bypass = read_raw<std::uint8_t>(in, path) != 0;
    rc.validate();

    Model model{init_params(ec, 0), rc};
    for (const auto& p : model.encoder.all()) {
        auto& data = p->value.data;
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(double))))
            throw data_error("truncated checkpoint: " + path.string());
    }
    if (in.peek() != std::ifstream::traits_type::eof())
        throw data_error("trailing bytes in checkpoint: " + path.string());
    return model;
}

BatchOutput batch_loss(const EncoderParams& params, const RelationConfig& config,
                       const std::vector<TokenizedExample>& batch,
                       const std::vector<TargetMask>& masks) {
    if (batch.size() != masks.size())
        throw std::invalid_argument("batch_loss: masks must align 1:1 with the batch");
    const auto encoded = encode_batch(params, batch);

    BatchOutput out;
    std::vector<NodePtr> logit_rows;
    std::vector<int> labels;
    logit_rows.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out.outputs.push_back(inject(encoded[i], masks[i], config, params.cls_w, params.cls_b));
        logit_rows.push_back(out.outputs.back().logits);
        labels.push_back(batch[i].label);
    }
    const auto all_logits = logit_rows.size() == 1 ? logit_rows.front() : concat_rows(logit_rows);
    out.loss = cross_entropy(all_logits, labels);
    return out;
}

}  // namespace targetamp
