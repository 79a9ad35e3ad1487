#include "symcomp/model.hpp"

#include <cmath>
#include <limits>

#include "symcomp/checkpoint.hpp"
#include "symcomp/common.hpp"

namespace symcomp {

AttrClsInput attr_cls_input_from_name(const std::string& name) {
    if (name == "transformed") return AttrClsInput::Transformed;
    if (name == "difference") return AttrClsInput::Difference;
    throw ConfigError("unknown attribute-classifier input \"" + name +
                      "\" (expected transformed or difference)");
}

const char* attr_cls_input_name(AttrClsInput v) {
    return v == AttrClsInput::Transformed ? "transformed" : "difference";
}

namespace {

void require_positive(int64_t v, const char* field) {
    if (v < 1) throw ConfigError(std::string("model config: ") + field + " must be positive");
}

}  // namespace

TransformModel::TransformModel(const ModelConfig& cfg, ParamStore& store)
    : cfg_(cfg), store_(&store) {
    require_positive(cfg_.feature_dim, "feature_dim");
    require_positive(cfg_.attr_embed_dim, "attr_embed_dim");
    require_positive(cfg_.n_attrs, "n_attrs");
    require_positive(cfg_.n_objects, "n_objects");
    if (cfg_.gamma <= 0.0) throw ConfigError("model config: gamma must be positive");
    if (cfg_.input_dim == 0) cfg_.input_dim = cfg_.feature_dim;
    if (cfg_.attn_hidden == 0) cfg_.attn_hidden = cfg_.feature_dim;
    if (cfg_.trunk_hidden == 0) cfg_.trunk_hidden = 2 * cfg_.feature_dim;
    if (cfg_.cls_hidden == 0) cfg_.cls_hidden = cfg_.feature_dim;
    require_positive(cfg_.input_dim, "input_dim");
    require_positive(cfg_.attn_hidden, "attn_hidden");
    require_positive(cfg_.trunk_hidden, "trunk_hidden");
    require_positive(cfg_.cls_hidden, "cls_hidden");

    if (cfg_.input_dim != cfg_.feature_dim) {
        has_proj_ = true;
        proj_ = AffineLayer(store, "proj", cfg_.input_dim, cfg_.feature_dim);
    }
    con_ = make_half("con");
    decon_ = make_half("decon");
    cls_attr_fc1_ = AffineLayer(store, "cls_attr.fc1", cfg_.feature_dim, cfg_.cls_hidden);
    cls_attr_fc2_ = AffineLayer(store, "cls_attr.fc2", cfg_.cls_hidden, cfg_.n_attrs);
    cls_obj_fc1_ = AffineLayer(store, "cls_obj.fc1", cfg_.feature_dim, cfg_.cls_hidden);
    cls_obj_fc2_ = AffineLayer(store, "cls_obj.fc2", cfg_.cls_hidden, cfg_.n_objects);
}

TransformModel::Half TransformModel::make_half(const std::string& prefix) {
    Half h;
    h.attn_fc1 = AffineLayer(*store_, prefix + ".attn.fc1", cfg_.attr_embed_dim, cfg_.attn_hidden);
    h.attn_bn = BatchNormLayer(*store_, prefix + ".attn.bn", cfg_.attn_hidden);
    h.attn_fc2 = AffineLayer(*store_, prefix + ".attn.fc2", cfg_.attn_hidden, cfg_.feature_dim);
    h.trunk_fc1 = AffineLayer(*store_, prefix + ".trunk.fc1",
                              cfg_.feature_dim + cfg_.attr_embed_dim, cfg_.trunk_hidden);
    h.trunk_bn = BatchNormLayer(*store_, prefix + ".trunk.bn", cfg_.trunk_hidden);
    h.trunk_fc2 = AffineLayer(*store_, prefix + ".trunk.fc2", cfg_.trunk_hidden, cfg_.feature_dim);
    return h;
}

Val TransformModel::project(Tape& tape, Val x) const {
    if (!has_proj_) return x;
    return proj_.forward(tape, x);
}

Val TransformModel::attention(Tape& tape, Val a, TransformMode mode, BnMode bn) const {
    const Half& h = half(mode);
    Val hstate = h.attn_fc1.forward(tape, a);
    hstate = h.attn_bn.forward(tape, hstate, bn);
    hstate = tape.relu(hstate);
    return tape.sigmoid(h.attn_fc2.forward(tape, hstate));
}

Val TransformModel::transform(Tape& tape, Val f, Val a, TransformMode mode, BnMode bn) const {
    if (cfg_.identity_pin) return f;
    const Half& h = half(mode);
    Val att = attention(tape, a, mode, bn);
    Val gated = tape.add(tape.mul(f, att), f);
    Val x = tape.concat_cols(gated, a);
    Val y = h.trunk_fc1.forward(tape, x);
    y = h.trunk_bn.forward(tape, y, bn);
    y = tape.relu(y);
    y = h.trunk_fc2.forward(tape, y);
    if (!tape.value(y).all_finite())
        throw NumericError(std::string("transform (") +
                           (mode == TransformMode::Couple ? "couple" : "decouple") +
                           "): non-finite output from trunk");
    return y;
}

Val TransformModel::attr_logits(Tape& tape, Val f) const {
    return cls_attr_fc2_.forward(tape, tape.relu(cls_attr_fc1_.forward(tape, f)));
}

Val TransformModel::object_logits(Tape& tape, Val f) const {
    return cls_obj_fc2_.forward(tape, tape.relu(cls_obj_fc1_.forward(tape, f)));
}

RmdResult TransformModel::rmd(const Tensor& features, const Tensor& attr_embeds) const {
    int64_t batch = features.rows();
    int64_t n = attr_embeds.rows();
    if (attr_embeds.cols() != cfg_.attr_embed_dim)
        throw ShapeError("rmd: attribute embeddings have width " +
                         std::to_string(attr_embeds.cols()) + ", model expects " +
                         std::to_string(cfg_.attr_embed_dim));

    Tape tape;
    Val f = project(tape, tape.input(features));
    // row b*n + i pairs instance b with attribute i
    std::vector<int64_t> tile(static_cast<size_t>(batch * n));
    Tensor astack = Tensor::zeros({batch * n, cfg_.attr_embed_dim}, attr_embeds.dtype());
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < n; ++i) {
            tile[static_cast<size_t>(b * n + i)] = b;
            for (int64_t c = 0; c < cfg_.attr_embed_dim; ++c)
                astack.at(b * n + i, c) = attr_embeds.at(i, c);
        }
    Val fstack = tape.gather_rows(f, tile);
    Val a = tape.input(std::move(astack));
    Val dp = tape.row_l2norm(tape.sub(fstack, transform(tape, fstack, a, TransformMode::Couple, BnMode::Eval)));
    Val dm = tape.row_l2norm(tape.sub(fstack, transform(tape, fstack, a, TransformMode::Decouple, BnMode::Eval)));

    RmdResult out;
    out.gamma = cfg_.gamma;
    out.d_plus = tape.value(dp).reshaped({batch, n});
    out.d_minus = tape.value(dm).reshaped({batch, n});
    out.d = Tensor::zeros({batch, n}, out.d_plus.dtype());
    for (int64_t i = 0; i < out.d.numel(); ++i)
        out.d.at(i) = out.d_minus.at(i) - out.d_plus.at(i);
    out.d.round_to_dtype();
    return out;
}

Tensor TransformModel::transform_eval(const Tensor& features, const Tensor& attr_rows,
                                      TransformMode mode) const {
    Tape tape;
    Val f = project(tape, tape.input(features));
    Val y = transform(tape, f, tape.input(attr_rows), mode, BnMode::Eval);
    return tape.value(y);
}

Tensor TransformModel::object_probs(const Tensor& features) const {
    Tape tape;
    Val f = project(tape, tape.input(features));
    return tape.value(tape.softmax_rows(object_logits(tape, f)));
}

Tensor TransformModel::attr_probs(const RmdResult& scores) const {
    return attr_prob(scores.d, scores.gamma);
}

Tensor attr_prob(const Tensor& d, double gamma) {
    if (gamma <= 0.0) throw ConfigError("attr_prob: gamma must be positive");
    Tensor p = d;
    for (int64_t i = 0; i < p.numel(); ++i) {
        double x = gamma * p.at(i);
        p.at(i) = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    p.round_to_dtype();
    return p;
}

std::vector<char> attr_decision(const Tensor& d) {
    std::vector<char> out(static_cast<size_t>(d.numel()));
    for (int64_t i = 0; i < d.numel(); ++i) out[static_cast<size_t>(i)] = d.at(i) >= 0.0 ? 1 : 0;
    return out;
}

Tensor pair_scores(const Tensor& p_a, const Tensor& p_o, const PairSpace& space) {
    int64_t batch = p_a.rows();
    if (p_o.rows() != batch)
        throw ShapeError("pair_scores: attribute and object probabilities disagree on batch size");
    if (p_a.cols() != space.n_attrs || p_o.cols() != space.n_objects)
        throw ShapeError("pair_scores: probability widths " + std::to_string(p_a.cols()) + "/" +
                         std::to_string(p_o.cols()) + " do not match the pair space (" +
                         std::to_string(space.n_attrs) + " attrs x " +
                         std::to_string(space.n_objects) + " objects)");
    bool any = false;
    for (char m : space.feasible_mask) any = any || m;
    if (!any) throw DataError("pair_scores: the feasible pair set is empty");

    double ninf = -std::numeric_limits<double>::infinity();
    Tensor out = Tensor::full({batch, space.size()}, ninf);
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < space.size(); ++i)
            if (space.feasible_mask[static_cast<size_t>(i)]) {
                const auto& pr = space.pairs[static_cast<size_t>(i)];
                out.at(b, i) = p_a.at(b, pr.first) * p_o.at(b, pr.second);
            }
    return out;
}

std::map<std::string, std::string> model_meta(const ModelConfig& cfg,
                                              const std::vector<std::string>& attr_vocab,
                                              const std::vector<std::string>& object_vocab) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg.gamma);
    std::map<std::string, std::string> meta;
    meta["model.input_dim"] = std::to_string(cfg.input_dim);
    meta["model.feature_dim"] = std::to_string(cfg.feature_dim);
    meta["model.attr_embed_dim"] = std::to_string(cfg.attr_embed_dim);
    meta["model.n_attrs"] = std::to_string(cfg.n_attrs);
    meta["model.n_objects"] = std::to_string(cfg.n_objects);
    meta["model.attn_hidden"] = std::to_string(cfg.attn_hidden);
    meta["model.trunk_hidden"] = std::to_string(cfg.trunk_hidden);
    meta["model.cls_hidden"] = std::to_string(cfg.cls_hidden);
    meta["model.gamma"] = buf;
    meta["model.attr_cls_input"] = attr_cls_input_name(cfg.attr_cls_input);
    meta["model.identity_pin"] = cfg.identity_pin ? "1" : "0";
    meta["model.attr_vocab_hash"] = std::to_string(vocab_hash(attr_vocab));
    meta["model.object_vocab_hash"] = std::to_string(vocab_hash(object_vocab));
    return meta;
}

void verify_model_meta(const std::map<std::string, std::string>& meta, const ModelConfig& cfg,
                       const std::vector<std::string>& attr_vocab,
                       const std::vector<std::string>& object_vocab) {
    // gamma is a runtime knob, not an architecture property; it may differ
    auto expected = model_meta(cfg, attr_vocab, object_vocab);
    expected.erase("model.gamma");
    for (const auto& [key, want] : expected) {
        auto it = meta.find(key);
        if (it == meta.end())
            throw DataError("checkpoint is missing model header field " + key);
        if (it->second != want)
            throw DataError("checkpoint does not match this model: " + key + " is " +
                            it->second + ", expected " + want);
    }
}

ModelConfig model_config_from_meta(const Checkpoint& ck, const std::string& source) {
    static const char* required[] = {
        "model.input_dim",  "model.feature_dim", "model.attr_embed_dim",
        "model.n_attrs",    "model.n_objects",   "model.attn_hidden",
        "model.trunk_hidden", "model.cls_hidden", "model.gamma",
        "model.attr_cls_input", "model.identity_pin",
    };
    for (const char* key : required)
        if (!ck.has_meta(key))
            throw DataError(source + " is not a model checkpoint (missing " + std::string(key) +
                            ")");
    ModelConfig cfg;
    cfg.input_dim = ck.meta_int("model.input_dim");
    cfg.feature_dim = ck.meta_int("model.feature_dim");
    cfg.attr_embed_dim = ck.meta_int("model.attr_embed_dim");
    cfg.n_attrs = ck.meta_int("model.n_attrs");
    cfg.n_objects = ck.meta_int("model.n_objects");
    cfg.attn_hidden = ck.meta_int("model.attn_hidden");
    cfg.trunk_hidden = ck.meta_int("model.trunk_hidden");
    cfg.cls_hidden = ck.meta_int("model.cls_hidden");
    cfg.gamma = ck.meta_real("model.gamma");
    cfg.attr_cls_input = attr_cls_input_from_name(ck.meta_at("model.attr_cls_input"));
    cfg.identity_pin = ck.meta_int("model.identity_pin") != 0;
    return cfg;
}

}  // namespace symcomp
