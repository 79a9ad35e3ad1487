#pragma once

#include <map>
#include <string>
#include <vector>

#include "symcomp/dataset.hpp"
#include "symcomp/layers.hpp"

namespace symcomp {

// Couple attaches an attribute to a feature, Decouple removes one. The two
// networks share their architecture but never their weights.
enum class TransformMode { Couple, Decouple };

// What the attribute classifier reads during training: the transformed
// feature itself, or its difference from the input feature.
enum class AttrClsInput { Transformed, Difference };

AttrClsInput attr_cls_input_from_name(const std::string& name);
const char* attr_cls_input_name(AttrClsInput v);

struct ModelConfig {
    int64_t input_dim = 0;  // raw feature width; 0 means feature_dim (no projection layer)
    int64_t feature_dim = 0;
    int64_t attr_embed_dim = 0;
    int64_t n_attrs = 0;
    int64_t n_objects = 0;
    int64_t attn_hidden = 0;   // 0 -> feature_dim
    int64_t trunk_hidden = 0;  // 0 -> 2 * feature_dim
    int64_t cls_hidden = 0;    // 0 -> feature_dim
    double gamma = 1.0;        // score scale before the sigmoid
    AttrClsInput attr_cls_input = AttrClsInput::Transformed;
    // Diagnostic switch: both transforms return their input untouched. Every
    // distance and axiom defect is then exactly zero, which pins down the
    // degenerate baseline in tests.
    bool identity_pin = false;
};

// Relative moving distances for a batch: row = instance, column = attribute.
struct RmdResult {
    Tensor d_plus;   // distance moved by attaching the attribute
    Tensor d_minus;  // distance moved by removing it
    Tensor d;        // d_minus - d_plus; >= 0 reads as "attribute present"
    double gamma = 1.0;
};

// Graph-building interface the loss terms are written against. Production
// code uses TransformModel; loss tests substitute closed-form transforms to
// get hand-checkable values.
class TransformOps {
public:
    virtual ~TransformOps() = default;
    virtual Val transform(Tape& tape, Val f, Val a, TransformMode mode, BnMode bn) const = 0;
    virtual Val attention(Tape& tape, Val a, TransformMode mode, BnMode bn) const = 0;
    virtual Val attr_logits(Tape& tape, Val f) const = 0;
    virtual Val object_logits(Tape& tape, Val f) const = 0;
    virtual const ModelConfig& config() const = 0;
};

// The identity transformation is a skip connection, so applying it is a
// no-op by construction rather than a learned approximation.
inline const Tensor& identity_transform(const Tensor& f) { return f; }
inline Val identity_transform(Val f) { return f; }

class TransformModel : public TransformOps {
public:
    // Registers all parameters in `store` (prefixes: proj, con, decon,
    // cls_attr, cls_obj). Zero hidden widths resolve to their defaults.
    TransformModel(const ModelConfig& cfg, ParamStore& store);

    const ModelConfig& config() const override { return cfg_; }
    ParamStore& store() const { return *store_; }

    // Maps raw features into the transform space; identity when the model was
    // built without a projection layer.
    Val project(Tape& tape, Val x) const;

    // att = sigmoid(fc2(relu(bn(fc1(a))))), one value per feature dimension
    Val attention(Tape& tape, Val a, TransformMode mode, BnMode bn) const override;

    // f' = trunk(concat(f o att + f, a)); rows of f and a pair up
    Val transform(Tape& tape, Val f, Val a, TransformMode mode, BnMode bn) const override;

    Val attr_logits(Tape& tape, Val f) const override;
    Val object_logits(Tape& tape, Val f) const override;

    // ---- whole-tensor inference helpers (eval-mode BatchNorm) ----

    // One batched pass over every (instance, attribute) combination.
    RmdResult rmd(const Tensor& features, const Tensor& attr_embeds) const;

    // Transform applied to raw features outside any training graph.
    Tensor transform_eval(const Tensor& features, const Tensor& attr_rows,
                          TransformMode mode) const;

    Tensor object_probs(const Tensor& features) const;  // softmax rows
    Tensor attr_probs(const RmdResult& scores) const;   // sigmoid(gamma * d)

private:
    struct Half {
        AffineLayer attn_fc1, attn_fc2;
        BatchNormLayer attn_bn;
        AffineLayer trunk_fc1, trunk_fc2;
        BatchNormLayer trunk_bn;
    };
    Half make_half(const std::string& prefix);
    const Half& half(TransformMode mode) const {
        return mode == TransformMode::Couple ? con_ : decon_;
    }

    ModelConfig cfg_;
    ParamStore* store_ = nullptr;
    bool has_proj_ = false;
    AffineLayer proj_;
    Half con_, decon_;
    AffineLayer cls_attr_fc1_, cls_attr_fc2_;
    AffineLayer cls_obj_fc1_, cls_obj_fc2_;
};

// p^i = sigmoid(gamma * d^i)
Tensor attr_prob(const Tensor& d, double gamma);

// present iff d^i >= 0 (ties count as present)
std::vector<char> attr_decision(const Tensor& d);

// Outer product p_a x p_o per row, with infeasible pairs pinned to -inf so
// any argmax or top-k pass skips them. Throws when nothing is feasible.
Tensor pair_scores(const Tensor& p_a, const Tensor& p_o, const PairSpace& space);

// Checkpoint header guarding against loading weights into a mismatched
// model: resolved dimensions plus vocab hashes.
std::map<std::string, std::string> model_meta(const ModelConfig& cfg,
                                              const std::vector<std::string>& attr_vocab,
                                              const std::vector<std::string>& object_vocab);
void verify_model_meta(const std::map<std::string, std::string>& meta, const ModelConfig& cfg,
                       const std::vector<std::string>& attr_vocab,
                       const std::vector<std::string>& object_vocab);

// Reverse direction: rebuild the architecture a checkpoint header describes.
// `source` names the checkpoint in error messages. Throws DataError when a
// header field is missing.
struct Checkpoint;
ModelConfig model_config_from_meta(const Checkpoint& ck, const std::string& source);

}  // namespace symcomp
