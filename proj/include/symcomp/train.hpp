#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symcomp/dataset.hpp"
#include "symcomp/losses.hpp"
#include "symcomp/model.hpp"

namespace symcomp {

// Everything a run needs, loadable from a flat key=value file and
// overridable one key at a time (the CLI funnels flags through
// apply_config_kv so files and flags cannot drift apart).
struct TrainConfig {
    // data
    std::string dataset;          // manifest path
    std::string preset;           // last preset applied, for the report
    std::string attr_embeddings;  // word-vector file; unused for one-hot
    EmbedKind embed_kind = EmbedKind::OneHot;
    std::string train_split = "train";
    std::string val_split;  // empty -> use "val" when the dataset has one
    std::string test_split = "test";

    // model
    int64_t feature_dim = 0;  // transform-space width; 0 -> dataset width, no projection
    int64_t attn_hidden = 0;
    int64_t trunk_hidden = 0;
    int64_t cls_hidden = 0;
    double gamma = 1.0;
    AttrClsInput attr_cls_input = AttrClsInput::Transformed;
    bool identity_pin = false;

    // optimization
    double lr = 1e-2;
    double momentum = 0.9;
    int64_t batch_size = 32;
    int64_t epochs = 10;
    int64_t warmup_epochs = 0;  // epochs with the transform losses off (classifiers + triplets only)
    uint64_t seed = 7;
    Dtype dtype = Dtype::F64;
    LossWeights weights;

    // output
    std::string out_dir = "run";
    int64_t log_interval = 0;         // steps between step records; 0 -> epoch records only
    int64_t checkpoint_interval = 1;  // epochs between last.ckpt rewrites
    std::string resume;               // checkpoint to continue from
};

// Reads key=value lines ('#' comments, blank lines allowed). A preset line
// applies immediately, so later lines override preset values.
TrainConfig load_train_config(const std::string& path);

// Applies one override. Unknown keys and unparsable values throw ConfigError
// naming the key.
void apply_config_kv(TrainConfig& cfg, const std::string& key, const std::string& value);

// Named hyper-parameter bundles (benchmark defaults plus the synthetic
// pair). Presets only touch model/optimization values, never paths or seeds.
void apply_preset(TrainConfig& cfg, const std::string& name);
std::vector<std::string> preset_names();

// lr > 0, batch_size >= 2, epochs >= 1, weight sanity; throws ConfigError.
void validate_train_config(const TrainConfig& cfg);

// Same-object, attribute-disjoint negative sampling for the single-attribute
// losses. Eligibility is precomputed per object so each draw costs one
// uniform_int.
class NegativeSampler {
public:
    explicit NegativeSampler(const std::vector<InstanceRecord>& records);

    // Uniformly random eligible record id, or nullopt when the record's
    // object never appears with a disjoint attribute set.
    std::optional<int64_t> sample(const InstanceRecord& record, Rng& rng) const;

private:
    const std::vector<InstanceRecord>* records_;
    std::map<int64_t, std::vector<int64_t>> by_object_;  // object id -> record indices
};

// Attribute picks for one record's multi-attribute triplets: every
// (strongly related, neutral) pair of absent attributes, plus one random
// distinct attribute triple.
struct MultiSample {
    std::vector<std::pair<int64_t, int64_t>> sym_pairs;  // (strong, neutral)
    std::array<int64_t, 3> corr_triple{};
};

// Ranks the record's absent attributes by corr_to_set (descending, ties by
// ascending index). With k = max(1, floor(count/10)): strong = top-k plus
// bottom-k, neutral = the k middle ranks starting at floor((count-k)/2).
// Pairs with equal members are dropped. Throws ConfigError when fewer than
// three attributes exist in total.
MultiSample sample_multi(const InstanceRecord& record, const Tensor& corr, int64_t n_attrs,
                         Rng& rng);

// One epoch's accounting. Component means average over the steps that
// computed the component (a batch with no usable negative pair skips the
// transform and classifier terms); absent components stay NaN.
struct EpochStats {
    LossBreakdown mean;
    int64_t steps = 0;
    int64_t records_visited = 0;
    int64_t records_used = 0;
    int64_t records_skipped = 0;  // no eligible negative / no absent attribute
};

struct FitReport {
    std::string last_checkpoint;
    std::string best_checkpoint;  // equals last_checkpoint without a validation split
    int64_t best_epoch = -1;      // 1-based; -1 -> no validation split
    double best_metric = 0.0;
    std::vector<EpochStats> curve;  // epochs run by this call (resume shortens it)
    std::map<std::string, double> test_metrics;
    std::string report_path;
};

// Owns one run: dataset, attribute embeddings, parameters, and the epoch
// loop. Training mutates the store single-threaded; the inference helpers
// used for validation are read-only.
class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);   // loads cfg.dataset
    Trainer(const TrainConfig& cfg, Dataset dataset);

    const TrainConfig& config() const { return cfg_; }
    const Dataset& data() const { return data_; }
    TransformModel& model() { return *model_; }
    ParamStore& store() { return store_; }
    const Tensor& attr_embeddings() const { return attr_embeds_; }
    const Tensor& correlation() const;  // multi mode only; ConfigError otherwise
    int64_t start_epoch() const { return start_epoch_; }

    // One seeded pass over the train split: shuffle, batch, build the
    // mode-appropriate loss graph, step SGD. Epoch indices are absolute so a
    // resumed run draws the same RNG streams as an uninterrupted one.
    // Throws NumericError naming the last saved checkpoint when the total
    // loss goes non-finite.
    EpochStats train_epoch(int64_t epoch);

    // Runs the remaining epochs, writes last.ckpt / best.ckpt, the loss
    // curve TSV, the step/epoch log, and report.json under cfg.out_dir.
    FitReport fit();

    // Mean of attribute top-1 and object top-1 on the given split,
    // evaluation-mode BatchNorm throughout.
    double validation_metric(const std::string& split) const;
    std::map<std::string, double> split_metrics(const std::string& split) const;

private:
    void init(bool load_dataset);
    EpochStats run_epoch(int64_t epoch);
    LossWeights effective_weights(int64_t epoch) const;
    void save(const std::string& path, int64_t completed_epochs);

    TrainConfig cfg_;
    Dataset data_;
    std::vector<InstanceRecord> train_records_;
    ModelConfig model_cfg_;
    ParamStore store_;
    std::unique_ptr<TransformModel> model_;
    std::unique_ptr<NegativeSampler> negatives_;
    Tensor attr_embeds_;
    Tensor corr_;
    std::ostream* step_log_ = nullptr;  // set by fit around the epoch loop
    std::string resolved_val_split_;  // empty when no validation split exists
    int64_t start_epoch_ = 0;
    double best_metric_ = 0.0;
    int64_t best_epoch_ = -1;
    std::string last_ckpt_path_;  // last successfully written checkpoint
};

}  // namespace symcomp
