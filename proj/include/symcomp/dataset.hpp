#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symcomp/tensor.hpp"

namespace symcomp {

// One labeled instance. The feature vector itself lives in Dataset::features;
// `id` is the row index into that matrix.
struct InstanceRecord {
    int64_t id = 0;
    int64_t object_id = 0;
    std::vector<int64_t> attrs;  // sorted ascending, no duplicates

    bool operator==(const InstanceRecord& o) const {
        return id == o.id && object_id == o.object_id && attrs == o.attrs;
    }
};

// (attribute index, object index)
using AttrObjPair = std::pair<int64_t, int64_t>;

// Generator ground truth kept alongside synthetic datasets so tests can
// reconstruct noiseless features independently.
struct SynthTruth {
    Tensor prototypes;  // [n_objects, feature_dim]
    Tensor directions;  // [n_attrs, feature_dim]
};

struct Dataset {
    Tensor features;  // [n_records, feature_dim]
    std::vector<InstanceRecord> records;  // records[i].id == i
    std::vector<std::string> attr_vocab;
    std::vector<std::string> object_vocab;
    int64_t feature_dim = 0;
    std::map<std::string, std::vector<int64_t>> splits;  // name -> record ids

    // Pair lists declared by the manifest (or the generator). When absent the
    // feasible pair set falls back to pairs observed in the data.
    bool has_declared_pairs = false;
    std::vector<AttrObjPair> seen_pairs;
    std::vector<AttrObjPair> unseen_pairs;

    std::optional<SynthTruth> truth;

    int64_t n_attrs() const { return static_cast<int64_t>(attr_vocab.size()); }
    int64_t n_objects() const { return static_cast<int64_t>(object_vocab.size()); }

    // Throws DataError naming the split when it does not exist.
    const std::vector<int64_t>& split(const std::string& name) const;

    // Copies of the records belonging to a split, in split order.
    std::vector<InstanceRecord> gather(const std::string& split_name) const;
};

// Reads a dataset from a JSON manifest. Feature blobs are raw little-endian
// matrices (row per record) or a .tsv fallback; labels are a TSV of
// record id, object id, comma-joined attribute indices. All referenced paths
// are resolved relative to the manifest's directory.
Dataset load_dataset(const std::string& manifest_path);

// Writes manifest.json, features.bin, labels.tsv and, when present,
// pairs.json / truth.json into `dir` (created if needed). Returns the
// manifest path. Output bytes are deterministic for a given dataset.
std::string write_dataset(const Dataset& ds, const std::string& dir);

enum class EmbedKind { OneHot, WordVector };

EmbedKind embed_kind_from_name(const std::string& name);

// Attribute embedding matrix, one row per vocab entry. one_hot ignores the
// path and returns the identity. word_vector reads "token v1 .. vd" lines;
// multiword vocab entries (split on spaces and '_') average their constituent
// word vectors, and every constituent must be present in the file.
Tensor load_attr_embeddings(const std::vector<std::string>& vocab,
                            const std::string& path, EmbedKind kind);

// Pearson correlation of the binary attribute indicator vectors over the
// given records. Zero-variance attributes get 0 off-diagonal and 1 on the
// diagonal, with a warning per such attribute. Warnings go into `warnings`
// when non-null, otherwise to stderr.
Tensor compute_correlation(const std::vector<InstanceRecord>& records,
                           int64_t n_attrs,
                           std::vector<std::string>* warnings = nullptr);

// Sum of C[a][j] over j in attr_set, accumulated in ascending j order so the
// result is reproducible regardless of the caller's set ordering. Empty set
// returns 0.
double corr_to_set(const Tensor& corr, int64_t attr,
                   const std::vector<int64_t>& attr_set);

struct SynthConfig {
    int64_t n_attrs = 6;
    int64_t n_objects = 5;
    int64_t feature_dim = 32;
    int64_t per_pair_count = 40;
    double noise_sigma = 0.05;
    uint64_t seed = 7;

    // multi=false: exactly one attribute per record. multi=true: one primary
    // attribute per record plus extras sampled with base_rate (and with the
    // planted probabilities from corr_structure).
    bool multi = false;
    double base_rate = 0.3;

    // "i-j:p" entries joined by commas, e.g. "0-1:0.95,2-3:0.8". Plants label
    // co-occurrence with probability p and a shared feature-direction
    // component for the two attributes. Requires multi mode.
    std::string corr_structure;

    double test_fraction = 0.25;
    double val_fraction = 0.0;

    // Number of (attribute, object) pairs held out of train entirely; their
    // records all land in the test split. Single-attribute mode only.
    int64_t unseen_pairs = 0;

    double proto_scale = 2.0;
    double dir_scale = 1.0;
    Dtype dtype = Dtype::F64;
};

// Deterministic synthetic dataset: features are
// object prototype + sum of attribute directions + gaussian noise.
Dataset synth_generate(const SynthConfig& cfg,
                       std::vector<std::string>* warnings = nullptr);

// Full (attribute x object) grid with masks. Pairs are ordered attribute-major
// so index_of(a, o) == a * n_objects + o.
struct PairSpace {
    int64_t n_attrs = 0;
    int64_t n_objects = 0;
    std::vector<AttrObjPair> pairs;
    std::vector<char> seen_mask;
    std::vector<char> unseen_mask;
    std::vector<char> feasible_mask;

    int64_t size() const { return static_cast<int64_t>(pairs.size()); }
    int64_t index_of(int64_t attr, int64_t object) const;
};

// Core pair bookkeeping. feasible = declared list if given, otherwise the
// union of observed train/test pairs and the unseen list. seen = pairs
// observed in train. Errors: a record with more than one attribute, an unseen
// pair that occurs in train, or a train/test pair outside the feasible set.
PairSpace build_pair_space(const std::vector<InstanceRecord>& train_records,
                           const std::vector<InstanceRecord>& test_records,
                           const std::optional<std::vector<AttrObjPair>>& declared,
                           const std::vector<AttrObjPair>& unseen,
                           int64_t n_attrs, int64_t n_objects);

// Dataset-level wrapper using the train/test splits and the declared pair
// lists when the manifest provided them.
PairSpace build_pair_space(const Dataset& ds,
                           const std::string& train_split = "train",
                           const std::string& test_split = "test");

}  // namespace symcomp
