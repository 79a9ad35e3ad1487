#pragma once

#include <map>
#include <string>
#include <vector>

#include "symcomp/dataset.hpp"
#include "symcomp/model.hpp"

namespace symcomp {

// Fraction of rows whose truth label ranks within the k best scores. Ties
// resolve by ascending column index, so results are reproducible.
double topk_accuracy(const Tensor& scores, const std::vector<int64_t>& truth, int64_t k);

// Fraction of rows whose highest-scoring column belongs to the row's truth
// set (multi-label top-1; ties again by ascending index).
double argmax_membership(const Tensor& scores, const std::vector<std::vector<int64_t>>& truth);

// 0/1 matrix [n_records, n_attrs] marking attribute membership per record.
Tensor attr_label_matrix(const std::vector<InstanceRecord>& records, int64_t n_attrs);

struct MaucResult {
    double mean = 0.0;
    std::vector<double> per_attr;   // ROC-AUC per attribute; NaN when excluded
    std::vector<int64_t> excluded;  // attributes lacking a positive or a negative
};

// Per-attribute ROC-AUC with tied scores counted half, averaged over the
// attributes that have both classes. Attributes with a single class are
// excluded with a warning; all excluded is an error.
MaucResult mauc(const Tensor& scores, const Tensor& labels,
                std::vector<std::string>* warnings = nullptr);

// Spearman rank correlation (midranks on ties). Returns 0 when either side
// has no rank variance.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Top-k accuracy over masked pair scores (rows from pair_scores). Every truth
// pair must be feasible in the space.
double czsl_topk(const Tensor& scores, const std::vector<int64_t>& truth_pair,
                 const PairSpace& space, int64_t k);

// Model wrapper: scores every feasible pair as p_attr * p_obj and ranks the
// truth pair of each single-attribute record.
double czsl_topk(const TransformModel& model, const Tensor& features,
                 const Tensor& attr_embeds, const std::vector<InstanceRecord>& records,
                 const PairSpace& space, int64_t k);

// Builds the masked pair score matrix the CZSL metrics consume.
Tensor czsl_pair_scores(const TransformModel& model, const Tensor& features,
                        const Tensor& attr_embeds, const PairSpace& space);

struct BiasPoint {
    double bias = 0.0;  // +-infinity at the restricted-candidate endpoints
    double seen_acc = 0.0;
    double unseen_acc = 0.0;
};

struct GczslReport {
    std::vector<BiasPoint> curve;  // one point per calibration bias, ascending
    double best_hm = 0.0;          // best harmonic mean over the sweep
    double best_bias = 0.0;
    double seen_at_best = 0.0;
    double unseen_at_best = 0.0;
    double auc = 0.0;     // area under the seen/unseen accuracy trade-off
    double closed = 0.0;  // unseen-instance top-1 with unseen-only candidates
};

// Calibration sweep: each bias is added to every unseen-pair score, then
// top-1 accuracy is measured separately on instances whose truth pair is
// seen and on those whose truth is unseen. The grid visits every achievable
// operating point: per unseen-truth instance the bias that lifts its truth
// to the best seen score, midpoints between consecutive candidates, and the
// two candidate-restriction endpoints.
GczslReport generalized_czsl(const Tensor& scores, const std::vector<int64_t>& truth_pair,
                             const PairSpace& space);

GczslReport generalized_czsl(const TransformModel& model, const Tensor& features,
                             const Tensor& attr_embeds,
                             const std::vector<InstanceRecord>& records, const PairSpace& space);

struct EvalReport {
    std::map<std::string, double> scalars;  // metric name -> value
    std::vector<double> attr_auc;           // per-attribute AUC (multi mode)
    std::vector<BiasPoint> bias_curve;      // generalized sweep (when run)
};

}  // namespace symcomp
