#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "symcomp/model.hpp"

namespace symcomp {

enum class LossMode { Single, Multi };
LossMode loss_mode_from_name(const std::string& name);
const char* loss_mode_name(LossMode m);

// Distance between embedding rows. L2 is the production choice; L1 and
// cosine exist to reproduce the distance ablation and nothing else.
enum class DistanceKind { L2, L1, Cosine };
DistanceKind distance_from_name(const std::string& name);
const char* distance_name(DistanceKind k);

Val row_distance(Tape& tape, Val a, Val b, DistanceKind kind);

struct LossWeights {
    double l1 = 1.0;  // symmetry
    double l2 = 1.0;  // axioms (closure + invertibility + commutativity)
    double l3 = 1.0;  // attribute classification
    double l4 = 1.0;  // object classification
    double l5 = 1.0;  // triplet slot
    double l6 = 0.0;  // multi mode: correlation-ordered removal triplet
    double l7 = 0.0;  // multi mode: attention-correlation triplet
    double alpha = 0.5;
    LossMode mode = LossMode::Single;
    DistanceKind distance = DistanceKind::L2;
};

// Throws ConfigError on negative weights or a non-positive margin.
void validate_weights(const LossWeights& w);

// Component values for one step. Unpopulated entries stay NaN so total_loss
// can tell "absent" from "zero".
struct LossBreakdown {
    double sym = std::nan("");
    double clo = std::nan("");
    double inv = std::nan("");
    double com = std::nan("");
    double cls_a = std::nan("");
    double cls_o = std::nan("");
    double tri = std::nan("");
    double tri_sym = std::nan("");
    double tri_corr = std::nan("");
    double total = std::nan("");
};

// l1*sym + l2*(clo+inv+com) + l3*cls_a + l4*cls_o + l5*tri_slot, where the
// triplet slot in multi mode is tri + l6*tri_sym + l7*tri_corr. Every
// component the mode requires must be populated, whatever its weight.
double total_loss(const LossBreakdown& b, const LossWeights& w);

// First-level transform outputs most loss terms share. f must already live
// in the transform space; rows of a_has / a_not pair up with rows of f.
struct TransformSet {
    Val f;
    Val p_has;  // f . T+(a_has)
    Val m_has;  // f . T-(a_has)
    Val p_not;  // f . T+(a_not)
    Val m_not;  // f . T-(a_not)
};
TransformSet build_transform_set(const TransformOps& ops, Tape& tape, Val f, Val a_has,
                                 Val a_not, BnMode bn);

// Symmetry plus the three group axioms, sharing one TransformSet. Each
// scalar is a mean over rows, or a weighted sum when row_weights is given
// (the multi-attribute path passes expansion weights through here).
struct SymAxiomGraph {
    Val sym, clo, inv, com;
    TransformSet set;
};
SymAxiomGraph sym_axiom_losses(const TransformOps& ops, Tape& tape, Val f, Val a_has, Val a_not,
                               BnMode bn, DistanceKind dist,
                               const Tensor* row_weights = nullptr);

// Attaching a present attribute or removing an absent one should not move
// the embedding: dist(f, f.T+(a_has)) + dist(f, f.T-(a_not)).
Val symmetry_loss(const TransformOps& ops, Tape& tape, Val f, Val a_has, Val a_not, BnMode bn,
                  DistanceKind dist = DistanceKind::L2);
double symmetry_loss(const TransformOps& ops, const Tensor& f, const Tensor& a_has,
                     const Tensor& a_not, BnMode bn = BnMode::Eval,
                     DistanceKind dist = DistanceKind::L2);

// clo: composing onto an already-transformed embedding stays in the group;
// inv: couple then decouple (and vice versa) returns to the start;
// com: attaching one attribute and removing another commutes.
struct AxiomGraph {
    Val clo, inv, com;
};
struct AxiomValues {
    double clo, inv, com;
};
AxiomGraph axiom_losses(const TransformOps& ops, Tape& tape, Val f, Val a_has, Val a_not,
                        BnMode bn, DistanceKind dist = DistanceKind::L2);
AxiomValues axiom_losses(const TransformOps& ops, const Tensor& f, const Tensor& a_has,
                         const Tensor& a_not, BnMode bn = BnMode::Eval,
                         DistanceKind dist = DistanceKind::L2);

// Attribute head reads the transformed embeddings (their difference from f
// under the Difference wiring): f.T+(a_has) and f.T-(a_not) keep target
// a_has, f.T+(a_not) acquires target a_not. Object head reads the original
// and every first-level transform; the object must never change.
struct ClassificationGraph {
    Val cls_a, cls_o;
};
ClassificationGraph classification_losses(const TransformOps& ops, Tape& tape,
                                          const TransformSet& set,
                                          const std::vector<int64_t>& attr_has,
                                          const std::vector<int64_t>& attr_not,
                                          const std::vector<int64_t>& objects,
                                          AttrClsInput wiring);

// Moving distances for every (row of f, attribute) combination, flattened
// row-major: element b*n + i belongs to instance b and attribute i.
struct RmdGraph {
    Val d_plus, d_minus;
};
RmdGraph rmd_distances(const TransformOps& ops, Tape& tape, Val f, const Tensor& attr_embeds,
                       BnMode bn, DistanceKind dist = DistanceKind::L2);

// Present attributes should have d+ at least alpha below d-, absent ones the
// reverse. Sum over attributes, mean over the batch.
Val rmd_triplet(Tape& tape, Val d_plus, Val d_minus,
                const std::vector<std::vector<int64_t>>& attr_sets, int64_t n_attrs,
                double alpha);
double rmd_triplet_single(const Tensor& d_plus, const Tensor& d_minus,
                          const std::vector<std::vector<int64_t>>& attr_sets, double alpha);

// Of two absent attributes, removing the one more correlated with the
// existing set should move the embedding farther.
double multi_sym_triplet(double corr_i, double corr_j, double d_minus_i, double d_minus_j,
                         double alpha);
struct TriSymSample {
    int64_t row_i, row_j;    // indices into the flattened d_minus vector
    double corr_i, corr_j;   // corr_to_set of the two absent attributes
};
Val multi_sym_triplet(Tape& tape, Val d_minus_rows, const std::vector<TriSymSample>& samples,
                      double alpha, int64_t batch);

// Attention vectors of more-correlated attribute pairs should sit closer
// than those of less-correlated pairs, in both networks.
double attr_corr_triplet(double corr_ij, double corr_ik, double dp_ij, double dp_ik,
                         double dm_ij, double dm_ik, double alpha);
struct TriCorrSample {
    int64_t i, j, k;          // three distinct attribute indices
    double corr_ij, corr_ik;  // pairwise correlations corr(i,j), corr(i,k)
};
Val attr_corr_triplet(const TransformOps& ops, Tape& tape, const Tensor& attr_embeds,
                      const std::vector<TriCorrSample>& samples, double alpha, BnMode bn,
                      DistanceKind dist, int64_t batch);

}  // namespace symcomp
