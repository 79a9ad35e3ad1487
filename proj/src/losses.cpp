#include "symcomp/losses.hpp"

#include <algorithm>

#include "symcomp/common.hpp"

namespace symcomp {

LossMode loss_mode_from_name(const std::string& name) {
    if (name == "single") return LossMode::Single;
    if (name == "multi") return LossMode::Multi;
    throw ConfigError("unknown loss mode \"" + name + "\" (expected single or multi)");
}

const char* loss_mode_name(LossMode m) { return m == LossMode::Single ? "single" : "multi"; }

DistanceKind distance_from_name(const std::string& name) {
    if (name == "l2") return DistanceKind::L2;
    if (name == "l1") return DistanceKind::L1;
    if (name == "cosine") return DistanceKind::Cosine;
    throw ConfigError("unknown distance \"" + name + "\" (expected l2, l1 or cosine)");
}

const char* distance_name(DistanceKind k) {
    switch (k) {
        case DistanceKind::L2: return "l2";
        case DistanceKind::L1: return "l1";
        default: return "cosine";
    }
}

Val row_distance(Tape& tape, Val a, Val b, DistanceKind kind) {
    switch (kind) {
        case DistanceKind::L2:
            return tape.row_l2norm(tape.sub(a, b));
        case DistanceKind::L1:
            return tape.row_l1norm(tape.sub(a, b));
        default: {
            // 1 - cos(a, b); degenerate zero rows surface as a division error
            Val denom = tape.mul(tape.row_l2norm(a), tape.row_l2norm(b));
            Val cos = tape.div(tape.row_dot(a, b), denom);
            return tape.add_const(tape.scale(cos, -1.0), 1.0);
        }
    }
}

void validate_weights(const LossWeights& w) {
    for (double v : {w.l1, w.l2, w.l3, w.l4, w.l5, w.l6, w.l7})
        if (v < 0.0 || !std::isfinite(v))
            throw ConfigError("loss weights must be finite and non-negative");
    if (!(w.alpha > 0.0)) throw ConfigError("triplet margin alpha must be positive");
}

double total_loss(const LossBreakdown& b, const LossWeights& w) {
    validate_weights(w);
    auto need = [&](double v, const char* name) {
        if (std::isnan(v))
            throw ConfigError(std::string("total_loss: component ") + name +
                              " is not populated for " + loss_mode_name(w.mode) + " mode");
        return v;
    };
    double tri_slot = need(b.tri, "tri");
    if (w.mode == LossMode::Multi)
        tri_slot += w.l6 * need(b.tri_sym, "tri_sym") + w.l7 * need(b.tri_corr, "tri_corr");
    return w.l1 * need(b.sym, "sym") +
           w.l2 * (need(b.clo, "clo") + need(b.inv, "inv") + need(b.com, "com")) +
           w.l3 * need(b.cls_a, "cls_a") + w.l4 * need(b.cls_o, "cls_o") + w.l5 * tri_slot;
}

namespace {

// mean over rows, or a caller-supplied weighted sum
Val reduce_rows(Tape& tape, Val rows, const Tensor* weights) {
    if (!weights) return tape.mean(rows);
    if (weights->numel() != tape.value(rows).numel())
        throw ShapeError("loss row weights have " + std::to_string(weights->numel()) +
                         " entries for " + std::to_string(tape.value(rows).numel()) + " rows");
    return tape.weighted_sum(rows, *weights);
}

}  // namespace

TransformSet build_transform_set(const TransformOps& ops, Tape& tape, Val f, Val a_has,
                                 Val a_not, BnMode bn) {
    // the losses assume a_has is a member attribute and a_not is not, so a
    // row where both embeddings coincide breaks every term's precondition
    const Tensor& th = tape.value(a_has);
    const Tensor& tn = tape.value(a_not);
    if (th.shape() == tn.shape()) {
        int64_t nrows = th.rank() == 2 ? th.rows() : 1;
        int64_t ncols = th.rank() == 2 ? th.cols() : th.numel();
        for (int64_t r = 0; r < nrows; ++r) {
            bool same = true;
            for (int64_t c = 0; c < ncols && same; ++c)
                if (th.at(r * ncols + c) != tn.at(r * ncols + c)) same = false;
            if (same)
                throw DataError("transform losses: a_has and a_not embeddings coincide at row " +
                                std::to_string(r));
        }
    }
    TransformSet s;
    s.f = f;
    s.p_has = ops.transform(tape, f, a_has, TransformMode::Couple, bn);
    s.m_has = ops.transform(tape, f, a_has, TransformMode::Decouple, bn);
    s.p_not = ops.transform(tape, f, a_not, TransformMode::Couple, bn);
    s.m_not = ops.transform(tape, f, a_not, TransformMode::Decouple, bn);
    return s;
}

SymAxiomGraph sym_axiom_losses(const TransformOps& ops, Tape& tape, Val f, Val a_has, Val a_not,
                               BnMode bn, DistanceKind dist, const Tensor* row_weights) {
    SymAxiomGraph g;
    g.set = build_transform_set(ops, tape, f, a_has, a_not, bn);
    const TransformSet& s = g.set;

    Val sym_rows = tape.add(row_distance(tape, s.f, s.p_has, dist),
                            row_distance(tape, s.f, s.m_not, dist));

    // second-level compositions
    Val pm_has = ops.transform(tape, s.p_has, a_has, TransformMode::Decouple, bn);
    Val mp_not = ops.transform(tape, s.m_not, a_not, TransformMode::Couple, bn);
    Val pm_not = ops.transform(tape, s.p_not, a_not, TransformMode::Decouple, bn);
    Val mp_has = ops.transform(tape, s.m_has, a_has, TransformMode::Couple, bn);
    Val com_left = ops.transform(tape, s.p_has, a_not, TransformMode::Decouple, bn);
    Val com_right = ops.transform(tape, s.m_not, a_has, TransformMode::Couple, bn);

    Val clo_rows = tape.add(row_distance(tape, pm_has, s.m_has, dist),
                            row_distance(tape, mp_not, s.p_not, dist));
    Val inv_rows = tape.add(row_distance(tape, pm_not, s.f, dist),
                            row_distance(tape, mp_has, s.f, dist));
    Val com_rows = row_distance(tape, com_left, com_right, dist);

    g.sym = reduce_rows(tape, sym_rows, row_weights);
    g.clo = reduce_rows(tape, clo_rows, row_weights);
    g.inv = reduce_rows(tape, inv_rows, row_weights);
    g.com = reduce_rows(tape, com_rows, row_weights);
    return g;
}

Val symmetry_loss(const TransformOps& ops, Tape& tape, Val f, Val a_has, Val a_not, BnMode bn,
                  DistanceKind dist) {
    return sym_axiom_losses(ops, tape, f, a_has, a_not, bn, dist).sym;
}

double symmetry_loss(const TransformOps& ops, const Tensor& f, const Tensor& a_has,
                     const Tensor& a_not, BnMode bn, DistanceKind dist) {
    Tape tape;
    Val s = symmetry_loss(ops, tape, tape.input(f), tape.input(a_has), tape.input(a_not), bn,
                          dist);
    return tape.scalar(s);
}

AxiomGraph axiom_losses(const TransformOps& ops, Tape& tape, Val f, Val a_has, Val a_not,
                        BnMode bn, DistanceKind dist) {
    SymAxiomGraph g = sym_axiom_losses(ops, tape, f, a_has, a_not, bn, dist);
    return AxiomGraph{g.clo, g.inv, g.com};
}

AxiomValues axiom_losses(const TransformOps& ops, const Tensor& f, const Tensor& a_has,
                         const Tensor& a_not, BnMode bn, DistanceKind dist) {
    Tape tape;
    AxiomGraph g = axiom_losses(ops, tape, tape.input(f), tape.input(a_has), tape.input(a_not),
                                bn, dist);
    return AxiomValues{tape.scalar(g.clo), tape.scalar(g.inv), tape.scalar(g.com)};
}

ClassificationGraph classification_losses(const TransformOps& ops, Tape& tape,
                                          const TransformSet& set,
                                          const std::vector<int64_t>& attr_has,
                                          const std::vector<int64_t>& attr_not,
                                          const std::vector<int64_t>& objects,
                                          AttrClsInput wiring) {
    auto cls_input = [&](Val transformed) {
        return wiring == AttrClsInput::Transformed ? transformed
                                                   : tape.sub(transformed, set.f);
    };
    Val a1 = tape.cross_entropy_mean(ops.attr_logits(tape, cls_input(set.p_has)), attr_has);
    Val a2 = tape.cross_entropy_mean(ops.attr_logits(tape, cls_input(set.m_not)), attr_has);
    Val a3 = tape.cross_entropy_mean(ops.attr_logits(tape, cls_input(set.p_not)), attr_not);
    ClassificationGraph g;
    g.cls_a = tape.scale(tape.add(tape.add(a1, a2), a3), 1.0 / 3.0);

    Val o = tape.cross_entropy_mean(ops.object_logits(tape, set.f), objects);
    for (Val v : {set.p_has, set.m_has, set.p_not, set.m_not})
        o = tape.add(o, tape.cross_entropy_mean(ops.object_logits(tape, v), objects));
    g.cls_o = tape.scale(o, 1.0 / 5.0);
    return g;
}

RmdGraph rmd_distances(const TransformOps& ops, Tape& tape, Val f, const Tensor& attr_embeds,
                       BnMode bn, DistanceKind dist) {
    int64_t batch = tape.value(f).rows();
    int64_t n = attr_embeds.rows();
    std::vector<int64_t> tile(static_cast<size_t>(batch * n));
    Tensor astack = Tensor::zeros({batch * n, attr_embeds.cols()}, attr_embeds.dtype());
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t i = 0; i < n; ++i) {
            tile[static_cast<size_t>(b * n + i)] = b;
            for (int64_t c = 0; c < attr_embeds.cols(); ++c)
                astack.at(b * n + i, c) = attr_embeds.at(i, c);
        }
    Val fstack = tape.gather_rows(f, tile);
    Val a = tape.input(std::move(astack));
    RmdGraph g;
    g.d_plus = row_distance(tape, fstack,
                            ops.transform(tape, fstack, a, TransformMode::Couple, bn), dist);
    g.d_minus = row_distance(tape, fstack,
                             ops.transform(tape, fstack, a, TransformMode::Decouple, bn), dist);
    return g;
}

Val rmd_triplet(Tape& tape, Val d_plus, Val d_minus,
                const std::vector<std::vector<int64_t>>& attr_sets, int64_t n_attrs,
                double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("rmd_triplet: alpha must be positive");
    int64_t batch = static_cast<int64_t>(attr_sets.size());
    if (batch < 1) throw ConfigError("rmd_triplet: empty batch");
    int64_t rows = batch * n_attrs;
    if (tape.value(d_plus).numel() != rows || tape.value(d_minus).numel() != rows)
        throw ShapeError("rmd_triplet: expected " + std::to_string(rows) +
                         " distances, got " + std::to_string(tape.value(d_plus).numel()));

    // +1 where the attribute exists (hinge wants d+ small), -1 elsewhere
    Tensor sign = Tensor::full({rows}, -1.0);
    for (int64_t b = 0; b < batch; ++b)
        for (int64_t a : attr_sets[static_cast<size_t>(b)]) {
            if (a < 0 || a >= n_attrs)
                throw DataError("rmd_triplet: attribute index out of range: " + std::to_string(a));
            sign.at(b * n_attrs + a) = 1.0;
        }
    Val signed_diff = tape.mul(tape.sub(d_plus, d_minus), tape.input(std::move(sign)));
    Val hinge = tape.relu(tape.add_const(signed_diff, alpha));
    Tensor w = Tensor::full({rows}, 1.0 / static_cast<double>(batch));
    return tape.weighted_sum(hinge, w);
}

double rmd_triplet_single(const Tensor& d_plus, const Tensor& d_minus,
                          const std::vector<std::vector<int64_t>>& attr_sets, double alpha) {
    Tape tape;
    int64_t batch = d_plus.rows();
    if (static_cast<int64_t>(attr_sets.size()) != batch)
        throw ShapeError("rmd_triplet_single: one attribute set per row required");
    int64_t n = d_plus.cols();
    Val v = rmd_triplet(tape, tape.input(d_plus.reshaped({batch * n})),
                        tape.input(d_minus.reshaped({batch * n})), attr_sets, n, alpha);
    return tape.scalar(v);
}

double multi_sym_triplet(double corr_i, double corr_j, double d_minus_i, double d_minus_j,
                         double alpha) {
    double v = (corr_i - corr_j) * (d_minus_j - d_minus_i) + alpha;
    return v > 0.0 ? v : 0.0;
}

Val multi_sym_triplet(Tape& tape, Val d_minus_rows, const std::vector<TriSymSample>& samples,
                      double alpha, int64_t batch) {
    if (!(alpha > 0.0)) throw ConfigError("multi_sym_triplet: alpha must be positive");
    if (batch < 1) throw ConfigError("multi_sym_triplet: batch must be positive");
    int64_t rows = tape.value(d_minus_rows).numel();
    std::vector<int64_t> idx_i, idx_j;
    Tensor cdiff = Tensor::zeros({static_cast<int64_t>(samples.size())});
    for (size_t s = 0; s < samples.size(); ++s) {
        const TriSymSample& t = samples[s];
        if (t.row_i == t.row_j)
            throw ConfigError("multi_sym_triplet: the two absent attributes must differ");
        if (t.row_i < 0 || t.row_i >= rows || t.row_j < 0 || t.row_j >= rows)
            throw ConfigError("multi_sym_triplet: distance row out of range");
        idx_i.push_back(t.row_i);
        idx_j.push_back(t.row_j);
        cdiff.at(static_cast<int64_t>(s)) = t.corr_i - t.corr_j;
    }
    Val di = tape.gather(d_minus_rows, idx_i);
    Val dj = tape.gather(d_minus_rows, idx_j);
    Val weighted = tape.mul(tape.input(std::move(cdiff)), tape.sub(dj, di));
    Val hinge = tape.relu(tape.add_const(weighted, alpha));
    Tensor w = Tensor::full({static_cast<int64_t>(samples.size())},
                            1.0 / static_cast<double>(batch));
    return tape.weighted_sum(hinge, w);
}

double attr_corr_triplet(double corr_ij, double corr_ik, double dp_ij, double dp_ik,
                         double dm_ij, double dm_ik, double alpha) {
    double h1 = (corr_ij - corr_ik) * (dp_ij - dp_ik) + alpha;
    double h2 = (corr_ij - corr_ik) * (dm_ij - dm_ik) + alpha;
    return (h1 > 0.0 ? h1 : 0.0) + (h2 > 0.0 ? h2 : 0.0);
}

Val attr_corr_triplet(const TransformOps& ops, Tape& tape, const Tensor& attr_embeds,
                      const std::vector<TriCorrSample>& samples, double alpha, BnMode bn,
                      DistanceKind dist, int64_t batch) {
    if (!(alpha > 0.0)) throw ConfigError("attr_corr_triplet: alpha must be positive");
    if (batch < 1) throw ConfigError("attr_corr_triplet: batch must be positive");
    int64_t n = attr_embeds.rows();
    std::vector<int64_t> gi, gj, gk;
    Tensor cdiff = Tensor::zeros({static_cast<int64_t>(samples.size())});
    for (size_t s = 0; s < samples.size(); ++s) {
        const TriCorrSample& t = samples[s];
        if (t.i == t.j || t.i == t.k || t.j == t.k)
            throw ConfigError("attr_corr_triplet: the three attributes must be distinct");
        for (int64_t v : {t.i, t.j, t.k})
            if (v < 0 || v >= n)
                throw ConfigError("attr_corr_triplet: attribute index out of range: " +
                                  std::to_string(v));
        gi.push_back(t.i);
        gj.push_back(t.j);
        gk.push_back(t.k);
        cdiff.at(static_cast<int64_t>(s)) = t.corr_ij - t.corr_ik;
    }
    Val a = tape.input(attr_embeds);
    Val att_p = ops.attention(tape, a, TransformMode::Couple, bn);
    Val att_m = ops.attention(tape, a, TransformMode::Decouple, bn);
    Val cw = tape.input(std::move(cdiff));

    auto hinge_for = [&](Val att) {
        Val d_ij = row_distance(tape, tape.gather_rows(att, gi), tape.gather_rows(att, gj), dist);
        Val d_ik = row_distance(tape, tape.gather_rows(att, gi), tape.gather_rows(att, gk), dist);
        return tape.relu(tape.add_const(tape.mul(cw, tape.sub(d_ij, d_ik)), alpha));
    };
    Val both = tape.add(hinge_for(att_p), hinge_for(att_m));
    Tensor w = Tensor::full({static_cast<int64_t>(samples.size())},
                            1.0 / static_cast<double>(batch));
    return tape.weighted_sum(both, w);
}

}  // namespace symcomp
