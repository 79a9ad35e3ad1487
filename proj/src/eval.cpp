#include "symcomp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "symcomp/common.hpp"

namespace symcomp {

namespace {

// 1-based rank of column `truth` in a score row under stable tie-breaking:
// strictly larger scores rank ahead, tied scores rank ahead only at a lower
// index.
int64_t rank_of(const Tensor& scores, int64_t row, int64_t truth) {
    double st = scores.at(row, truth);
    int64_t rank = 1;
    for (int64_t c = 0; c < scores.cols(); ++c) {
        if (c == truth) continue;
        double s = scores.at(row, c);
        if (s > st || (s == st && c < truth)) ++rank;
    }
    return rank;
}

// stable argmax over an optional candidate mask
int64_t argmax_masked(const Tensor& scores, int64_t row, const std::vector<char>* mask) {
    int64_t best = -1;
    for (int64_t c = 0; c < scores.cols(); ++c) {
        if (mask && !(*mask)[static_cast<size_t>(c)]) continue;
        if (best < 0 || scores.at(row, c) > scores.at(row, best)) best = c;
    }
    return best;
}

// midranks (1-based, ties averaged) of a value vector
std::vector<double> midranks(const std::vector<double>& v) {
    size_t n = v.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t t = i; t <= j; ++t) rank[idx[t]] = mid;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double topk_accuracy(const Tensor& scores, const std::vector<int64_t>& truth, int64_t k) {
    int64_t n = scores.rows(), c = scores.cols();
    if (static_cast<int64_t>(truth.size()) != n)
        throw ShapeError("topk_accuracy: " + std::to_string(truth.size()) + " truth labels for " +
                         std::to_string(n) + " rows");
    if (k < 1) throw ConfigError("topk_accuracy: k must be >= 1");
    if (k > c)
        throw ConfigError("topk_accuracy: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(c) + " labels");
    if (n == 0) throw DataError("topk_accuracy: no rows");
    int64_t hits = 0;
    for (int64_t r = 0; r < n; ++r) {
        int64_t t = truth[static_cast<size_t>(r)];
        if (t < 0 || t >= c)
            throw DataError("topk_accuracy: truth label " + std::to_string(t) +
                            " out of range at row " + std::to_string(r));
        if (rank_of(scores, r, t) <= k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

double argmax_membership(const Tensor& scores, const std::vector<std::vector<int64_t>>& truth) {
    int64_t n = scores.rows();
    if (static_cast<int64_t>(truth.size()) != n)
        throw ShapeError("argmax_membership: " + std::to_string(truth.size()) +
                         " truth sets for " + std::to_string(n) + " rows");
    if (n == 0) throw DataError("argmax_membership: no rows");
    int64_t hits = 0;
    for (int64_t r = 0; r < n; ++r) {
        int64_t best = argmax_masked(scores, r, nullptr);
        const auto& set = truth[static_cast<size_t>(r)];
        if (std::find(set.begin(), set.end(), best) != set.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

Tensor attr_label_matrix(const std::vector<InstanceRecord>& records, int64_t n_attrs) {
    Tensor labels = Tensor::zeros({static_cast<int64_t>(records.size()), n_attrs});
    for (size_t r = 0; r < records.size(); ++r)
        for (int64_t a : records[r].attrs) {
            if (a < 0 || a >= n_attrs)
                throw DataError("attr_label_matrix: attribute " + std::to_string(a) +
                                " out of range for record " + std::to_string(records[r].id));
            labels.at(static_cast<int64_t>(r), a) = 1.0;
        }
    return labels;
}

MaucResult mauc(const Tensor& scores, const Tensor& labels,
                std::vector<std::string>* warnings) {
    int64_t n = scores.rows(), m = scores.cols();
    if (labels.shape() != scores.shape())
        throw ShapeError("mauc: scores " + shape_str(scores.shape()) + " vs labels " +
                         shape_str(labels.shape()));
    MaucResult res;
    res.per_attr.assign(static_cast<size_t>(m), std::nan(""));
    double sum = 0.0;
    int64_t included = 0;
    std::vector<double> col(static_cast<size_t>(n));
    for (int64_t a = 0; a < m; ++a) {
        int64_t pos = 0;
        for (int64_t r = 0; r < n; ++r) {
            double l = labels.at(r, a);
            if (l != 0.0 && l != 1.0)
                throw DataError("mauc: labels must be 0 or 1 (attribute " + std::to_string(a) +
                                ", row " + std::to_string(r) + ")");
            col[static_cast<size_t>(r)] = scores.at(r, a);
            if (l == 1.0) ++pos;
        }
        int64_t neg = n - pos;
        if (pos == 0 || neg == 0) {
            res.excluded.push_back(a);
            emit_warning(warnings, "mauc: attribute " + std::to_string(a) + " has no " +
                                       (pos == 0 ? "positive" : "negative") +
                                       " examples; excluded");
            continue;
        }
        // midrank formulation; equals pairwise concordance with ties at 0.5
        std::vector<double> rank = midranks(col);
        double rank_pos = 0.0;
        for (int64_t r = 0; r < n; ++r)
            if (labels.at(r, a) == 1.0) rank_pos += rank[static_cast<size_t>(r)];
        double auc = (rank_pos - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1)) /
                     (static_cast<double>(pos) * static_cast<double>(neg));
        res.per_attr[static_cast<size_t>(a)] = auc;
        sum += auc;
        ++included;
    }
    if (included == 0) throw DataError("mauc: every attribute lacks a class; nothing to average");
    res.mean = sum / static_cast<double>(included);
    return res;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ShapeError("spearman: size mismatch " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    size_t n = a.size();
    if (n < 2) throw DataError("spearman: need at least 2 observations");
    std::vector<double> ra = midranks(a), rb = midranks(b);
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double da = ra[i] - ma, db = rb[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

double czsl_topk(const Tensor& scores, const std::vector<int64_t>& truth_pair,
                 const PairSpace& space, int64_t k) {
    if (scores.cols() != space.size())
        throw ShapeError("czsl_topk: " + std::to_string(scores.cols()) + " score columns for " +
                         std::to_string(space.size()) + " pairs");
    for (size_t r = 0; r < truth_pair.size(); ++r) {
        int64_t t = truth_pair[r];
        if (t < 0 || t >= space.size() || !space.feasible_mask[static_cast<size_t>(t)])
            throw DataError("czsl_topk: truth pair " + std::to_string(t) +
                            " of row " + std::to_string(r) + " is not feasible");
    }
    return topk_accuracy(scores, truth_pair, k);
}

Tensor czsl_pair_scores(const TransformModel& model, const Tensor& features,
                        const Tensor& attr_embeds, const PairSpace& space) {
    RmdResult rmd = model.rmd(features, attr_embeds);
    Tensor p_attr = model.attr_probs(rmd);
    Tensor p_obj = model.object_probs(features);
    return pair_scores(p_attr, p_obj, space);
}

double czsl_topk(const TransformModel& model, const Tensor& features,
                 const Tensor& attr_embeds, const std::vector<InstanceRecord>& records,
                 const PairSpace& space, int64_t k) {
    Tensor scores = czsl_pair_scores(model, features, attr_embeds, space);
    std::vector<int64_t> truth;
    for (const InstanceRecord& rec : records) {
        if (rec.attrs.size() != 1)
            throw DataError("czsl_topk: record " + std::to_string(rec.id) +
                            " has " + std::to_string(rec.attrs.size()) +
                            " attributes; pair ranking needs exactly one");
        truth.push_back(space.index_of(rec.attrs[0], rec.object_id));
    }
    return czsl_topk(scores, truth, space, k);
}

namespace {

// accuracy of stable argmax over a candidate mask, restricted to `rows`
double masked_top1(const Tensor& scores, const std::vector<int64_t>& truth_pair,
                   const std::vector<int64_t>& rows, const std::vector<char>& mask,
                   const std::vector<double>* unseen_bonus) {
    if (rows.empty()) return 0.0;
    int64_t hits = 0;
    for (int64_t r : rows) {
        int64_t best = -1;
        double best_score = 0.0;
        for (int64_t c = 0; c < scores.cols(); ++c) {
            if (!mask[static_cast<size_t>(c)]) continue;
            double s = scores.at(r, c);
            if (unseen_bonus) s += (*unseen_bonus)[static_cast<size_t>(c)];
            if (best < 0 || s > best_score) {
                best = c;
                best_score = s;
            }
        }
        if (best == truth_pair[static_cast<size_t>(r)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(rows.size());
}

}  // namespace

GczslReport generalized_czsl(const Tensor& scores, const std::vector<int64_t>& truth_pair,
                             const PairSpace& space) {
    if (scores.cols() != space.size())
        throw ShapeError("generalized_czsl: " + std::to_string(scores.cols()) +
                         " score columns for " + std::to_string(space.size()) + " pairs");
    if (static_cast<int64_t>(truth_pair.size()) != scores.rows())
        throw ShapeError("generalized_czsl: " + std::to_string(truth_pair.size()) +
                         " truth pairs for " + std::to_string(scores.rows()) + " rows");

    std::vector<int64_t> seen_rows, unseen_rows;
    for (int64_t r = 0; r < scores.rows(); ++r) {
        int64_t t = truth_pair[static_cast<size_t>(r)];
        if (t < 0 || t >= space.size())
            throw DataError("generalized_czsl: truth pair " + std::to_string(t) +
                            " out of range at row " + std::to_string(r));
        if (space.seen_mask[static_cast<size_t>(t)])
            seen_rows.push_back(r);
        else if (space.unseen_mask[static_cast<size_t>(t)])
            unseen_rows.push_back(r);
        else
            throw DataError("generalized_czsl: truth pair " + std::to_string(t) + " at row " +
                            std::to_string(r) + " is neither seen nor unseen");
    }
    if (seen_rows.empty()) throw DataError("generalized_czsl: no instances with a seen truth pair");
    if (unseen_rows.empty())
        throw DataError("generalized_czsl: no instances with an unseen truth pair");

    // candidate masks: all feasible pairs, and the two restricted endpoints
    std::vector<char> feasible = space.feasible_mask;
    std::vector<char> seen_only(feasible.size(), 0), unseen_only(feasible.size(), 0);
    for (size_t p = 0; p < feasible.size(); ++p) {
        if (feasible[p] && space.seen_mask[p]) seen_only[p] = 1;
        if (feasible[p] && space.unseen_mask[p]) unseen_only[p] = 1;
    }

    // per unseen-truth instance, the bias that ties its truth with the best
    // seen score; midpoints make sure both sides of every tie are visited
    std::vector<double> candidates;
    for (int64_t r : unseen_rows) {
        double best_seen = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < scores.cols(); ++c)
            if (seen_only[static_cast<size_t>(c)]) best_seen = std::max(best_seen, scores.at(r, c));
        if (std::isfinite(best_seen))
            candidates.push_back(best_seen - scores.at(r, truth_pair[static_cast<size_t>(r)]));
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::vector<double> grid;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (i > 0) grid.push_back((candidates[i - 1] + candidates[i]) / 2.0);
        grid.push_back(candidates[i]);
    }

    GczslReport rep;
    std::vector<double> bonus(static_cast<size_t>(space.size()), 0.0);
    auto add_point = [&](double bias, const std::vector<char>& mask, const std::vector<double>* b) {
        BiasPoint pt;
        pt.bias = bias;
        pt.seen_acc = masked_top1(scores, truth_pair, seen_rows, mask, b);
        pt.unseen_acc = masked_top1(scores, truth_pair, unseen_rows, mask, b);
        rep.curve.push_back(pt);
    };

    // bias -> -inf: predictions restricted to seen pairs
    add_point(-std::numeric_limits<double>::infinity(), seen_only, nullptr);
    for (double b : grid) {
        for (size_t p = 0; p < bonus.size(); ++p)
            bonus[p] = space.unseen_mask[p] ? b : 0.0;
        add_point(b, feasible, &bonus);
    }
    // bias -> +inf: predictions restricted to unseen pairs
    add_point(std::numeric_limits<double>::infinity(), unseen_only, nullptr);

    rep.best_hm = -1.0;
    for (const BiasPoint& pt : rep.curve) {
        double denom = pt.seen_acc + pt.unseen_acc;
        double hm = denom > 0.0 ? 2.0 * pt.seen_acc * pt.unseen_acc / denom : 0.0;
        if (hm > rep.best_hm) {
            rep.best_hm = hm;
            rep.best_bias = pt.bias;
            rep.seen_at_best = pt.seen_acc;
            rep.unseen_at_best = pt.unseen_acc;
        }
    }

    // trade-off area: best unseen accuracy achievable at each distinct seen
    // accuracy, integrated by trapezoid over the observed seen range
    std::map<double, double> frontier;
    for (const BiasPoint& pt : rep.curve) {
        auto it = frontier.find(pt.seen_acc);
        if (it == frontier.end() || it->second < pt.unseen_acc) frontier[pt.seen_acc] = pt.unseen_acc;
    }
    rep.auc = 0.0;
    auto prev = frontier.begin();
    for (auto it = std::next(frontier.begin()); it != frontier.end(); ++it, ++prev)
        rep.auc += (it->first - prev->first) * (it->second + prev->second) / 2.0;

    rep.closed = masked_top1(scores, truth_pair, unseen_rows, unseen_only, nullptr);
    return rep;
}

GczslReport generalized_czsl(const TransformModel& model, const Tensor& features,
                             const Tensor& attr_embeds,
                             const std::vector<InstanceRecord>& records,
                             const PairSpace& space) {
    Tensor scores = czsl_pair_scores(model, features, attr_embeds, space);
    std::vector<int64_t> truth;
    for (const InstanceRecord& rec : records) {
        if (rec.attrs.size() != 1)
            throw DataError("generalized_czsl: record " + std::to_string(rec.id) +
                            " has " + std::to_string(rec.attrs.size()) +
                            " attributes; pair ranking needs exactly one");
        truth.push_back(space.index_of(rec.attrs[0], rec.object_id));
    }
    return generalized_czsl(scores, truth, space);
}

}  // namespace symcomp
