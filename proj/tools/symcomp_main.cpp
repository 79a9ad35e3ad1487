// Command-line front end. Subcommands: synth (generate a synthetic dataset),
// train (fit a model), eval (score a checkpoint on a split), infer (per-attribute
// decisions for raw feature vectors), gradcheck (finite-difference audit of every
// loss term), retrieve (nearest neighbors after attribute edits).
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data or file error,
// 3 shape mismatch or numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "symcomp/checkpoint.hpp"
#include "symcomp/eval.hpp"
#include "symcomp/gradcheck.hpp"
#include "symcomp/losses.hpp"
#include "symcomp/train.hpp"

using namespace symcomp;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string pct(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", 100.0 * v);
    return buf;
}

// Header row plus one value row, columns padded to a fixed width.
void print_table(const std::string& title, const std::vector<std::string>& cols,
                 const std::vector<std::string>& vals) {
    std::cout << title << "\n ";
    for (const auto& c : cols) std::cout << " " << c << std::string(c.size() < 9 ? 9 - c.size() : 1, ' ');
    std::cout << "\n ";
    for (size_t i = 0; i < vals.size(); ++i) {
        const std::string& v = vals[i];
        size_t w = std::max<size_t>(cols[i].size(), 9);
        std::cout << " " << v << std::string(v.size() < w ? w - v.size() : 1, ' ');
    }
    std::cout << "\n";
}

Tensor gather_matrix(const Tensor& m, const std::vector<int64_t>& ids) {
    Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), m.cols()}, m.dtype());
    for (size_t r = 0; r < ids.size(); ++r)
        for (int64_t c = 0; c < m.cols(); ++c) out.at(static_cast<int64_t>(r), c) = m.at(ids[r], c);
    return out;
}

// Whitespace-separated numbers, one feature vector per line. Blank lines are
// skipped so trailing newlines do not change the batch.
Tensor read_feature_rows(const std::string& path, int64_t want_dim) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open features file " + path);
    std::vector<double> vals;
    int64_t rows = 0;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<double> row;
        double v;
        while (ls >> v) row.push_back(v);
        if (!ls.eof()) {
            std::string tok;
            ls.clear();
            ls >> tok;
            throw DataError(path + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
        }
        if (row.empty()) continue;
        if (static_cast<int64_t>(row.size()) != want_dim)
            throw DataError(path + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(want_dim) + " values, got " +
                            std::to_string(row.size()));
        vals.insert(vals.end(), row.begin(), row.end());
        ++rows;
    }
    if (rows == 0) throw DataError(path + ": no feature rows found");
    return Tensor({rows, want_dim}, vals);
}

struct LoadedModel {
    Checkpoint ck;
    ModelConfig cfg;
    std::unique_ptr<ParamStore> store;
    std::unique_ptr<TransformModel> model;

    int64_t input_dim() const { return cfg.input_dim > 0 ? cfg.input_dim : cfg.feature_dim; }
};

// Rebuilds the model a checkpoint describes and refuses to pair it with a
// dataset whose vocabularies differ from the ones it was trained on.
LoadedModel load_model(const std::string& path, const Dataset& ds, double gamma_override) {
    LoadedModel lm;
    lm.ck = load_checkpoint(path);
    lm.cfg = model_config_from_meta(lm.ck, path);
    if (gamma_override > 0.0) lm.cfg.gamma = gamma_override;
    verify_model_meta(lm.ck.meta, lm.cfg, ds.attr_vocab, ds.object_vocab);
    lm.store = std::make_unique<ParamStore>(lm.ck.seed, lm.ck.dtype);
    lm.model = std::make_unique<TransformModel>(lm.cfg, *lm.store);
    restore_into(*lm.store, lm.ck);
    return lm;
}

Tensor project_eval(const TransformModel& model, const Tensor& raw) {
    Tape tape;
    return tape.value(model.project(tape, tape.input(raw)));
}

// Attribute reference on the command line: a vocabulary entry by name, or a
// plain index for vocabularies with awkward tokens.
int64_t resolve_attr(const Dataset& ds, const std::string& token, const std::string& flag) {
    for (size_t i = 0; i < ds.attr_vocab.size(); ++i)
        if (ds.attr_vocab[i] == token) return static_cast<int64_t>(i);
    try {
        size_t pos = 0;
        long long idx = std::stoll(token, &pos);
        if (pos == token.size() && idx >= 0 && idx < ds.n_attrs()) return idx;
    } catch (const std::exception&) {
    }
    throw ConfigError(flag + ": '" + token + "' is neither an attribute name nor an index in [0, " +
                      std::to_string(ds.n_attrs()) + ")");
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    os << content;
}

// ---------------------------------------------------------------------------
// synth

struct SynthOpts {
    std::string out;
    SynthConfig cfg;
    std::string dtype = "f64";
};

void run_synth(SynthOpts& o) {
    o.cfg.dtype = dtype_from_name(o.dtype);
    std::vector<std::string> warnings;
    Dataset ds = synth_generate(o.cfg, &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    std::string manifest = write_dataset(ds, o.out);
    std::cout << "wrote " << manifest << "\n"
              << ds.records.size() << " records, " << ds.n_attrs() << " attributes, "
              << ds.n_objects() << " objects, dim " << ds.feature_dim << "\n";
    for (const auto& [name, ids] : ds.splits)
        std::cout << "split " << name << ": " << ids.size() << "\n";
    if (ds.has_declared_pairs)
        std::cout << "pairs: " << ds.seen_pairs.size() << " seen, " << ds.unseen_pairs.size()
                  << " unseen\n";
}

// ---------------------------------------------------------------------------
// train

struct TrainOpts {
    std::string config;
    // (config key, value) in command-line order; preset entries apply first so
    // explicit flags always win regardless of flag order
    std::vector<std::pair<std::string, std::string>> kv;
};

void run_train(TrainOpts& o) {
    TrainConfig cfg;
    if (!o.config.empty()) cfg = load_train_config(o.config);
    for (const auto& [key, value] : o.kv)
        if (key == "preset") apply_config_kv(cfg, key, value);
    for (const auto& [key, value] : o.kv)
        if (key != "preset") apply_config_kv(cfg, key, value);

    Trainer trainer(cfg);
    FitReport rep = trainer.fit();

    const TrainConfig& c = trainer.config();
    std::cout << "mode " << loss_mode_name(c.weights.mode) << ", " << c.epochs << " epochs on "
              << c.dataset << "\n";
    if (!rep.curve.empty()) std::cout << "final total " << num(rep.curve.back().mean.total) << "\n";
    if (rep.best_epoch >= 0)
        std::cout << "best val metric " << num(rep.best_metric) << " at epoch " << rep.best_epoch
                  << "\n";
    if (!rep.test_metrics.empty()) {
        std::cout << "test:";
        for (const auto& [k, v] : rep.test_metrics) std::cout << " " << k << " " << num(v);
        std::cout << "\n";
    }
    std::cout << "checkpoint " << rep.last_checkpoint;
    if (rep.best_checkpoint != rep.last_checkpoint) std::cout << " (best " << rep.best_checkpoint << ")";
    std::cout << "\nreport " << rep.report_path << "\n";
}

// ---------------------------------------------------------------------------
// eval

struct EvalOpts {
    std::string checkpoint, dataset, embeddings;
    std::string split = "test", train_split = "train";
    std::string embed_kind = "one_hot";
    std::string mode;  // empty means follow the checkpoint, else the records
    std::string out = "eval";
    int64_t topk = 3;
    double gamma = 0.0;  // 0 keeps the checkpoint value
};

json bias_json(double b) {
    if (std::isinf(b)) return b > 0 ? json("+inf") : json("-inf");
    return json(b);
}

void run_eval(EvalOpts& o) {
    if (o.topk < 1) throw ConfigError("--topk must be at least 1");
    Dataset ds = load_dataset(o.dataset);
    LoadedModel lm = load_model(o.checkpoint, ds, o.gamma);
    Tensor embeds =
        load_attr_embeddings(ds.attr_vocab, o.embeddings, embed_kind_from_name(o.embed_kind));
    if (embeds.cols() != lm.cfg.attr_embed_dim)
        throw DataError("attribute embeddings are " + std::to_string(embeds.cols()) +
                        "-dimensional but the checkpoint expects " +
                        std::to_string(lm.cfg.attr_embed_dim));
    if (lm.ck.dtype == Dtype::F32) {
        ds.features.set_dtype(Dtype::F32);
        embeds.set_dtype(Dtype::F32);
    }

    std::vector<InstanceRecord> records = ds.gather(o.split);
    if (records.empty()) throw DataError("split '" + o.split + "' is empty");
    std::vector<int64_t> ids;
    for (const auto& r : records) ids.push_back(r.id);
    Tensor feats = gather_matrix(ds.features, ids);

    LossMode mode;
    if (!o.mode.empty()) {
        mode = loss_mode_from_name(o.mode);
    } else if (lm.ck.has_meta("train.mode")) {
        mode = loss_mode_from_name(lm.ck.meta_at("train.mode"));
    } else {
        bool all_single = true;
        for (const auto& r : records) all_single = all_single && r.attrs.size() == 1;
        mode = all_single ? LossMode::Single : LossMode::Multi;
    }

    RmdResult rmd = lm.model->rmd(feats, embeds);
    Tensor obj_probs = lm.model->object_probs(feats);
    std::vector<int64_t> obj_truth;
    for (const auto& r : records) obj_truth.push_back(r.object_id);

    EvalReport report;
    report.scalars["gamma"] = lm.cfg.gamma;
    int64_t obj_k = std::min<int64_t>(o.topk, ds.n_objects());
    for (int64_t k = 1; k <= obj_k; ++k)
        report.scalars["obj_top" + std::to_string(k)] = topk_accuracy(obj_probs, obj_truth, k);

    std::string scatter_tsv, bias_tsv;
    if (mode == LossMode::Single) {
        std::vector<int64_t> attr_truth;
        for (const auto& r : records) {
            if (r.attrs.size() != 1)
                throw DataError("record " + std::to_string(r.id) +
                                " has " + std::to_string(r.attrs.size()) +
                                " attributes; pass --mode multi for multi-attribute data");
            attr_truth.push_back(r.attrs[0]);
        }
        int64_t attr_k = std::min<int64_t>(o.topk, ds.n_attrs());
        for (int64_t k = 1; k <= attr_k; ++k)
            report.scalars["attr_top" + std::to_string(k)] = topk_accuracy(rmd.d, attr_truth, k);

        PairSpace space = build_pair_space(ds, o.train_split, o.split);
        int64_t pair_k = std::min<int64_t>(o.topk, space.size());
        for (int64_t k = 1; k <= pair_k; ++k)
            report.scalars["czsl_top" + std::to_string(k)] =
                czsl_topk(*lm.model, feats, embeds, records, space, k);

        bool any_unseen = false;
        for (char m : space.unseen_mask) any_unseen = any_unseen || m;
        if (any_unseen) {
            GczslReport g = generalized_czsl(*lm.model, feats, embeds, records, space);
            report.bias_curve = g.curve;
            report.scalars["gczsl_auc"] = g.auc;
            report.scalars["gczsl_best_hm"] = g.best_hm;
            report.scalars["gczsl_best_bias"] = g.best_bias;
            report.scalars["gczsl_seen"] = g.seen_at_best;
            report.scalars["gczsl_unseen"] = g.unseen_at_best;
            report.scalars["gczsl_closed"] = g.closed;
            std::string tsv = "bias\tseen_acc\tunseen_acc\n";
            for (const auto& p : g.curve)
                tsv += num(p.bias) + "\t" + num(p.seen_acc) + "\t" + num(p.unseen_acc) + "\n";
            bias_tsv = tsv;
        }

        std::vector<std::string> cols, vals;
        for (int64_t k = 1; k <= attr_k; ++k) {
            cols.push_back("Top-" + std::to_string(k));
            vals.push_back(pct(report.scalars["attr_top" + std::to_string(k)]));
        }
        print_table("attribute recognition (top-k accuracy, %)", cols, vals);
        cols.clear();
        vals.clear();
        for (int64_t k = 1; k <= obj_k; ++k) {
            cols.push_back("Top-" + std::to_string(k));
            vals.push_back(pct(report.scalars["obj_top" + std::to_string(k)]));
        }
        print_table("object recognition (top-k accuracy, %)", cols, vals);
        cols.clear();
        vals.clear();
        for (int64_t k = 1; k <= pair_k; ++k) {
            cols.push_back("Top-" + std::to_string(k));
            vals.push_back(pct(report.scalars["czsl_top" + std::to_string(k)]));
        }
        print_table("zero-shot pair recognition (top-k accuracy, %)", cols, vals);
        if (any_unseen)
            print_table("calibration sweep",
                        {"Unseen", "Seen", "Harmonic", "Closed", "AUC"},
                        {pct(report.scalars["gczsl_unseen"]), pct(report.scalars["gczsl_seen"]),
                         pct(report.scalars["gczsl_best_hm"]), pct(report.scalars["gczsl_closed"]),
                         pct(report.scalars["gczsl_auc"])});
    } else {
        std::vector<std::vector<int64_t>> truth_sets;
        for (const auto& r : records) truth_sets.push_back(r.attrs);
        Tensor labels = attr_label_matrix(records, ds.n_attrs());
        std::vector<std::string> warnings;
        MaucResult m = mauc(rmd.d, labels, &warnings);
        for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
        report.scalars["mauc_mean"] = m.mean;
        report.scalars["mauc_excluded"] = static_cast<double>(m.excluded.size());
        report.scalars["attr_top1"] = argmax_membership(rmd.d, truth_sets);
        report.attr_auc = m.per_attr;

        // removal distance against correlation with the record's present set,
        // over every absent attribute (the scatter behind the rank statistic)
        const std::vector<InstanceRecord>* corr_src = &records;
        std::vector<InstanceRecord> train_records;
        if (ds.splits.count(o.train_split)) {
            train_records = ds.gather(o.train_split);
            if (!train_records.empty()) corr_src = &train_records;
        }
        Tensor corr = compute_correlation(*corr_src, ds.n_attrs());
        std::vector<double> xs, ys;
        std::string tsv = "record\tattr\tcorr\td_minus\n";
        for (size_t b = 0; b < records.size(); ++b) {
            const auto& present = records[b].attrs;
            for (int64_t a = 0; a < ds.n_attrs(); ++a) {
                if (std::binary_search(present.begin(), present.end(), a)) continue;
                double x = corr_to_set(corr, a, present);
                double y = rmd.d_minus.at(static_cast<int64_t>(b), a);
                xs.push_back(x);
                ys.push_back(y);
                tsv += std::to_string(records[b].id) + "\t" + std::to_string(a) + "\t" + num(x) +
                       "\t" + num(y) + "\n";
            }
        }
        scatter_tsv = tsv;
        if (xs.size() >= 2) report.scalars["corr_dminus_spearman"] = spearman(xs, ys);

        print_table("attribute recognition (multi-label)", {"mAUC", "Top-1", "excluded"},
                    {pct(m.mean), pct(report.scalars["attr_top1"]),
                     std::to_string(m.excluded.size())});
        std::vector<std::string> cols, vals;
        for (int64_t k = 1; k <= obj_k; ++k) {
            cols.push_back("Top-" + std::to_string(k));
            vals.push_back(pct(report.scalars["obj_top" + std::to_string(k)]));
        }
        print_table("object recognition (top-k accuracy, %)", cols, vals);
        if (report.scalars.count("corr_dminus_spearman"))
            std::cout << "correlation vs removal distance: spearman "
                      << num(report.scalars["corr_dminus_spearman"]) << " over " << xs.size()
                      << " points\n";
    }

    fs::path out_dir(o.out);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DataError("cannot create output directory " + out_dir.string());
    json j;
    j["mode"] = loss_mode_name(mode);
    j["split"] = o.split;
    j["records"] = records.size();
    j["scalars"] = json::object();
    for (const auto& [k, v] : report.scalars) j["scalars"][k] = v;
    if (!report.attr_auc.empty()) {
        j["attr_auc"] = json::array();
        for (double v : report.attr_auc)
            j["attr_auc"].push_back(std::isnan(v) ? json() : json(v));
    }
    if (!report.bias_curve.empty()) {
        j["bias_curve"] = json::array();
        for (const auto& p : report.bias_curve)
            j["bias_curve"].push_back(
                {{"bias", bias_json(p.bias)}, {"seen_acc", p.seen_acc}, {"unseen_acc", p.unseen_acc}});
    }
    write_text(out_dir / "eval_report.json", j.dump(2) + "\n");
    if (!bias_tsv.empty()) write_text(out_dir / "bias_sweep.tsv", bias_tsv);
    if (!scatter_tsv.empty()) write_text(out_dir / "corr_distance.tsv", scatter_tsv);
    std::cout << "report written to " << (out_dir / "eval_report.json").string() << "\n";
}

// ---------------------------------------------------------------------------
// infer

struct InferOpts {
    std::string checkpoint, dataset, features, embeddings;
    std::string embed_kind = "one_hot";
    int64_t topk = 3;
    double gamma = 0.0;
};

void run_infer(InferOpts& o) {
    if (o.topk < 1) throw ConfigError("--topk must be at least 1");
    Dataset ds = load_dataset(o.dataset);
    LoadedModel lm = load_model(o.checkpoint, ds, o.gamma);
    Tensor embeds =
        load_attr_embeddings(ds.attr_vocab, o.embeddings, embed_kind_from_name(o.embed_kind));
    if (embeds.cols() != lm.cfg.attr_embed_dim)
        throw DataError("attribute embeddings are " + std::to_string(embeds.cols()) +
                        "-dimensional but the checkpoint expects " +
                        std::to_string(lm.cfg.attr_embed_dim));
    Tensor feats = read_feature_rows(o.features, lm.input_dim());
    if (lm.ck.dtype == Dtype::F32) {
        feats.set_dtype(Dtype::F32);
        embeds.set_dtype(Dtype::F32);
    }

    RmdResult rmd = lm.model->rmd(feats, embeds);
    Tensor p = lm.model->attr_probs(rmd);
    std::vector<char> decisions = attr_decision(rmd.d);
    Tensor obj_probs = lm.model->object_probs(feats);

    // the pair ranking needs the single-attribute pair bookkeeping; on
    // multi-attribute data only the per-attribute block is printed
    bool pairs_ok = ds.splits.count("train") && ds.splits.count("test");
    for (const auto& r : ds.records) pairs_ok = pairs_ok && r.attrs.size() == 1;
    PairSpace space;
    Tensor scores;
    if (pairs_ok) {
        space = build_pair_space(ds);
        scores = pair_scores(p, obj_probs, space);
    }

    int64_t n = ds.n_attrs();
    for (int64_t b = 0; b < feats.rows(); ++b) {
        std::cout << "attribute\td\tp\tdecision\n";
        for (int64_t a = 0; a < n; ++a)
            std::cout << ds.attr_vocab[static_cast<size_t>(a)] << "\t" << num(rmd.d.at(b, a))
                      << "\t" << num(p.at(b, a)) << "\t"
                      << (decisions[static_cast<size_t>(b * n + a)] ? "present" : "absent")
                      << "\n";
        if (pairs_ok) {
            std::vector<int64_t> order;
            for (int64_t i = 0; i < space.size(); ++i)
                if (space.feasible_mask[static_cast<size_t>(i)]) order.push_back(i);
            std::stable_sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
                return scores.at(b, x) > scores.at(b, y);
            });
            int64_t k = std::min<int64_t>(o.topk, static_cast<int64_t>(order.size()));
            std::cout << "top pairs\n";
            for (int64_t i = 0; i < k; ++i) {
                const auto& pr = space.pairs[static_cast<size_t>(order[static_cast<size_t>(i)])];
                std::cout << ds.attr_vocab[static_cast<size_t>(pr.first)] << " "
                          << ds.object_vocab[static_cast<size_t>(pr.second)] << "\t"
                          << num(scores.at(b, order[static_cast<size_t>(i)])) << "\n";
            }
        }
        std::cout << "\n";
    }
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOpts {
    int64_t seeds = 5;
    uint64_t seed = 300;
    int64_t feature_dim = 8;
    int64_t n_attrs = 4;
    int64_t n_objects = 3;
    int64_t batch = 3;
    double eps = 1e-5;
    double tol = 1e-5;
};

void run_gradcheck(GradcheckOpts& o) {
    if (o.seeds < 1) throw ConfigError("--seeds must be at least 1");
    if (o.n_attrs < 3) throw ConfigError("--n-attrs must be at least 3");
    if (o.batch < 2) throw ConfigError("--batch must be at least 2");
    static const char* names[] = {"sym",   "clo", "inv",     "com",      "cls_a",
                                  "cls_o", "tri", "tri_sym", "tri_corr", "total"};
    constexpr int n_losses = 10;
    double worst[n_losses] = {};
    int64_t kinks[n_losses] = {};
    bool ok[n_losses];
    std::fill(ok, ok + n_losses, true);

    auto t0 = std::chrono::steady_clock::now();
    for (int64_t si = 0; si < o.seeds; ++si) {
        uint64_t seed = o.seed + static_cast<uint64_t>(si);
        ModelConfig mc;
        mc.feature_dim = o.feature_dim;
        mc.attr_embed_dim = o.n_attrs;
        mc.n_attrs = o.n_attrs;
        mc.n_objects = o.n_objects;
        ParamStore store(seed);
        TransformModel model(mc, store);

        Rng rng(mix_seed(seed, 9));
        Tensor f = Tensor::zeros({o.batch, o.feature_dim});
        for (int64_t i = 0; i < f.numel(); ++i) f.at(i) = rng.normal();
        Tensor embeds = Tensor::eye(o.n_attrs);
        std::vector<int64_t> attr_has, attr_not, objects;
        std::vector<std::vector<int64_t>> attr_sets;
        Tensor a_has = Tensor::zeros({o.batch, o.n_attrs});
        Tensor a_not = Tensor::zeros({o.batch, o.n_attrs});
        for (int64_t b = 0; b < o.batch; ++b) {
            int64_t has = static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(o.n_attrs)));
            int64_t not_ =
                static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(o.n_attrs - 1)));
            if (not_ >= has) ++not_;
            attr_has.push_back(has);
            attr_not.push_back(not_);
            attr_sets.push_back({has});
            objects.push_back(
                static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(o.n_objects))));
            a_has.at(b, has) = 1.0;
            a_not.at(b, not_) = 1.0;
        }
        std::vector<TriSymSample> ts_samples = {{0, 1, 0.9, 0.1}, {o.n_attrs, o.n_attrs + 1, 0.2, 0.4}};
        std::vector<TriCorrSample> tc_samples = {{0, 1, 2, 0.8, 0.1}};
        BnMode bn = si % 2 == 1 ? BnMode::Train : BnMode::Eval;

        struct GraphVals {
            Val v[n_losses];
        };
        auto build = [&](Tape& tape) {
            GraphVals g;
            Val fv = tape.input(f);
            SymAxiomGraph sa = sym_axiom_losses(model, tape, fv, tape.input(a_has),
                                                tape.input(a_not), bn, DistanceKind::L2);
            ClassificationGraph cg = classification_losses(model, tape, sa.set, attr_has, attr_not,
                                                           objects, AttrClsInput::Transformed);
            RmdGraph rg = rmd_distances(model, tape, fv, embeds, bn);
            g.v[0] = sa.sym;
            g.v[1] = sa.clo;
            g.v[2] = sa.inv;
            g.v[3] = sa.com;
            g.v[4] = cg.cls_a;
            g.v[5] = cg.cls_o;
            g.v[6] = rmd_triplet(tape, rg.d_plus, rg.d_minus, attr_sets, o.n_attrs, 0.5);
            g.v[7] = multi_sym_triplet(tape, rg.d_minus, ts_samples, 0.5, o.batch);
            g.v[8] = attr_corr_triplet(model, tape, embeds, tc_samples, 0.5, bn,
                                       DistanceKind::L2, o.batch);
            Val total = g.v[0];
            for (int i = 1; i < n_losses - 1; ++i) total = tape.add(total, g.v[i]);
            g.v[9] = total;
            return g;
        };

        for (int li = 0; li < n_losses; ++li) {
            LossFn loss_fn = [&](bool with_grad) {
                Tape tape;
                GraphVals g = build(tape);
                if (with_grad) {
                    store.zero_grads();
                    tape.backward(g.v[li]);
                }
                return tape.scalar(g.v[li]);
            };
            FdReport rep = finite_diff_check(loss_fn, store, o.eps, o.tol);
            worst[li] = std::max(worst[li], rep.max_rel_err);
            kinks[li] += rep.kink_count;
            ok[li] = ok[li] && rep.pass;
        }
    }
    auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::vector<std::string> failed;
    for (int li = 0; li < n_losses; ++li) {
        std::printf("%-8s  max rel err %.3g  kinks %lld  %s\n", names[li], worst[li],
                    static_cast<long long>(kinks[li]), ok[li] ? "ok" : "FAIL");
        if (!ok[li]) failed.push_back(names[li]);
    }
    std::printf("%lld seeds in %.1f s\n", static_cast<long long>(o.seeds), dt);
    if (!failed.empty()) {
        std::string msg = "gradient check failed for:";
        for (const auto& n : failed) msg += " " + n;
        throw NumericError(msg);
    }
}

// ---------------------------------------------------------------------------
// retrieve

struct RetrieveOpts {
    std::string checkpoint, dataset, feature, split;
    std::vector<std::string> removes, adds;
    int64_t topk = 5;
    double gamma = 0.0;
};

void run_retrieve(RetrieveOpts& o) {
    if (o.topk < 1) throw ConfigError("--topk must be at least 1");
    Dataset ds = load_dataset(o.dataset);
    LoadedModel lm = load_model(o.checkpoint, ds, o.gamma);
    Tensor embeds = load_attr_embeddings(ds.attr_vocab, "", EmbedKind::OneHot);
    if (embeds.cols() != lm.cfg.attr_embed_dim)
        throw DataError("this checkpoint expects " + std::to_string(lm.cfg.attr_embed_dim) +
                        "-dimensional attribute embeddings; retrieval currently supports the "
                        "one-hot convention only");
    Tensor query = read_feature_rows(o.feature, lm.input_dim());
    if (query.rows() != 1)
        throw DataError(o.feature + ": expected exactly one feature row, got " +
                        std::to_string(query.rows()));
    if (lm.ck.dtype == Dtype::F32) {
        query.set_dtype(Dtype::F32);
        embeds.set_dtype(Dtype::F32);
        ds.features.set_dtype(Dtype::F32);
    }

    std::vector<int64_t> removes, adds;
    for (const auto& t : o.removes) removes.push_back(resolve_attr(ds, t, "--remove"));
    for (const auto& t : o.adds) adds.push_back(resolve_attr(ds, t, "--add"));

    // edits run in the transform space: decouple the removals, then couple
    // the additions, then compare against every projected dataset embedding
    Tape tape;
    Val fv = lm.model->project(tape, tape.input(query));
    auto attr_row = [&](int64_t a) {
        Tensor row = Tensor::zeros({1, embeds.cols()}, embeds.dtype());
        for (int64_t c = 0; c < embeds.cols(); ++c) row.at(0, c) = embeds.at(a, c);
        return row;
    };
    for (int64_t a : removes)
        fv = lm.model->transform(tape, fv, tape.input(attr_row(a)), TransformMode::Decouple,
                                 BnMode::Eval);
    for (int64_t a : adds)
        fv = lm.model->transform(tape, fv, tape.input(attr_row(a)), TransformMode::Couple,
                                 BnMode::Eval);
    Tensor edited = tape.value(fv);

    std::vector<int64_t> pool;
    if (o.split.empty()) {
        for (const auto& r : ds.records) pool.push_back(r.id);
    } else {
        pool = ds.split(o.split);
    }
    if (pool.empty()) throw DataError("retrieval pool is empty");
    Tensor proj = project_eval(*lm.model, gather_matrix(ds.features, pool));

    std::vector<std::pair<double, int64_t>> ranked;  // (distance, pool position)
    for (int64_t i = 0; i < proj.rows(); ++i) {
        double s = 0.0;
        for (int64_t c = 0; c < proj.cols(); ++c) {
            double dlt = proj.at(i, c) - edited.at(0, c);
            s += dlt * dlt;
        }
        ranked.emplace_back(std::sqrt(s), i);
    }
    std::sort(ranked.begin(), ranked.end());

    std::cout << "edits:";
    if (removes.empty() && adds.empty()) std::cout << " none";
    for (int64_t a : removes) std::cout << " -" << ds.attr_vocab[static_cast<size_t>(a)];
    for (int64_t a : adds) std::cout << " +" << ds.attr_vocab[static_cast<size_t>(a)];
    std::cout << "\nrank\trecord\tobject\tattributes\tdistance\n";
    int64_t k = std::min<int64_t>(o.topk, static_cast<int64_t>(ranked.size()));
    for (int64_t i = 0; i < k; ++i) {
        int64_t rid = pool[static_cast<size_t>(ranked[static_cast<size_t>(i)].second)];
        const InstanceRecord& r = ds.records[static_cast<size_t>(rid)];
        std::string attrs;
        for (size_t a = 0; a < r.attrs.size(); ++a) {
            if (a) attrs += ",";
            attrs += ds.attr_vocab[static_cast<size_t>(r.attrs[a])];
        }
        std::cout << i + 1 << "\t" << rid << "\t"
                  << ds.object_vocab[static_cast<size_t>(r.object_id)] << "\t" << attrs << "\t"
                  << num(ranked[static_cast<size_t>(i)].first) << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-constrained attribute-object composition toolkit"};
    app.require_subcommand(1);

    SynthOpts so;
    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", so.out, "output directory")->required();
    synth->add_option("--n-attrs", so.cfg.n_attrs, "number of attributes");
    synth->add_option("--n-objects", so.cfg.n_objects, "number of objects");
    synth->add_option("--dim", so.cfg.feature_dim, "feature dimensionality");
    synth->add_option("--per-pair", so.cfg.per_pair_count, "samples per (attribute, object) pair");
    synth->add_option("--noise", so.cfg.noise_sigma, "gaussian noise sigma");
    synth->add_option("--seed", so.cfg.seed, "generator seed");
    synth->add_flag("--multi", so.cfg.multi, "multi-attribute records");
    synth->add_option("--base-rate", so.cfg.base_rate, "extra-attribute rate in multi mode");
    synth->add_option("--corr", so.cfg.corr_structure,
                      "planted correlations, e.g. '0-1:0.9,2-3:0.7' (multi mode)");
    synth->add_option("--test-fraction", so.cfg.test_fraction, "share of records held out for test");
    synth->add_option("--val-fraction", so.cfg.val_fraction, "share of records held out for validation");
    synth->add_option("--unseen-pairs", so.cfg.unseen_pairs,
                      "pairs excluded from train entirely (single mode)");
    synth->add_option("--proto-scale", so.cfg.proto_scale, "object prototype scale");
    synth->add_option("--dir-scale", so.cfg.dir_scale, "attribute direction scale");
    synth->add_option("--dtype", so.dtype, "f64 or f32");

    TrainOpts to_;
    CLI::App* train = app.add_subcommand("train", "fit a model and write checkpoints");
    train->add_option("--config", to_.config, "key=value config file, applied before flags");
    struct TrainFlag {
        const char* flag;
        const char* key;
        const char* help;
    };
    static const TrainFlag train_flags[] = {
        {"--dataset", "dataset", "dataset manifest path"},
        {"--preset", "preset", "named configuration (applied before every other flag)"},
        {"--attr-embeddings", "attr_embeddings", "word vector file for attribute embeddings"},
        {"--embed-kind", "embed_kind", "one_hot or word_vector"},
        {"--train-split", "train_split", "split used for training"},
        {"--val-split", "val_split", "split used for model selection"},
        {"--test-split", "test_split", "split evaluated after training"},
        {"--feature-dim", "feature_dim", "transform-space width (0 keeps the raw width)"},
        {"--attn-hidden", "attn_hidden", "attention hidden width (0 for the default)"},
        {"--trunk-hidden", "trunk_hidden", "trunk hidden width (0 for the default)"},
        {"--cls-hidden", "cls_hidden", "classifier hidden width (0 for the default)"},
        {"--gamma", "gamma", "sigmoid scale on the distance gap"},
        {"--attr-cls-input", "attr_cls_input", "transformed or difference"},
        {"--identity-pin", "identity_pin", "true pins both transforms to the identity"},
        {"--lr", "lr", "learning rate (0 freezes parameters)"},
        {"--momentum", "momentum", "SGD momentum in [0, 1)"},
        {"--batch-size", "batch_size", "records per optimizer step"},
        {"--epochs", "epochs", "epochs to train"},
        {"--warmup-epochs", "warmup_epochs", "epochs with symmetry and axiom terms switched off"},
        {"--seed", "seed", "run seed"},
        {"--dtype", "dtype", "f64 or f32"},
        {"--out", "out_dir", "output directory for checkpoints and logs"},
        {"--log-interval", "log_interval", "steps between step-log records (0 disables)"},
        {"--checkpoint-interval", "checkpoint_interval", "epochs between checkpoint writes"},
        {"--resume", "resume", "checkpoint to continue from"},
        {"--mode", "mode", "single or multi"},
        {"--distance", "distance", "l2, l1, or cosine"},
        {"--margin", "margin", "triplet margin"},
        {"--lambda1", "lambda1", "symmetry weight"},
        {"--lambda2", "lambda2", "axiom weight"},
        {"--lambda3", "lambda3", "attribute classification weight"},
        {"--lambda4", "lambda4", "object classification weight"},
        {"--lambda5", "lambda5", "triplet weight"},
        {"--lambda6", "lambda6", "correlation-ordered removal triplet weight"},
        {"--lambda7", "lambda7", "attention-correlation triplet weight"},
    };
    for (const auto& tf : train_flags)
        train->add_option_function<std::string>(
            tf.flag,
            [key = std::string(tf.key), &to_](const std::string& v) {
                to_.kv.emplace_back(key, v);
            },
            tf.help);

    EvalOpts eo;
    CLI::App* eval_ = app.add_subcommand("eval", "score a checkpoint on a dataset split");
    eval_->add_option("--checkpoint", eo.checkpoint, "model checkpoint")->required();
    eval_->add_option("--dataset", eo.dataset, "dataset manifest")->required();
    eval_->add_option("--split", eo.split, "split to score");
    eval_->add_option("--train-split", eo.train_split, "split defining seen pairs and correlations");
    eval_->add_option("--attr-embeddings", eo.embeddings, "word vector file for attribute embeddings");
    eval_->add_option("--embed-kind", eo.embed_kind, "one_hot or word_vector");
    eval_->add_option("--mode", eo.mode, "single or multi (default follows the checkpoint)");
    eval_->add_option("--topk", eo.topk, "largest k reported");
    eval_->add_option("--gamma", eo.gamma, "override the checkpoint's sigmoid scale");
    eval_->add_option("--out", eo.out, "directory for the report and plot data");

    InferOpts io;
    CLI::App* infer = app.add_subcommand("infer", "per-attribute decisions for raw feature vectors");
    infer->add_option("--checkpoint", io.checkpoint, "model checkpoint")->required();
    infer->add_option("--dataset", io.dataset, "dataset manifest (vocabularies and pairs)")->required();
    infer->add_option("--features", io.features, "text file, one feature vector per line")->required();
    infer->add_option("--attr-embeddings", io.embeddings, "word vector file for attribute embeddings");
    infer->add_option("--embed-kind", io.embed_kind, "one_hot or word_vector");
    infer->add_option("--topk", io.topk, "pairs listed per vector");
    infer->add_option("--gamma", io.gamma, "override the checkpoint's sigmoid scale");

    GradcheckOpts go;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of every loss term");
    gradcheck->add_option("--seeds", go.seeds, "number of random models to audit");
    gradcheck->add_option("--seed", go.seed, "base seed");
    gradcheck->add_option("--dim", go.feature_dim, "toy feature dimensionality");
    gradcheck->add_option("--n-attrs", go.n_attrs, "toy attribute count (at least 3)");
    gradcheck->add_option("--n-objects", go.n_objects, "toy object count");
    gradcheck->add_option("--batch", go.batch, "toy batch size (at least 2)");
    gradcheck->add_option("--eps", go.eps, "finite-difference step");
    gradcheck->add_option("--tol", go.tol, "relative error tolerance");

    RetrieveOpts ro;
    CLI::App* retrieve = app.add_subcommand("retrieve", "nearest records after attribute edits");
    retrieve->add_option("--checkpoint", ro.checkpoint, "model checkpoint")->required();
    retrieve->add_option("--dataset", ro.dataset, "dataset manifest")->required();
    retrieve->add_option("--feature", ro.feature, "text file with exactly one feature vector")->required();
    retrieve->add_option("--remove", ro.removes, "attribute to decouple (repeatable; removals run first)");
    retrieve->add_option("--add", ro.adds, "attribute to couple (repeatable)");
    retrieve->add_option("--split", ro.split, "restrict the pool to one split (default: all records)");
    retrieve->add_option("--topk", ro.topk, "neighbors listed");
    retrieve->add_option("--gamma", ro.gamma, "override the checkpoint's sigmoid scale");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*synth)
            run_synth(so);
        else if (*train)
            run_train(to_);
        else if (*eval_)
            run_eval(eo);
        else if (*infer)
            run_infer(io);
        else if (*gradcheck)
            run_gradcheck(go);
        else if (*retrieve)
            run_retrieve(ro);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
