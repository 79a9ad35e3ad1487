// Python module exposing the main operations: synthetic data generation,
// dataset IO, training, checkpoint loading, moving-distance inference, and
// the evaluation metrics. Matrices cross the boundary as nested lists so the
// module works without a numpy build dependency; the vectors are small at the
// scales this library targets.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "symcomp/checkpoint.hpp"
#include "symcomp/common.hpp"
#include "symcomp/eval.hpp"
#include "symcomp/losses.hpp"
#include "symcomp/train.hpp"

namespace py = pybind11;
using namespace symcomp;

namespace {

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Tensor& t) {
    Rows out(static_cast<size_t>(t.rows()));
    for (int64_t r = 0; r < t.rows(); ++r) {
        out[static_cast<size_t>(r)].resize(static_cast<size_t>(t.cols()));
        for (int64_t c = 0; c < t.cols(); ++c)
            out[static_cast<size_t>(r)][static_cast<size_t>(c)] = t.at(r, c);
    }
    return out;
}

Tensor tensor_of(const Rows& rows, const char* what) {
    if (rows.empty()) throw ShapeError(std::string(what) + " must not be empty");
    int64_t cols = static_cast<int64_t>(rows[0].size());
    Tensor t = Tensor::zeros({static_cast<int64_t>(rows.size()), cols});
    for (size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int64_t>(rows[r].size()) != cols)
            throw ShapeError(std::string(what) + " row " + std::to_string(r) + " has " +
                             std::to_string(rows[r].size()) + " values, expected " +
                             std::to_string(cols));
        for (int64_t c = 0; c < cols; ++c) t.at(static_cast<int64_t>(r), c) = rows[r][static_cast<size_t>(c)];
    }
    return t;
}

// Keys applied through the same funnel as config files and CLI flags, with
// `preset` first so later keys override preset values regardless of dict
// ordering quirks.
TrainConfig config_from_dict(const py::dict& kv) {
    TrainConfig cfg;
    if (kv.contains("preset")) {
        std::string preset = py::str(kv["preset"]);
        apply_config_kv(cfg, "preset", preset);
        cfg.preset = preset;
    }
    for (auto item : kv) {
        std::string key = py::str(item.first);
        if (key == "preset") continue;
        apply_config_kv(cfg, key, py::str(item.second));
    }
    return cfg;
}

Tensor features_for(const Dataset& ds, const std::vector<InstanceRecord>& recs) {
    Tensor f = Tensor::zeros({static_cast<int64_t>(recs.size()), ds.feature_dim});
    for (size_t i = 0; i < recs.size(); ++i)
        for (int64_t c = 0; c < ds.feature_dim; ++c)
            f.at(static_cast<int64_t>(i), c) = ds.features.at(recs[i].id, c);
    return f;
}

// A checkpoint re-instantiated for inference. Owns its parameter store, so
// the wrapped model stays valid for the handle's lifetime.
struct ModelHandle {
    Checkpoint ck;
    ModelConfig cfg;
    std::unique_ptr<ParamStore> store;
    std::unique_ptr<TransformModel> model;
    Tensor attr_embeds;

    static ModelHandle load(const std::string& path, const Dataset& ds,
                            const std::string& embeddings, const std::string& embed_kind,
                            double gamma) {
        ModelHandle h;
        h.ck = load_checkpoint(path);
        h.cfg = model_config_from_meta(h.ck, path);
        if (gamma > 0.0) h.cfg.gamma = gamma;
        verify_model_meta(h.ck.meta, h.cfg, ds.attr_vocab, ds.object_vocab);
        h.store = std::make_unique<ParamStore>(h.ck.seed, h.ck.dtype);
        h.model = std::make_unique<TransformModel>(h.cfg, *h.store);
        restore_into(*h.store, h.ck);
        h.attr_embeds =
            load_attr_embeddings(ds.attr_vocab, embeddings, embed_kind_from_name(embed_kind));
        return h;
    }

    Tensor project(const Tensor& raw) const {
        Tape tape;
        return tape.value(model->project(tape, tape.input(raw)));
    }
};

py::dict rmd_dict(const TransformModel& model, const RmdResult& rmd) {
    py::dict out;
    out["d_plus"] = rows_of(rmd.d_plus);
    out["d_minus"] = rows_of(rmd.d_minus);
    out["d"] = rows_of(rmd.d);
    out["p"] = rows_of(model.attr_probs(rmd));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "attribute-object composition learning via coupled transforms";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<InstanceRecord>(m, "InstanceRecord")
        .def_readonly("id", &InstanceRecord::id)
        .def_readonly("object_id", &InstanceRecord::object_id)
        .def_readonly("attrs", &InstanceRecord::attrs)
        .def("__repr__", [](const InstanceRecord& r) {
            std::string attrs;
            for (int64_t a : r.attrs) attrs += (attrs.empty() ? "" : ",") + std::to_string(a);
            return "InstanceRecord(id=" + std::to_string(r.id) +
                   ", object_id=" + std::to_string(r.object_id) + ", attrs=[" + attrs + "])";
        });

    py::class_<Dataset>(m, "Dataset")
        .def_property_readonly("n_attrs", &Dataset::n_attrs)
        .def_property_readonly("n_objects", &Dataset::n_objects)
        .def_property_readonly("n_records",
                               [](const Dataset& ds) { return static_cast<int64_t>(ds.records.size()); })
        .def_readonly("feature_dim", &Dataset::feature_dim)
        .def_readonly("attr_vocab", &Dataset::attr_vocab)
        .def_readonly("object_vocab", &Dataset::object_vocab)
        .def_readonly("records", &Dataset::records)
        .def_property_readonly("splits",
                               [](const Dataset& ds) {
                                   std::vector<std::string> names;
                                   for (const auto& [name, ids] : ds.splits) names.push_back(name);
                                   return names;
                               })
        .def("split", [](const Dataset& ds, const std::string& name) { return ds.split(name); },
             py::arg("name"))
        .def("features",
             [](const Dataset& ds) { return rows_of(ds.features); },
             "Full feature matrix, one row per record.")
        .def("save", &write_dataset, py::arg("dir"),
             "Writes the dataset into a directory and returns the manifest path.")
        .def("__repr__", [](const Dataset& ds) {
            return "Dataset(records=" + std::to_string(ds.records.size()) +
                   ", attrs=" + std::to_string(ds.n_attrs()) +
                   ", objects=" + std::to_string(ds.n_objects()) +
                   ", dim=" + std::to_string(ds.feature_dim) + ")";
        });

    m.def("load_dataset", &load_dataset, py::arg("manifest"),
          "Reads a dataset from a manifest.json path.");

    m.def(
        "synth",
        [](int64_t n_attrs, int64_t n_objects, int64_t feature_dim, int64_t per_pair,
           double noise, uint64_t seed, bool multi, double base_rate,
           const std::string& corr_structure, double test_fraction, double val_fraction,
           int64_t unseen_pairs) {
            SynthConfig sc;
            sc.n_attrs = n_attrs;
            sc.n_objects = n_objects;
            sc.feature_dim = feature_dim;
            sc.per_pair_count = per_pair;
            sc.noise_sigma = noise;
            sc.seed = seed;
            sc.multi = multi;
            sc.base_rate = base_rate;
            sc.corr_structure = corr_structure;
            sc.test_fraction = test_fraction;
            sc.val_fraction = val_fraction;
            sc.unseen_pairs = unseen_pairs;
            return synth_generate(sc);
        },
        py::arg("n_attrs") = 6, py::arg("n_objects") = 5, py::arg("feature_dim") = 32,
        py::arg("per_pair") = 40, py::arg("noise") = 0.05, py::arg("seed") = 7,
        py::arg("multi") = false, py::arg("base_rate") = 0.3, py::arg("corr_structure") = "",
        py::arg("test_fraction") = 0.25, py::arg("val_fraction") = 0.0,
        py::arg("unseen_pairs") = 0,
        "Deterministic synthetic dataset: object prototypes plus attribute directions.");

    m.def(
        "fit",
        [](const Dataset& ds, const std::string& out_dir, const py::dict& config) {
            TrainConfig cfg = config_from_dict(config);
            cfg.out_dir = out_dir;
            Trainer trainer(cfg, ds);
            FitReport rep = trainer.fit();
            py::dict out;
            out["last_checkpoint"] = rep.last_checkpoint;
            out["best_checkpoint"] = rep.best_checkpoint;
            out["best_epoch"] = rep.best_epoch;
            out["best_metric"] = rep.best_metric;
            out["epochs_run"] = static_cast<int64_t>(rep.curve.size());
            out["test_metrics"] = rep.test_metrics;
            out["report_path"] = rep.report_path;
            return out;
        },
        py::arg("dataset"), py::arg("out_dir"), py::arg("config") = py::dict(),
        "Trains on the dataset; config holds the same keys as a config file "
        "(preset, lr, epochs, ...). Returns checkpoint paths and test metrics.");

    py::class_<ModelHandle>(m, "Model")
        .def_static(
            "load",
            [](const std::string& checkpoint, const Dataset& ds, const std::string& embeddings,
               const std::string& embed_kind, double gamma) {
                return ModelHandle::load(checkpoint, ds, embeddings, embed_kind, gamma);
            },
            py::arg("checkpoint"), py::arg("dataset"), py::arg("embeddings") = "",
            py::arg("embed_kind") = "one_hot", py::arg("gamma") = 0.0,
            "Rebuilds a trained model from a checkpoint. gamma > 0 overrides the "
            "stored score scale.")
        .def_property_readonly("gamma", [](const ModelHandle& h) { return h.cfg.gamma; })
        .def_property_readonly("n_attrs", [](const ModelHandle& h) { return h.cfg.n_attrs; })
        .def_property_readonly("n_objects", [](const ModelHandle& h) { return h.cfg.n_objects; })
        .def(
            "rmd",
            [](const ModelHandle& h, const Rows& features) {
                Tensor f = h.project(tensor_of(features, "features"));
                RmdResult rmd = h.model->rmd(f, h.attr_embeds);
                return rmd_dict(*h.model, rmd);
            },
            py::arg("features"),
            "Moving distances for every (row, attribute): dict with d_plus, "
            "d_minus, d, and presence probabilities p.")
        .def(
            "object_probs",
            [](const ModelHandle& h, const Rows& features) {
                return rows_of(h.model->object_probs(h.project(tensor_of(features, "features"))));
            },
            py::arg("features"))
        .def(
            "transform",
            [](const ModelHandle& h, const Rows& features, int64_t attr, const std::string& mode) {
                TransformMode tm;
                if (mode == "couple") tm = TransformMode::Couple;
                else if (mode == "decouple") tm = TransformMode::Decouple;
                else throw ConfigError("mode must be 'couple' or 'decouple', got '" + mode + "'");
                if (attr < 0 || attr >= h.cfg.n_attrs)
                    throw ConfigError("attr index " + std::to_string(attr) + " outside [0, " +
                                      std::to_string(h.cfg.n_attrs) + ")");
                Tensor f = h.project(tensor_of(features, "features"));
                Tensor rows = Tensor::zeros({f.rows(), h.attr_embeds.cols()});
                for (int64_t r = 0; r < f.rows(); ++r)
                    for (int64_t c = 0; c < h.attr_embeds.cols(); ++c)
                        rows.at(r, c) = h.attr_embeds.at(attr, c);
                return rows_of(h.model->transform_eval(f, rows, tm));
            },
            py::arg("features"), py::arg("attr"), py::arg("mode"),
            "Attaches ('couple') or removes ('decouple') one attribute from "
            "every feature row.")
        .def(
            "czsl_topk",
            [](const ModelHandle& h, const Dataset& ds, const std::string& split, int64_t k) {
                auto recs = ds.gather(split);
                PairSpace space = build_pair_space(ds);
                Tensor f = h.project(features_for(ds, recs));
                return czsl_topk(*h.model, f, h.attr_embeds, recs, space, k);
            },
            py::arg("dataset"), py::arg("split") = "test", py::arg("k") = 1,
            "Pair top-k accuracy of the split's records against the feasible "
            "pair grid.");

    m.def(
        "correlation",
        [](const Dataset& ds, const std::string& split) {
            auto recs = split.empty() ? ds.records : ds.gather(split);
            return rows_of(compute_correlation(recs, ds.n_attrs()));
        },
        py::arg("dataset"), py::arg("split") = "train",
        "Pearson correlation of binary attribute labels over a split ('' for "
        "all records).");

    m.def(
        "mauc",
        [](const Rows& scores, const Rows& labels) {
            MaucResult r = mauc(tensor_of(scores, "scores"), tensor_of(labels, "labels"));
            py::dict out;
            out["mean"] = r.mean;
            out["per_attr"] = r.per_attr;
            out["excluded"] = r.excluded;
            return out;
        },
        py::arg("scores"), py::arg("labels"),
        "Mean per-attribute ranking AUC; single-class attributes are excluded.");

    m.def("spearman", &spearman, py::arg("a"), py::arg("b"),
          "Rank correlation with midranks on ties.");

    m.def(
        "topk_accuracy",
        [](const Rows& scores, const std::vector<int64_t>& truth, int64_t k) {
            return topk_accuracy(tensor_of(scores, "scores"), truth, k);
        },
        py::arg("scores"), py::arg("truth"), py::arg("k") = 1);
}
