#include "symcomp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "symcomp/common.hpp"
#include "symcomp/wire.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace symcomp {

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string pair_str(int64_t attr, int64_t object) {
    return "(attr " + std::to_string(attr) + ", object " + std::to_string(object) + ")";
}

// Splits on a single delimiter, keeping empty fields ("a\t\tb" -> 3 fields).
std::vector<std::string> split_on(const std::string& s, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

int64_t parse_int_field(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        long long v = std::stoll(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": expected an integer, got \"" + s + "\"");
    }
}

double parse_real_field(const std::string& s, const std::string& where) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw DataError(where + ": expected a number, got \"" + s + "\"");
    }
}

// getline that tolerates CRLF fixtures
bool next_line(std::istream& is, std::string& line) {
    if (!std::getline(is, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

const json& need_key(const json& j, const char* key, const std::string& file) {
    auto it = j.find(key);
    if (it == j.end())
        throw DataError("manifest " + file + ": missing key \"" + key + "\"");
    return *it;
}

std::vector<std::string> read_vocab(const json& j, const char* key, const std::string& file) {
    const json& arr = need_key(j, key, file);
    if (!arr.is_array() || arr.empty())
        throw DataError("manifest " + file + ": \"" + key + "\" must be a non-empty list");
    std::vector<std::string> out;
    for (const auto& e : arr) {
        if (!e.is_string())
            throw DataError("manifest " + file + ": \"" + key + "\" entries must be strings");
        out.push_back(e.get<std::string>());
    }
    auto sorted = out;
    std::sort(sorted.begin(), sorted.end());
    auto dup = std::adjacent_find(sorted.begin(), sorted.end());
    if (dup != sorted.end())
        throw DataError("manifest " + file + ": duplicate entry \"" + *dup + "\" in " + key);
    return out;
}

Tensor load_features_binary(const std::string& path, int64_t n, int64_t dim, Dtype dtype) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open feature file: " + path);
    int64_t value_bytes = dtype == Dtype::F32 ? 4 : 8;
    auto actual = static_cast<int64_t>(fs::file_size(path));
    int64_t expected = n * dim * value_bytes;
    if (actual != expected)
        throw DataError("feature file " + path + ": expected " + std::to_string(expected) +
                        " bytes for " + std::to_string(n) + "x" + std::to_string(dim) +
                        " " + dtype_name(dtype) + ", found " + std::to_string(actual));
    Tensor t = Tensor::zeros({n, dim}, dtype);
    for (int64_t i = 0; i < t.numel(); ++i) {
        double v;
        bool ok = dtype == Dtype::F32 ? wire::read_f32(is, v) : wire::read_f64(is, v);
        if (!ok) throw DataError("feature file " + path + ": truncated read");
        t.at(i) = v;
    }
    return t;
}

Tensor load_features_tsv(const std::string& path, int64_t n, int64_t dim, Dtype dtype) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open feature file: " + path);
    Tensor t = Tensor::zeros({n, dim}, dtype);
    std::string line;
    int64_t row = 0, lineno = 0;
    while (next_line(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<std::string> tokens;
        std::string tok;
        while (ls >> tok) tokens.push_back(tok);
        if (row >= n)
            throw DataError("feature file " + path + ": more than " + std::to_string(n) + " rows");
        if (static_cast<int64_t>(tokens.size()) != dim)
            throw DataError("feature file " + path + " line " + std::to_string(lineno) +
                            ": expected " + std::to_string(dim) + " values, found " +
                            std::to_string(tokens.size()));
        for (int64_t c = 0; c < dim; ++c)
            t.at(row, c) = parse_real_field(
                tokens[static_cast<size_t>(c)],
                path + " line " + std::to_string(lineno));
        ++row;
    }
    if (row != n)
        throw DataError("feature file " + path + ": expected " + std::to_string(n) +
                        " rows, found " + std::to_string(row));
    t.round_to_dtype();
    return t;
}

std::vector<InstanceRecord> load_labels(const std::string& path, int64_t n_records,
                                        int64_t n_attrs, int64_t n_objects) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open labels file: " + path);
    std::vector<InstanceRecord> records(static_cast<size_t>(n_records));
    std::vector<char> seen(static_cast<size_t>(n_records), 0);
    std::string line;
    int64_t lineno = 0, count = 0;
    while (next_line(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string where = "labels file " + path + " line " + std::to_string(lineno);
        auto fields = split_on(line, '\t');
        if (fields.size() != 3)
            throw DataError(where + ": expected 3 tab-separated fields, found " +
                            std::to_string(fields.size()));
        int64_t id = parse_int_field(fields[0], where);
        if (id < 0 || id >= n_records)
            throw DataError(where + ": record id " + std::to_string(id) + " out of range [0, " +
                            std::to_string(n_records) + ")");
        if (seen[static_cast<size_t>(id)])
            throw DataError(where + ": duplicate record id " + std::to_string(id));
        seen[static_cast<size_t>(id)] = 1;
        InstanceRecord rec;
        rec.id = id;
        rec.object_id = parse_int_field(fields[1], where);
        if (rec.object_id < 0 || rec.object_id >= n_objects)
            throw DataError(where + ": object index out of range: " + std::to_string(rec.object_id));
        if (!fields[2].empty()) {
            for (const auto& tok : split_on(fields[2], ',')) {
                int64_t a = parse_int_field(tok, where);
                if (a < 0 || a >= n_attrs)
                    throw DataError(where + ": attribute index out of range: " + std::to_string(a));
                rec.attrs.push_back(a);
            }
        }
        std::sort(rec.attrs.begin(), rec.attrs.end());
        auto dup = std::adjacent_find(rec.attrs.begin(), rec.attrs.end());
        if (dup != rec.attrs.end())
            throw DataError(where + ": duplicate attribute index " + std::to_string(*dup));
        records[static_cast<size_t>(id)] = rec;
        ++count;
    }
    if (count != n_records) {
        for (int64_t i = 0; i < n_records; ++i)
            if (!seen[static_cast<size_t>(i)])
                throw DataError("labels file " + path + ": missing record id " + std::to_string(i));
    }
    return records;
}

std::vector<AttrObjPair> read_pair_list(const json& arr, const char* key, const std::string& file,
                                        int64_t n_attrs, int64_t n_objects) {
    if (!arr.is_array())
        throw DataError("pairs file " + file + ": \"" + std::string(key) + "\" must be a list");
    std::vector<AttrObjPair> out;
    for (const auto& e : arr) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
            throw DataError("pairs file " + file + ": " + key +
                            " entries must be [attr, object] index pairs");
        int64_t a = e[0].get<int64_t>(), o = e[1].get<int64_t>();
        if (a < 0 || a >= n_attrs || o < 0 || o >= n_objects)
            throw DataError("pairs file " + file + ": pair " + pair_str(a, o) + " out of range");
        out.emplace_back(a, o);
    }
    return out;
}

Tensor read_truth_matrix(const json& arr, const char* key, const std::string& file,
                         int64_t rows, int64_t cols) {
    if (!arr.is_array() || static_cast<int64_t>(arr.size()) != rows)
        throw DataError("truth file " + file + ": \"" + std::string(key) + "\" must have " +
                        std::to_string(rows) + " rows");
    Tensor t = Tensor::zeros({rows, cols});
    for (int64_t r = 0; r < rows; ++r) {
        const auto& row = arr[static_cast<size_t>(r)];
        if (!row.is_array() || static_cast<int64_t>(row.size()) != cols)
            throw DataError("truth file " + file + ": row " + std::to_string(r) + " of " + key +
                            " must have " + std::to_string(cols) + " values");
        for (int64_t c = 0; c < cols; ++c)
            t.at(r, c) = row[static_cast<size_t>(c)].get<double>();
    }
    return t;
}

}  // namespace

const std::vector<int64_t>& Dataset::split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) {
        std::vector<std::string> names;
        for (const auto& kv : splits) names.push_back(kv.first);
        throw DataError("no split named \"" + name + "\"; available: " + join(names, ", "));
    }
    return it->second;
}

std::vector<InstanceRecord> Dataset::gather(const std::string& split_name) const {
    std::vector<InstanceRecord> out;
    for (int64_t id : split(split_name)) out.push_back(records[static_cast<size_t>(id)]);
    return out;
}

Dataset load_dataset(const std::string& manifest_path) {
    json man;
    {
        std::ifstream is(manifest_path);
        if (!is) throw DataError("cannot open manifest: " + manifest_path);
        try {
            man = json::parse(is);
        } catch (const json::parse_error& e) {
            throw DataError("manifest " + manifest_path + ": " + e.what());
        }
    }
    if (!man.is_object())
        throw DataError("manifest " + manifest_path + ": top level must be an object");

    Dataset ds;
    fs::path base = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& rel) { return (base / rel).string(); };

    Dtype dtype;
    try {
        std::string dname = need_key(man, "dtype", manifest_path).get<std::string>();
        dtype = dtype_from_name(dname);
        ds.feature_dim = need_key(man, "feature_dim", manifest_path).get<int64_t>();
        ds.attr_vocab = read_vocab(man, "attr_vocab", manifest_path);
        ds.object_vocab = read_vocab(man, "object_vocab", manifest_path);
    } catch (const json::exception& e) {
        throw DataError("manifest " + manifest_path + ": " + e.what());
    }
    if (ds.feature_dim < 1)
        throw DataError("manifest " + manifest_path + ": feature_dim must be positive");
    int64_t n_records;
    try {
        n_records = need_key(man, "n_records", manifest_path).get<int64_t>();
    } catch (const json::exception& e) {
        throw DataError("manifest " + manifest_path + ": " + e.what());
    }
    if (n_records < 1)
        throw DataError("manifest " + manifest_path + ": n_records must be positive");

    std::string feature_file, labels_file;
    try {
        feature_file = need_key(man, "feature_file", manifest_path).get<std::string>();
        labels_file = need_key(man, "labels_file", manifest_path).get<std::string>();
    } catch (const json::exception& e) {
        throw DataError("manifest " + manifest_path + ": " + e.what());
    }

    std::string fpath = resolve(feature_file);
    bool tsv = feature_file.size() > 4 && feature_file.substr(feature_file.size() - 4) == ".tsv";
    ds.features = tsv ? load_features_tsv(fpath, n_records, ds.feature_dim, dtype)
                      : load_features_binary(fpath, n_records, ds.feature_dim, dtype);
    for (int64_t r = 0; r < n_records; ++r)
        for (int64_t c = 0; c < ds.feature_dim; ++c)
            if (!std::isfinite(ds.features.at(r, c)))
                throw DataError("feature file " + fpath + ": non-finite value at record " +
                                std::to_string(r) + ", column " + std::to_string(c));

    ds.records = load_labels(resolve(labels_file), n_records, ds.n_attrs(), ds.n_objects());

    const json& splits = need_key(man, "splits", manifest_path);
    if (!splits.is_object())
        throw DataError("manifest " + manifest_path + ": \"splits\" must be an object");
    for (auto it = splits.begin(); it != splits.end(); ++it) {
        std::vector<int64_t> ids;
        std::vector<char> used(static_cast<size_t>(n_records), 0);
        if (!it.value().is_array())
            throw DataError("manifest " + manifest_path + ": split \"" + it.key() +
                            "\" must be a list of record ids");
        for (const auto& e : it.value()) {
            if (!e.is_number_integer())
                throw DataError("manifest " + manifest_path + ": split \"" + it.key() +
                                "\" entries must be integers");
            int64_t id = e.get<int64_t>();
            if (id < 0 || id >= n_records)
                throw DataError("manifest " + manifest_path + ": split \"" + it.key() +
                                "\" references record " + std::to_string(id) + " out of range");
            if (used[static_cast<size_t>(id)])
                throw DataError("manifest " + manifest_path + ": split \"" + it.key() +
                                "\" lists record " + std::to_string(id) + " twice");
            used[static_cast<size_t>(id)] = 1;
            ids.push_back(id);
        }
        ds.splits[it.key()] = std::move(ids);
    }
    for (const char* required : {"train", "test"})
        if (ds.splits.find(required) == ds.splits.end())
            throw DataError("manifest " + manifest_path + ": missing required split \"" +
                            std::string(required) + "\"");
    for (int64_t id : ds.splits.at("train"))
        if (ds.records[static_cast<size_t>(id)].attrs.empty())
            throw DataError("record " + std::to_string(id) +
                            " is in the train split but has no attributes");

    if (man.contains("pairs_file")) {
        std::string ppath = resolve(man.at("pairs_file").get<std::string>());
        std::ifstream is(ppath);
        if (!is) throw DataError("cannot open pairs file: " + ppath);
        json pj;
        try {
            pj = json::parse(is);
        } catch (const json::parse_error& e) {
            throw DataError("pairs file " + ppath + ": " + e.what());
        }
        ds.seen_pairs = read_pair_list(need_key(pj, "seen", ppath), "seen", ppath,
                                       ds.n_attrs(), ds.n_objects());
        ds.unseen_pairs = read_pair_list(need_key(pj, "unseen", ppath), "unseen", ppath,
                                         ds.n_attrs(), ds.n_objects());
        ds.has_declared_pairs = true;
        std::vector<AttrObjPair> seen_sorted = ds.seen_pairs;
        std::sort(seen_sorted.begin(), seen_sorted.end());
        for (const auto& p : ds.unseen_pairs)
            if (std::binary_search(seen_sorted.begin(), seen_sorted.end(), p))
                throw DataError("pairs file " + ppath + ": pair " + pair_str(p.first, p.second) +
                                " declared both seen and unseen");
    }

    if (man.contains("truth_file")) {
        std::string tpath = resolve(man.at("truth_file").get<std::string>());
        std::ifstream is(tpath);
        if (!is) throw DataError("cannot open truth file: " + tpath);
        json tj;
        try {
            tj = json::parse(is);
        } catch (const json::parse_error& e) {
            throw DataError("truth file " + tpath + ": " + e.what());
        }
        SynthTruth truth;
        truth.prototypes = read_truth_matrix(need_key(tj, "prototypes", tpath), "prototypes",
                                             tpath, ds.n_objects(), ds.feature_dim);
        truth.directions = read_truth_matrix(need_key(tj, "directions", tpath), "directions",
                                             tpath, ds.n_attrs(), ds.feature_dim);
        ds.truth = std::move(truth);
    }

    return ds;
}

std::string write_dataset(const Dataset& ds, const std::string& dir) {
    int64_t n = static_cast<int64_t>(ds.records.size());
    if (ds.features.rank() != 2 || ds.features.rows() != n || ds.features.cols() != ds.feature_dim)
        throw ShapeError("write_dataset: features shape " + shape_str(ds.features.shape()) +
                         " does not match " + std::to_string(n) + " records of dim " +
                         std::to_string(ds.feature_dim));
    for (int64_t i = 0; i < n; ++i)
        if (ds.records[static_cast<size_t>(i)].id != i)
            throw DataError("write_dataset: records must be ordered by id");
    fs::create_directories(dir);
    fs::path base(dir);

    {
        std::ofstream os(base / "features.bin", std::ios::binary);
        for (int64_t i = 0; i < ds.features.numel(); ++i) {
            if (ds.features.dtype() == Dtype::F32)
                wire::write_f32(os, ds.features.at(i));
            else
                wire::write_f64(os, ds.features.at(i));
        }
        if (!os) throw DataError("write_dataset: failed writing " + (base / "features.bin").string());
    }
    {
        std::ofstream os(base / "labels.tsv");
        for (const auto& r : ds.records) {
            os << r.id << '\t' << r.object_id << '\t';
            for (size_t i = 0; i < r.attrs.size(); ++i) {
                if (i) os << ',';
                os << r.attrs[i];
            }
            os << '\n';
        }
        if (!os) throw DataError("write_dataset: failed writing " + (base / "labels.tsv").string());
    }

    json man;
    man["feature_file"] = "features.bin";
    man["dtype"] = dtype_name(ds.features.dtype());
    man["feature_dim"] = ds.feature_dim;
    man["n_records"] = n;
    man["attr_vocab"] = ds.attr_vocab;
    man["object_vocab"] = ds.object_vocab;
    man["labels_file"] = "labels.tsv";
    json splits = json::object();
    for (const auto& kv : ds.splits) splits[kv.first] = kv.second;
    man["splits"] = splits;

    if (ds.has_declared_pairs) {
        json pj;
        auto dump_pairs = [](const std::vector<AttrObjPair>& ps) {
            json arr = json::array();
            for (const auto& p : ps) arr.push_back(json::array({p.first, p.second}));
            return arr;
        };
        pj["seen"] = dump_pairs(ds.seen_pairs);
        pj["unseen"] = dump_pairs(ds.unseen_pairs);
        std::ofstream os(base / "pairs.json");
        os << pj.dump(2) << '\n';
        man["pairs_file"] = "pairs.json";
    }
    if (ds.truth) {
        auto dump_matrix = [](const Tensor& t) {
            json arr = json::array();
            for (int64_t r = 0; r < t.rows(); ++r) {
                json row = json::array();
                for (int64_t c = 0; c < t.cols(); ++c) row.push_back(t.at(r, c));
                arr.push_back(row);
            }
            return arr;
        };
        json tj;
        tj["prototypes"] = dump_matrix(ds.truth->prototypes);
        tj["directions"] = dump_matrix(ds.truth->directions);
        std::ofstream os(base / "truth.json");
        os << tj.dump(2) << '\n';
        man["truth_file"] = "truth.json";
    }

    std::string manifest_path = (base / "manifest.json").string();
    std::ofstream os(manifest_path);
    os << man.dump(2) << '\n';
    if (!os) throw DataError("write_dataset: failed writing " + manifest_path);
    return manifest_path;
}

EmbedKind embed_kind_from_name(const std::string& name) {
    if (name == "one_hot") return EmbedKind::OneHot;
    if (name == "word_vector") return EmbedKind::WordVector;
    throw ConfigError("unknown embedding kind \"" + name +
                      "\" (expected one_hot or word_vector)");
}

Tensor load_attr_embeddings(const std::vector<std::string>& vocab,
                            const std::string& path, EmbedKind kind) {
    int64_t n = static_cast<int64_t>(vocab.size());
    if (n == 0) throw ConfigError("load_attr_embeddings: empty vocab");
    if (kind == EmbedKind::OneHot) return Tensor::eye(n);

    std::ifstream is(path);
    if (!is) throw DataError("cannot open word-vector file: " + path);
    std::map<std::string, std::vector<double>> table;
    std::string line;
    int64_t dim = -1, lineno = 0;
    while (next_line(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string token;
        ls >> token;
        std::vector<double> vec;
        std::string num;
        while (ls >> num)
            vec.push_back(parse_real_field(num, path + " line " + std::to_string(lineno)));
        if (vec.empty())
            throw DataError("word-vector file " + path + " line " + std::to_string(lineno) +
                            ": token without values");
        if (dim < 0) dim = static_cast<int64_t>(vec.size());
        if (static_cast<int64_t>(vec.size()) != dim)
            throw DataError("word-vector file " + path + " line " + std::to_string(lineno) +
                            ": expected " + std::to_string(dim) + " values, found " +
                            std::to_string(vec.size()));
        table.emplace(token, std::move(vec));  // first occurrence wins
    }
    if (table.empty()) throw DataError("word-vector file " + path + " contains no vectors");

    Tensor out = Tensor::zeros({n, dim});
    std::vector<std::string> missing;
    for (int64_t i = 0; i < n; ++i) {
        const std::string& token = vocab[static_cast<size_t>(i)];
        std::vector<std::string> words;
        std::string cur;
        for (char ch : token) {
            if (ch == ' ' || ch == '_') {
                if (!cur.empty()) words.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!cur.empty()) words.push_back(cur);
        if (words.empty()) words.push_back(token);

        std::vector<std::string> absent;
        for (const auto& w : words)
            if (table.find(w) == table.end()) absent.push_back("\"" + w + "\"");
        if (!absent.empty()) {
            std::string desc = "\"" + token + "\"";
            if (words.size() > 1) desc += " (no entry for " + join(absent, ", ") + ")";
            missing.push_back(desc);
            continue;
        }
        for (const auto& w : words) {
            const auto& vec = table.at(w);
            for (int64_t c = 0; c < dim; ++c) out.at(i, c) += vec[static_cast<size_t>(c)];
        }
        for (int64_t c = 0; c < dim; ++c) out.at(i, c) /= static_cast<double>(words.size());
    }
    if (!missing.empty())
        throw DataError("word-vector file " + path + ": no vector for " +
                        std::to_string(missing.size()) + " vocab token(s): " + join(missing, ", "));
    return out;
}

Tensor compute_correlation(const std::vector<InstanceRecord>& records,
                           int64_t n_attrs,
                           std::vector<std::string>* warnings) {
    int64_t n_rec = static_cast<int64_t>(records.size());
    if (n_rec < 2)
        throw DataError("compute_correlation: need at least 2 records, got " +
                        std::to_string(n_rec));
    if (n_attrs < 1) throw ConfigError("compute_correlation: n_attrs must be positive");

    std::vector<int64_t> count(static_cast<size_t>(n_attrs), 0);
    std::vector<int64_t> co(static_cast<size_t>(n_attrs * n_attrs), 0);
    for (const auto& r : records) {
        for (int64_t a : r.attrs) {
            if (a < 0 || a >= n_attrs)
                throw DataError("compute_correlation: record " + std::to_string(r.id) +
                                " has attribute index out of range: " + std::to_string(a));
            ++count[static_cast<size_t>(a)];
        }
        for (size_t i = 0; i < r.attrs.size(); ++i)
            for (size_t j = i + 1; j < r.attrs.size(); ++j)
                ++co[static_cast<size_t>(r.attrs[i] * n_attrs + r.attrs[j])];
    }

    double inv_n = 1.0 / static_cast<double>(n_rec);
    std::vector<double> mu(static_cast<size_t>(n_attrs)), var(static_cast<size_t>(n_attrs));
    for (int64_t a = 0; a < n_attrs; ++a) {
        mu[static_cast<size_t>(a)] = static_cast<double>(count[static_cast<size_t>(a)]) * inv_n;
        // indicator variable: E[Y^2] = E[Y]
        var[static_cast<size_t>(a)] =
            mu[static_cast<size_t>(a)] - mu[static_cast<size_t>(a)] * mu[static_cast<size_t>(a)];
        if (count[static_cast<size_t>(a)] == 0 || count[static_cast<size_t>(a)] == n_rec)
            emit_warning(warnings, "attribute " + std::to_string(a) +
                                       " has zero label variance; its correlations are set to 0");
    }

    Tensor corr = Tensor::eye(n_attrs);
    for (int64_t i = 0; i < n_attrs; ++i) {
        bool zi = count[static_cast<size_t>(i)] == 0 || count[static_cast<size_t>(i)] == n_rec;
        for (int64_t j = i + 1; j < n_attrs; ++j) {
            bool zj = count[static_cast<size_t>(j)] == 0 || count[static_cast<size_t>(j)] == n_rec;
            double v = 0.0;
            if (!zi && !zj) {
                double cov = static_cast<double>(co[static_cast<size_t>(i * n_attrs + j)]) * inv_n -
                             mu[static_cast<size_t>(i)] * mu[static_cast<size_t>(j)];
                v = cov / std::sqrt(var[static_cast<size_t>(i)] * var[static_cast<size_t>(j)]);
                v = std::max(-1.0, std::min(1.0, v));
            }
            // mirrored assignment keeps the matrix bitwise symmetric
            corr.at(i, j) = v;
            corr.at(j, i) = v;
        }
    }
    return corr;
}

double corr_to_set(const Tensor& corr, int64_t attr,
                   const std::vector<int64_t>& attr_set) {
    int64_t n = corr.rows();
    if (corr.cols() != n) throw ShapeError("corr_to_set: correlation matrix must be square");
    if (attr < 0 || attr >= n)
        throw DataError("corr_to_set: attribute index out of range: " + std::to_string(attr));
    std::vector<int64_t> sorted = attr_set;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    double sum = 0.0;
    for (int64_t j : sorted) {
        if (j < 0 || j >= n)
            throw DataError("corr_to_set: attribute index out of range: " + std::to_string(j));
        sum += corr.at(attr, j);
    }
    return sum;
}

namespace {

struct PlantedPair {
    int64_t a, b;
    double p;
};

std::vector<PlantedPair> parse_corr_structure(const std::string& s, int64_t n_attrs) {
    std::vector<PlantedPair> out;
    if (s.empty()) return out;
    for (const auto& entry : split_on(s, ',')) {
        std::string where = "corr_structure entry \"" + entry + "\"";
        auto colon = entry.find(':');
        if (colon == std::string::npos)
            throw ConfigError(where + ": expected \"i-j:p\"");
        auto dash = entry.find('-');
        if (dash == std::string::npos || dash > colon)
            throw ConfigError(where + ": expected \"i-j:p\"");
        PlantedPair pp;
        try {
            pp.a = parse_int_field(entry.substr(0, dash), where);
            pp.b = parse_int_field(entry.substr(dash + 1, colon - dash - 1), where);
            pp.p = parse_real_field(entry.substr(colon + 1), where);
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        if (pp.a < 0 || pp.a >= n_attrs || pp.b < 0 || pp.b >= n_attrs)
            throw ConfigError(where + ": attribute index out of range for " +
                              std::to_string(n_attrs) + " attributes");
        if (pp.a == pp.b) throw ConfigError(where + ": the two attributes must differ");
        if (pp.p < 0.0 || pp.p > 1.0)
            throw ConfigError(where + ": probability must be in [0, 1]");
        out.push_back(pp);
    }
    return out;
}

}  // namespace

Dataset synth_generate(const SynthConfig& cfg, std::vector<std::string>* warnings) {
    if (cfg.n_attrs < 1 || cfg.n_objects < 1)
        throw ConfigError("synth_generate: need at least one attribute and one object");
    if (cfg.feature_dim < 1) throw ConfigError("synth_generate: feature_dim must be positive");
    if (cfg.per_pair_count < 1) throw ConfigError("synth_generate: per_pair_count must be >= 1");
    if (cfg.noise_sigma < 0.0) throw ConfigError("synth_generate: noise_sigma must be >= 0");
    if (cfg.test_fraction < 0.0 || cfg.val_fraction < 0.0 ||
        cfg.test_fraction + cfg.val_fraction >= 1.0)
        throw ConfigError("synth_generate: test_fraction + val_fraction must stay below 1");
    if (!cfg.corr_structure.empty() && !cfg.multi)
        throw ConfigError("synth_generate: corr_structure requires multi-attribute mode");
    if (cfg.unseen_pairs > 0 && cfg.multi)
        throw ConfigError("synth_generate: unseen pairs require single-attribute mode");
    if (cfg.unseen_pairs < 0) throw ConfigError("synth_generate: unseen_pairs must be >= 0");
    if (cfg.base_rate < 0.0 || cfg.base_rate > 1.0)
        throw ConfigError("synth_generate: base_rate must be in [0, 1]");
    int64_t n = cfg.n_attrs, m = cfg.n_objects, dim = cfg.feature_dim;
    if (dim < n + m)
        emit_warning(warnings, "synth_generate: feature_dim " + std::to_string(dim) +
                                   " is below n_attrs + n_objects = " + std::to_string(n + m) +
                                   "; attribute directions may not be separable");
    auto planted = parse_corr_structure(cfg.corr_structure, n);

    Rng rng(cfg.seed);
    Tensor prototypes = Tensor::zeros({m, dim});
    for (int64_t i = 0; i < prototypes.numel(); ++i)
        prototypes.at(i) = cfg.proto_scale * rng.normal();
    Tensor directions = Tensor::zeros({n, dim});
    for (int64_t i = 0; i < directions.numel(); ++i)
        directions.at(i) = cfg.dir_scale * rng.normal();
    // planted pairs additionally share a direction component, so correlated
    // attributes also look related in feature space
    for (const auto& pp : planted) {
        for (int64_t c = 0; c < dim; ++c) {
            double shared = cfg.dir_scale * rng.normal();
            directions.at(pp.a, c) += pp.p * shared;
            directions.at(pp.b, c) += pp.p * shared;
        }
    }

    // held-out pairs: pick from a shuffled order, never orphaning an
    // attribute or object from the train split
    std::vector<char> held(static_cast<size_t>(n * m), 0);
    if (cfg.unseen_pairs > 0) {
        if (cfg.unseen_pairs >= n * m)
            throw ConfigError("synth_generate: cannot hold out all " + std::to_string(n * m) +
                              " pairs");
        std::vector<int64_t> order(static_cast<size_t>(n * m));
        for (int64_t i = 0; i < n * m; ++i) order[static_cast<size_t>(i)] = i;
        rng.shuffle(order);
        std::vector<int64_t> attr_left(static_cast<size_t>(n), m), obj_left(static_cast<size_t>(m), n);
        int64_t taken = 0;
        for (int64_t idx : order) {
            if (taken == cfg.unseen_pairs) break;
            int64_t a = idx / m, o = idx % m;
            if (attr_left[static_cast<size_t>(a)] <= 1 || obj_left[static_cast<size_t>(o)] <= 1)
                continue;
            held[static_cast<size_t>(idx)] = 1;
            --attr_left[static_cast<size_t>(a)];
            --obj_left[static_cast<size_t>(o)];
            ++taken;
        }
        if (taken < cfg.unseen_pairs)
            throw ConfigError("synth_generate: cannot hold out " +
                              std::to_string(cfg.unseen_pairs) +
                              " pairs while keeping every attribute and object in train");
    }

    auto planted_prob = [&](int64_t primary, int64_t other) {
        for (const auto& pp : planted) {
            if (pp.a == primary && pp.b == other) return pp.p;
            if (pp.b == primary && pp.a == other) return pp.p;
        }
        return cfg.multi ? cfg.base_rate : 0.0;
    };

    int64_t n_test_per = static_cast<int64_t>(std::llround(
        static_cast<double>(cfg.per_pair_count) * cfg.test_fraction));
    int64_t n_val_per = static_cast<int64_t>(std::llround(
        static_cast<double>(cfg.per_pair_count) * cfg.val_fraction));
    int64_t n_train_per = cfg.per_pair_count - n_test_per - n_val_per;
    if (n_train_per < 1)
        throw ConfigError("synth_generate: the requested fractions leave no training records "
                          "per pair (per_pair_count " + std::to_string(cfg.per_pair_count) + ")");

    Dataset ds;
    ds.feature_dim = dim;
    for (int64_t a = 0; a < n; ++a) ds.attr_vocab.push_back("attr" + std::to_string(a));
    for (int64_t o = 0; o < m; ++o) ds.object_vocab.push_back("obj" + std::to_string(o));
    int64_t n_records = n * m * cfg.per_pair_count;
    ds.features = Tensor::zeros({n_records, dim}, cfg.dtype);
    std::vector<int64_t> train_ids, val_ids, test_ids;

    int64_t id = 0;
    for (int64_t a = 0; a < n; ++a) {
        for (int64_t o = 0; o < m; ++o) {
            bool unseen = held[static_cast<size_t>(a * m + o)] != 0;
            for (int64_t k = 0; k < cfg.per_pair_count; ++k) {
                InstanceRecord rec;
                rec.id = id;
                rec.object_id = o;
                rec.attrs.push_back(a);
                if (cfg.multi) {
                    for (int64_t b = 0; b < n; ++b) {
                        if (b == a) continue;
                        double p = planted_prob(a, b);
                        if (p > 0.0 && rng.uniform() < p) rec.attrs.push_back(b);
                    }
                    std::sort(rec.attrs.begin(), rec.attrs.end());
                }
                // feature = prototype + directions (ascending attr order) + noise
                for (int64_t c = 0; c < dim; ++c) ds.features.at(id, c) = prototypes.at(o, c);
                for (int64_t attr : rec.attrs)
                    for (int64_t c = 0; c < dim; ++c) ds.features.at(id, c) += directions.at(attr, c);
                if (cfg.noise_sigma > 0.0)
                    for (int64_t c = 0; c < dim; ++c)
                        ds.features.at(id, c) += cfg.noise_sigma * rng.normal();
                if (unseen)
                    test_ids.push_back(id);
                else if (k < n_train_per)
                    train_ids.push_back(id);
                else if (k < n_train_per + n_val_per)
                    val_ids.push_back(id);
                else
                    test_ids.push_back(id);
                ds.records.push_back(std::move(rec));
                ++id;
            }
        }
    }
    ds.features.round_to_dtype();
    ds.splits["train"] = std::move(train_ids);
    if (n_val_per > 0) ds.splits["val"] = std::move(val_ids);
    ds.splits["test"] = std::move(test_ids);

    if (!cfg.multi) {
        ds.has_declared_pairs = true;
        for (int64_t a = 0; a < n; ++a)
            for (int64_t o = 0; o < m; ++o) {
                if (held[static_cast<size_t>(a * m + o)])
                    ds.unseen_pairs.emplace_back(a, o);
                else
                    ds.seen_pairs.emplace_back(a, o);
            }
    }
    ds.truth = SynthTruth{std::move(prototypes), std::move(directions)};
    return ds;
}

int64_t PairSpace::index_of(int64_t attr, int64_t object) const {
    if (attr < 0 || attr >= n_attrs || object < 0 || object >= n_objects)
        throw DataError("pair " + pair_str(attr, object) + " out of range for " +
                        std::to_string(n_attrs) + " attrs x " + std::to_string(n_objects) +
                        " objects");
    return attr * n_objects + object;
}

PairSpace build_pair_space(const std::vector<InstanceRecord>& train_records,
                           const std::vector<InstanceRecord>& test_records,
                           const std::optional<std::vector<AttrObjPair>>& declared,
                           const std::vector<AttrObjPair>& unseen,
                           int64_t n_attrs, int64_t n_objects) {
    if (n_attrs < 1 || n_objects < 1)
        throw ConfigError("build_pair_space: need at least one attribute and one object");
    PairSpace ps;
    ps.n_attrs = n_attrs;
    ps.n_objects = n_objects;
    size_t grid = static_cast<size_t>(n_attrs * n_objects);
    for (int64_t a = 0; a < n_attrs; ++a)
        for (int64_t o = 0; o < n_objects; ++o) ps.pairs.emplace_back(a, o);
    ps.seen_mask.assign(grid, 0);
    ps.unseen_mask.assign(grid, 0);
    ps.feasible_mask.assign(grid, 0);

    auto record_pair = [&](const InstanceRecord& r) {
        if (r.attrs.size() != 1)
            throw DataError("pair bookkeeping needs single-attribute records; record " +
                            std::to_string(r.id) + " has " + std::to_string(r.attrs.size()) +
                            " attributes");
        return ps.index_of(r.attrs[0], r.object_id);
    };

    std::vector<char> observed_train(grid, 0), observed_test(grid, 0);
    for (const auto& r : train_records) observed_train[static_cast<size_t>(record_pair(r))] = 1;
    for (const auto& r : test_records) observed_test[static_cast<size_t>(record_pair(r))] = 1;

    for (const auto& p : unseen) {
        size_t idx = static_cast<size_t>(ps.index_of(p.first, p.second));
        if (observed_train[idx])
            throw DataError("unseen pair " + pair_str(p.first, p.second) +
                            " occurs in the train split");
        ps.unseen_mask[idx] = 1;
    }

    if (declared) {
        for (const auto& p : *declared)
            ps.feasible_mask[static_cast<size_t>(ps.index_of(p.first, p.second))] = 1;
    } else {
        for (size_t i = 0; i < grid; ++i)
            ps.feasible_mask[i] = observed_train[i] || observed_test[i] || ps.unseen_mask[i];
    }

    for (size_t i = 0; i < grid; ++i) {
        if ((observed_train[i] || observed_test[i] || ps.unseen_mask[i]) && !ps.feasible_mask[i])
            throw DataError("pair " + pair_str(ps.pairs[i].first, ps.pairs[i].second) +
                            " appears in the data but not in the declared pair list");
        ps.seen_mask[i] = observed_train[i];
    }
    return ps;
}

PairSpace build_pair_space(const Dataset& ds,
                           const std::string& train_split,
                           const std::string& test_split) {
    std::optional<std::vector<AttrObjPair>> declared;
    if (ds.has_declared_pairs) {
        std::vector<AttrObjPair> all = ds.seen_pairs;
        all.insert(all.end(), ds.unseen_pairs.begin(), ds.unseen_pairs.end());
        declared = std::move(all);
    }
    PairSpace ps = build_pair_space(ds.gather(train_split), ds.gather(test_split), declared,
                                    ds.unseen_pairs, ds.n_attrs(), ds.n_objects());
    if (ds.has_declared_pairs) {
        // declared-seen pairs count as seen even without train records
        for (const auto& p : ds.seen_pairs) {
            size_t idx = static_cast<size_t>(ps.index_of(p.first, p.second));
            if (ps.unseen_mask[idx])
                throw DataError("pair " + pair_str(p.first, p.second) +
                                " declared both seen and unseen");
            ps.seen_mask[idx] = 1;
        }
    }
    return ps;
}

}  // namespace symcomp
