#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "symcomp/common.hpp"
#include "symcomp/dataset.hpp"

using namespace symcomp;
namespace fs = std::filesystem;

namespace {

fs::path test_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("symcomp_data_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put_file(const fs::path& p, const std::string& content) {
    std::ofstream os(p);
    os << content;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

template <typename Fn>
std::string error_of(Fn&& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return "(no error)";
}

const char* kManifest = R"({
  "feature_file": "feat.tsv",
  "dtype": "f64",
  "feature_dim": 4,
  "n_records": 2,
  "attr_vocab": ["red", "wet"],
  "object_vocab": ["apple", "road"],
  "labels_file": "labels.tsv",
  "splits": {"train": [0], "test": [1]}
})";

// two records, four feature dims, one attribute each
fs::path write_fixture(const std::string& name) {
    fs::path dir = test_dir(name);
    put_file(dir / "manifest.json", kManifest);
    put_file(dir / "feat.tsv", "1 2 3 4\n5 6 7 8\n");
    put_file(dir / "labels.tsv", "0\t0\t0\n1\t1\t1\n");
    return dir;
}

// records carrying the attribute sets encoded by a dense binary matrix Y[record][attr]
std::vector<InstanceRecord> records_from_matrix(const std::vector<std::vector<int>>& Y) {
    std::vector<InstanceRecord> out;
    for (size_t r = 0; r < Y.size(); ++r) {
        InstanceRecord rec;
        rec.id = static_cast<int64_t>(r);
        for (size_t a = 0; a < Y[r].size(); ++a)
            if (Y[r][a]) rec.attrs.push_back(static_cast<int64_t>(a));
        out.push_back(rec);
    }
    return out;
}

// Independent Pearson reference: explicit deviation sums over the dense
// matrix, nothing shared with the counting implementation under test.
Tensor pearson_oracle(const std::vector<std::vector<int>>& Y) {
    int64_t n_rec = static_cast<int64_t>(Y.size());
    int64_t n_attr = static_cast<int64_t>(Y[0].size());
    std::vector<double> mean(static_cast<size_t>(n_attr), 0.0);
    for (int64_t a = 0; a < n_attr; ++a) {
        for (int64_t r = 0; r < n_rec; ++r) mean[a] += Y[r][a];
        mean[a] /= static_cast<double>(n_rec);
    }
    Tensor C = Tensor::eye(n_attr);
    for (int64_t i = 0; i < n_attr; ++i) {
        for (int64_t j = i + 1; j < n_attr; ++j) {
            double num = 0, di = 0, dj = 0;
            for (int64_t r = 0; r < n_rec; ++r) {
                num += (Y[r][i] - mean[i]) * (Y[r][j] - mean[j]);
                di += (Y[r][i] - mean[i]) * (Y[r][i] - mean[i]);
                dj += (Y[r][j] - mean[j]) * (Y[r][j] - mean[j]);
            }
            double v = (di == 0 || dj == 0) ? 0.0 : num / std::sqrt(di * dj);
            C.at(i, j) = v;
            C.at(j, i) = v;
        }
    }
    return C;
}

}  // namespace

TEST_CASE("manifest fixture loads with expected shapes and labels") {
    fs::path dir = write_fixture("load_ok");
    Dataset ds = load_dataset((dir / "manifest.json").string());
    CHECK(ds.records.size() == 2);
    CHECK(ds.feature_dim == 4);
    CHECK(ds.features.at(1, 2) == 7.0);
    CHECK(ds.attr_vocab == std::vector<std::string>{"red", "wet"});
    CHECK(ds.records[0].attrs == std::vector<int64_t>{0});
    CHECK(ds.records[1].object_id == 1);
    CHECK(ds.split("train") == std::vector<int64_t>{0});
    CHECK_FALSE(ds.has_declared_pairs);
}

TEST_CASE("attribute index past the vocab is rejected with file and line") {
    fs::path dir = write_fixture("attr_range");
    put_file(dir / "labels.tsv", "0\t0\t0\n1\t1\t2\n");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("attribute index out of range") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("missing feature blob names the path") {
    fs::path dir = write_fixture("missing_blob");
    fs::remove(dir / "feat.tsv");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("cannot open feature file") != std::string::npos);
    CHECK(msg.find("feat.tsv") != std::string::npos);
}

TEST_CASE("duplicate and missing record ids are rejected") {
    fs::path dir = write_fixture("dup_id");
    put_file(dir / "labels.tsv", "0\t0\t0\n0\t1\t1\n");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("duplicate record id 0") != std::string::npos);

    put_file(dir / "labels.tsv", "0\t0\t0\n");
    msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("missing record id 1") != std::string::npos);
}

TEST_CASE("tsv feature rows must match the declared dimension") {
    fs::path dir = write_fixture("tsv_dim");
    put_file(dir / "feat.tsv", "1 2 3 4\n5 6 7\n");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("expected 4 values") != std::string::npos);
}

TEST_CASE("non-finite feature values are rejected") {
    fs::path dir = write_fixture("nonfinite");
    put_file(dir / "feat.tsv", "1 2 3 4\n5 nan 7 8\n");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("non-finite") != std::string::npos);
    CHECK(msg.find("record 1") != std::string::npos);
}

TEST_CASE("binary feature file size must match the manifest") {
    fs::path dir = write_fixture("bin_size");
    std::string man(kManifest);
    man.replace(man.find("feat.tsv"), 8, "feat.bin");
    put_file(dir / "manifest.json", man);
    put_file(dir / "feat.bin", "short");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("expected 64 bytes") != std::string::npos);
}

TEST_CASE("manifest splits are validated") {
    fs::path dir = write_fixture("bad_split");
    std::string man(kManifest);
    man.replace(man.find("\"test\": [1]"), 11, "\"eval\": [1]");
    put_file(dir / "manifest.json", man);
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("missing required split \"test\"") != std::string::npos);

    man = kManifest;
    man.replace(man.find("\"train\": [0]"), 12, "\"train\": [0, 0]");
    put_file(dir / "manifest.json", man);
    msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("twice") != std::string::npos);

    man = kManifest;
    man.replace(man.find("\"train\": [0]"), 12, "\"train\": [7]");
    put_file(dir / "manifest.json", man);
    msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("out of range") != std::string::npos);
}

TEST_CASE("train records must carry at least one attribute") {
    fs::path dir = write_fixture("empty_attrs");
    put_file(dir / "labels.tsv", "0\t0\t\n1\t1\t1\n");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("no attributes") != std::string::npos);
}

TEST_CASE("pairs file rejects a pair declared both seen and unseen") {
    fs::path dir = write_fixture("pair_clash");
    std::string man(kManifest);
    man.insert(man.rfind('}'), ", \"pairs_file\": \"pairs.json\"\n");
    put_file(dir / "manifest.json", man);
    put_file(dir / "pairs.json", R"({"seen": [[0, 0], [1, 1]], "unseen": [[1, 1]]})");
    std::string msg = error_of([&] { load_dataset((dir / "manifest.json").string()); });
    CHECK(msg.find("both seen and unseen") != std::string::npos);
}

TEST_CASE("unknown split lookups list what exists") {
    fs::path dir = write_fixture("split_lookup");
    Dataset ds = load_dataset((dir / "manifest.json").string());
    std::string msg = error_of([&] { ds.split("nope"); });
    CHECK(msg.find("no split named \"nope\"") != std::string::npos);
    CHECK(msg.find("train") != std::string::npos);
}

TEST_CASE("one-hot embeddings are the identity") {
    std::vector<std::string> vocab{"a", "b", "c"};
    Tensor e = load_attr_embeddings(vocab, "", EmbedKind::OneHot);
    CHECK(e == Tensor::eye(3));
}

TEST_CASE("word vectors follow vocab order") {
    fs::path dir = test_dir("wv_order");
    put_file(dir / "vec.txt", "red 1 0\ndry 0 1\n");
    Tensor e = load_attr_embeddings({"dry", "red"}, (dir / "vec.txt").string(),
                                    EmbedKind::WordVector);
    CHECK(e.at(0, 0) == 0.0);
    CHECK(e.at(0, 1) == 1.0);
    CHECK(e.at(1, 0) == 1.0);
    CHECK(e.at(1, 1) == 0.0);
}

TEST_CASE("multiword tokens average their constituent vectors") {
    fs::path dir = test_dir("wv_multi");
    put_file(dir / "vec.txt", "sliced 1 0\napple 0 1\n");
    for (const char* token : {"sliced apple", "sliced_apple"}) {
        Tensor e = load_attr_embeddings({token}, (dir / "vec.txt").string(),
                                        EmbedKind::WordVector);
        CHECK(e.at(0, 0) == 0.5);
        CHECK(e.at(0, 1) == 0.5);
    }
}

TEST_CASE("every vocab token without a vector is reported at once") {
    fs::path dir = test_dir("wv_missing");
    put_file(dir / "vec.txt", "red 1 0\nz 0 1\n");
    std::string msg = error_of([&] {
        load_attr_embeddings({"x", "y z", "red"}, (dir / "vec.txt").string(),
                             EmbedKind::WordVector);
    });
    CHECK(msg.find("2 vocab token(s)") != std::string::npos);
    CHECK(msg.find("\"x\"") != std::string::npos);
    CHECK(msg.find("\"y z\"") != std::string::npos);
    CHECK(msg.find("no entry for \"y\"") != std::string::npos);
}

TEST_CASE("word-vector rows must share one dimension") {
    fs::path dir = test_dir("wv_dim");
    put_file(dir / "vec.txt", "red 1 0\ndry 0 1 2\n");
    std::string msg = error_of([&] {
        load_attr_embeddings({"red"}, (dir / "vec.txt").string(), EmbedKind::WordVector);
    });
    CHECK(msg.find("line 2") != std::string::npos);
}

TEST_CASE("embedding kind names parse") {
    CHECK(embed_kind_from_name("one_hot") == EmbedKind::OneHot);
    CHECK(embed_kind_from_name("word_vector") == EmbedKind::WordVector);
    CHECK_THROWS_AS(embed_kind_from_name("glove"), ConfigError);
}

TEST_CASE("correlation of hand-checked label patterns") {
    // identical columns
    Tensor C = compute_correlation(
        records_from_matrix({{1, 1}, {1, 1}, {0, 0}, {0, 0}}), 2);
    CHECK(C.at(0, 1) == 1.0);
    // complementary columns
    C = compute_correlation(records_from_matrix({{1, 0}, {0, 1}}), 2);
    CHECK(C.at(0, 1) == -1.0);
    // orthogonal columns: deviations multiply to +-0.25 and cancel
    C = compute_correlation(
        records_from_matrix({{1, 1}, {1, 0}, {0, 1}, {0, 0}}), 2);
    CHECK(C.at(0, 1) == 0.0);
    CHECK(C.at(0, 0) == 1.0);
}

TEST_CASE("zero-variance attributes correlate to nothing and warn") {
    std::vector<std::string> warnings;
    Tensor C = compute_correlation(
        records_from_matrix({{1, 1}, {1, 0}, {1, 0}}), 2, &warnings);
    CHECK(C.at(0, 1) == 0.0);
    CHECK(C.at(0, 0) == 1.0);
    CHECK(C.at(1, 1) == 1.0);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("attribute 0") != std::string::npos);
}

TEST_CASE("correlation needs two records") {
    CHECK_THROWS_AS(compute_correlation(records_from_matrix({{1}}), 1), DataError);
}

TEST_CASE("correlation matches a brute-force reference on random matrices") {
    for (int trial = 0; trial < 50; ++trial) {
        Rng rng(mix_seed(999, static_cast<uint64_t>(trial)));
        int64_t n_rec = 2 + static_cast<int64_t>(rng.uniform_int(31));
        int64_t n_attr = 1 + static_cast<int64_t>(rng.uniform_int(10));
        std::vector<std::vector<int>> Y(static_cast<size_t>(n_rec),
                                        std::vector<int>(static_cast<size_t>(n_attr), 0));
        for (auto& row : Y)
            for (auto& cell : row) cell = rng.uniform() < 0.5 ? 1 : 0;
        std::vector<std::string> warnings;
        Tensor got = compute_correlation(records_from_matrix(Y), n_attr, &warnings);
        Tensor want = pearson_oracle(Y);
        CHECK(max_abs_diff(got, want) <= 1e-10);
        // exact symmetry
        double asym = 0;
        for (int64_t i = 0; i < n_attr; ++i)
            for (int64_t j = 0; j < n_attr; ++j)
                asym = std::max(asym, std::abs(got.at(i, j) - got.at(j, i)));
        CHECK(asym == 0.0);
    }
}

TEST_CASE("set correlation sums pairwise entries") {
    Tensor C = Tensor::eye(3);
    C.at(0, 1) = 0.4;
    C.at(1, 0) = 0.4;
    C.at(0, 2) = -0.1;
    C.at(2, 0) = -0.1;
    CHECK(corr_to_set(C, 0, {1}) == 0.4);
    CHECK(corr_to_set(C, 0, {1, 2}) == doctest::Approx(0.3));
    CHECK(corr_to_set(C, 0, {2, 1}) == corr_to_set(C, 0, {1, 2}));
    CHECK(corr_to_set(C, 0, {}) == 0.0);
    CHECK_THROWS_AS(corr_to_set(C, 3, {0}), DataError);
    CHECK_THROWS_AS(corr_to_set(C, 0, {5}), DataError);
}

TEST_CASE("extending a set by its largest attribute adds exactly one entry") {
    Rng rng(4242);
    Tensor C = Tensor::zeros({8, 8});
    for (int64_t i = 0; i < C.numel(); ++i) C.at(i) = rng.uniform(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int64_t> base;
        for (int64_t j = 0; j < 7; ++j)
            if (rng.uniform() < 0.5) base.push_back(j);
        std::vector<int64_t> extended = base;
        extended.push_back(7);  // sorts after every base member
        double lhs = corr_to_set(C, 2, extended);
        double rhs = corr_to_set(C, 2, base) + C.at(2, 7);
        CHECK(lhs == rhs);
    }
}

TEST_CASE("synthetic generation is deterministic per seed") {
    SynthConfig cfg;
    cfg.n_attrs = 3;
    cfg.n_objects = 2;
    cfg.feature_dim = 8;
    cfg.per_pair_count = 4;
    std::vector<std::string> w;
    Dataset a = synth_generate(cfg, &w);
    Dataset b = synth_generate(cfg, &w);
    CHECK(a.features == b.features);
    CHECK(a.records.size() == b.records.size());
    for (size_t i = 0; i < a.records.size(); ++i) CHECK(a.records[i] == b.records[i]);
    CHECK(a.splits == b.splits);
    CHECK(a.seen_pairs == b.seen_pairs);

    cfg.seed = 8;
    Dataset c = synth_generate(cfg, &w);
    CHECK_FALSE(a.features == c.features);
}

TEST_CASE("noiseless features equal prototype plus direction exactly") {
    SynthConfig cfg;
    cfg.n_attrs = 3;
    cfg.n_objects = 2;
    cfg.feature_dim = 8;
    cfg.per_pair_count = 2;
    cfg.noise_sigma = 0.0;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    REQUIRE(ds.truth.has_value());
    for (const auto& rec : ds.records) {
        REQUIRE(rec.attrs.size() == 1);
        for (int64_t c = 0; c < ds.feature_dim; ++c) {
            double want = ds.truth->prototypes.at(rec.object_id, c);
            want += ds.truth->directions.at(rec.attrs[0], c);
            CHECK(ds.features.at(rec.id, c) == want);
        }
    }
}

TEST_CASE("single mode assigns exactly the pair attribute") {
    SynthConfig cfg;
    cfg.per_pair_count = 3;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    CHECK(ds.records.size() == static_cast<size_t>(6 * 5 * 3));
    for (const auto& rec : ds.records) {
        int64_t block = rec.id / 3;
        CHECK(rec.attrs == std::vector<int64_t>{block / 5});
        CHECK(rec.object_id == block % 5);
    }
}

TEST_CASE("multi mode keeps the primary attribute and adds extras") {
    SynthConfig cfg;
    cfg.multi = true;
    cfg.base_rate = 0.5;
    cfg.per_pair_count = 4;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    bool any_extra = false;
    for (const auto& rec : ds.records) {
        int64_t primary = rec.id / (5 * 4);  // blocks are attribute-major
        CHECK(std::binary_search(rec.attrs.begin(), rec.attrs.end(), primary));
        CHECK(std::is_sorted(rec.attrs.begin(), rec.attrs.end()));
        if (rec.attrs.size() > 1) any_extra = true;
    }
    CHECK(any_extra);
    CHECK_FALSE(ds.has_declared_pairs);
}

TEST_CASE("planted correlation shows up in the generated labels") {
    SynthConfig cfg;
    cfg.multi = true;
    cfg.corr_structure = "0-1:0.95";
    cfg.base_rate = 0.1;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    Tensor C = compute_correlation(ds.gather("train"), ds.n_attrs(), &w);
    CHECK(C.at(0, 1) > 0.5);
    // regression pin: measured once on this exact configuration
    CHECK(C.at(0, 1) == doctest::Approx(0.70002975855884464).epsilon(1e-12));
}

TEST_CASE("generator configuration errors") {
    std::vector<std::string> w;
    SynthConfig cfg;
    cfg.per_pair_count = 0;
    CHECK_THROWS_AS(synth_generate(cfg, &w), ConfigError);

    cfg = SynthConfig{};
    cfg.corr_structure = "0-1:0.5";  // single mode cannot host co-occurrence
    CHECK_THROWS_AS(synth_generate(cfg, &w), ConfigError);

    cfg = SynthConfig{};
    cfg.multi = true;
    cfg.unseen_pairs = 2;
    CHECK_THROWS_AS(synth_generate(cfg, &w), ConfigError);

    cfg = SynthConfig{};
    cfg.multi = true;
    for (const char* bad : {"0-1", "0-0:0.5", "0-9:0.5", "0-1:1.5"}) {
        cfg.corr_structure = bad;
        CHECK_THROWS_AS(synth_generate(cfg, &w), ConfigError);
    }

    cfg = SynthConfig{};
    cfg.per_pair_count = 2;
    cfg.test_fraction = 0.5;
    cfg.val_fraction = 0.25;
    CHECK_THROWS_AS(synth_generate(cfg, &w), ConfigError);
}

TEST_CASE("small feature dimension warns") {
    SynthConfig cfg;
    cfg.feature_dim = 8;
    cfg.per_pair_count = 1;
    cfg.test_fraction = 0.0;
    std::vector<std::string> w;
    synth_generate(cfg, &w);
    REQUIRE(!w.empty());
    CHECK(w[0].find("feature_dim") != std::string::npos);
}

TEST_CASE("held-out pairs never appear in train and stay covered") {
    SynthConfig cfg;
    cfg.unseen_pairs = 4;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    REQUIRE(ds.unseen_pairs.size() == 4);
    CHECK(ds.seen_pairs.size() == static_cast<size_t>(6 * 5 - 4));
    // per pair: 30 train + 10 test when seen, 40 test when unseen
    CHECK(ds.split("train").size() == static_cast<size_t>(26 * 30));
    CHECK(ds.split("test").size() == static_cast<size_t>(26 * 10 + 4 * 40));

    PairSpace ps = build_pair_space(ds);
    int64_t unseen_count = 0;
    std::vector<int> attr_seen(6, 0), obj_seen(5, 0);
    for (int64_t i = 0; i < ps.size(); ++i) {
        if (ps.unseen_mask[static_cast<size_t>(i)]) ++unseen_count;
        if (ps.seen_mask[static_cast<size_t>(i)]) {
            ++attr_seen[static_cast<size_t>(ps.pairs[static_cast<size_t>(i)].first)];
            ++obj_seen[static_cast<size_t>(ps.pairs[static_cast<size_t>(i)].second)];
        }
        CHECK((ps.seen_mask[static_cast<size_t>(i)] && ps.unseen_mask[static_cast<size_t>(i)]) == false);
    }
    CHECK(unseen_count == 4);
    for (int c : attr_seen) CHECK(c >= 1);
    for (int c : obj_seen) CHECK(c >= 1);
}

TEST_CASE("validation fraction produces a val split") {
    SynthConfig cfg;
    cfg.n_attrs = 2;
    cfg.n_objects = 2;
    cfg.per_pair_count = 10;
    cfg.val_fraction = 0.2;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    CHECK(ds.split("val").size() == static_cast<size_t>(4 * 2));
    CHECK(ds.split("train").size() == static_cast<size_t>(4 * 5));
}

TEST_CASE("dataset round-trips through the on-disk format") {
    SynthConfig cfg;
    cfg.n_attrs = 3;
    cfg.n_objects = 2;
    cfg.feature_dim = 8;
    cfg.per_pair_count = 4;
    cfg.unseen_pairs = 1;
    std::vector<std::string> w;
    for (Dtype dtype : {Dtype::F64, Dtype::F32}) {
        cfg.dtype = dtype;
        Dataset ds = synth_generate(cfg, &w);
        fs::path dir = test_dir(std::string("roundtrip_") + dtype_name(dtype));
        std::string manifest = write_dataset(ds, dir.string());
        Dataset back = load_dataset(manifest);
        CHECK(back.features == ds.features);
        CHECK(back.attr_vocab == ds.attr_vocab);
        CHECK(back.object_vocab == ds.object_vocab);
        CHECK(back.splits == ds.splits);
        CHECK(back.seen_pairs == ds.seen_pairs);
        CHECK(back.unseen_pairs == ds.unseen_pairs);
        REQUIRE(back.records.size() == ds.records.size());
        for (size_t i = 0; i < ds.records.size(); ++i) CHECK(back.records[i] == ds.records[i]);
        REQUIRE(back.truth.has_value());
        CHECK(back.truth->prototypes == ds.truth->prototypes);
        CHECK(back.truth->directions == ds.truth->directions);
    }
}

TEST_CASE("writing the same dataset twice produces identical bytes") {
    SynthConfig cfg;
    cfg.n_attrs = 2;
    cfg.n_objects = 2;
    cfg.feature_dim = 6;
    cfg.per_pair_count = 3;
    std::vector<std::string> w;
    Dataset ds = synth_generate(cfg, &w);
    fs::path d1 = test_dir("bytes_a"), d2 = test_dir("bytes_b");
    write_dataset(ds, d1.string());
    write_dataset(ds, d2.string());
    for (const char* f : {"manifest.json", "features.bin", "labels.tsv", "pairs.json", "truth.json"})
        CHECK(slurp(d1 / f) == slurp(d2 / f));
}

TEST_CASE("pair space unions observed and held-out pairs") {
    InstanceRecord train{0, 0, {0}};
    InstanceRecord test{1, 1, {0}};
    PairSpace ps = build_pair_space({train}, {test}, std::nullopt, {{0, 1}}, 1, 2);
    CHECK(ps.feasible_mask == std::vector<char>{1, 1});
    CHECK(ps.seen_mask == std::vector<char>{1, 0});
    CHECK(ps.unseen_mask == std::vector<char>{0, 1});
    CHECK(ps.index_of(0, 1) == 1);
}

TEST_CASE("pair space rejects contradictions") {
    InstanceRecord train{0, 0, {0}};
    InstanceRecord test{1, 1, {0}};
    // held-out pair occurring in train
    CHECK_THROWS_AS(build_pair_space({train}, {}, std::nullopt, {{0, 0}}, 1, 2), DataError);
    // declared list omitting an observed test pair
    std::string msg = error_of([&] {
        build_pair_space({train}, {test}, std::vector<AttrObjPair>{{0, 0}}, {}, 1, 2);
    });
    CHECK(msg.find("(attr 0, object 1)") != std::string::npos);
    CHECK(msg.find("declared pair list") != std::string::npos);
    // pair bookkeeping is defined for single-attribute records only
    InstanceRecord multi{0, 0, {0, 1}};
    CHECK_THROWS_AS(build_pair_space({multi}, {}, std::nullopt, {}, 2, 2), DataError);
    // index lookups are bounds-checked
    PairSpace ps = build_pair_space({train}, {test}, std::nullopt, {}, 1, 2);
    CHECK_THROWS_AS(ps.index_of(1, 0), DataError);
}

TEST_CASE("gather returns records in split order") {
    fs::path dir = write_fixture("gather");
    Dataset ds = load_dataset((dir / "manifest.json").string());
    auto recs = ds.gather("test");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].id == 1);
}
