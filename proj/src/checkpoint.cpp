#include "symcomp/checkpoint.hpp"

#include "symcomp/wire.hpp"

#include <fstream>
#include <sstream>

namespace symcomp {

static const char* kMagic = "symcomp-ckpt 1";

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw DataError("checkpoint: missing metadata key '" + key + "'");
    return it->second;
}

int64_t Checkpoint::meta_int(const std::string& key) const {
    try {
        return std::stoll(meta_at(key));
    } catch (const std::logic_error&) {
        throw DataError("checkpoint: metadata '" + key + "' is not an integer: " + meta_at(key));
    }
}

double Checkpoint::meta_real(const std::string& key) const {
    try {
        return std::stod(meta_at(key));
    } catch (const std::logic_error&) {
        throw DataError("checkpoint: metadata '" + key + "' is not a number: " + meta_at(key));
    }
}

ParamStore Checkpoint::to_store() const {
    ParamStore store(seed, dtype);
    for (const auto& item : items) {
        if (item.trainable)
            store.add_param(item.name, item.value);
        else
            store.add_buffer(item.name, item.value);
    }
    return store;
}

void save_checkpoint(const ParamStore& store, const std::map<std::string, std::string>& meta,
                     const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open '" + path + "' for writing");
    os << kMagic << "\n";
    os << "dtype " << dtype_name(store.dtype()) << "\n";
    os << "seed " << store.seed() << "\n";
    for (const auto& [k, v] : meta) {
        if (k.find_first_of(" \n") != std::string::npos || v.find('\n') != std::string::npos)
            throw ConfigError("checkpoint: metadata key/value may not contain spaces in key or newlines");
        os << "meta " << k << " " << v << "\n";
    }
    for (const auto& name : store.names()) {
        const Tensor& t = store.value(name);
        os << "tensor " << name << " " << (store.is_param(name) ? "param" : "buffer") << " "
           << t.rank();
        for (int64_t d : t.shape()) os << " " << d;
        os << "\n";
    }
    os << "data\n";
    for (const auto& name : store.names()) {
        const Tensor& t = store.value(name);
        for (int64_t i = 0; i < t.numel(); ++i) {
            if (store.dtype() == Dtype::F64)
                wire::write_f64(os, t.at(i));
            else
                wire::write_f32(os, t.at(i));
        }
    }
    if (!os) throw DataError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line) || line != kMagic)
        throw DataError("checkpoint: '" + path + "' has no '" + std::string(kMagic) + "' header");
    Checkpoint ck;
    struct Pending {
        std::string name;
        bool trainable;
        std::vector<int64_t> shape;
    };
    std::vector<Pending> pending;
    bool saw_data = false;
    while (std::getline(is, line)) {
        if (line == "data") {
            saw_data = true;
            break;
        }
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "dtype") {
            std::string d;
            ls >> d;
            ck.dtype = dtype_from_name(d);
        } else if (tag == "seed") {
            ls >> ck.seed;
            if (!ls) throw DataError("checkpoint: bad seed line: " + line);
        } else if (tag == "meta") {
            std::string k, v;
            ls >> k;
            std::getline(ls, v);
            if (!v.empty() && v[0] == ' ') v.erase(0, 1);
            ck.meta[k] = v;
        } else if (tag == "tensor") {
            Pending p;
            std::string kind;
            int64_t rank;
            ls >> p.name >> kind >> rank;
            if (!ls || (kind != "param" && kind != "buffer") || rank < 0)
                throw DataError("checkpoint: bad tensor line: " + line);
            p.trainable = kind == "param";
            for (int64_t i = 0; i < rank; ++i) {
                int64_t d;
                ls >> d;
                if (!ls) throw DataError("checkpoint: bad tensor line: " + line);
                p.shape.push_back(d);
            }
            pending.push_back(std::move(p));
        } else {
            throw DataError("checkpoint: unexpected manifest line: " + line);
        }
    }
    if (!saw_data) throw DataError("checkpoint: missing 'data' separator in '" + path + "'");
    for (auto& p : pending) {
        Tensor t(p.shape, ck.dtype);
        for (int64_t i = 0; i < t.numel(); ++i) {
            double v;
            bool ok = ck.dtype == Dtype::F64 ? wire::read_f64(is, v) : wire::read_f32(is, v);
            if (!ok) throw DataError("checkpoint: truncated value payload");
            t.at(i) = v;
        }
        ck.items.push_back({std::move(p.name), p.trainable, std::move(t)});
    }
    // no trailing bytes allowed; catches dtype/shape mismatches early
    char extra;
    if (is.read(&extra, 1))
        throw DataError("checkpoint: trailing bytes after value payload in '" + path + "'");
    return ck;
}

void restore_into(ParamStore& store, const Checkpoint& ckpt) {
    for (const auto& item : ckpt.items) {
        // optimizer velocity buffers only appear after the first momentum
        // step, so a freshly built store legitimately lacks them on resume
        if (!store.has(item.name) && !item.trainable && item.name.rfind("opt_v.", 0) == 0) {
            store.add_buffer(item.name, item.value);
            continue;
        }
        if (!store.has(item.name))
            throw DataError("checkpoint: store has no entry '" + item.name + "'");
        Tensor& dst = store.value(item.name);
        if (dst.shape() != item.value.shape())
            throw DataError("checkpoint: shape mismatch for '" + item.name + "': store " +
                            shape_str(dst.shape()) + " vs checkpoint " +
                            shape_str(item.value.shape()));
        dst = item.value;
        dst.set_dtype(store.dtype());
    }
    for (const auto& name : store.names()) {
        bool found = false;
        for (const auto& item : ckpt.items)
            if (item.name == name) {
                found = true;
                break;
            }
        if (!found && name.rfind("opt_v.", 0) != 0)
            throw DataError("checkpoint: missing entry for store tensor '" + name + "'");
    }
}

uint64_t vocab_hash(const std::vector<std::string>& tokens) {
    uint64_t h = 1469598103934665603ULL;
    for (const auto& t : tokens) {
        for (char c : t) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        h ^= static_cast<unsigned char>('\n');
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace symcomp
