#pragma once

#include <map>
#include <string>

#include "symcomp/autodiff.hpp"

namespace symcomp {

// On-disk model state. A text manifest lists dtype, seed, free-form metadata
// lines, and every tensor (name, kind, shape) in store order; a `data` line
// separates the header from the raw values, written little-endian in manifest
// order (8-byte doubles for f64, 4-byte floats for f32). Round-trips are
// bit-exact.
struct Checkpoint {
    struct Item {
        std::string name;
        bool trainable = false;
        Tensor value;
    };
    uint64_t seed = 0;
    Dtype dtype = Dtype::F64;
    std::map<std::string, std::string> meta;
    std::vector<Item> items;

    bool has_meta(const std::string& key) const { return meta.count(key) != 0; }
    const std::string& meta_at(const std::string& key) const;
    int64_t meta_int(const std::string& key) const;
    double meta_real(const std::string& key) const;

    // Rebuild a ParamStore with the same entries, values, and ordering.
    ParamStore to_store() const;
};

void save_checkpoint(const ParamStore& store, const std::map<std::string, std::string>& meta,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Load values into an existing store; every entry must match by name and
// shape, otherwise DataError.
void restore_into(ParamStore& store, const Checkpoint& ckpt);

// FNV-1a over newline-joined tokens; checkpoints carry vocab hashes so that
// evaluating against a different vocabulary fails loudly instead of silently
// permuting labels.
uint64_t vocab_hash(const std::vector<std::string>& tokens);

}  // namespace symcomp
