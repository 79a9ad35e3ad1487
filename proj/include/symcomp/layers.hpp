#pragma once

#include <string>

#include "symcomp/autodiff.hpp"

namespace symcomp {

enum class ActKind { Sigmoid, Relu, Tanh, Softmax };

ActKind act_from_name(const std::string& s);
Val activation(Tape& tape, Val x, ActKind kind);

// y = x W + b. Accepts rank-1 x as a single row and returns rank 1 to match.
class AffineLayer {
public:
    AffineLayer() = default;
    AffineLayer(ParamStore& store, std::string name, int64_t in_dim, int64_t out_dim);

    Val forward(Tape& tape, Val x) const;
    int64_t in_dim() const { return in_; }
    int64_t out_dim() const { return out_; }
    const std::string& name() const { return name_; }

private:
    ParamStore* store_ = nullptr;
    std::string name_;
    int64_t in_ = 0, out_ = 0;
};

// Per-feature BatchNorm wrapper owning gamma/beta params and running-stat
// buffers inside the store. Train mode uses batch statistics and updates the
// running buffers; eval mode reads them.
class BatchNormLayer {
public:
    BatchNormLayer() = default;
    BatchNormLayer(ParamStore& store, std::string name, int64_t dim, double momentum = 0.9,
                   double eps = 1e-5, bool batch1_identity = false);

    Val forward(Tape& tape, Val x, BnMode mode) const;
    int64_t dim() const { return dim_; }

private:
    ParamStore* store_ = nullptr;
    std::string name_;
    int64_t dim_ = 0;
    double momentum_ = 0.9, eps_ = 1e-5;
    bool batch1_identity_ = false;
};

}  // namespace symcomp
