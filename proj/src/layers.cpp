#include "symcomp/layers.hpp"

namespace symcomp {

ActKind act_from_name(const std::string& s) {
    if (s == "sigmoid") return ActKind::Sigmoid;
    if (s == "relu") return ActKind::Relu;
    if (s == "tanh") return ActKind::Tanh;
    if (s == "softmax") return ActKind::Softmax;
    throw ConfigError("unknown activation '" + s + "' (expected sigmoid|relu|tanh|softmax)");
}

Val activation(Tape& tape, Val x, ActKind kind) {
    switch (kind) {
        case ActKind::Sigmoid: return tape.sigmoid(x);
        case ActKind::Relu: return tape.relu(x);
        case ActKind::Tanh: return tape.tanh_op(x);
        case ActKind::Softmax: return tape.softmax_rows(x);
    }
    throw ConfigError("unknown activation kind");
}

AffineLayer::AffineLayer(ParamStore& store, std::string name, int64_t in_dim, int64_t out_dim)
    : store_(&store), name_(std::move(name)), in_(in_dim), out_(out_dim) {
    if (in_dim <= 0 || out_dim <= 0)
        throw ConfigError("AffineLayer '" + name_ + "': dims must be positive");
    store.add_param_uniform(name_ + ".w", {in_dim, out_dim}, in_dim);
    store.add_param(name_ + ".b", Tensor::zeros({out_dim}, store.dtype()));
}

Val AffineLayer::forward(Tape& tape, Val x) const {
    if (!store_) throw ConfigError("AffineLayer: used before initialization");
    bool rank1 = tape.value(x).rank() == 1;
    std::vector<int64_t> in_shape = tape.value(x).shape();
    Val x2 = rank1 ? tape.reshape(x, {1, tape.value(x).numel()}) : x;
    const Tensor& shaped = tape.value(x2);
    if (shaped.rank() != 2 || shaped.cols() != in_)
        throw ShapeError("AffineLayer '" + name_ + "': input " + shape_str(in_shape) +
                         " vs weight [" + std::to_string(in_) + "," + std::to_string(out_) + "]");
    Val w = tape.param(*store_, name_ + ".w");
    Val b = tape.param(*store_, name_ + ".b");
    Val y = tape.add_bias(tape.matmul(x2, w), b);
    return rank1 ? tape.reshape(y, {out_}) : y;
}

BatchNormLayer::BatchNormLayer(ParamStore& store, std::string name, int64_t dim, double momentum,
                               double eps, bool batch1_identity)
    : store_(&store),
      name_(std::move(name)),
      dim_(dim),
      momentum_(momentum),
      eps_(eps),
      batch1_identity_(batch1_identity) {
    if (dim <= 0) throw ConfigError("BatchNormLayer '" + name_ + "': dim must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("BatchNormLayer '" + name_ + "': momentum must be in [0,1)");
    store.add_param(name_ + ".gamma", Tensor::full({dim}, 1.0, store.dtype()));
    store.add_param(name_ + ".beta", Tensor::zeros({dim}, store.dtype()));
    store.add_buffer(name_ + ".running_mean", Tensor::zeros({dim}, store.dtype()));
    store.add_buffer(name_ + ".running_var", Tensor::full({dim}, 1.0, store.dtype()));
}

Val BatchNormLayer::forward(Tape& tape, Val x, BnMode mode) const {
    if (!store_) throw ConfigError("BatchNormLayer: used before initialization");
    Val gamma = tape.param(*store_, name_ + ".gamma");
    Val beta = tape.param(*store_, name_ + ".beta");
    return tape.batchnorm(x, gamma, beta, store_->value(name_ + ".running_mean"),
                          store_->value(name_ + ".running_var"), mode, momentum_, eps_,
                          batch1_identity_, name_);
}

}  // namespace symcomp
