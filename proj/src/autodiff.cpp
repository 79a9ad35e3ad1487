#include "symcomp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace symcomp {

// ---------------------------------------------------------------------------
// ParamStore
// ---------------------------------------------------------------------------

ParamStore::Entry& ParamStore::entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamStore: unknown entry '" + name + "'");
    return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("ParamStore: unknown entry '" + name + "'");
    return it->second;
}

Tensor& ParamStore::add_param(const std::string& name, Tensor init) {
    if (has(name)) throw ConfigError("ParamStore: duplicate entry '" + name + "'");
    init.set_dtype(dtype_);
    Entry e;
    e.grad = Tensor::zeros(init.shape(), dtype_);
    e.value = std::move(init);
    e.trainable = true;
    order_.push_back(name);
    return index_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParamStore::add_buffer(const std::string& name, Tensor init) {
    if (has(name)) throw ConfigError("ParamStore: duplicate entry '" + name + "'");
    init.set_dtype(dtype_);
    Entry e;
    e.value = std::move(init);
    e.trainable = false;
    order_.push_back(name);
    return index_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParamStore::add_param_uniform(const std::string& name, std::vector<int64_t> shape,
                                      int64_t fan_in) {
    if (fan_in <= 0) throw ConfigError("ParamStore: fan_in must be positive for '" + name + "'");
    Tensor t(shape, dtype_);
    double limit = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = rng_.uniform(-limit, limit);
    t.round_to_dtype();
    return add_param(name, std::move(t));
}

bool ParamStore::is_param(const std::string& name) const { return entry(name).trainable; }

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }
const Tensor& ParamStore::value(const std::string& name) const { return entry(name).value; }

Tensor& ParamStore::grad(const std::string& name) {
    Entry& e = entry(name);
    if (!e.trainable) throw ConfigError("ParamStore: '" + name + "' is a buffer, it has no grad");
    return e.grad;
}

std::vector<std::string> ParamStore::param_names() const {
    std::vector<std::string> out;
    for (const auto& n : order_)
        if (entry(n).trainable) out.push_back(n);
    return out;
}

void ParamStore::zero_grads() {
    for (auto& [name, e] : index_)
        if (e.trainable) e.grad.fill(0.0);
}

void ParamStore::sgd_step(double lr, double momentum) {
    if (lr <= 0.0) throw ConfigError("sgd_step: lr must be > 0, got " + std::to_string(lr));
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("sgd_step: momentum must be in [0,1), got " + std::to_string(momentum));
    for (const auto& name : param_names()) {
        Entry& e = entry(name);
        if (momentum > 0.0) {
            std::string vname = "opt_v." + name;
            if (!has(vname)) add_buffer(vname, Tensor::zeros(e.value.shape(), dtype_));
            Tensor& v = value(vname);
            for (int64_t i = 0; i < e.value.numel(); ++i) {
                v.at(i) = momentum * v.at(i) + e.grad.at(i);
                e.value.at(i) -= lr * v.at(i);
            }
            v.round_to_dtype();
        } else {
            for (int64_t i = 0; i < e.value.numel(); ++i) e.value.at(i) -= lr * e.grad.at(i);
        }
        e.value.round_to_dtype();
        e.grad.fill(0.0);
    }
}

// ---------------------------------------------------------------------------
// Tape plumbing
// ---------------------------------------------------------------------------

Val Tape::push(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> back) {
    value.round_to_dtype();
    Node n;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Val{static_cast<int>(nodes_.size()) - 1};
}

Tape::Node& Tape::node(Val v) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw ShapeError("Tape: invalid value handle");
    return nodes_[static_cast<size_t>(v.id)];
}

const Tape::Node& Tape::node(Val v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw ShapeError("Tape: invalid value handle");
    return nodes_[static_cast<size_t>(v.id)];
}

Tensor& Tape::grad_of(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.numel() == 0 && n.value.numel() > 0)
        n.grad = Tensor::zeros(n.value.shape(), n.value.dtype());
    else if (n.grad.numel() == 0)
        n.grad = Tensor(n.value.shape(), n.value.dtype());
    return n.grad;
}

const Tensor& Tape::value(Val v) const { return node(v).value; }

double Tape::scalar(Val v) const {
    const Tensor& t = node(v).value;
    if (t.numel() != 1) throw ShapeError("scalar() on tensor of shape " + shape_str(t.shape()));
    return t.at(0);
}

Val Tape::input(Tensor v) {
    v.check_finite("tape input");
    return push(std::move(v), {}, nullptr);
}

Val Tape::param(ParamStore& ps, const std::string& name) {
    if (!ps.is_param(name)) throw ConfigError("Tape::param: '" + name + "' is not a parameter");
    Val v = push(ps.value(name), {}, nullptr);
    node(v).store = &ps;
    node(v).pname = name;
    return v;
}

void Tape::backward(Val loss) {
    if (node(loss).value.numel() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " +
                         shape_str(node(loss).value.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    std::vector<char> needed(nodes_.size(), 0);
    needed[static_cast<size_t>(loss.id)] = 1;
    for (int id = loss.id; id >= 0; --id) {
        if (!needed[static_cast<size_t>(id)]) continue;
        for (int in : nodes_[static_cast<size_t>(id)].inputs) needed[static_cast<size_t>(in)] = 1;
    }
    grad_of(loss.id).fill(1.0);
    for (int id = loss.id; id >= 0; --id) {
        if (!needed[static_cast<size_t>(id)]) continue;
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.numel() == 0) grad_of(id);
        if (n.back) {
            n.back(*this, id);
            if (n.value.dtype() == Dtype::F32)
                for (int in : n.inputs) grad_of(in).round_to_dtype();
        }
        if (n.store) {
            Tensor& g = n.store->grad(n.pname);
            for (int64_t i = 0; i < g.numel(); ++i) g.at(i) += n.grad.at(i);
            g.round_to_dtype();
        }
    }
}

// ---------------------------------------------------------------------------
// Elementwise / arithmetic ops
// ---------------------------------------------------------------------------

static void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

Val Tape::add(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape("add", ta, tb);
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += tb.at(i);
    return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor &ga = t.grad_of(a.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga.at(i) += g.at(i);
            gb.at(i) += g.at(i);
        }
    });
}

Val Tape::sub(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape("sub", ta, tb);
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) -= tb.at(i);
    return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor &ga = t.grad_of(a.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga.at(i) += g.at(i);
            gb.at(i) -= g.at(i);
        }
    });
}

Val Tape::mul(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape("mul", ta, tb);
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= tb.at(i);
    return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_of(a.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga.at(i) += g.at(i) * vb.at(i);
            gb.at(i) += g.at(i) * va.at(i);
        }
    });
}

Val Tape::div(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape("div", ta, tb);
    for (int64_t i = 0; i < tb.numel(); ++i)
        if (tb.at(i) == 0.0) throw NumericError("div: zero denominator at index " + std::to_string(i));
    Tensor out = ta;
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) /= tb.at(i);
    return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_of(a.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < g.numel(); ++i) {
            ga.at(i) += g.at(i) / vb.at(i);
            gb.at(i) -= g.at(i) * va.at(i) / (vb.at(i) * vb.at(i));
        }
    });
}

Val Tape::scale(Val a, double c) {
    Tensor out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) *= c;
    return push(std::move(out), {a.id}, [a, c](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += c * g.at(i);
    });
}

Val Tape::add_const(Val a, double c) {
    Tensor out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += c;
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
    });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

// C += A * B, shapes [r,k] x [k,c]; loop order keeps B and C row-contiguous
static void gemm_acc(Tensor& C, const Tensor& A, const Tensor& B) {
    int64_t r = A.rows(), k = A.cols(), c = B.cols();
    for (int64_t i = 0; i < r; ++i) {
        const double* arow = A.data() + i * k;
        double* crow = C.data() + i * c;
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = B.data() + p * c;
            for (int64_t j = 0; j < c; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A * B^T, shapes [r,k] x [c,k]
static void gemm_acc_bt(Tensor& C, const Tensor& A, const Tensor& B) {
    int64_t r = A.rows(), k = A.cols(), c = B.rows();
    for (int64_t i = 0; i < r; ++i) {
        const double* arow = A.data() + i * k;
        double* crow = C.data() + i * c;
        for (int64_t j = 0; j < c; ++j) {
            const double* brow = B.data() + j * k;
            double s = 0.0;
            for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C += A^T * B, shapes [k,r] x [k,c]
static void gemm_acc_at(Tensor& C, const Tensor& A, const Tensor& B) {
    int64_t k = A.rows(), r = A.cols(), c = B.cols();
    for (int64_t p = 0; p < k; ++p) {
        const double* arow = A.data() + p * r;
        const double* brow = B.data() + p * c;
        for (int64_t i = 0; i < r; ++i) {
            double av = arow[i];
            if (av == 0.0) continue;
            double* crow = C.data() + i * c;
            for (int64_t j = 0; j < c; ++j) crow[j] += av * brow[j];
        }
    }
}

Val Tape::matmul(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows())
        throw ShapeError("matmul: shapes " + shape_str(ta.shape()) + " vs " +
                         shape_str(tb.shape()));
    Tensor out({ta.rows(), tb.cols()}, ta.dtype());
    gemm_acc(out, ta, tb);
    out.check_finite("matmul output");
    return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        gemm_acc_bt(t.grad_of(a.id), g, t.value(b));  // dA += g * B^T
        gemm_acc_at(t.grad_of(b.id), t.value(a), g);  // dB += A^T * g
    });
}

Val Tape::add_bias(Val x, Val b) {
    const Tensor &tx = value(x), &tb = value(b);
    if (tx.rank() != 2 || tb.rank() != 1 || tx.cols() != tb.numel())
        throw ShapeError("add_bias: shapes " + shape_str(tx.shape()) + " vs " +
                         shape_str(tb.shape()));
    Tensor out = tx;
    for (int64_t i = 0; i < out.rows(); ++i)
        for (int64_t j = 0; j < out.cols(); ++j) out.at(i, j) += tb.at(j);
    return push(std::move(out), {x.id, b.id}, [x, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor &gx = t.grad_of(x.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < g.rows(); ++i)
            for (int64_t j = 0; j < g.cols(); ++j) {
                gx.at(i, j) += g.at(i, j);
                gb.at(j) += g.at(i, j);
            }
    });
}

Val Tape::concat_cols(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.rows() != tb.rows())
        throw ShapeError("concat_cols: shapes " + shape_str(ta.shape()) + " vs " +
                         shape_str(tb.shape()));
    int64_t r = ta.rows(), c1 = ta.cols(), c2 = tb.cols();
    Tensor out({r, c1 + c2}, ta.dtype());
    for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c1; ++j) out.at(i, j) = ta.at(i, j);
        for (int64_t j = 0; j < c2; ++j) out.at(i, c1 + j) = tb.at(i, j);
    }
    return push(std::move(out), {a.id, b.id}, [a, b, c1, c2](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor &ga = t.grad_of(a.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < g.rows(); ++i) {
            for (int64_t j = 0; j < c1; ++j) ga.at(i, j) += g.at(i, j);
            for (int64_t j = 0; j < c2; ++j) gb.at(i, j) += g.at(i, c1 + j);
        }
    });
}

Val Tape::reshape(Val a, std::vector<int64_t> shape) {
    Tensor out = value(a).reshaped(std::move(shape));
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i);
    });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

static double sigmoid_stable(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

Val Tape::sigmoid(Val a) {
    Tensor out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = sigmoid_stable(out.at(i));
    out.check_finite("sigmoid output");
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Node& n = t.nodes_[static_cast<size_t>(self)];
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            double s = n.value.at(i);
            ga.at(i) += n.grad.at(i) * s * (1.0 - s);
        }
    });
}

Val Tape::relu(Val a) {
    Tensor out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = out.at(i) > 0.0 ? out.at(i) : 0.0;
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < g.numel(); ++i)
            if (va.at(i) > 0.0) ga.at(i) += g.at(i);
    });
}

Val Tape::tanh_op(Val a) {
    Tensor out = value(a);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(i) = std::tanh(out.at(i));
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Node& n = t.nodes_[static_cast<size_t>(self)];
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < n.grad.numel(); ++i) {
            double y = n.value.at(i);
            ga.at(i) += n.grad.at(i) * (1.0 - y * y);
        }
    });
}

Val Tape::softmax_rows(Val a) {
    const Tensor& ta = value(a);
    if (ta.rank() != 2) throw ShapeError("softmax_rows: need rank 2, got " + shape_str(ta.shape()));
    Tensor out = ta;
    for (int64_t i = 0; i < out.rows(); ++i) {
        double m = out.at(i, 0);
        for (int64_t j = 1; j < out.cols(); ++j) m = std::max(m, out.at(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < out.cols(); ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - m);
            z += out.at(i, j);
        }
        for (int64_t j = 0; j < out.cols(); ++j) out.at(i, j) /= z;
    }
    out.check_finite("softmax output");
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Node& n = t.nodes_[static_cast<size_t>(self)];
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < n.value.rows(); ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < n.value.cols(); ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int64_t j = 0; j < n.value.cols(); ++j)
                ga.at(i, j) += (n.grad.at(i, j) - dot) * n.value.at(i, j);
        }
    });
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

Val Tape::batchnorm(Val x, Val gamma, Val beta, Tensor& run_mean, Tensor& run_var, BnMode mode,
                    double momentum, double eps, bool batch1_identity, const std::string& layer) {
    const Tensor& tx = value(x);
    const Tensor &tg = value(gamma), &tb = value(beta);
    if (tx.rank() != 2) throw ShapeError("batchnorm(" + layer + "): input must be rank 2");
    int64_t B = tx.rows(), C = tx.cols();
    if (tg.numel() != C || tb.numel() != C || run_mean.numel() != C || run_var.numel() != C)
        throw ShapeError("batchnorm(" + layer + "): feature count mismatch, input " +
                         shape_str(tx.shape()) + " vs gamma " + shape_str(tg.shape()));
    if (B == 0) throw ShapeError("batchnorm(" + layer + "): empty batch");

    if (mode == BnMode::Train && B == 1) {
        if (!batch1_identity)
            throw ShapeError("batchnorm(" + layer +
                             "): train-mode batch of size 1 (set batch1=identity to allow)");
        // configured pass-through: statistics of one row are degenerate
        Tensor out = tx;
        return push(std::move(out), {x.id, gamma.id, beta.id}, [x](Tape& t, int self) {
            const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
            Tensor& gx = t.grad_of(x.id);
            for (int64_t i = 0; i < g.numel(); ++i) gx.at(i) += g.at(i);
        });
    }

    std::vector<double> mu(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
    if (mode == BnMode::Train) {
        for (int64_t i = 0; i < B; ++i)
            for (int64_t j = 0; j < C; ++j) mu[static_cast<size_t>(j)] += tx.at(i, j);
        for (int64_t j = 0; j < C; ++j) mu[static_cast<size_t>(j)] /= static_cast<double>(B);
        for (int64_t i = 0; i < B; ++i)
            for (int64_t j = 0; j < C; ++j) {
                double d = tx.at(i, j) - mu[static_cast<size_t>(j)];
                var[static_cast<size_t>(j)] += d * d;
            }
        for (int64_t j = 0; j < C; ++j) var[static_cast<size_t>(j)] /= static_cast<double>(B);
        for (int64_t j = 0; j < C; ++j) {
            run_mean.at(j) = momentum * run_mean.at(j) + (1.0 - momentum) * mu[static_cast<size_t>(j)];
            run_var.at(j) = momentum * run_var.at(j) + (1.0 - momentum) * var[static_cast<size_t>(j)];
        }
        run_mean.round_to_dtype();
        run_var.round_to_dtype();
    } else {
        for (int64_t j = 0; j < C; ++j) {
            mu[static_cast<size_t>(j)] = run_mean.at(j);
            var[static_cast<size_t>(j)] = run_var.at(j);
        }
    }

    auto xhat = std::make_shared<Tensor>(Tensor({B, C}, tx.dtype()));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(C));
    for (int64_t j = 0; j < C; ++j)
        (*inv_std)[static_cast<size_t>(j)] = 1.0 / std::sqrt(var[static_cast<size_t>(j)] + eps);
    Tensor out({B, C}, tx.dtype());
    for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < C; ++j) {
            double xh = (tx.at(i, j) - mu[static_cast<size_t>(j)]) * (*inv_std)[static_cast<size_t>(j)];
            xhat->at(i, j) = xh;
            out.at(i, j) = tg.at(j) * xh + tb.at(j);
        }
    out.check_finite("batchnorm(" + layer + ") output");

    bool train = mode == BnMode::Train;
    return push(std::move(out), {x.id, gamma.id, beta.id},
                [x, gamma, beta, xhat, inv_std, train](Tape& t, int self) {
                    const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
                    const Tensor& tg = t.value(gamma);
                    Tensor& gx = t.grad_of(x.id);
                    Tensor& gg = t.grad_of(gamma.id);
                    Tensor& gb = t.grad_of(beta.id);
                    int64_t B = g.rows(), C = g.cols();
                    for (int64_t j = 0; j < C; ++j) {
                        double sum_dy = 0.0, sum_dy_xhat = 0.0;
                        for (int64_t i = 0; i < B; ++i) {
                            sum_dy += g.at(i, j);
                            sum_dy_xhat += g.at(i, j) * xhat->at(i, j);
                        }
                        gg.at(j) += sum_dy_xhat;
                        gb.at(j) += sum_dy;
                        double is = (*inv_std)[static_cast<size_t>(j)];
                        if (train) {
                            double invB = 1.0 / static_cast<double>(B);
                            for (int64_t i = 0; i < B; ++i) {
                                double dxhat = g.at(i, j) * tg.at(j);
                                gx.at(i, j) += is * (dxhat - invB * sum_dy * tg.at(j) -
                                                     invB * xhat->at(i, j) * sum_dy_xhat * tg.at(j));
                            }
                        } else {
                            for (int64_t i = 0; i < B; ++i) gx.at(i, j) += g.at(i, j) * tg.at(j) * is;
                        }
                    }
                });
}

// ---------------------------------------------------------------------------
// Reductions, distances, selection
// ---------------------------------------------------------------------------

Val Tape::sum(Val a) {
    const Tensor& ta = value(a);
    double s = 0.0;
    for (int64_t i = 0; i < ta.numel(); ++i) s += ta.at(i);
    return push(Tensor::scalar(s, ta.dtype()), {a.id}, [a](Tape& t, int self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.at(0);
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
    });
}

Val Tape::mean(Val a) {
    const Tensor& ta = value(a);
    if (ta.numel() == 0) throw ShapeError("mean of empty tensor");
    double s = 0.0;
    for (int64_t i = 0; i < ta.numel(); ++i) s += ta.at(i);
    double inv = 1.0 / static_cast<double>(ta.numel());
    return push(Tensor::scalar(s * inv, ta.dtype()), {a.id}, [a, inv](Tape& t, int self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.at(0) * inv;
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
    });
}

Val Tape::row_l2norm(Val a) {
    const Tensor& ta = value(a);
    if (ta.rank() != 2) throw ShapeError("row_l2norm: need rank 2, got " + shape_str(ta.shape()));
    Tensor out({ta.rows()}, ta.dtype());
    for (int64_t i = 0; i < ta.rows(); ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < ta.cols(); ++j) s += ta.at(i, j) * ta.at(i, j);
        out.at(i) = std::sqrt(s);
    }
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Node& n = t.nodes_[static_cast<size_t>(self)];
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < va.rows(); ++i) {
            double nv = n.value.at(i);
            if (nv == 0.0) continue;  // subgradient 0 at the origin
            double g = n.grad.at(i) / nv;
            for (int64_t j = 0; j < va.cols(); ++j) ga.at(i, j) += g * va.at(i, j);
        }
    });
}

Val Tape::row_l1norm(Val a) {
    const Tensor& ta = value(a);
    if (ta.rank() != 2) throw ShapeError("row_l1norm: need rank 2, got " + shape_str(ta.shape()));
    Tensor out({ta.rows()}, ta.dtype());
    for (int64_t i = 0; i < ta.rows(); ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < ta.cols(); ++j) s += std::abs(ta.at(i, j));
        out.at(i) = s;
    }
    return push(std::move(out), {a.id}, [a](Tape& t, int self) {
        const Node& n = t.nodes_[static_cast<size_t>(self)];
        const Tensor& va = t.value(a);
        Tensor& ga = t.grad_of(a.id);
        for (int64_t i = 0; i < va.rows(); ++i) {
            double g = n.grad.at(i);
            for (int64_t j = 0; j < va.cols(); ++j) {
                double v = va.at(i, j);
                if (v > 0.0)
                    ga.at(i, j) += g;
                else if (v < 0.0)
                    ga.at(i, j) -= g;
            }
        }
    });
}

Val Tape::row_dot(Val a, Val b) {
    const Tensor &ta = value(a), &tb = value(b);
    require_same_shape("row_dot", ta, tb);
    if (ta.rank() != 2) throw ShapeError("row_dot: need rank 2, got " + shape_str(ta.shape()));
    Tensor out({ta.rows()}, ta.dtype());
    for (int64_t i = 0; i < ta.rows(); ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < ta.cols(); ++j) s += ta.at(i, j) * tb.at(i, j);
        out.at(i) = s;
    }
    return push(std::move(out), {a.id, b.id}, [a, b](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        const Tensor &va = t.value(a), &vb = t.value(b);
        Tensor &ga = t.grad_of(a.id), &gb = t.grad_of(b.id);
        for (int64_t i = 0; i < va.rows(); ++i)
            for (int64_t j = 0; j < va.cols(); ++j) {
                ga.at(i, j) += g.at(i) * vb.at(i, j);
                gb.at(i, j) += g.at(i) * va.at(i, j);
            }
    });
}

Val Tape::weighted_sum(Val v, Tensor w) {
    const Tensor& tv = value(v);
    require_same_shape("weighted_sum", tv, w);
    double s = 0.0;
    for (int64_t i = 0; i < tv.numel(); ++i) s += tv.at(i) * w.at(i);
    auto wp = std::make_shared<Tensor>(std::move(w));
    return push(Tensor::scalar(s, tv.dtype()), {v.id}, [v, wp](Tape& t, int self) {
        double g = t.nodes_[static_cast<size_t>(self)].grad.at(0);
        Tensor& gv = t.grad_of(v.id);
        for (int64_t i = 0; i < gv.numel(); ++i) gv.at(i) += g * wp->at(i);
    });
}

Val Tape::gather(Val v, std::vector<int64_t> idx) {
    const Tensor& tv = value(v);
    if (tv.rank() != 1) throw ShapeError("gather: need rank 1, got " + shape_str(tv.shape()));
    Tensor out({static_cast<int64_t>(idx.size())}, tv.dtype());
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= tv.numel())
            throw ShapeError("gather: index " + std::to_string(idx[k]) + " out of range [0," +
                             std::to_string(tv.numel()) + ")");
        out.at(static_cast<int64_t>(k)) = tv.at(idx[k]);
    }
    auto ip = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return push(std::move(out), {v.id}, [v, ip](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gv = t.grad_of(v.id);
        for (size_t k = 0; k < ip->size(); ++k) gv.at((*ip)[k]) += g.at(static_cast<int64_t>(k));
    });
}

Val Tape::gather_rows(Val m, std::vector<int64_t> idx) {
    const Tensor& tm = value(m);
    if (tm.rank() != 2) throw ShapeError("gather_rows: need rank 2, got " + shape_str(tm.shape()));
    int64_t c = tm.cols();
    Tensor out({static_cast<int64_t>(idx.size()), c}, tm.dtype());
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= tm.rows())
            throw ShapeError("gather_rows: row " + std::to_string(idx[k]) + " out of range [0," +
                             std::to_string(tm.rows()) + ")");
        for (int64_t j = 0; j < c; ++j) out.at(static_cast<int64_t>(k), j) = tm.at(idx[k], j);
    }
    auto ip = std::make_shared<std::vector<int64_t>>(std::move(idx));
    return push(std::move(out), {m.id}, [m, ip](Tape& t, int self) {
        const Tensor& g = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gm = t.grad_of(m.id);
        for (size_t k = 0; k < ip->size(); ++k)
            for (int64_t j = 0; j < g.cols(); ++j)
                gm.at((*ip)[k], j) += g.at(static_cast<int64_t>(k), j);
    });
}

Val Tape::cross_entropy_mean(Val logits, std::vector<int64_t> targets) {
    const Tensor& tl = value(logits);
    if (tl.rank() != 2)
        throw ShapeError("cross_entropy: logits must be rank 2, got " + shape_str(tl.shape()));
    int64_t B = tl.rows(), C = tl.cols();
    if (static_cast<int64_t>(targets.size()) != B)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(B) + " rows");
    if (B == 0) throw ShapeError("cross_entropy: empty batch");
    auto probs = std::make_shared<Tensor>(Tensor({B, C}, tl.dtype()));
    double loss = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        int64_t t = targets[static_cast<size_t>(i)];
        if (t < 0 || t >= C)
            throw DataError("cross_entropy: target " + std::to_string(t) + " out of range [0," +
                            std::to_string(C) + ")");
        double m = tl.at(i, 0);
        for (int64_t j = 1; j < C; ++j) m = std::max(m, tl.at(i, j));
        double z = 0.0;
        for (int64_t j = 0; j < C; ++j) z += std::exp(tl.at(i, j) - m);
        double lse = m + std::log(z);
        for (int64_t j = 0; j < C; ++j) probs->at(i, j) = std::exp(tl.at(i, j) - lse);
        loss += lse - tl.at(i, t);
    }
    loss /= static_cast<double>(B);
    auto tp = std::make_shared<std::vector<int64_t>>(std::move(targets));
    return push(Tensor::scalar(loss, tl.dtype()), {logits.id},
                [logits, probs, tp](Tape& t, int self) {
                    double g = t.nodes_[static_cast<size_t>(self)].grad.at(0);
                    Tensor& gl = t.grad_of(logits.id);
                    int64_t B = probs->rows(), C = probs->cols();
                    double invB = g / static_cast<double>(B);
                    for (int64_t i = 0; i < B; ++i)
                        for (int64_t j = 0; j < C; ++j) {
                            double y = probs->at(i, j) - (j == (*tp)[static_cast<size_t>(i)] ? 1.0 : 0.0);
                            gl.at(i, j) += invB * y;
                        }
                });
}

}  // namespace symcomp
