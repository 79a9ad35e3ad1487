#pragma once

#include <deque>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "symcomp/tensor.hpp"

namespace symcomp {

// Named parameter/buffer registry. Parameters carry gradient slots that
// backward passes accumulate into (+=); buffers (BatchNorm running stats,
// optimizer velocities) are plain state with no gradients. Entries keep
// insertion order so checkpoints and SGD sweeps are deterministic.
class ParamStore {
public:
    explicit ParamStore(uint64_t seed = 0, Dtype dt = Dtype::F64)
        : seed_(seed), rng_(seed), dtype_(dt) {}

    Tensor& add_param(const std::string& name, Tensor init);
    Tensor& add_buffer(const std::string& name, Tensor init);
    // uniform(-limit, limit) init with limit = sqrt(1/fan_in)
    Tensor& add_param_uniform(const std::string& name, std::vector<int64_t> shape, int64_t fan_in);

    bool has(const std::string& name) const { return index_.count(name) != 0; }
    bool is_param(const std::string& name) const;
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    Tensor& grad(const std::string& name);

    // insertion-ordered names, params and buffers interleaved as registered
    const std::vector<std::string>& names() const { return order_; }
    std::vector<std::string> param_names() const;

    void zero_grads();
    // v <- momentum * v + g; p <- p - lr * v; then grads are zeroed.
    // Velocity buffers appear lazily (named "opt_v.<param>") once momentum > 0.
    void sgd_step(double lr, double momentum = 0.0);

    uint64_t seed() const { return seed_; }
    Dtype dtype() const { return dtype_; }
    Rng& rng() { return rng_; }

private:
    struct Entry {
        Tensor value;
        Tensor grad;  // empty for buffers
        bool trainable = false;
    };
    // deque-like stability is needed because layers hold Tensor references;
    // std::map never invalidates them on insert
    std::map<std::string, Entry> index_;
    std::vector<std::string> order_;
    uint64_t seed_;
    Rng rng_;
    Dtype dtype_;

    Entry& entry(const std::string& name);
    const Entry& entry(const std::string& name) const;
};

enum class BnMode { Train, Eval };

// Handle into a Tape's node list. Cheap to copy; only valid for the tape that
// produced it.
struct Val {
    int id = -1;
};

// Reverse-mode tape. Ops append nodes in execution order; backward() walks the
// list in reverse (a valid reverse-topological order), visiting each reachable
// node once and finally accumulating leaf gradients into their ParamStores.
class Tape {
public:
    Val input(Tensor v);
    Val param(ParamStore& ps, const std::string& name);

    // ---- arithmetic ----
    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);  // elementwise
    Val div(Val a, Val b);  // elementwise
    Val scale(Val a, double c);
    Val add_const(Val a, double c);
    Val matmul(Val a, Val b);       // [r,k] x [k,c]
    Val add_bias(Val x, Val b);     // [r,c] + [c]
    Val concat_cols(Val a, Val b);  // [r,c1] | [r,c2]
    Val reshape(Val a, std::vector<int64_t> shape);

    // ---- nonlinearities ----
    Val sigmoid(Val a);
    Val relu(Val a);  // also the hinge [x]_+; subgradient at 0 is 0
    Val tanh_op(Val a);
    Val softmax_rows(Val a);

    // BatchNorm over rows of a rank-2 input. Train mode normalizes with batch
    // statistics (biased variance) and updates the running buffers in place;
    // eval mode uses the running buffers. batch1_identity controls what a
    // 1-row train batch does: false -> ShapeError, true -> pass-through.
    Val batchnorm(Val x, Val gamma, Val beta, Tensor& run_mean, Tensor& run_var, BnMode mode,
                  double momentum, double eps, bool batch1_identity, const std::string& layer);

    // ---- reductions / distances ----
    Val sum(Val a);
    Val mean(Val a);
    Val row_l2norm(Val a);  // [r,c] -> [r]; gradient at a zero row is 0
    Val row_l1norm(Val a);  // [r,c] -> [r]; sign subgradient, 0 at 0
    Val row_dot(Val a, Val b);  // [r,c],[r,c] -> [r]
    // sum(v * w) for a constant weight tensor w; the workhorse for masked and
    // per-instance-normalized batch reductions
    Val weighted_sum(Val v, Tensor w);

    // ---- selection ----
    Val gather(Val v, std::vector<int64_t> idx);       // rank-1 -> rank-1
    Val gather_rows(Val m, std::vector<int64_t> idx);  // rank-2 -> rank-2

    // mean over the batch of -log softmax(logits)[target], log-sum-exp stable
    Val cross_entropy_mean(Val logits, std::vector<int64_t> targets);

    const Tensor& value(Val v) const;
    double scalar(Val v) const;

    // Seeds d(loss)/d(loss)=1, zeroes node grads, sweeps the tape in reverse,
    // then += every param leaf's gradient into its store slot. Calling twice
    // without zero_grads doubles the stored gradients.
    void backward(Val loss);

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> inputs;
        std::function<void(Tape&, int)> back;  // empty for leaves
        ParamStore* store = nullptr;
        std::string pname;
    };
    // deque: references returned by value() stay valid while ops keep pushing
    std::deque<Node> nodes_;

    Val push(Tensor value, std::vector<int> inputs, std::function<void(Tape&, int)> back);
    Node& node(Val v);
    const Node& node(Val v) const;
    Tensor& grad_of(int id);

    friend struct TapeTestPeek;
};

}  // namespace symcomp
