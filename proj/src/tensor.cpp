#include "symcomp/tensor.hpp"

#include <cmath>

namespace symcomp {

Dtype dtype_from_name(const std::string& s) {
    if (s == "f64" || s == "float64" || s == "double") return Dtype::F64;
    if (s == "f32" || s == "float32" || s == "float") return Dtype::F32;
    throw ConfigError("unknown dtype '" + s + "' (expected f64 or f32)");
}

static int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

Tensor::Tensor(std::vector<int64_t> shape, Dtype dt)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), 0.0), dtype_(dt) {
    cols_ = shape_.size() == 2 ? shape_[1] : 1;
}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<double> values, Dtype dt)
    : shape_(std::move(shape)), data_(std::move(values)), dtype_(dt) {
    if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
        throw ShapeError("value count " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
    cols_ = shape_.size() == 2 ? shape_[1] : 1;
    round_to_dtype();
}

Tensor Tensor::zeros(std::vector<int64_t> shape, Dtype dt) { return Tensor(std::move(shape), dt); }

Tensor Tensor::full(std::vector<int64_t> shape, double v, Dtype dt) {
    Tensor t(std::move(shape), dt);
    t.fill(v);
    return t;
}

Tensor Tensor::scalar(double v, Dtype dt) { return Tensor({}, {v}, dt); }

Tensor Tensor::eye(int64_t n, Dtype dt) {
    Tensor t({n, n}, dt);
    for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
}

int64_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError("rows() on tensor of shape " + shape_str(shape_));
    return shape_[0];
}

int64_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError("cols() on tensor of shape " + shape_str(shape_));
    return shape_[1];
}

void Tensor::round_to_dtype() {
    if (dtype_ == Dtype::F32)
        for (double& v : data_) v = static_cast<double>(static_cast<float>(v));
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(shape) +
                         " changes element count");
    return Tensor(std::move(shape), data_, dtype_);
}

Tensor Tensor::row(int64_t r) const {
    int64_t c = cols();
    if (r < 0 || r >= rows()) throw ShapeError("row " + std::to_string(r) + " out of range");
    std::vector<double> v(data_.begin() + static_cast<size_t>(r * c),
                          data_.begin() + static_cast<size_t>((r + 1) * c));
    return Tensor({c}, std::move(v), dtype_);
}

void Tensor::fill(double v) {
    for (double& x : data_) x = v;
    round_to_dtype();
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::check_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError("non-finite value in " + what);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("max_abs_diff shapes " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.at(i) - b.at(i)));
    return m;
}

}  // namespace symcomp
