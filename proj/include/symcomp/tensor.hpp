#pragma once

#include <cstdint>
#include <vector>

#include "symcomp/common.hpp"

namespace symcomp {

// Storage precision. F32 keeps the double storage but rounds every op result
// through IEEE float, so checkpoints written as f32 round-trip bit-exactly.
enum class Dtype { F64, F32 };

inline const char* dtype_name(Dtype d) { return d == Dtype::F64 ? "f64" : "f32"; }
Dtype dtype_from_name(const std::string& s);

// Dense row-major tensor. Rank is anything, but the engine's ops only deal in
// rank 1 and 2; higher-rank data goes through reshape before entering a graph.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::vector<int64_t> shape, Dtype dt = Dtype::F64);
    Tensor(std::vector<int64_t> shape, std::vector<double> values, Dtype dt = Dtype::F64);

    static Tensor zeros(std::vector<int64_t> shape, Dtype dt = Dtype::F64);
    static Tensor full(std::vector<int64_t> shape, double v, Dtype dt = Dtype::F64);
    static Tensor scalar(double v, Dtype dt = Dtype::F64);
    static Tensor eye(int64_t n, Dtype dt = Dtype::F64);

    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // rank-2 accessors; rows()/cols() throw on other ranks
    int64_t rows() const;
    int64_t cols() const;
    double& at(int64_t i) { return data_[static_cast<size_t>(i)]; }
    double at(int64_t i) const { return data_[static_cast<size_t>(i)]; }
    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * cols_ + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * cols_ + c)]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    Dtype dtype() const { return dtype_; }
    void set_dtype(Dtype dt) {
        dtype_ = dt;
        round_to_dtype();
    }

    // In F32 mode, snap every value to the nearest float. No-op for F64.
    void round_to_dtype();

    Tensor reshaped(std::vector<int64_t> shape) const;
    Tensor row(int64_t r) const;  // copy of one row of a rank-2 tensor, rank 1

    void fill(double v);
    bool all_finite() const;
    // throws NumericError naming `what` when a non-finite value is present
    void check_finite(const std::string& what) const;

    bool operator==(const Tensor& o) const {
        return shape_ == o.shape_ && data_ == o.data_ && dtype_ == o.dtype_;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<double> data_;
    int64_t cols_ = 0;  // cached for rank-2 indexing; 1 otherwise
    Dtype dtype_ = Dtype::F64;
};

// max |a-b| over all entries; shapes must match
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace symcomp
