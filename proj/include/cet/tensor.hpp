#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "cet/errors.hpp"

namespace cet {

#ifdef CET_REAL_FLOAT
using real = float;
#else
using real = double;
#endif

// Dense row-major tensor. Rank 1 (vectors) and rank 2 (matrices) cover
// everything in this project; scalars are rank-1 tensors of size 1.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), real(0)) {}

    Tensor(std::vector<std::size_t> shape, std::vector<real> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str());
    }

    static Tensor scalar(real v) { return Tensor({1}, {v}); }

    static Tensor vector(std::vector<real> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t r, std::size_t c, std::vector<real> v) {
        return Tensor({r, c}, std::move(v));
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    // Matrix view: rank-1 tensors read as a single row.
    std::size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : size(); }

    real& operator[](std::size_t i) { return data_[i]; }
    real operator[](std::size_t i) const { return data_[i]; }
    real& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    real at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    std::vector<real>& vec() { return data_; }
    const std::vector<real>& vec() const { return data_; }

    bool empty() const { return data_.empty(); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (real v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(real v) {
        for (real& x : data_) x = v;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            s += (i ? "x" : "") + std::to_string(shape_[i]);
        return s + "]";
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<real> data_;
};

// Raw matmul kernels used by the tape for forward and backward passes.
// All operate on the rank-2 (or rank-1-as-row) matrix view. When
// `accumulate` is set the product is added into `out` instead of
// overwriting it; `out` must already have the right shape in that case.
void mm_nn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false); // A.B
void mm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false); // A.B^T
void mm_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate = false); // A^T.B

// out += a (shapes must match)
void add_into(Tensor& out, const Tensor& a);

} // namespace cet
