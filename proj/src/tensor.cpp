#include "cet/tensor.hpp"

namespace cet {

namespace {

void check_inner(const Tensor& a, const Tensor& b, std::size_t ka, std::size_t kb,
                 const char* op) {
    if (ka != kb)
        throw ShapeError(std::string(op) + ": inner dimensions differ, " + a.shape_str() +
                         " vs " + b.shape_str());
}

void prepare_out(Tensor& out, std::size_t r, std::size_t c, bool accumulate) {
    if (!accumulate) {
        out = Tensor({r, c});
    } else if (out.rows() != r || out.cols() != c) {
        throw ShapeError("accumulate target has shape " + out.shape_str());
    }
}

} // namespace

void mm_nn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    check_inner(a, b, k, b.rows(), "matmul");
    prepare_out(out, n, m, accumulate);
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const real av = pa[i * k + l];
            if (av == real(0)) continue;
            const real* pbl = pb + l * m;
            real* poi = po + i * m;
            for (std::size_t j = 0; j < m; ++j) poi[j] += av * pbl[j];
        }
    }
}

void mm_nt(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    check_inner(a, b, k, b.cols(), "matmul_nt");
    prepare_out(out, n, m, accumulate);
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const real* pai = pa + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const real* pbj = pb + j * k;
            real acc = 0;
            for (std::size_t l = 0; l < k; ++l) acc += pai[l] * pbj[l];
            po[i * m + j] += acc;
        }
    }
}

void mm_tn(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    check_inner(a, b, k, b.rows(), "matmul_tn");
    prepare_out(out, n, m, accumulate);
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::size_t l = 0; l < k; ++l) {
        const real* pal = pa + l * n;
        const real* pbl = pb + l * m;
        for (std::size_t i = 0; i < n; ++i) {
            const real av = pal[i];
            if (av == real(0)) continue;
            real* poi = po + i * m;
            for (std::size_t j = 0; j < m; ++j) poi[j] += av * pbl[j];
        }
    }
}

void add_into(Tensor& out, const Tensor& a) {
    if (!out.same_shape(a))
        throw ShapeError("add_into: shape " + out.shape_str() + " vs " + a.shape_str());
    real* po = out.data();
    const real* pa = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] += pa[i];
}

} // namespace cet
