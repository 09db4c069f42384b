#pragma once

#include <cstddef>
#include <vector>

#include "cet/tensor.hpp"

namespace cet {

// Cholesky solve of A x = b for symmetric positive-definite A (k x k,
// row-major). Throws NumericError when A is not positive definite.
std::vector<real> solve_spd(std::vector<real> a, std::vector<real> b, std::size_t k);

// Least squares via normal equations. Adds `ridge` to the diagonal when the
// plain system is not positive definite; *used_ridge reports whether the
// fallback fired. X is n x k row-major.
std::vector<real> lstsq(const std::vector<real>& x, const std::vector<real>& y,
                        std::size_t n, std::size_t k, real ridge = real(1e-8),
                        bool* used_ridge = nullptr);

} // namespace cet
