#include "cet/linalg.hpp"

#include <cmath>

#include "cet/errors.hpp"

namespace cet {

std::vector<real> solve_spd(std::vector<real> a, std::vector<real> b, std::size_t k) {
    // In-place Cholesky A = L L^T.
    for (std::size_t j = 0; j < k; ++j) {
        real diag = a[j * k + j];
        for (std::size_t l = 0; l < j; ++l) diag -= a[j * k + l] * a[j * k + l];
        if (!(diag > 0) || !std::isfinite(static_cast<double>(diag)))
            throw NumericError("solve_spd: matrix not positive definite");
        const real ljj = std::sqrt(diag);
        a[j * k + j] = ljj;
        for (std::size_t i = j + 1; i < k; ++i) {
            real v = a[i * k + j];
            for (std::size_t l = 0; l < j; ++l) v -= a[i * k + l] * a[j * k + l];
            a[i * k + j] = v / ljj;
        }
    }
    // Forward then back substitution.
    for (std::size_t i = 0; i < k; ++i) {
        real v = b[i];
        for (std::size_t l = 0; l < i; ++l) v -= a[i * k + l] * b[l];
        b[i] = v / a[i * k + i];
    }
    for (std::size_t ii = k; ii-- > 0;) {
        real v = b[ii];
        for (std::size_t l = ii + 1; l < k; ++l) v -= a[l * k + ii] * b[l];
        b[ii] = v / a[ii * k + ii];
    }
    return b;
}

std::vector<real> lstsq(const std::vector<real>& x, const std::vector<real>& y,
                        std::size_t n, std::size_t k, real ridge, bool* used_ridge) {
    std::vector<real> xtx(k * k, 0), xty(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const real* row = x.data() + i * k;
        for (std::size_t a = 0; a < k; ++a) {
            xty[a] += row[a] * y[i];
            for (std::size_t b = a; b < k; ++b) xtx[a * k + b] += row[a] * row[b];
        }
    }
    for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = 0; b < a; ++b) xtx[a * k + b] = xtx[b * k + a];

    if (used_ridge) *used_ridge = false;
    try {
        return solve_spd(xtx, xty, k);
    } catch (const NumericError&) {
        if (used_ridge) *used_ridge = true;
        for (std::size_t a = 0; a < k; ++a) xtx[a * k + a] += ridge;
        return solve_spd(std::move(xtx), std::move(xty), k);
    }
}

} // namespace cet
