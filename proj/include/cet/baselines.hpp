#pragma once

#include <string>
#include <vector>

#include "cet/dataset.hpp"

namespace cet {

// Linear regression fit: y_hat = coef . x + intercept.
struct LinearModel {
    std::vector<real> coef;
    real intercept = 0;

    real predict(const real* x, std::size_t d) const;
};

// Least squares with intercept on the given rows of the dataset's
// covariates. Falls back to a 1e-8 ridge on rank deficiency (warned).
LinearModel fit_linear(const Tensor& x, const std::vector<real>& y,
                       const std::vector<std::size_t>& rows,
                       std::vector<std::string>* warnings = nullptr);

// y ~ [x, t]: the treatment coefficient is the (constant) ITE prediction
// for every unit. Fits on the train split, predicts for all n units.
std::vector<real> ols_lr1(const Dataset& ds, const SplitIndices& sp,
                          std::vector<std::string>* warnings = nullptr);

// Separate per-arm regressions; ITE(x) = f1(x) - f0(x).
std::vector<real> ols_lr2(const Dataset& ds, const SplitIndices& sp,
                          std::vector<std::string>* warnings = nullptr);

// k-nearest-neighbour counterfactual matching on standardized covariates
// (train-split statistics). The counterfactual of unit i is the mean factual
// outcome of its k nearest opposite-arm train units; ITE oriented by T_i.
// k larger than an arm is clamped with a warning; ties break by index.
std::vector<real> knn_ite(const Dataset& ds, const SplitIndices& sp, std::size_t k = 5,
                          std::vector<std::string>* warnings = nullptr);

} // namespace cet
