#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cet/dataset.hpp"
#include "cet/tensor.hpp"

namespace cet {

// True per-unit effect: mu1 - mu0 when the noiseless surfaces are present,
// otherwise the factual/counterfactual difference oriented by T.
// Throws ValidationError when the dataset has no ground truth.
std::vector<real> ite_true(const Dataset& ds);
real ate_true(const Dataset& ds);

// sqrt( mean( (pred - truth)^2 ) )
real sqrt_pehe(const std::vector<real>& ite_pred, const std::vector<real>& ite_truth);

// Risk of the policy "treat iff y1_hat - y0_hat > lambda", estimated from
// factual outcomes:
//   R_pol = 1 - ( E[y | pi=1, t=1] P(pi=1) + E[y | pi=0, t=0] P(pi=0) ).
// Outcomes must lie in [0,1]. An empty (pi, t)-agreement subgroup drops its
// term with a warning.
real policy_risk(const std::vector<real>& y0_hat, const std::vector<real>& y1_hat,
                 const std::vector<int>& treatment, const std::vector<real>& y,
                 real lambda = 0, std::vector<std::string>* warnings = nullptr);

// Affine map of a vector into [0,1] (min -> 0, max -> 1; constant -> 0.5),
// for policy risk on unbounded outcomes.
std::vector<real> minmax_scale(const std::vector<real>& y);

// KL( N(mean_a, var_a) || N(mean_b, var_b) ) with diagonal Gaussians fitted
// per dimension (population variance, floored at 1e-6). Each group needs at
// least 2 rows. Asymmetric; call twice for both directions.
real group_kl(const Tensor& emb_a, const Tensor& emb_b);

// Metrics for one split. Ground-truth fields stay empty when the dataset
// carries no counterfactuals.
struct EvalReport {
    std::string split;
    std::optional<real> sqrt_pehe;
    std::optional<real> ate_error;
    std::optional<real> ate_pred;
    real policy_risk = 0;
    real factual_mse = 0;
    real group_kl_tc = 0;     // KL(treated || control)
    real group_kl_ct = 0;
    std::vector<std::string> warnings;
    std::vector<std::pair<std::string, std::string>> config;  // flat snapshot

    std::string to_json() const;
    std::string to_table() const;
};

} // namespace cet
