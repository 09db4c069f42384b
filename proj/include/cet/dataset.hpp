#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cet/tensor.hpp"

namespace cet {

// An observational dataset: covariates, binary treatment, factual outcome,
// and (synthetic / semi-synthetic only) counterfactual ground truth.
// Immutable after construction; validate() enforces the invariants.
struct Dataset {
    Tensor covariates;                          // n x d
    std::vector<int> treatment;                 // entries in {0,1}
    std::vector<real> y_factual;
    std::optional<std::vector<real>> y_cf;
    std::optional<std::vector<real>> mu0;
    std::optional<std::vector<real>> mu1;
    std::vector<std::string> feature_names;     // d entries

    std::size_t n() const { return treatment.size(); }
    std::size_t d() const { return covariates.rank() == 2 ? covariates.cols() : 0; }
    bool has_ground_truth() const { return (mu0 && mu1) || y_cf.has_value(); }

    std::size_t treated_count() const;
    std::size_t control_count() const;

    // Throws ValidationError on any invariant breach.
    void validate() const;
};

// Column names in the on-disk CSV. Covariates are every remaining column,
// kept in file order.
struct CsvSchema {
    std::string treatment = "t";
    std::string outcome = "yf";
    std::string counterfactual = "ycf";  // optional column
    std::string mu0 = "mu0";             // optional column
    std::string mu1 = "mu1";             // optional column
};

Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
void save_csv(const std::string& path, const Dataset& ds);
std::string dataset_to_csv(const Dataset& ds);

// Per-feature transform fitted by standardize(); reusable on held-out data.
struct StandardizeParams {
    std::vector<real> mean;
    std::vector<real> sd;   // population sd; constant columns recorded as 1
};

// Returns a copy with each covariate column at mean 0 / sd 1 (constant
// columns map to all zeros). Outcomes and treatment are untouched.
std::pair<Dataset, StandardizeParams> standardize(const Dataset& ds);
Dataset apply_standardize(const Dataset& ds, const StandardizeParams& sp);

struct SplitIndices {
    std::vector<std::size_t> train, valid, test;
};

// Deterministic stratified split. Part sizes are floor(n*pct/100) for valid
// and test with the remainder going to train; stratified by treatment arm.
SplitIndices split(const Dataset& ds, double train_pct, double valid_pct, double test_pct,
                   std::uint64_t seed);

enum class EffectFn { Constant, Linear, Nonlinear };

struct SynthConfig {
    std::size_t n = 1000;
    std::size_t d = 10;
    double bias_strength = 0.0;   // selection-bias coefficient (0 = RCT)
    EffectFn effect_fn = EffectFn::Constant;
    double tau = 3.0;             // constant effect size / scale of the effect direction
    double noise_sd = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// X ~ N(0,I); treatment ~ Bernoulli(sigmoid(bias_strength * w.x)) for the
// fixed unit vector w = 1/sqrt(d); mu0/mu1/y_cf all populated.
Dataset generate_synthetic(const SynthConfig& cfg);

// Positivity diagnostics: arm-share and extreme-propensity warnings.
std::vector<std::string> overlap_check(const Dataset& ds);

const char* effect_fn_name(EffectFn e);
EffectFn effect_fn_from_name(const std::string& name);

} // namespace cet
