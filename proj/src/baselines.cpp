#include "cet/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "cet/errors.hpp"
#include "cet/linalg.hpp"

namespace cet {

real LinearModel::predict(const real* x, std::size_t d) const {
    if (d != coef.size())
        throw ShapeError("linear model built for d=" + std::to_string(coef.size()) +
                         ", got d=" + std::to_string(d));
    real s = intercept;
    for (std::size_t j = 0; j < d; ++j) s += coef[j] * x[j];
    return s;
}

namespace {

// Design matrix from selected rows, optional treatment column, plus intercept.
std::vector<real> build_design(const Tensor& x, const std::vector<std::size_t>& rows,
                               const std::vector<int>* treatment) {
    const std::size_t d = x.cols();
    const std::size_t k = d + (treatment ? 1 : 0) + 1;
    std::vector<real> design(rows.size() * k);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const std::size_t i = rows[r];
        real* row = design.data() + r * k;
        for (std::size_t j = 0; j < d; ++j) row[j] = x.at(i, j);
        if (treatment) row[d] = static_cast<real>((*treatment)[i]);
        row[k - 1] = 1;
    }
    return design;
}

std::vector<real> gather(const std::vector<real>& y, const std::vector<std::size_t>& rows) {
    std::vector<real> out(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) out[r] = y[rows[r]];
    return out;
}

void check_train(const SplitIndices& sp) {
    if (sp.train.empty()) throw SizingError("baseline fit needs a non-empty train split");
}

} // namespace

LinearModel fit_linear(const Tensor& x, const std::vector<real>& y,
                       const std::vector<std::size_t>& rows,
                       std::vector<std::string>* warnings) {
    if (rows.empty()) throw SizingError("linear fit on zero rows");
    const std::size_t k = x.cols() + 1;
    bool used_ridge = false;
    std::vector<real> design = build_design(x, rows, nullptr);
    std::vector<real> beta = lstsq(design, gather(y, rows), rows.size(), k, real(1e-8),
                                   &used_ridge);
    if (used_ridge && warnings)
        warnings->push_back("rank-deficient design; fit recovered with ridge 1e-8");
    LinearModel m;
    m.coef.assign(beta.begin(), beta.end() - 1);
    m.intercept = beta.back();
    return m;
}

std::vector<real> ols_lr1(const Dataset& ds, const SplitIndices& sp,
                          std::vector<std::string>* warnings) {
    check_train(sp);
    const std::size_t d = ds.d(), k = d + 2;
    bool used_ridge = false;
    std::vector<real> design = build_design(ds.covariates, sp.train, &ds.treatment);
    std::vector<real> beta = lstsq(design, gather(ds.y_factual, sp.train), sp.train.size(), k,
                                   real(1e-8), &used_ridge);
    if (used_ridge && warnings)
        warnings->push_back("ols_lr1: rank-deficient design; ridge 1e-8 applied");
    return std::vector<real>(ds.n(), beta[d]);  // the treatment coefficient
}

std::vector<real> ols_lr2(const Dataset& ds, const SplitIndices& sp,
                          std::vector<std::string>* warnings) {
    check_train(sp);
    std::vector<std::size_t> arm_rows[2];
    for (std::size_t i : sp.train) arm_rows[ds.treatment[i]].push_back(i);
    for (int arm = 0; arm < 2; ++arm)
        if (arm_rows[arm].empty())
            throw GroupError("ols_lr2: train split has no units in arm " + std::to_string(arm));

    LinearModel models[2];
    for (int arm = 0; arm < 2; ++arm) {
        std::vector<std::string> w;
        models[arm] = fit_linear(ds.covariates, ds.y_factual, arm_rows[arm], &w);
        if (warnings)
            for (std::string& s : w)
                warnings->push_back("ols_lr2 arm " + std::to_string(arm) + ": " + s);
    }
    const std::size_t d = ds.d();
    std::vector<real> ite(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const real* xi = ds.covariates.data() + i * d;
        ite[i] = models[1].predict(xi, d) - models[0].predict(xi, d);
    }
    return ite;
}

std::vector<real> knn_ite(const Dataset& ds, const SplitIndices& sp, std::size_t k,
                          std::vector<std::string>* warnings) {
    check_train(sp);
    if (k < 1) throw ConfigError("knn_ite: k must be at least 1");
    const std::size_t n = ds.n(), d = ds.d();

    // Candidate pools: unique train indices per arm (repeats in the split
    // list collapse, keeping matching invariant to duplicated index lists).
    std::vector<std::size_t> pool[2];
    {
        std::vector<std::size_t> train = sp.train;
        std::sort(train.begin(), train.end());
        train.erase(std::unique(train.begin(), train.end()), train.end());
        for (std::size_t i : train) pool[ds.treatment[i]].push_back(i);
    }
    for (int arm = 0; arm < 2; ++arm)
        if (pool[arm].empty())
            throw GroupError("knn_ite: no train units in arm " + std::to_string(arm));

    // Standardize with train statistics so every feature weighs equally.
    std::vector<real> mean(d, 0), sd(d, 0);
    {
        std::vector<std::size_t> all = pool[0];
        all.insert(all.end(), pool[1].begin(), pool[1].end());
        for (std::size_t i : all)
            for (std::size_t j = 0; j < d; ++j) mean[j] += ds.covariates.at(i, j);
        for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<real>(all.size());
        for (std::size_t i : all)
            for (std::size_t j = 0; j < d; ++j) {
                const real c = ds.covariates.at(i, j) - mean[j];
                sd[j] += c * c;
            }
        for (std::size_t j = 0; j < d; ++j) {
            sd[j] = std::sqrt(sd[j] / static_cast<real>(all.size()));
            if (sd[j] <= 0) sd[j] = 1;
        }
    }
    Tensor xs({n, d});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) xs.at(i, j) = (ds.covariates.at(i, j) - mean[j]) / sd[j];

    bool clamp_warned[2] = {false, false};
    std::vector<real> ite(n);
    std::vector<std::pair<real, std::size_t>> cand;
    for (std::size_t i = 0; i < n; ++i) {
        const int opp = 1 - ds.treatment[i];
        const std::vector<std::size_t>& candidates = pool[opp];
        std::size_t kk = k;
        if (kk > candidates.size()) {
            kk = candidates.size();
            if (warnings && !clamp_warned[opp]) {
                warnings->push_back("knn_ite: k=" + std::to_string(k) + " exceeds arm " +
                                    std::to_string(opp) + " size " +
                                    std::to_string(candidates.size()) + "; clamped");
                clamp_warned[opp] = true;
            }
        }
        cand.clear();
        cand.reserve(candidates.size());
        for (std::size_t c : candidates) {
            real dist = 0;
            for (std::size_t j = 0; j < d; ++j) {
                const real diff = xs.at(i, j) - xs.at(c, j);
                dist += diff * diff;
            }
            cand.emplace_back(dist, c);
        }
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(kk),
                          cand.end());
        real cf = 0;
        for (std::size_t r = 0; r < kk; ++r) cf += ds.y_factual[cand[r].second];
        cf /= static_cast<real>(kk);
        ite[i] = ds.treatment[i] == 1 ? ds.y_factual[i] - cf : cf - ds.y_factual[i];
    }
    return ite;
}

} // namespace cet
