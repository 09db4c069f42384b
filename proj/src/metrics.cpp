#include "cet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "cet/errors.hpp"

namespace cet {

std::vector<real> ite_true(const Dataset& ds) {
    const std::size_t n = ds.n();
    std::vector<real> ite(n);
    if (ds.mu0 && ds.mu1) {
        for (std::size_t i = 0; i < n; ++i) ite[i] = (*ds.mu1)[i] - (*ds.mu0)[i];
    } else if (ds.y_cf) {
        for (std::size_t i = 0; i < n; ++i) {
            const real yf = ds.y_factual[i], yc = (*ds.y_cf)[i];
            ite[i] = ds.treatment[i] == 1 ? yf - yc : yc - yf;
        }
    } else {
        throw ValidationError("dataset has no counterfactual ground truth");
    }
    return ite;
}

real ate_true(const Dataset& ds) {
    const std::vector<real> ite = ite_true(ds);
    real s = 0;
    for (real v : ite) s += v;
    return s / static_cast<real>(ite.size());
}

real sqrt_pehe(const std::vector<real>& ite_pred, const std::vector<real>& ite_truth) {
    if (ite_pred.size() != ite_truth.size())
        throw ShapeError("sqrt_pehe: " + std::to_string(ite_pred.size()) + " predictions vs " +
                         std::to_string(ite_truth.size()) + " truths");
    if (ite_pred.empty()) throw ShapeError("sqrt_pehe: empty vectors");
    real s = 0;
    for (std::size_t i = 0; i < ite_pred.size(); ++i) {
        const real d = ite_pred[i] - ite_truth[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<real>(ite_pred.size()));
}

real policy_risk(const std::vector<real>& y0_hat, const std::vector<real>& y1_hat,
                 const std::vector<int>& treatment, const std::vector<real>& y,
                 real lambda, std::vector<std::string>* warnings) {
    const std::size_t n = y.size();
    if (y0_hat.size() != n || y1_hat.size() != n || treatment.size() != n)
        throw ShapeError("policy_risk: input lengths disagree");
    if (n == 0) throw ShapeError("policy_risk: empty inputs");
    for (real v : y)
        if (v < 0 || v > 1)
            throw ValidationError("policy_risk needs outcomes in [0,1]; scale them first");

    std::size_t n_pi1 = 0;
    real sum_y_pi1_t1 = 0, sum_y_pi0_t0 = 0;
    std::size_t n_pi1_t1 = 0, n_pi0_t0 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool pi = (y1_hat[i] - y0_hat[i]) > lambda;
        if (pi) {
            ++n_pi1;
            if (treatment[i] == 1) { sum_y_pi1_t1 += y[i]; ++n_pi1_t1; }
        } else if (treatment[i] == 0) {
            sum_y_pi0_t0 += y[i];
            ++n_pi0_t0;
        }
    }
    const real p1 = static_cast<real>(n_pi1) / static_cast<real>(n);
    const real p0 = 1 - p1;

    real value = 0;
    if (n_pi1_t1 > 0) {
        value += (sum_y_pi1_t1 / static_cast<real>(n_pi1_t1)) * p1;
    } else if (n_pi1 > 0) {
        if (warnings)
            warnings->push_back("policy_risk: no treated unit follows the policy's treat "
                                "decision; dropping that term");
    }
    if (n_pi0_t0 > 0) {
        value += (sum_y_pi0_t0 / static_cast<real>(n_pi0_t0)) * p0;
    } else if (n_pi1 < n) {
        if (warnings)
            warnings->push_back("policy_risk: no control unit follows the policy's skip "
                                "decision; dropping that term");
    }
    return 1 - value;
}

std::vector<real> minmax_scale(const std::vector<real>& y) {
    if (y.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(y.begin(), y.end());
    const real lo = *lo_it, hi = *hi_it;
    std::vector<real> out(y.size());
    if (hi - lo <= 0) {
        std::fill(out.begin(), out.end(), real(0.5));
        return out;
    }
    for (std::size_t i = 0; i < y.size(); ++i) out[i] = (y[i] - lo) / (hi - lo);
    return out;
}

namespace {

constexpr real kVarFloor = real(1e-6);

void diag_gaussian(const Tensor& emb, std::vector<real>& mean, std::vector<real>& var) {
    const std::size_t m = emb.rows(), d = emb.cols();
    mean.assign(d, 0);
    var.assign(d, 0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += emb.at(i, j);
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<real>(m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const real c = emb.at(i, j) - mean[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) var[j] = std::max(var[j] / static_cast<real>(m), kVarFloor);
}

} // namespace

real group_kl(const Tensor& emb_a, const Tensor& emb_b) {
    if (emb_a.rows() < 2 || emb_b.rows() < 2)
        throw GroupError("group_kl needs at least 2 rows per group, got " +
                         std::to_string(emb_a.rows()) + " and " + std::to_string(emb_b.rows()));
    if (emb_a.cols() != emb_b.cols())
        throw ShapeError("group_kl: dimension mismatch " + emb_a.shape_str() + " vs " +
                         emb_b.shape_str());
    std::vector<real> ma, va, mb, vb;
    diag_gaussian(emb_a, ma, va);
    diag_gaussian(emb_b, mb, vb);
    real kl = 0;
    for (std::size_t j = 0; j < ma.size(); ++j) {
        const real dm = mb[j] - ma[j];
        kl += va[j] / vb[j] + dm * dm / vb[j] - 1 + std::log(vb[j] / va[j]);
    }
    return kl / 2;
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["split"] = split;
    if (sqrt_pehe) j["sqrt_pehe"] = *sqrt_pehe;
    if (ate_error) j["ate_error"] = *ate_error;
    if (ate_pred) j["ate_pred"] = *ate_pred;
    j["policy_risk"] = policy_risk;
    j["factual_mse"] = factual_mse;
    j["group_kl_tc"] = group_kl_tc;
    j["group_kl_ct"] = group_kl_ct;
    if (!warnings.empty()) j["warnings"] = warnings;
    if (!config.empty()) {
        nlohmann::json c;
        for (const auto& [k, v] : config) c[k] = v;
        j["config"] = c;
    }
    return j.dump(2);
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    auto row = [&os](const std::string& k, const std::string& v) {
        os << "  " << k;
        for (std::size_t i = k.size(); i < 14; ++i) os << ' ';
        os << v << '\n';
    };
    auto num = [](real v) {
        std::ostringstream s;
        s.precision(6);
        s << v;
        return s.str();
    };
    os << "[" << split << "]\n";
    if (sqrt_pehe) row("sqrt_pehe", num(*sqrt_pehe));
    if (ate_pred) row("ate_pred", num(*ate_pred));
    if (ate_error) row("ate_error", num(*ate_error));
    row("policy_risk", num(policy_risk));
    row("factual_mse", num(factual_mse));
    row("group_kl_tc", num(group_kl_tc));
    row("group_kl_ct", num(group_kl_ct));
    for (const std::string& w : warnings) os << "  ! " << w << '\n';
    return os.str();
}

} // namespace cet
