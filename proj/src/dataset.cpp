#include "cet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cet/errors.hpp"
#include "cet/linalg.hpp"
#include "cet/rng.hpp"

namespace cet {

namespace {

std::string format_real(real v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(trim(line.substr(start)));
            break;
        }
        cells.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return cells;
}

real parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0')
        throw ParseError("row " + std::to_string(row) + ", column \"" + col +
                         "\": cannot parse \"" + cell + "\" as a number");
    if (!std::isfinite(v))
        throw ValidationError("row " + std::to_string(row) + ", column \"" + col +
                              "\": non-finite value");
    return static_cast<real>(v);
}

} // namespace

std::size_t Dataset::treated_count() const {
    return static_cast<std::size_t>(std::count(treatment.begin(), treatment.end(), 1));
}

std::size_t Dataset::control_count() const { return n() - treated_count(); }

void Dataset::validate() const {
    const std::size_t m = n();
    if (covariates.rank() != 2 || covariates.rows() != m)
        throw ValidationError("covariate matrix shape " + covariates.shape_str() +
                              " does not match n=" + std::to_string(m));
    if (y_factual.size() != m)
        throw ValidationError("y_factual length mismatch");
    for (const auto& opt : {std::cref(y_cf), std::cref(mu0), std::cref(mu1)})
        if (opt.get() && opt.get()->size() != m)
            throw ValidationError("optional outcome column length mismatch");
    if (feature_names.size() != d())
        throw ValidationError("feature name count does not match d");
    for (int t : treatment)
        if (t != 0 && t != 1)
            throw ValidationError("treatment value " + std::to_string(t) + " not in {0,1}");
    if (!covariates.all_finite())
        throw ValidationError("non-finite covariate");
    auto check_finite = [](const std::vector<real>& v, const char* what) {
        for (real x : v)
            if (!std::isfinite(static_cast<double>(x)))
                throw ValidationError(std::string("non-finite value in ") + what);
    };
    check_finite(y_factual, "y_factual");
    if (y_cf) check_finite(*y_cf, "y_cf");
    if (mu0) check_finite(*mu0, "mu0");
    if (mu1) check_finite(*mu1, "mu1");
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw ParseError("empty file: " + path);
    const std::vector<std::string> header = split_line(line);

    auto find_col = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    const std::ptrdiff_t col_t = find_col(schema.treatment);
    const std::ptrdiff_t col_yf = find_col(schema.outcome);
    if (col_t < 0) throw SchemaError("missing column \"" + schema.treatment + "\"");
    if (col_yf < 0) throw SchemaError("missing column \"" + schema.outcome + "\"");
    const std::ptrdiff_t col_ycf = find_col(schema.counterfactual);
    const std::ptrdiff_t col_mu0 = find_col(schema.mu0);
    const std::ptrdiff_t col_mu1 = find_col(schema.mu1);

    std::vector<std::size_t> cov_cols;
    std::vector<std::string> feature_names;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto sc = static_cast<std::ptrdiff_t>(c);
        if (sc == col_t || sc == col_yf || sc == col_ycf || sc == col_mu0 || sc == col_mu1)
            continue;
        cov_cols.push_back(c);
        feature_names.push_back(header[c]);
    }

    std::vector<real> xdata;
    Dataset ds;
    ds.feature_names = std::move(feature_names);
    if (col_ycf >= 0) ds.y_cf.emplace();
    if (col_mu0 >= 0) ds.mu0.emplace();
    if (col_mu1 >= 0) ds.mu1.emplace();

    std::size_t row = 0;
    while (std::getline(f, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        const real tv = parse_cell(cells[static_cast<std::size_t>(col_t)], row, schema.treatment);
        if (tv != real(0) && tv != real(1))
            throw ValidationError("row " + std::to_string(row) + ": treatment value " +
                                  cells[static_cast<std::size_t>(col_t)] + " not in {0,1}");
        ds.treatment.push_back(tv == real(1) ? 1 : 0);
        ds.y_factual.push_back(parse_cell(cells[static_cast<std::size_t>(col_yf)], row, schema.outcome));
        if (col_ycf >= 0)
            ds.y_cf->push_back(parse_cell(cells[static_cast<std::size_t>(col_ycf)], row, schema.counterfactual));
        if (col_mu0 >= 0)
            ds.mu0->push_back(parse_cell(cells[static_cast<std::size_t>(col_mu0)], row, schema.mu0));
        if (col_mu1 >= 0)
            ds.mu1->push_back(parse_cell(cells[static_cast<std::size_t>(col_mu1)], row, schema.mu1));
        for (std::size_t k = 0; k < cov_cols.size(); ++k)
            xdata.push_back(parse_cell(cells[cov_cols[k]], row, ds.feature_names[k]));
    }
    ds.covariates = Tensor({row, cov_cols.size()}, std::move(xdata));
    ds.validate();
    return ds;
}

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream out;
    out << "t,yf";
    if (ds.y_cf) out << ",ycf";
    if (ds.mu0) out << ",mu0";
    if (ds.mu1) out << ",mu1";
    for (const std::string& name : ds.feature_names) out << "," << name;
    out << "\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        out << ds.treatment[i] << "," << format_real(ds.y_factual[i]);
        if (ds.y_cf) out << "," << format_real((*ds.y_cf)[i]);
        if (ds.mu0) out << "," << format_real((*ds.mu0)[i]);
        if (ds.mu1) out << "," << format_real((*ds.mu1)[i]);
        for (std::size_t c = 0; c < ds.d(); ++c) out << "," << format_real(ds.covariates.at(i, c));
        out << "\n";
    }
    return out.str();
}

void save_csv(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << dataset_to_csv(ds);
    if (!f) throw IoError("write failed: " + path);
}

std::pair<Dataset, StandardizeParams> standardize(const Dataset& ds) {
    if (ds.n() < 2) throw ValidationError("standardize needs n >= 2");
    const std::size_t n = ds.n(), d = ds.d();
    StandardizeParams sp;
    sp.mean.assign(d, 0);
    sp.sd.assign(d, 1);
    for (std::size_t c = 0; c < d; ++c) {
        real mu = 0;
        for (std::size_t i = 0; i < n; ++i) mu += ds.covariates.at(i, c);
        mu /= real(n);
        real var = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const real dv = ds.covariates.at(i, c) - mu;
            var += dv * dv;
        }
        var /= real(n);
        sp.mean[c] = mu;
        sp.sd[c] = var > 0 ? std::sqrt(var) : real(1);
    }
    return {apply_standardize(ds, sp), sp};
}

Dataset apply_standardize(const Dataset& ds, const StandardizeParams& sp) {
    if (sp.mean.size() != ds.d() || sp.sd.size() != ds.d())
        throw ValidationError("standardize params dimension mismatch");
    Dataset out = ds;
    for (std::size_t i = 0; i < ds.n(); ++i)
        for (std::size_t c = 0; c < ds.d(); ++c)
            out.covariates.at(i, c) = (ds.covariates.at(i, c) - sp.mean[c]) / sp.sd[c];
    return out;
}

SplitIndices split(const Dataset& ds, double train_pct, double valid_pct, double test_pct,
                   std::uint64_t seed) {
    if (train_pct <= 0 || valid_pct <= 0 || test_pct <= 0)
        throw ConfigError("split percentages must be positive");
    if (train_pct + valid_pct + test_pct > 100.0 + 1e-9)
        throw ConfigError("split percentages sum above 100");
    const std::size_t n = ds.n();
    const auto nv = static_cast<std::size_t>(std::floor(double(n) * valid_pct / 100.0));
    const auto nt = static_cast<std::size_t>(std::floor(double(n) * test_pct / 100.0));
    if (nv == 0 || nt == 0 || nv + nt >= n)
        throw SizingError("n=" + std::to_string(n) + " too small for a " +
                          std::to_string(train_pct) + "/" + std::to_string(valid_pct) + "/" +
                          std::to_string(test_pct) + " split");

    // Shuffle each arm, then fill per-arm floor quotas for valid/test; the
    // one-unit rounding deficits go to the arm with the larger fractional
    // remainder (capacity permitting). Whatever is left lands in train.
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> arms(2);
    for (std::size_t i = 0; i < n; ++i) arms[static_cast<std::size_t>(ds.treatment[i])].push_back(i);
    for (auto& arm : arms) rng.shuffle(arm);

    std::size_t quota_v[2], quota_t[2];
    double frac_v[2], frac_t[2];
    for (int a = 0; a < 2; ++a) {
        const double na = static_cast<double>(arms[a].size());
        quota_v[a] = static_cast<std::size_t>(std::floor(na * valid_pct / 100.0));
        quota_t[a] = static_cast<std::size_t>(std::floor(na * test_pct / 100.0));
        frac_v[a] = na * valid_pct / 100.0 - double(quota_v[a]);
        frac_t[a] = na * test_pct / 100.0 - double(quota_t[a]);
    }
    auto assign_deficit = [&](std::size_t need, std::size_t quota[2], const double frac[2]) {
        std::size_t have = quota[0] + quota[1];
        while (have < need) {
            int pick = -1;
            for (int pass = 0; pass < 2 && pick < 0; ++pass) {
                // pass 0 keeps at least one train unit in the arm; pass 1 only needs capacity
                const std::size_t slack = pass == 0 ? 2 : 1;
                double best = -1;
                for (int a = 0; a < 2; ++a) {
                    const std::size_t used = quota_v[a] + quota_t[a];
                    if (arms[a].size() < used + slack) continue;
                    if (frac[a] > best) {
                        best = frac[a];
                        pick = a;
                    }
                }
            }
            if (pick < 0) throw SizingError("cannot satisfy stratified split quotas");
            ++quota[pick];
            ++have;
        }
    };
    assign_deficit(nv, quota_v, frac_v);
    assign_deficit(nt, quota_t, frac_t);

    SplitIndices out;
    for (int a = 0; a < 2; ++a) {
        std::size_t pos = 0;
        for (std::size_t k = 0; k < quota_v[a]; ++k) out.valid.push_back(arms[a][pos++]);
        for (std::size_t k = 0; k < quota_t[a]; ++k) out.test.push_back(arms[a][pos++]);
        for (; pos < arms[a].size(); ++pos) out.train.push_back(arms[a][pos]);
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.valid.begin(), out.valid.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

void SynthConfig::validate() const {
    if (n < 4) throw SizingError("synthetic n must be at least 4");
    if (d < 1) throw ConfigError("synthetic d must be at least 1");
    if (bias_strength < 0) throw ConfigError("bias_strength must be >= 0");
    if (noise_sd < 0) throw ConfigError("noise_sd must be >= 0");
}

Dataset generate_synthetic(const SynthConfig& cfg) {
    cfg.validate();
    const std::size_t n = cfg.n, d = cfg.d;
    const double invsqd = 1.0 / std::sqrt(static_cast<double>(d));
    Rng rng(cfg.seed);

    for (int attempt = 0; attempt < 10; ++attempt) {
        Tensor x({n, d});
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<real>(rng.normal());

        std::vector<int> t(n);
        std::vector<double> score(n);
        bool any[2] = {false, false};
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t c = 0; c < d; ++c) s += invsqd * static_cast<double>(x.at(i, c));
            score[i] = s;
            const double p = 1.0 / (1.0 + std::exp(-cfg.bias_strength * s));
            t[i] = rng.bernoulli(p) ? 1 : 0;
            any[t[i]] = true;
        }
        if (!any[0] || !any[1]) continue;

        std::vector<real> m0(n), m1(n), yf(n), ycf(n);
        for (std::size_t i = 0; i < n; ++i) {
            double base = 0;
            for (std::size_t c = 0; c < d; ++c) {
                const double sign = (c % 2 == 0) ? 1.0 : -1.0;
                base += sign * invsqd * static_cast<double>(x.at(i, c));
            }
            base += std::tanh(score[i]);
            double tau_i = 0;
            switch (cfg.effect_fn) {
            case EffectFn::Constant: tau_i = cfg.tau; break;
            case EffectFn::Linear: tau_i = cfg.tau * score[i]; break;
            case EffectFn::Nonlinear: tau_i = std::sin(cfg.tau * score[i]) + 1.0; break;
            }
            m0[i] = static_cast<real>(base);
            m1[i] = static_cast<real>(base + tau_i);
        }
        for (std::size_t i = 0; i < n; ++i) {
            const real noise_f = static_cast<real>(cfg.noise_sd * rng.normal());
            const real noise_c = static_cast<real>(cfg.noise_sd * rng.normal());
            yf[i] = (t[i] == 1 ? m1[i] : m0[i]) + noise_f;
            ycf[i] = (t[i] == 1 ? m0[i] : m1[i]) + noise_c;
        }

        Dataset ds;
        ds.covariates = std::move(x);
        ds.treatment = std::move(t);
        ds.y_factual = std::move(yf);
        ds.y_cf = std::move(ycf);
        ds.mu0 = std::move(m0);
        ds.mu1 = std::move(m1);
        ds.feature_names.reserve(d);
        for (std::size_t c = 0; c < d; ++c) ds.feature_names.push_back("x" + std::to_string(c));
        ds.validate();
        return ds;
    }
    throw GroupError("synthetic generation produced an empty treatment arm 10 times");
}

namespace {

// Newton-step logistic fit of treatment on standardized covariates plus an
// intercept; returns fitted probabilities.
std::vector<double> fit_propensity(const Dataset& ds) {
    const auto [std_ds, sp] = standardize(ds);
    const std::size_t n = ds.n(), k = ds.d() + 1;
    std::vector<real> design(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        design[i * k] = 1;
        for (std::size_t c = 0; c < ds.d(); ++c) design[i * k + 1 + c] = std_ds.covariates.at(i, c);
    }
    std::vector<double> beta(k, 0.0), p(n, 0.5);
    for (int iter = 0; iter < 25; ++iter) {
        std::vector<real> h(k * k, 0), g(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            double eta = 0;
            for (std::size_t a = 0; a < k; ++a) eta += beta[a] * static_cast<double>(design[i * k + a]);
            const double pi = 1.0 / (1.0 + std::exp(-eta));
            p[i] = pi;
            const double w = std::max(pi * (1.0 - pi), 1e-6);
            const double r = static_cast<double>(ds.treatment[i]) - pi;
            for (std::size_t a = 0; a < k; ++a) {
                g[a] += static_cast<real>(design[i * k + a] * r);
                for (std::size_t b = a; b < k; ++b)
                    h[a * k + b] += static_cast<real>(w * design[i * k + a] * design[i * k + b]);
            }
        }
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < a; ++b) h[a * k + b] = h[b * k + a];
            h[a * k + a] += real(1e-6);
        }
        const std::vector<real> step = solve_spd(std::move(h), std::move(g), k);
        double shift = 0;
        for (std::size_t a = 0; a < k; ++a) {
            beta[a] += static_cast<double>(step[a]);
            shift = std::max(shift, std::abs(static_cast<double>(step[a])));
        }
        if (shift < 1e-10) break;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double eta = 0;
        for (std::size_t a = 0; a < k; ++a) eta += beta[a] * static_cast<double>(design[i * k + a]);
        p[i] = 1.0 / (1.0 + std::exp(-eta));
    }
    return p;
}

} // namespace

std::vector<std::string> overlap_check(const Dataset& ds) {
    std::vector<std::string> warnings;
    const std::size_t n = ds.n();
    if (n == 0) return warnings;
    const std::size_t nt = ds.treated_count();
    const double share_t = double(nt) / double(n);
    if (share_t < 0.05)
        warnings.push_back("treated arm holds " + std::to_string(nt) + "/" + std::to_string(n) +
                           " units (< 5%)");
    if (1.0 - share_t < 0.05)
        warnings.push_back("control arm holds " + std::to_string(n - nt) + "/" +
                           std::to_string(n) + " units (< 5%)");
    if (nt == 0 || nt == n) return warnings; // propensity fit needs both arms

    const std::vector<double> p = fit_propensity(ds);
    std::size_t extreme = 0;
    for (double pi : p)
        if (pi < 0.02 || pi > 0.98) ++extreme;
    if (double(extreme) > 0.10 * double(n))
        warnings.push_back("estimated propensity outside [0.02, 0.98] for " +
                           std::to_string(extreme) + "/" + std::to_string(n) + " units (> 10%)");
    return warnings;
}

const char* effect_fn_name(EffectFn e) {
    switch (e) {
    case EffectFn::Constant: return "constant";
    case EffectFn::Linear: return "linear";
    case EffectFn::Nonlinear: return "nonlinear";
    }
    return "constant";
}

EffectFn effect_fn_from_name(const std::string& name) {
    if (name == "constant") return EffectFn::Constant;
    if (name == "linear") return EffectFn::Linear;
    if (name == "nonlinear") return EffectFn::Nonlinear;
    throw ConfigError("unknown effect function \"" + name + "\"");
}

} // namespace cet
