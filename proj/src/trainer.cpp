#include "cet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cet/errors.hpp"
#include "cet/rng.hpp"

namespace cet {

void TrainConfig::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0)
        throw ConfigError("loss weights must be non-negative");
    if (alpha == 0 && beta == 0 && gamma == 0)
        throw ConfigError("at least one loss weight must be positive");
    if (batch < 4) throw ConfigError("batch size must be at least 4");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (n_critic < 1) throw ConfigError("n_critic must be at least 1");
    if (!(clip > 0)) throw ConfigError("clip bound must be positive");
    if (!(lr > 0) || !(critic_lr > 0)) throw ConfigError("learning rates must be positive");
    if (patience < 1) throw ConfigError("patience must be at least 1");
    if (critic_hidden < 1) throw ConfigError("critic hidden width must be at least 1");
    encoder.validate();
}

namespace {

std::string fmt_real(real v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
    return buf;
}

} // namespace

std::vector<std::pair<std::string, std::string>> TrainConfig::snapshot() const {
    std::vector<std::pair<std::string, std::string>> s;
    s.emplace_back("alpha", fmt_real(alpha));
    s.emplace_back("beta", fmt_real(beta));
    s.emplace_back("gamma", fmt_real(gamma));
    s.emplace_back("epochs", std::to_string(epochs));
    s.emplace_back("batch", std::to_string(batch));
    s.emplace_back("lr", fmt_real(lr));
    s.emplace_back("critic_lr", fmt_real(critic_lr));
    s.emplace_back("n_critic", std::to_string(n_critic));
    s.emplace_back("clip", fmt_real(clip));
    s.emplace_back("seed", std::to_string(seed));
    s.emplace_back("ablation", ablation_name(ablation));
    s.emplace_back("patience", std::to_string(patience));
    s.emplace_back("adv_flow", adv_flow_name(adv_flow));
    s.emplace_back("warmup", std::to_string(warmup));
    s.emplace_back("enc.n_blocks", std::to_string(encoder.n_blocks));
    s.emplace_back("enc.n_heads", std::to_string(encoder.n_heads));
    s.emplace_back("enc.d_model", std::to_string(encoder.d_model));
    s.emplace_back("enc.d_k", std::to_string(encoder.d_k));
    s.emplace_back("enc.d_ff", std::to_string(encoder.d_ff));
    s.emplace_back("enc.pooling", encoder.pooling == Pooling::ClsToken ? "cls" : "mean");
    s.emplace_back("critic_hidden", std::to_string(critic_hidden));
    s.emplace_back("standardize_x", standardize_x ? "true" : "false");
    s.emplace_back("standardize_y", standardize_y ? "true" : "false");
    return s;
}

std::string TrainTrace::to_csv() const {
    std::string out = "epoch,l_reco,l_p,wass,group_kl,val_mse\n";
    char buf[256];
    for (const Row& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch,
                      static_cast<double>(r.l_reco), static_cast<double>(r.l_p),
                      static_cast<double>(r.wass), static_cast<double>(r.group_kl),
                      static_cast<double>(r.val_mse));
        out += buf;
    }
    return out;
}

namespace {

Tensor gather_x(const Tensor& x, const std::vector<std::size_t>& rows) {
    const std::size_t d = x.cols();
    Tensor out({rows.size(), d});
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(x.data() + rows[r] * d, x.data() + (rows[r] + 1) * d, out.data() + r * d);
    return out;
}

StandardizeParams fit_standardize(const Tensor& x, const std::vector<std::size_t>& rows) {
    const std::size_t d = x.cols();
    const auto m = static_cast<real>(rows.size());
    StandardizeParams sp;
    sp.mean.assign(d, 0);
    sp.sd.assign(d, 0);
    for (std::size_t i : rows)
        for (std::size_t j = 0; j < d; ++j) sp.mean[j] += x.at(i, j);
    for (std::size_t j = 0; j < d; ++j) sp.mean[j] /= m;
    for (std::size_t i : rows)
        for (std::size_t j = 0; j < d; ++j) {
            const real c = x.at(i, j) - sp.mean[j];
            sp.sd[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) {
        sp.sd[j] = std::sqrt(sp.sd[j] / m);
        if (sp.sd[j] <= 0) sp.sd[j] = 1;
    }
    return sp;
}

// Per-arm embedding matrices; rows must be non-empty.
void split_by_arm(const Tensor& z, const Dataset& ds, const std::vector<std::size_t>& rows,
                  Tensor& z_treated, Tensor& z_control) {
    const std::size_t dm = z.cols();
    std::vector<std::size_t> pos[2];
    for (std::size_t r = 0; r < rows.size(); ++r) pos[ds.treatment[rows[r]]].push_back(r);
    Tensor* out[2] = {&z_control, &z_treated};
    for (int arm = 0; arm < 2; ++arm) {
        Tensor& dst = *out[arm];
        dst = Tensor({pos[arm].size(), dm});
        for (std::size_t r = 0; r < pos[arm].size(); ++r)
            std::copy(z.data() + pos[arm][r] * dm, z.data() + (pos[arm][r] + 1) * dm,
                      dst.data() + r * dm);
    }
}

// Heads on a fixed embedding, unscaled back to original outcome units.
void predict_from_embedding(Model& model, const Tensor& z, std::vector<real>& y0,
                            std::vector<real>& y1) {
    Tape t(false);
    auto [i0, i1] = predict_potential(t, t.constant(z), model.heads);
    const Tensor& p0 = t.val(i0);
    const Tensor& p1 = t.val(i1);
    const std::size_t n = p0.rows();
    y0.resize(n);
    y1.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        y0[i] = p0[i] * model.y_sd + model.y_mean;
        y1[i] = p1[i] * model.y_sd + model.y_mean;
    }
}

real factual_mse_value(const std::vector<real>& y0, const std::vector<real>& y1,
                       const std::vector<int>& t, const std::vector<real>& y) {
    real mse = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const real diff = (t[i] == 1 ? y1[i] : y0[i]) - y[i];
        mse += diff * diff;
    }
    return mse / static_cast<real>(y.size());
}

} // namespace

TrainResult train(const Dataset& ds, const SplitIndices& sp, const TrainConfig& cfg) {
    cfg.validate();
    ds.validate();
    if (sp.train.empty()) throw SizingError("train: empty train split");
    if (sp.valid.empty()) throw SizingError("train: empty validation split");

    std::vector<std::size_t> treated, control;
    for (std::size_t i : sp.train) (ds.treatment[i] == 1 ? treated : control).push_back(i);
    if (treated.empty() || control.empty())
        throw GroupError("train split must contain both treatment arms");

    Rng rng(cfg.seed);
    ModelConfig mc;
    mc.encoder = cfg.encoder;
    mc.critic_hidden = cfg.critic_hidden;
    mc.clip = cfg.clip;
    mc.ablation = cfg.ablation;
    Model model = Model::init(ds.d(), mc, rng);

    if (cfg.standardize_x) {
        model.standardize_x = true;
        model.x_std = fit_standardize(ds.covariates, sp.train);
    }
    if (cfg.standardize_y) {
        real mean = 0, var = 0;
        for (std::size_t i : sp.train) mean += ds.y_factual[i];
        mean /= static_cast<real>(sp.train.size());
        for (std::size_t i : sp.train) {
            const real c = ds.y_factual[i] - mean;
            var += c * c;
        }
        model.y_mean = mean;
        model.y_sd = std::sqrt(var / static_cast<real>(sp.train.size()));
        if (model.y_sd <= 0) model.y_sd = 1;
    }
    std::vector<real> y_scaled(ds.n());
    for (std::size_t i = 0; i < ds.n(); ++i)
        y_scaled[i] = (ds.y_factual[i] - model.y_mean) / model.y_sd;

    Adam gen_opt(model.generator_params(), cfg.lr);
    RmsProp critic_opt(model.critic.params(), cfg.critic_lr);
    const bool critic_enabled = cfg.ablation != Ablation::NoDiscriminator && cfg.beta > 0;

    const Tensor x_train = gather_x(ds.covariates, sp.train);
    const Tensor x_valid = gather_x(ds.covariates, sp.valid);
    std::vector<int> t_valid(sp.valid.size());
    std::vector<real> y_valid(sp.valid.size());
    for (std::size_t r = 0; r < sp.valid.size(); ++r) {
        t_valid[r] = ds.treatment[sp.valid[r]];
        y_valid[r] = ds.y_factual[sp.valid[r]];
    }

    const std::size_t nb = (sp.train.size() + cfg.batch - 1) / cfg.batch;
    TrainResult res;
    TensorMap best;
    real best_val = std::numeric_limits<real>::infinity();
    std::size_t best_epoch = 0, stall = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(treated);
        rng.shuffle(control);
        const bool warm = epoch <= cfg.warmup;
        const bool adversarial = critic_enabled && !warm;
        real acc_reco = 0, acc_p = 0, acc_w = 0;

        for (std::size_t b = 0; b < nb; ++b) {
            // Contiguous per-arm slices keep batch sizes near cfg.batch while
            // covering every train unit once per epoch; short sides are
            // topped up by resampling so both group means exist.
            std::vector<std::size_t> rows;
            const std::size_t t0 = treated.size() * b / nb, t1 = treated.size() * (b + 1) / nb;
            const std::size_t c0 = control.size() * b / nb, c1 = control.size() * (b + 1) / nb;
            for (std::size_t r = t0; r < t1; ++r) rows.push_back(treated[r]);
            while (rows.size() < std::max<std::size_t>(2, t1 - t0))
                rows.push_back(treated[rng.index(treated.size())]);
            const std::size_t n_treated = rows.size();
            for (std::size_t r = c0; r < c1; ++r) rows.push_back(control[r]);
            while (rows.size() - n_treated < std::max<std::size_t>(2, c1 - c0))
                rows.push_back(control[rng.index(control.size())]);

            const std::size_t m = rows.size();
            Tensor xb = gather_x(ds.covariates, rows);
            std::vector<int> tb(m);
            std::vector<real> yb(m);
            std::vector<std::size_t> pos_t, pos_c;
            for (std::size_t r = 0; r < m; ++r) {
                tb[r] = ds.treatment[rows[r]];
                yb[r] = y_scaled[rows[r]];
                (tb[r] == 1 ? pos_t : pos_c).push_back(r);
            }

            try {
                if (adversarial) {
                    Tensor z_fixed;
                    {
                        Tape tz(false);
                        z_fixed = tz.val(model.embed(tz, xb));
                    }
                    for (std::size_t k = 0; k < cfg.n_critic; ++k) {
                        Tape tc;
                        Tape::Id s = critic_score(tc, tc.input(z_fixed), model.critic);
                        Tape::Id loss = critic_loss(tc, tc.gather_rows(s, pos_t),
                                                    tc.gather_rows(s, pos_c));
                        critic_opt.zero_grad();
                        tc.backward(loss);
                        critic_opt.step();
                        clip_weights(model.critic);
                    }
                }

                Tape t;
                Tape::Id z = model.embed(t, xb);
                Tape::Id x_hat = reconstruct(t, z, model.decoder);
                Tape::Id l_reco = reco_loss(t, x_hat, model.scale_x(xb));
                auto [y0, y1] = predict_potential(t, z, model.heads);
                Tape::Id l_p = factual_loss(t, y0, y1, tb, yb);

                Tape::Id total = -1;
                auto add_term = [&](Tape::Id term, real w) {
                    if (w <= 0) return;
                    Tape::Id scaled = t.scale(term, w);
                    total = total < 0 ? scaled : t.add(total, scaled);
                };
                add_term(l_reco, cfg.alpha);
                if (!warm) {
                    if (adversarial) {
                        Tape::Id s = critic_score(t, z, model.critic);
                        Tape::Id l_adv = generator_balance_loss(t, t.gather_rows(s, pos_t),
                                                                t.gather_rows(s, pos_c),
                                                                cfg.adv_flow);
                        acc_w += t.val(l_adv)[0];
                        add_term(l_adv, cfg.beta);
                    }
                    add_term(l_p, cfg.gamma);
                }
                acc_reco += t.val(l_reco)[0];
                acc_p += t.val(l_p)[0];

                if (total >= 0) {
                    if (!std::isfinite(t.val(total)[0]))
                        throw NumericError("non-finite training loss");
                    zero_grads(model.all_params());
                    t.backward(total);
                    gen_opt.step();
                }
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b) + ")");
            }
        }

        TrainTrace::Row row;
        row.epoch = epoch;
        row.l_reco = acc_reco / static_cast<real>(nb);
        row.l_p = acc_p / static_cast<real>(nb);
        row.wass = acc_w / static_cast<real>(nb);

        Tensor z_train = model.embed_inference(x_train);
        Tensor z_t, z_c;
        split_by_arm(z_train, ds, sp.train, z_t, z_c);
        row.group_kl = (z_t.rows() >= 2 && z_c.rows() >= 2) ? group_kl(z_t, z_c) : real(0);

        std::vector<real> v0, v1;
        predict_from_embedding(model, model.embed_inference(x_valid), v0, v1);
        row.val_mse = factual_mse_value(v0, v1, t_valid, y_valid);
        res.trace.rows.push_back(row);

        if (row.val_mse < best_val) {
            best_val = row.val_mse;
            best_epoch = epoch;
            best = model.to_tensors();
            stall = 0;
        } else if (++stall >= cfg.patience) {
            break;
        }
    }

    model.load_params(best);
    res.model = std::move(model);
    res.best_val_mse = best_val;
    res.best_epoch = best_epoch;
    return res;
}

EvalReport evaluate(Model& model, const Dataset& ds, const std::vector<std::size_t>& rows,
                    const std::string& split_name) {
    if (rows.empty()) throw SizingError("evaluate: empty split '" + split_name + "'");
    EvalReport rep;
    rep.split = split_name;

    const Tensor x = gather_x(ds.covariates, rows);
    const std::size_t m = rows.size();
    std::vector<int> tb(m);
    std::vector<real> yb(m);
    for (std::size_t r = 0; r < m; ++r) {
        tb[r] = ds.treatment[rows[r]];
        yb[r] = ds.y_factual[rows[r]];
    }

    Tensor z = model.embed_inference(x);
    std::vector<real> y0, y1;
    predict_from_embedding(model, z, y0, y1);
    rep.factual_mse = factual_mse_value(y0, y1, tb, yb);

    if (ds.has_ground_truth()) {
        const std::vector<real> all_ite = ite_true(ds);
        std::vector<real> truth(m), pred(m);
        real ate_p = 0, ate_t = 0;
        for (std::size_t r = 0; r < m; ++r) {
            truth[r] = all_ite[rows[r]];
            pred[r] = y1[r] - y0[r];
            ate_p += pred[r];
            ate_t += truth[r];
        }
        ate_p /= static_cast<real>(m);
        ate_t /= static_cast<real>(m);
        rep.sqrt_pehe = sqrt_pehe(pred, truth);
        rep.ate_pred = ate_p;
        rep.ate_error = std::fabs(ate_p - ate_t);
    }

    rep.policy_risk = policy_risk(y0, y1, tb, minmax_scale(yb), 0, &rep.warnings);

    Tensor z_t, z_c;
    split_by_arm(z, ds, rows, z_t, z_c);
    if (z_t.rows() >= 2 && z_c.rows() >= 2) {
        rep.group_kl_tc = group_kl(z_t, z_c);
        rep.group_kl_ct = group_kl(z_c, z_t);
    } else {
        rep.warnings.push_back("group KL skipped: an arm has fewer than 2 units in '" +
                               split_name + "'");
    }
    return rep;
}

std::array<AblationRun, 3> ablate(const Dataset& ds, const SplitIndices& sp,
                                  const TrainConfig& cfg) {
    const Ablation kinds[3] = {Ablation::Full, Ablation::NoTransformer,
                               Ablation::NoDiscriminator};
    std::array<AblationRun, 3> out;
    for (int i = 0; i < 3; ++i) {
        TrainConfig c = cfg;
        c.ablation = kinds[i];
        TrainResult r = train(ds, sp, c);
        out[i].name = ablation_name(kinds[i]);
        out[i].in_sample = evaluate(r.model, ds, sp.train, "in-sample");
        out[i].out_sample = evaluate(r.model, ds, sp.test, "out-sample");
        out[i].in_sample.config = c.snapshot();
        out[i].out_sample.config = c.snapshot();
        out[i].trace = std::move(r.trace);
    }
    return out;
}

} // namespace cet
