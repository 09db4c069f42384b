#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cet/baselines.hpp"
#include "cet/checkpoint.hpp"
#include "cet/dataset.hpp"
#include "cet/errors.hpp"
#include "cet/manifest.hpp"
#include "cet/metrics.hpp"
#include "cet/model.hpp"
#include "cet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cet;

namespace {

// ---------------------------------------------------------------- utilities

void write_text(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << content;
    if (!f) throw IoError("write failed: " + path);
}

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_pm(double mean, double sd) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4g ± %.4g", mean, sd);
    return buf;
}

json report_json(const EvalReport& r) { return json::parse(r.to_json()); }

// --------------------------------------------------------------- split opts

struct SplitOpts {
    double train_pct = 61, valid_pct = 27, test_pct = 10;
    std::uint64_t seed = 0;
};

void add_split_flags(CLI::App* cmd, SplitOpts& s) {
    cmd->add_option("--train-pct", s.train_pct, "train split percentage")->capture_default_str();
    cmd->add_option("--valid-pct", s.valid_pct, "validation split percentage")
        ->capture_default_str();
    cmd->add_option("--test-pct", s.test_pct, "test split percentage")->capture_default_str();
    cmd->add_option("--split-seed", s.seed, "split shuffle seed")->capture_default_str();
}

void append_split_config(std::vector<std::pair<std::string, std::string>>& cfg,
                         const SplitOpts& s) {
    cfg.emplace_back("train_pct", fmt_real(s.train_pct));
    cfg.emplace_back("valid_pct", fmt_real(s.valid_pct));
    cfg.emplace_back("test_pct", fmt_real(s.test_pct));
    cfg.emplace_back("split_seed", std::to_string(s.seed));
}

// --------------------------------------------------------------- train opts

struct TrainOpts {
    TrainConfig cfg;
    std::string ablation = "full";
    std::string adv_flow = "both";
    std::string pooling = "mean";
    std::size_t d_k = 0;   // 0 -> d_model / n_heads
    bool raw_x = false;
    bool raw_y = false;

    TrainConfig resolve() const {
        TrainConfig out = cfg;
        out.ablation = ablation_from_name(ablation);
        out.adv_flow = adv_flow_from_name(adv_flow);
        if (pooling == "mean")
            out.encoder.pooling = Pooling::Mean;
        else if (pooling == "cls")
            out.encoder.pooling = Pooling::ClsToken;
        else
            throw ConfigError("unknown pooling \"" + pooling + "\" (use mean or cls)");
        out.encoder.d_k = d_k ? d_k : out.encoder.d_model / out.encoder.n_heads;
        out.standardize_x = !raw_x;
        out.standardize_y = !raw_y;
        out.validate();
        return out;
    }
};

void add_train_flags(CLI::App* cmd, TrainOpts& o) {
    cmd->add_option("--alpha", o.cfg.alpha, "reconstruction loss weight")->capture_default_str();
    cmd->add_option("--beta", o.cfg.beta, "adversarial loss weight")->capture_default_str();
    cmd->add_option("--gamma", o.cfg.gamma, "outcome loss weight")->capture_default_str();
    cmd->add_option("--epochs", o.cfg.epochs, "training epochs")->capture_default_str();
    cmd->add_option("--batch", o.cfg.batch, "minibatch size")->capture_default_str();
    cmd->add_option("--lr", o.cfg.lr, "learning rate for encoder/decoder/heads")
        ->capture_default_str();
    cmd->add_option("--critic-lr", o.cfg.critic_lr, "critic learning rate")
        ->capture_default_str();
    cmd->add_option("--n-critic", o.cfg.n_critic, "critic steps per joint step")
        ->capture_default_str();
    cmd->add_option("--clip", o.cfg.clip, "critic weight clip bound")->capture_default_str();
    cmd->add_option("--patience", o.cfg.patience, "early-stop patience (epochs)")
        ->capture_default_str();
    cmd->add_option("--warmup", o.cfg.warmup, "reconstruction-only epochs")
        ->capture_default_str();
    cmd->add_option("--ablation", o.ablation, "full | no_transformer | no_discriminator")
        ->capture_default_str();
    cmd->add_option("--adv-flow", o.adv_flow, "adversarial gradient flow: both | control_only")
        ->capture_default_str();
    cmd->add_option("--blocks", o.cfg.encoder.n_blocks, "encoder blocks")->capture_default_str();
    cmd->add_option("--heads", o.cfg.encoder.n_heads, "attention heads")->capture_default_str();
    cmd->add_option("--d-model", o.cfg.encoder.d_model, "embedding width")
        ->capture_default_str();
    cmd->add_option("--d-k", o.d_k, "per-head key width (default d_model/heads)");
    cmd->add_option("--d-ff", o.cfg.encoder.d_ff, "feed-forward width")->capture_default_str();
    cmd->add_option("--pooling", o.pooling, "token pooling: mean | cls")->capture_default_str();
    cmd->add_option("--critic-hidden", o.cfg.critic_hidden, "critic hidden width")
        ->capture_default_str();
    cmd->add_flag("--raw-x", o.raw_x, "skip covariate standardization");
    cmd->add_flag("--raw-y", o.raw_y, "skip outcome standardization");
}

std::vector<std::uint64_t> resolve_seeds(std::uint64_t seed,
                                         const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) return {seed};
    return seeds;
}

// ------------------------------------------------------------ shared pieces

const char* split_of(std::size_t i, const SplitIndices& sp) {
    for (std::size_t j : sp.train)
        if (j == i) return "train";
    for (std::size_t j : sp.valid)
        if (j == i) return "valid";
    for (std::size_t j : sp.test)
        if (j == i) return "test";
    return "-";
}

void write_predictions_csv(const std::string& path, Model& model, const Dataset& ds,
                           const SplitIndices& sp) {
    auto [y0, y1] = model.predict(ds.covariates);
    std::string out = "id,split,t,yf,y0_hat,y1_hat,ite_hat\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += split_of(i, sp);
        out += ',';
        out += std::to_string(ds.treatment[i]);
        out += ',';
        out += fmt_real(ds.y_factual[i]);
        out += ',';
        out += fmt_real(y0[i]);
        out += ',';
        out += fmt_real(y1[i]);
        out += ',';
        out += fmt_real(y1[i] - y0[i]);
        out += '\n';
    }
    write_text(path, out);
}

void write_embeddings_csv(const std::string& path, Model& model, const Dataset& ds,
                          const SplitIndices& sp) {
    Tensor e = model.embed_inference(ds.covariates);
    std::string out = "id,split,t";
    for (std::size_t j = 0; j < e.cols(); ++j) out += ",e" + std::to_string(j);
    out += '\n';
    for (std::size_t i = 0; i < ds.n(); ++i) {
        out += std::to_string(i);
        out += ',';
        out += split_of(i, sp);
        out += ',';
        out += std::to_string(ds.treatment[i]);
        for (std::size_t j = 0; j < e.cols(); ++j) {
            out += ',';
            out += fmt_real(e.at(i, j));
        }
        out += '\n';
    }
    write_text(path, out);
}

// Mean/sd aggregation of a metric across runs, keyed by (split, metric).
json aggregate_rows(const std::vector<json>& all_rows) {
    std::map<std::string, std::map<std::string, std::vector<double>>> series;
    for (const json& row : all_rows) {
        const std::string split = row.value("split", "?");
        for (const char* metric : {"sqrt_pehe", "ate_error", "ate_pred", "policy_risk",
                                   "factual_mse", "group_kl_tc", "group_kl_ct"})
            if (row.contains(metric) && row[metric].is_number())
                series[split][metric].push_back(double(row[metric]));
    }
    json agg = json::object();
    for (const auto& [split, metrics] : series) {
        json node = json::object();
        for (const auto& [metric, vals] : metrics) {
            double mean = 0;
            for (double v : vals) mean += v;
            mean /= double(vals.size());
            double var = 0;
            for (double v : vals) var += (v - mean) * (v - mean);
            const double sd = vals.size() > 1 ? std::sqrt(var / double(vals.size() - 1)) : 0;
            node[metric] = {{"mean", mean}, {"sd", sd}, {"text", fmt_pm(mean, sd)},
                            {"n", vals.size()}};
        }
        agg[split] = node;
    }
    return agg;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::vector<std::string>& argv,
                    std::vector<std::pair<std::string, std::string>> config,
                    const std::vector<std::uint64_t>& seeds,
                    const std::vector<std::string>& inputs,
                    std::vector<std::string> outputs) {
    RunManifest m;
    m.command = command;
    m.argv = argv;
    m.config = std::move(config);
    m.seeds = seeds;
    m.inputs = inputs;
    std::sort(outputs.begin(), outputs.end());
    m.outputs = std::move(outputs);
    m.input_hash = hash_files_hex(inputs);
    m.write(dir + "/manifest.json");
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
    SynthConfig cfg;
    std::string effect = "constant";
    std::string out;
};

void run_synth(const SynthArgs& a, const std::vector<std::string>& argv) {
    SynthConfig cfg = a.cfg;
    cfg.effect_fn = effect_fn_from_name(a.effect);
    fs::create_directories(a.out);
    Dataset ds = generate_synthetic(cfg);
    const std::string csv_path = a.out + "/data.csv";
    save_csv(csv_path, ds);

    for (const std::string& w : overlap_check(ds))
        std::fprintf(stderr, "warning: %s\n", w.c_str());

    std::vector<std::pair<std::string, std::string>> config = {
        {"n", std::to_string(cfg.n)},
        {"d", std::to_string(cfg.d)},
        {"bias_strength", fmt_real(cfg.bias_strength)},
        {"effect", a.effect},
        {"tau", fmt_real(cfg.tau)},
        {"noise_sd", fmt_real(cfg.noise_sd)},
    };
    write_manifest(a.out, "synth", argv, config, {cfg.seed}, {}, {csv_path});
    std::printf("wrote %s (%zu rows, %zu features)\n", csv_path.c_str(), ds.n(), ds.d());
}

// ------------------------------------------------------------------- train

struct TrainArgs {
    std::string data;
    std::string out;
    TrainOpts opts;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;
    SplitOpts split;
};

TensorMap checkpoint_with_split(Model& model, const SplitOpts& s, std::uint64_t seed) {
    TensorMap map = model.to_tensors();
    map.emplace("meta.split.train_pct", Tensor::scalar(real(s.train_pct)));
    map.emplace("meta.split.valid_pct", Tensor::scalar(real(s.valid_pct)));
    map.emplace("meta.split.test_pct", Tensor::scalar(real(s.test_pct)));
    map.emplace("meta.split.seed", Tensor::scalar(real(s.seed)));
    map.emplace("meta.train_seed", Tensor::scalar(real(seed)));
    return map;
}

void run_train(const TrainArgs& a, const std::vector<std::string>& argv) {
    Dataset ds = load_csv(a.data);
    SplitIndices sp = split(ds, a.split.train_pct, a.split.valid_pct, a.split.test_pct,
                            a.split.seed);
    const std::vector<std::uint64_t> seeds = resolve_seeds(a.seed, a.seeds);
    fs::create_directories(a.out);

    std::vector<std::string> outputs;
    std::vector<json> all_rows;
    // independent runs, executed in seed order so outputs merge deterministically
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = a.opts.resolve();
        cfg.seed = seed;
        const std::string dir = seeds.size() == 1 ? a.out : a.out + "/seed" + std::to_string(seed);
        fs::create_directories(dir);

        TrainResult res = train(ds, sp, cfg);
        save_checkpoint(dir + "/checkpoint.txt", checkpoint_with_split(res.model, a.split, seed));
        write_text(dir + "/trace.csv", res.trace.to_csv());
        write_predictions_csv(dir + "/predictions.csv", res.model, ds, sp);
        write_embeddings_csv(dir + "/embeddings.csv", res.model, ds, sp);

        EvalReport in_s = evaluate(res.model, ds, sp.train, "in-sample");
        EvalReport out_s = evaluate(res.model, ds, sp.test, "out-sample");
        EvalReport val = evaluate(res.model, ds, sp.valid, "valid");
        json rows = json::array();
        for (const EvalReport* r : {&in_s, &out_s, &val}) {
            json row = report_json(*r);
            row["seed"] = seed;
            row["best_epoch"] = res.best_epoch;
            rows.push_back(row);
            all_rows.push_back(row);
        }
        json rep = {{"command", "train"}, {"rows", rows}};
        write_text(dir + "/report.json", rep.dump(2) + "\n");

        for (const char* f : {"/checkpoint.txt", "/trace.csv", "/predictions.csv",
                              "/embeddings.csv", "/report.json"})
            outputs.push_back(dir + f);
        std::printf("seed %llu: best epoch %zu, validation mse %.6g\n",
                    static_cast<unsigned long long>(seed), res.best_epoch,
                    double(res.best_val_mse));
    }

    if (seeds.size() > 1) {
        json rep = {{"command", "train"},
                    {"rows", all_rows},
                    {"aggregate", aggregate_rows(all_rows)}};
        write_text(a.out + "/report.json", rep.dump(2) + "\n");
        outputs.push_back(a.out + "/report.json");
    }

    auto config = a.opts.resolve().snapshot();
    append_split_config(config, a.split);
    write_manifest(a.out, "train", argv, config, seeds, {a.data}, outputs);
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
    std::string data;
    std::string out;
    std::vector<std::string> checkpoints;
    bool oracle = false;
    bool with_baselines = false;
    double lambda = 0;
    SplitOpts split;
    bool split_given = false;
};

EvalReport metric_only_report(const std::string& name, const std::string& split_name,
                              const Dataset& ds, const std::vector<std::size_t>& rows,
                              const std::vector<real>& ite_pred_all, real lambda) {
    EvalReport rep;
    rep.split = split_name;
    rep.config.emplace_back("model", name);

    std::vector<real> pred, yb;
    std::vector<int> tb;
    for (std::size_t i : rows) {
        pred.push_back(ite_pred_all[i]);
        yb.push_back(ds.y_factual[i]);
        tb.push_back(ds.treatment[i]);
    }
    if (ds.has_ground_truth()) {
        std::vector<real> truth_all = ite_true(ds), truth;
        for (std::size_t i : rows) truth.push_back(truth_all[i]);
        rep.sqrt_pehe = sqrt_pehe(pred, truth);
        real mt = 0, mp = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            mt += truth[i];
            mp += pred[i];
        }
        mt /= real(pred.size());
        mp /= real(pred.size());
        rep.ate_pred = mp;
        rep.ate_error = std::fabs(mp - mt);
    }
    std::vector<real> zeros(pred.size(), 0);
    rep.policy_risk = policy_risk(zeros, pred, tb, minmax_scale(yb), lambda, &rep.warnings);
    rep.factual_mse = 0;
    rep.warnings.push_back("no embedding space for this predictor; group_kl omitted");
    return rep;
}

void run_eval(const EvalArgs& a, const std::vector<std::string>& argv) {
    if (a.checkpoints.empty() && !a.oracle)
        throw ConfigError("eval needs --checkpoint (or --oracle)");
    Dataset ds = load_csv(a.data);
    fs::create_directories(a.out);

    // split defaults come from the first checkpoint's stored settings
    SplitOpts so = a.split;
    std::vector<TensorMap> maps;
    for (const std::string& c : a.checkpoints) maps.push_back(load_checkpoint(c));
    if (!a.split_given && !maps.empty() && maps[0].count("meta.split.train_pct")) {
        so.train_pct = double(maps[0].at("meta.split.train_pct")[0]);
        so.valid_pct = double(maps[0].at("meta.split.valid_pct")[0]);
        so.test_pct = double(maps[0].at("meta.split.test_pct")[0]);
        so.seed = static_cast<std::uint64_t>(maps[0].at("meta.split.seed")[0]);
    }
    SplitIndices sp = split(ds, so.train_pct, so.valid_pct, so.test_pct, so.seed);

    std::vector<json> all_rows;
    std::vector<std::string> outputs;
    std::size_t idx = 0;
    for (TensorMap& map : maps) {
        Model model = Model::from_tensors(map);
        EvalReport in_s = evaluate(model, ds, sp.train, "in-sample");
        EvalReport out_s = evaluate(model, ds, sp.test, "out-sample");
        for (const EvalReport* r : {&in_s, &out_s}) {
            json row = report_json(*r);
            row["checkpoint"] = a.checkpoints[idx];
            all_rows.push_back(row);
        }
        if (maps.size() == 1) {
            write_predictions_csv(a.out + "/predictions.csv", model, ds, sp);
            outputs.push_back(a.out + "/predictions.csv");
        }
        ++idx;
    }

    if (a.oracle) {
        if (!ds.has_ground_truth())
            throw ValidationError("--oracle needs mu0/mu1 or ycf columns");
        std::vector<real> truth = ite_true(ds);
        for (auto [rows, name] : {std::pair<const std::vector<std::size_t>*, const char*>{
                                      &sp.train, "in-sample"},
                                  {&sp.test, "out-sample"}}) {
            EvalReport rep =
                metric_only_report("oracle", name, ds, *rows, truth, real(a.lambda));
            json row = report_json(rep);
            row["model"] = "oracle";
            all_rows.push_back(row);
        }
    }

    if (a.with_baselines) {
        struct Base {
            const char* name;
            std::vector<real> pred;
        };
        std::vector<std::string> bwarn;
        std::vector<Base> bases;
        bases.push_back({"ols_lr1", ols_lr1(ds, sp, &bwarn)});
        bases.push_back({"ols_lr2", ols_lr2(ds, sp, &bwarn)});
        bases.push_back({"knn", knn_ite(ds, sp, 5, &bwarn)});
        for (const std::string& w : bwarn) std::fprintf(stderr, "warning: %s\n", w.c_str());
        for (const Base& b : bases)
            for (auto [rows, name] : {std::pair<const std::vector<std::size_t>*, const char*>{
                                          &sp.train, "in-sample"},
                                      {&sp.test, "out-sample"}}) {
                EvalReport rep =
                    metric_only_report(b.name, name, ds, *rows, b.pred, real(a.lambda));
                json row = report_json(rep);
                row["model"] = b.name;
                all_rows.push_back(row);
            }
    }

    json rep = {{"command", "eval"}, {"rows", all_rows}};
    if (maps.size() > 1) {
        std::vector<json> model_rows;
        for (const json& r : all_rows)
            if (r.contains("checkpoint")) model_rows.push_back(r);
        rep["aggregate"] = aggregate_rows(model_rows);
    }
    write_text(a.out + "/report.json", rep.dump(2) + "\n");
    outputs.push_back(a.out + "/report.json");

    std::vector<std::pair<std::string, std::string>> config;
    append_split_config(config, so);
    config.emplace_back("lambda", fmt_real(a.lambda));
    config.emplace_back("oracle", a.oracle ? "true" : "false");
    config.emplace_back("with_baselines", a.with_baselines ? "true" : "false");
    std::vector<std::string> inputs = a.checkpoints;
    inputs.insert(inputs.begin(), a.data);
    write_manifest(a.out, "eval", argv, config, {}, inputs, outputs);
    std::printf("wrote %s/report.json (%zu rows)\n", a.out.c_str(), all_rows.size());
}

// ------------------------------------------------------------------ ablate

struct AblateArgs {
    std::string data;
    std::string out;
    TrainOpts opts;
    std::uint64_t seed = 0;
    std::vector<std::uint64_t> seeds;
    SplitOpts split;
};

void run_ablate(const AblateArgs& a, const std::vector<std::string>& argv) {
    Dataset ds = load_csv(a.data);
    SplitIndices sp = split(ds, a.split.train_pct, a.split.valid_pct, a.split.test_pct,
                            a.split.seed);
    const std::vector<std::uint64_t> seeds = resolve_seeds(a.seed, a.seeds);
    fs::create_directories(a.out);

    std::vector<std::string> outputs;
    std::vector<json> all_rows;
    std::string table = "variant,seed,split,sqrt_pehe,ate_error,policy_risk,factual_mse,"
                        "group_kl_tc\n";
    for (std::uint64_t seed : seeds) {
        TrainConfig cfg = a.opts.resolve();
        cfg.seed = seed;
        auto runs = ablate(ds, sp, cfg);
        for (const AblationRun& run : runs) {
            const std::string dir =
                (seeds.size() == 1 ? a.out : a.out + "/seed" + std::to_string(seed)) + "/" +
                run.name;
            fs::create_directories(dir);
            write_text(dir + "/trace.csv", run.trace.to_csv());
            json rows = json::array();
            for (const EvalReport* r : {&run.in_sample, &run.out_sample}) {
                json row = report_json(*r);
                row["variant"] = run.name;
                row["seed"] = seed;
                rows.push_back(row);
                all_rows.push_back(row);
                table += run.name;
                table += ',' + std::to_string(seed);
                table += ',' + r->split;
                table += ',' + (r->sqrt_pehe ? fmt_real(*r->sqrt_pehe) : std::string("nan"));
                table += ',' + (r->ate_error ? fmt_real(*r->ate_error) : std::string("nan"));
                table += ',' + fmt_real(r->policy_risk);
                table += ',' + fmt_real(r->factual_mse);
                table += ',' + fmt_real(r->group_kl_tc);
                table += '\n';
            }
            json rep = {{"command", "ablate"}, {"rows", rows}};
            write_text(dir + "/report.json", rep.dump(2) + "\n");
            outputs.push_back(dir + "/trace.csv");
            outputs.push_back(dir + "/report.json");
            std::printf("seed %llu %s: out-of-sample pehe %s\n",
                        static_cast<unsigned long long>(seed), run.name.c_str(),
                        run.out_sample.sqrt_pehe ? fmt_real(*run.out_sample.sqrt_pehe).c_str()
                                                 : "n/a");
        }
    }
    write_text(a.out + "/ablation.csv", table);
    json rep = {{"command", "ablate"}, {"rows", all_rows},
                {"aggregate", aggregate_rows(all_rows)}};
    write_text(a.out + "/report.json", rep.dump(2) + "\n");
    outputs.push_back(a.out + "/ablation.csv");
    outputs.push_back(a.out + "/report.json");

    auto config = a.opts.resolve().snapshot();
    append_split_config(config, a.split);
    write_manifest(a.out, "ablate", argv, config, seeds, {a.data}, outputs);
}

// ------------------------------------------------------------------ report

struct ReportArgs {
    std::vector<std::string> runs;
    std::string out;
};

void run_report(const ReportArgs& a, const std::vector<std::string>& argv) {
    fs::create_directories(a.out);

    // metric table: one column per run, one row per (split, metric)
    std::map<std::string, std::map<std::string, std::string>> cells;   // row -> run -> text
    std::vector<std::string> run_names;
    std::string kl = "run,epoch,group_kl\n";

    std::string provenance = "\n## runs\n\n";
    for (const std::string& run_dir : a.runs) {
        const std::string man_path = run_dir + "/manifest.json";
        std::ifstream mf(man_path, std::ios::binary);
        if (!mf) throw IoError("cannot open " + man_path);
        json man = json::parse(mf);
        const std::string rep_path = run_dir + "/report.json";
        std::ifstream f(rep_path, std::ios::binary);
        if (!f) throw IoError("cannot open " + rep_path);
        json rep = json::parse(f);
        const std::string name = fs::path(run_dir).filename().string();
        run_names.push_back(name);
        provenance += "- **" + name + "**: `" + man.value("command", "?") + "`, input hash `" +
                      man.value("input_hash", "?") + "`\n";
        for (const json& row : rep["rows"]) {
            std::string prefix = row.value("split", "?");
            if (row.contains("variant")) prefix = row["variant"].get<std::string>() + " " + prefix;
            if (row.contains("seed"))
                prefix += " seed" + std::to_string(std::uint64_t(row["seed"]));
            for (const char* metric : {"sqrt_pehe", "ate_error", "policy_risk", "factual_mse",
                                       "group_kl_tc"})
                if (row.contains(metric) && row[metric].is_number()) {
                    char buf[48];
                    std::snprintf(buf, sizeof buf, "%.4g", double(row[metric]));
                    cells[prefix + " " + metric][name] = buf;
                }
        }

        // collect KL series from any trace files below the run directory
        std::vector<fs::path> traces;
        for (const auto& entry : fs::recursive_directory_iterator(run_dir))
            if (entry.is_regular_file() && entry.path().filename() == "trace.csv")
                traces.push_back(entry.path());
        std::sort(traces.begin(), traces.end());
        for (const fs::path& tp : traces) {
            std::ifstream tf(tp);
            std::string line;
            std::getline(tf, line);   // header
            std::string label = name;
            const std::string rel = fs::relative(tp.parent_path(), run_dir).string();
            if (rel != ".") label += "/" + rel;
            while (std::getline(tf, line)) {
                if (line.empty()) continue;
                // epoch,l_reco,l_p,wass,group_kl,val_mse -> keep cols 0 and 4
                std::vector<std::string> cols;
                std::size_t start = 0;
                for (std::size_t c = line.find(','); ; c = line.find(',', start)) {
                    cols.push_back(line.substr(start, c - start));
                    if (c == std::string::npos) break;
                    start = c + 1;
                }
                if (cols.size() == 6) kl += label + ',' + cols[0] + ',' + cols[4] + '\n';
            }
        }
    }

    std::string md = "# run comparison\n\n|  |";
    for (const std::string& r : run_names) md += " " + r + " |";
    md += "\n|---|";
    for (std::size_t i = 0; i < run_names.size(); ++i) md += "---|";
    md += "\n";
    for (const auto& [rowname, byrun] : cells) {
        md += "| " + rowname + " |";
        for (const std::string& r : run_names) {
            auto it = byrun.find(r);
            md += " " + (it == byrun.end() ? std::string("-") : it->second) + " |";
        }
        md += "\n";
    }
    md += provenance;
    write_text(a.out + "/summary.md", md);
    write_text(a.out + "/kl_trace.csv", kl);

    std::vector<std::string> inputs;
    for (const std::string& r : a.runs) {
        inputs.push_back(r + "/manifest.json");
        inputs.push_back(r + "/report.json");
    }
    write_manifest(a.out, "report", argv, {}, {}, inputs,
                   {a.out + "/summary.md", a.out + "/kl_trace.csv"});
    std::printf("wrote %s/summary.md and kl_trace.csv\n", a.out.c_str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"treatment effect estimation with a transformer encoder"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an ini file");

    std::vector<std::string> raw_argv(argv, argv + argc);

    SynthArgs synth_args;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--n", synth_args.cfg.n, "units")->capture_default_str();
    synth_cmd->add_option("--d", synth_args.cfg.d, "covariates")->capture_default_str();
    synth_cmd->add_option("--bias", synth_args.cfg.bias_strength, "selection-bias strength")
        ->capture_default_str();
    synth_cmd->add_option("--effect", synth_args.effect, "constant | linear | nonlinear")
        ->capture_default_str();
    synth_cmd->add_option("--tau", synth_args.cfg.tau, "effect size / scale")
        ->capture_default_str();
    synth_cmd->add_option("--noise", synth_args.cfg.noise_sd, "outcome noise sd")
        ->capture_default_str();
    synth_cmd->add_option("--seed", synth_args.cfg.seed, "generator seed")
        ->capture_default_str();
    synth_cmd->add_option("--out", synth_args.out, "output directory")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset CSV");
    train_cmd->add_option("--data", train_args.data, "dataset CSV")->required();
    train_cmd->add_option("--out", train_args.out, "output directory")->required();
    train_cmd->add_option("--seed", train_args.seed, "training seed")->capture_default_str();
    train_cmd->add_option("--seeds", train_args.seeds, "comma-separated seed list")
        ->delimiter(',');
    add_train_flags(train_cmd, train_args.opts);
    add_split_flags(train_cmd, train_args.split);

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints / baselines");
    eval_cmd->add_option("--data", eval_args.data, "dataset CSV")->required();
    eval_cmd->add_option("--out", eval_args.out, "output directory")->required();
    eval_cmd->add_option("--checkpoint", eval_args.checkpoints, "checkpoint file (repeatable)");
    eval_cmd->add_flag("--oracle", eval_args.oracle, "score true effects as predictions");
    eval_cmd->add_flag("--with-baselines", eval_args.with_baselines,
                       "include regression and matching baselines");
    eval_cmd->add_option("--lambda", eval_args.lambda, "policy threshold")
        ->capture_default_str();
    add_split_flags(eval_cmd, eval_args.split);

    AblateArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "train all three model variants");
    ablate_cmd->add_option("--data", ablate_args.data, "dataset CSV")->required();
    ablate_cmd->add_option("--out", ablate_args.out, "output directory")->required();
    ablate_cmd->add_option("--seed", ablate_args.seed, "training seed")->capture_default_str();
    ablate_cmd->add_option("--seeds", ablate_args.seeds, "comma-separated seed list")
        ->delimiter(',');
    add_train_flags(ablate_cmd, ablate_args.opts);
    add_split_flags(ablate_cmd, ablate_args.split);

    ReportArgs report_args;
    auto* report_cmd = app.add_subcommand("report", "aggregate finished runs");
    report_cmd->add_option("--runs", report_args.runs, "run directories")
        ->required()
        ->delimiter(',');
    report_cmd->add_option("--out", report_args.out, "output directory")->required();

    try {
        app.parse(argc, argv);
        eval_args.split_given = eval_cmd->count("--train-pct") || eval_cmd->count("--valid-pct") ||
                                eval_cmd->count("--test-pct") || eval_cmd->count("--split-seed");

        if (synth_cmd->parsed()) run_synth(synth_args, raw_argv);
        if (train_cmd->parsed()) run_train(train_args, raw_argv);
        if (eval_cmd->parsed()) run_eval(eval_args, raw_argv);
        if (ablate_cmd->parsed()) run_ablate(ablate_args, raw_argv);
        if (report_cmd->parsed()) run_report(report_args, raw_argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
