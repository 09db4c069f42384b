// End-to-end checks that drive the installed binary through std::system.
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string cli_path() {
    if (const char* env = std::getenv("CET_CLI")) return env;
#ifdef CET_CLI_PATH
    return CET_CLI_PATH;
#else
    return "cet";
#endif
}

struct Cmd {
    int code;
    std::string out;
};

Cmd run_cli(const std::string& args) {
    static int counter = 0;
    const std::string log =
        (fs::temp_directory_path() / ("cet_cli_log" + std::to_string(counter++))).string();
    const std::string cmdline = "\"" + cli_path() + "\" " + args + " > " + log + " 2>&1";
    const int status = std::system(cmdline.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream f(log);
    std::stringstream ss;
    ss << f.rdbuf();
    fs::remove(log);
    return {code, ss.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE_MESSAGE(bool(f), "missing file: " << p.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("cet_cli_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
        const std::size_t c = line.find(',', start);
        cols.push_back(line.substr(start, c - start));
        if (c == std::string::npos) break;
        start = c + 1;
    }
    return cols;
}

// shared tiny dataset + short train flags so each case stays fast
std::string make_data(const fs::path& dir) {
    const std::string out = (dir / "data").string();
    Cmd r = run_cli("synth --n 120 --d 4 --bias 1 --effect linear --tau 2 --noise 0.3 --seed 3 "
                    "--out " + out);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    return out + "/data.csv";
}

const std::string kTinyTrain =
    " --epochs 6 --batch 32 --blocks 1 --heads 2 --d-model 16 --d-ff 32 ";

} // namespace

TEST_SUITE("cli") {

TEST_CASE("synth writes a deterministic csv with the full column set") {
    fs::path dir = fresh_dir("synth");
    const std::string flags = "synth --n 50 --d 10 --bias 3 --effect nonlinear --seed 7 --out ";
    Cmd a = run_cli(flags + (dir / "a").string());
    REQUIRE_MESSAGE(a.code == 0, a.out);

    const std::string csv = slurp(dir / "a" / "data.csv");
    auto rows = lines_of(csv);
    CHECK(rows.size() == 51);   // header + 50 units
    auto header = split_csv(rows[0]);
    REQUIRE(header.size() == 15);   // t, yf, ycf, mu0, mu1, x0..x9
    CHECK(header[0] == "t");
    CHECK(header[4] == "mu1");
    CHECK(header[14] == "x9");

    Cmd b = run_cli(flags + (dir / "b").string());
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "b" / "data.csv") == csv);

    Cmd c = run_cli("synth --n 50 --d 10 --bias 3 --effect nonlinear --seed 8 --out " +
                    (dir / "c").string());
    REQUIRE(c.code == 0);
    CHECK(slurp(dir / "c" / "data.csv") != csv);

    json man = json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(man["command"] == "synth");
    CHECK(man["seeds"][0] == 7);
    bool lists_csv = false;
    for (const auto& o : man["outputs"])
        if (o.get<std::string>().find("data.csv") != std::string::npos) lists_csv = true;
    CHECK(lists_csv);
}

TEST_CASE("synth rejects undersized requests with the config exit code") {
    fs::path dir = fresh_dir("synth_bad");
    Cmd r = run_cli("synth --n 2 --d 3 --out " + (dir / "x").string());
    CHECK(r.code == 2);
    CHECK(r.out.find("n must be at least") != std::string::npos);
}

TEST_CASE("train emits checkpoint, trace, report, predictions, and manifest") {
    fs::path dir = fresh_dir("train");
    const std::string data = make_data(dir);
    const std::string out = (dir / "run").string();
    Cmd r = run_cli("train --data " + data + " --out " + out + kTinyTrain + "--seed 5");
    REQUIRE_MESSAGE(r.code == 0, r.out);

    for (const char* f : {"checkpoint.txt", "trace.csv", "report.json", "predictions.csv",
                          "embeddings.csv", "manifest.json"})
        CHECK_MESSAGE(fs::exists(fs::path(out) / f), f);

    auto trace = lines_of(slurp(fs::path(out) / "trace.csv"));
    REQUIRE(!trace.empty());
    CHECK(trace[0] == "epoch,l_reco,l_p,wass,group_kl,val_mse");
    CHECK(trace.size() <= 1 + 6);

    json rep = json::parse(slurp(fs::path(out) / "report.json"));
    std::vector<std::string> splits;
    for (const auto& row : rep["rows"]) splits.push_back(row["split"]);
    CHECK(splits == std::vector<std::string>{"in-sample", "out-sample", "valid"});

    auto preds = lines_of(slurp(fs::path(out) / "predictions.csv"));
    CHECK(preds.size() == 121);
    CHECK(preds[0] == "id,split,t,yf,y0_hat,y1_hat,ite_hat");

    auto emb = lines_of(slurp(fs::path(out) / "embeddings.csv"));
    CHECK(emb.size() == 121);
    CHECK(split_csv(emb[0]).size() == 3 + 16);   // id, split, t, e0..e15
}

TEST_CASE("a repeated seed reproduces training outputs byte for byte") {
    fs::path dir = fresh_dir("train_det");
    const std::string data = make_data(dir);
    Cmd a = run_cli("train --data " + data + " --out " + (dir / "a").string() + kTinyTrain +
                    "--seed 9");
    Cmd b = run_cli("train --data " + data + " --out " + (dir / "b").string() + kTinyTrain +
                    "--seed 9");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
    CHECK(slurp(dir / "a" / "checkpoint.txt") == slurp(dir / "b" / "checkpoint.txt"));
    CHECK(slurp(dir / "a" / "predictions.csv") == slurp(dir / "b" / "predictions.csv"));

    Cmd c = run_cli("train --data " + data + " --out " + (dir / "c").string() + kTinyTrain +
                    "--seed 10");
    REQUIRE(c.code == 0);
    CHECK(slurp(dir / "c" / "trace.csv") != slurp(dir / "a" / "trace.csv"));
}

TEST_CASE("the no_discriminator ablation flag matches forcing beta to zero") {
    fs::path dir = fresh_dir("train_abl_eq");
    const std::string data = make_data(dir);
    Cmd a = run_cli("train --data " + data + " --out " + (dir / "a").string() + kTinyTrain +
                    "--seed 4 --ablation no_discriminator");
    Cmd b = run_cli("train --data " + data + " --out " + (dir / "b").string() + kTinyTrain +
                    "--seed 4 --beta 0");
    REQUIRE(a.code == 0);
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
}

TEST_CASE("eval scores an oracle at exactly zero pehe") {
    fs::path dir = fresh_dir("eval_oracle");
    const std::string data = make_data(dir);
    Cmd r = run_cli("eval --data " + data + " --oracle --out " + (dir / "ev").string());
    REQUIRE_MESSAGE(r.code == 0, r.out);
    json rep = json::parse(slurp(dir / "ev" / "report.json"));
    REQUIRE(rep["rows"].size() == 2);
    for (const auto& row : rep["rows"]) {
        CHECK(row["model"] == "oracle");
        CHECK(double(row["sqrt_pehe"]) == 0.0);
        CHECK(double(row["ate_error"]) == 0.0);
    }
}

TEST_CASE("eval defaults to the split stored in the checkpoint") {
    fs::path dir = fresh_dir("eval_split");
    const std::string data = make_data(dir);
    const std::string tr = (dir / "tr").string();
    Cmd t = run_cli("train --data " + data + " --out " + tr + kTinyTrain +
                    "--seed 2 --train-pct 50 --valid-pct 30 --test-pct 20 --split-seed 9");
    REQUIRE_MESSAGE(t.code == 0, t.out);

    Cmd implicit = run_cli("eval --data " + data + " --checkpoint " + tr +
                           "/checkpoint.txt --out " + (dir / "e1").string());
    Cmd explicit_ = run_cli("eval --data " + data + " --checkpoint " + tr +
                            "/checkpoint.txt --out " + (dir / "e2").string() +
                            " --train-pct 50 --valid-pct 30 --test-pct 20 --split-seed 9");
    REQUIRE(implicit.code == 0);
    REQUIRE(explicit_.code == 0);
    CHECK(slurp(dir / "e1" / "report.json") == slurp(dir / "e2" / "report.json"));

    // a different explicit split actually changes the result
    Cmd other = run_cli("eval --data " + data + " --checkpoint " + tr +
                        "/checkpoint.txt --out " + (dir / "e3").string() + " --split-seed 1");
    REQUIRE(other.code == 0);
    CHECK(slurp(dir / "e3" / "report.json") != slurp(dir / "e1" / "report.json"));
}

TEST_CASE("eval aggregates several checkpoints into mean and sd rows") {
    fs::path dir = fresh_dir("eval_multi");
    const std::string data = make_data(dir);
    const std::string tr = (dir / "tr").string();
    Cmd t = run_cli("train --data " + data + " --out " + tr + kTinyTrain + "--seeds 1,2");
    REQUIRE_MESSAGE(t.code == 0, t.out);
    REQUIRE(fs::exists(fs::path(tr) / "seed1" / "checkpoint.txt"));
    REQUIRE(fs::exists(fs::path(tr) / "seed2" / "checkpoint.txt"));

    // the multi-seed train itself aggregates
    json trep = json::parse(slurp(fs::path(tr) / "report.json"));
    REQUIRE(trep.contains("aggregate"));
    const std::string pm = trep["aggregate"]["out-sample"]["sqrt_pehe"]["text"];
    CHECK(pm.find("±") != std::string::npos);

    Cmd e = run_cli("eval --data " + data + " --checkpoint " + tr +
                    "/seed1/checkpoint.txt --checkpoint " + tr + "/seed2/checkpoint.txt --out " +
                    (dir / "ev").string());
    REQUIRE_MESSAGE(e.code == 0, e.out);
    json rep = json::parse(slurp(dir / "ev" / "report.json"));
    CHECK(rep["rows"].size() == 4);   // 2 checkpoints x 2 splits
    REQUIRE(rep.contains("aggregate"));
    CHECK(rep["aggregate"]["in-sample"]["sqrt_pehe"]["n"] == 2);
    const std::string text = rep["aggregate"]["in-sample"]["sqrt_pehe"]["text"];
    CHECK(text.find("±") != std::string::npos);
}

TEST_CASE("with-baselines adds regression and matching rows") {
    fs::path dir = fresh_dir("eval_base");
    const std::string data = make_data(dir);
    Cmd r = run_cli("eval --data " + data + " --oracle --with-baselines --out " +
                    (dir / "ev").string());
    REQUIRE_MESSAGE(r.code == 0, r.out);
    json rep = json::parse(slurp(dir / "ev" / "report.json"));
    std::vector<std::string> models;
    for (const auto& row : rep["rows"])
        if (row.contains("model")) models.push_back(row["model"]);
    CHECK(std::count(models.begin(), models.end(), "ols_lr1") == 2);
    CHECK(std::count(models.begin(), models.end(), "ols_lr2") == 2);
    CHECK(std::count(models.begin(), models.end(), "knn") == 2);
}

TEST_CASE("exit codes distinguish config errors from numeric blowups") {
    fs::path dir = fresh_dir("exit_codes");
    const std::string data = make_data(dir);

    Cmd missing = run_cli("train --data " + (dir / "nope.csv").string() + " --out " +
                          (dir / "o1").string());
    CHECK(missing.code == 2);

    Cmd flag = run_cli("train --data " + data + " --out " + (dir / "o2").string() +
                       " --no-such-flag 1");
    CHECK(flag.code == 2);

    Cmd badsub = run_cli("frobnicate");
    CHECK(badsub.code == 2);

    Cmd help = run_cli("--help");
    CHECK(help.code == 0);
    CHECK(help.out.find("train") != std::string::npos);

    Cmd blowup = run_cli("train --data " + data + " --out " + (dir / "o3").string() +
                         kTinyTrain + "--lr 1e200 --seed 1");
    CHECK(blowup.code == 3);
    CHECK(blowup.out.find("numeric") != std::string::npos);
}

TEST_CASE("ablate produces per-variant traces and a summary table") {
    fs::path dir = fresh_dir("ablate");
    const std::string data = make_data(dir);
    const std::string out = (dir / "abl").string();
    Cmd r = run_cli("ablate --data " + data + " --out " + out + kTinyTrain + "--seeds 1,2");
    REQUIRE_MESSAGE(r.code == 0, r.out);

    auto table = lines_of(slurp(fs::path(out) / "ablation.csv"));
    CHECK(table.size() == 1 + 3 * 2 * 2);   // header + variants x seeds x splits
    CHECK(table[0] ==
          "variant,seed,split,sqrt_pehe,ate_error,policy_risk,factual_mse,group_kl_tc");

    for (const char* v : {"full", "no_transformer", "no_discriminator"})
        CHECK(fs::exists(fs::path(out) / "seed1" / v / "trace.csv"));

    // the discriminator-free variant never runs critic steps
    auto nod = lines_of(slurp(fs::path(out) / "seed1" / "no_discriminator" / "trace.csv"));
    for (std::size_t i = 1; i < nod.size(); ++i) {
        auto cols = split_csv(nod[i]);
        REQUIRE(cols.size() == 6);
        CHECK(std::stod(cols[3]) == 0.0);
    }

    json rep = json::parse(slurp(fs::path(out) / "report.json"));
    CHECK(rep["rows"].size() == 12);
    CHECK(rep.contains("aggregate"));
}

TEST_CASE("report merges runs and fails loudly on a missing manifest") {
    fs::path dir = fresh_dir("report");
    const std::string data = make_data(dir);
    Cmd t1 = run_cli("train --data " + data + " --out " + (dir / "runA").string() + kTinyTrain +
                     "--seed 1");
    Cmd t2 = run_cli("train --data " + data + " --out " + (dir / "runB").string() + kTinyTrain +
                     "--seed 2 --beta 0");
    REQUIRE(t1.code == 0);
    REQUIRE(t2.code == 0);

    Cmd r = run_cli("report --runs " + (dir / "runA").string() + "," + (dir / "runB").string() +
                    " --out " + (dir / "rep").string());
    REQUIRE_MESSAGE(r.code == 0, r.out);

    const std::string md = slurp(dir / "rep" / "summary.md");
    CHECK(md.find("runA") != std::string::npos);
    CHECK(md.find("runB") != std::string::npos);
    CHECK(md.find("sqrt_pehe") != std::string::npos);

    auto kl = lines_of(slurp(dir / "rep" / "kl_trace.csv"));
    REQUIRE(kl.size() > 1);
    CHECK(kl[0] == "run,epoch,group_kl");
    CHECK(split_csv(kl[1]).size() == 3);

    Cmd bad = run_cli("report --runs " + (dir / "ghost").string() + " --out " +
                      (dir / "rep2").string());
    CHECK(bad.code == 2);
    CHECK(bad.out.find("manifest") != std::string::npos);
}

TEST_CASE("a config file supplies the same flags as the command line") {
    fs::path dir = fresh_dir("config_file");
    const std::string data = make_data(dir);
    Cmd cli = run_cli("train --data " + data + " --out " + (dir / "a").string() + kTinyTrain +
                      "--seed 6 --alpha 0.5");
    REQUIRE(cli.code == 0);

    std::ofstream ini(dir / "run.ini");
    ini << "[train]\n"
        << "data = " << data << "\n"
        << "out = " << (dir / "b").string() << "\n"
        << "epochs = 6\nbatch = 32\nblocks = 1\nheads = 2\nd-model = 16\nd-ff = 32\n"
        << "seed = 6\nalpha = 0.5\n";
    ini.close();
    Cmd cfg = run_cli("--config " + (dir / "run.ini").string() + " train");
    REQUIRE_MESSAGE(cfg.code == 0, cfg.out);
    CHECK(slurp(dir / "a" / "trace.csv") == slurp(dir / "b" / "trace.csv"));
}

} // TEST_SUITE
