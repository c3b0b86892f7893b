#include "mesad/harness.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace mesad;
using namespace mesad::harness;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "mesad_test_harness" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    return files;
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

// Small synthetic run: 8 channels, 240 steps, 20 series.
RunConfig tiny(const fs::path& out, std::size_t trials) {
    json j = {{"dataset", {{"synth", {{"channels", 8}, {"series", 20}}}}},
              {"trials", trials},
              {"seed", 3},
              {"out", out.string()}};
    return parse_config(j);
}

int cli(const std::string& args, const fs::path& log) {
    const char* exe = std::getenv("MESAD_CLI");
    REQUIRE(exe != nullptr);
    const std::string cmd = std::string("\"") + exe + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing applies overrides and rejects unknown input") {
    const auto c = parse_config(json{{"models", {"MES-LSTM", "1NN"}},
                                     {"trials", 4},
                                     {"alpha", 0.1},
                                     {"betas", {3, 7}},
                                     {"detector", {{"window", 30}}},
                                     {"dataset", {{"synth", {{"profile", "default"}, {"channels", 5}}}}}});
    CHECK(c.models == std::vector<std::string>{"MES-LSTM", "1NN"});
    CHECK(c.trials == 4);
    CHECK(c.detector.alpha == 0.1);
    CHECK(c.detector.window == 30);
    CHECK(c.synth.channels == 5);
    CHECK(c.synth.series == SynthConfig{}.series);
    CHECK(c.betas == std::vector<std::size_t>{3, 7});

    const auto d = parse_config(json::object());
    CHECK(d.trials == 35);
    CHECK(d.betas == std::vector<std::size_t>{5, 10, 15});
    CHECK(d.models == known_models());

    CHECK_THROWS_AS(parse_config(json{{"models", {"MES-LSTM", "LSTM-AE"}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"trails", 3}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"trials", 0}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"betas", {0}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"dataset", {{"csv", "/no/such/dir"}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"dataset", {{"synth", {{"profile", "huge"}}}}}}), ConfigError);
    CHECK_THROWS_AS(parse_config(json{{"explainer", {{"shapley_mode", "guess"}}}}), ConfigError);
}

TEST_CASE("unknown model fails before any output is written") {
    const auto dir = scratch("unknown_model");
    fs::remove_all(dir);
    std::ofstream(dir.parent_path() / "bad.json") << json{{"models", {"Prophet"}}, {"out", dir.string()}}.dump();
    CHECK_THROWS_AS(load_config(dir.parent_path() / "bad.json"), ConfigError);
    CHECK(!fs::exists(dir));
}

TEST_CASE("a one-trial tiny run completes quickly and writes every report") {
    const auto dir = scratch("smoke");
    auto cfg = tiny(dir, 1);
    std::ostringstream log;
    const auto t0 = std::chrono::steady_clock::now();
    const int code = cmd_run(cfg, log);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(code == 0);
    CHECK(seconds < 60.0);
    for (const char* f : {"trials.csv", "scores.csv", "summary_auroc.csv", "summary_aupr.csv", "boxplot_auroc.csv",
                          "boxplot_aupr.csv", "ttest_auroc.csv", "ttest_aupr.csv", "mds_surrogate.csv",
                          "mds_shapley.csv", "mds_trials.csv", "summary.json"})
        CHECK_MESSAGE(fs::exists(dir / f), f);
    CHECK(lines(slurp(dir / "trials.csv")).front() == "model,unit,trial,seed,status,auroc,aupr,error");
    CHECK(lines(slurp(dir / "scores.csv")).front() == "model,unit,trial,series_id,step,score,label");
    CHECK(lines(slurp(dir / "summary_auroc.csv")).front() == "model,unit,trials,mean,std,min,q1,median,q3,max");
    CHECK(lines(slurp(dir / "ttest_auroc.csv")).front() == "benchmark,statistic,p_value,dof,reject_h0_at_0.01,note");
    CHECK(lines(slurp(dir / "mds_shapley.csv")).front() == "beta,trials_defined,mean,std");
    CHECK(lines(slurp(dir / "ttest_auroc.csv")).size() == 1 + 4);
    CHECK(fs::exists(dir / "trial_0" / "MES-LSTM" / "model" / "model.json"));
    CHECK(fs::exists(dir / "trial_0" / "iDTW" / "distances.csv"));
}

TEST_CASE("same config and seed give byte-identical reports regardless of workers") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    auto ca = tiny(a, 2), cb = tiny(b, 2);
    ca.models = cb.models = {"MES-LSTM", "dDTW", "MiniRocket"};
    ca.workers = 1;
    cb.workers = 2;
    std::ostringstream log;
    REQUIRE(cmd_run(ca, log) == 0);
    REQUIRE(cmd_run(cb, log) == 0);
    const auto ta = tree(a), tb = tree(b);
    CHECK(ta.size() == tb.size());
    for (const auto& [name, body] : ta) {
        REQUIRE_MESSAGE(tb.count(name), name);
        CHECK_MESSAGE(body == tb.at(name), name);
    }
}

TEST_CASE("explanations of a flagged spike point at its root channel") {
    const auto dir = scratch("explain");
    auto cfg = tiny(dir / "run", 1);
    cfg.models = {"MES-LSTM"};
    cfg.synth.event_types = {EventType::BusFault};
    cfg.synth.severity = 20.0;
    std::ostringstream log;
    REQUIRE(cmd_run(cfg, log) == 0);
    const auto ds = load_dataset(cfg);
    const fs::path art = dir / "run" / "trial_0" / "MES-LSTM" / "model";

    std::size_t checked = 0, hits = 0;
    bool refused = false;
    for (auto id : ds.test) {
        const auto& s = ds.series[id];
        const fs::path series_csv = dir / ("series_" + std::to_string(id) + ".csv");
        write_series_csv(series_csv, s.data);
        const auto det = lines(slurp(dir / "run" / "trial_0" / "MES-LSTM" / ("detection_series_" + std::to_string(id) + ".csv")));
        std::set<std::size_t> flagged;
        for (std::size_t i = 1; i < det.size(); ++i) {
            std::istringstream row(det[i]);
            std::string t, ch, flag;
            std::getline(row, t, ',');
            std::getline(row, ch, ',');
            std::getline(row, flag, ',');
            if (flag == "1") flagged.insert(std::stoul(t));
        }
        if (!refused) {
            for (std::size_t t = 100; t < s.data.steps(); ++t)
                if (!flagged.count(t)) {
                    CHECK_THROWS_AS(cmd_explain({art, series_csv, t, std::nullopt, 0}, log), explain::ExplainError);
                    refused = true;
                    break;
                }
        }
        for (const auto& ev : s.events) {
            if (!flagged.count(ev.start_idx)) continue;
            const auto rep = cmd_explain({art, series_csv, ev.start_idx, dir / "ranks.csv", 0}, log);
            const auto k = s.data.channel_index(ev.root_channel);
            ++checked;
            hits += rep.surrogate.rank[k] <= 5 || rep.shapley.rank[k] <= 5;
        }
    }
    CHECK(refused);
    REQUIRE(checked > 0);
    CHECK(hits == checked);
    CHECK(lines(slurp(dir / "ranks.csv")).front() ==
          "rank,surrogate_channel,surrogate_importance,shapley_channel,shapley_importance");
}

TEST_CASE("a score that ignores its input ranks channels in index order") {
    forecast::RecurrentModel net(4, 3, 5, 1);
    // Half-widths far beyond any residual keep every window inside the interval.
    const auto score = make_score_fn(net, Vector::Constant(4, 1e9), 0.05);
    Matrix w = Matrix::Random(6, 4);
    CHECK(score(w) == 1.0);
    explain::ExplainerConfig cfg;
    cfg.baseline = Vector::Zero(4);
    const auto a = explain::surrogate_explain(score, w, cfg, 0);
    const auto b = explain::shapley_explain(score, w, cfg, 0);
    CHECK(a.rank == std::vector<std::size_t>{1, 2, 3, 4});
    CHECK(b.rank == std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("evaluate reproduces metrics from a score file") {
    const auto dir = scratch("evaluate");
    std::ofstream(dir / "s.csv") << "model,unit,trial,series_id,step,score,label\n"
                                    "A,series,0,0,,0.1,0\nA,series,0,1,,0.4,0\nA,series,0,2,,0.35,1\nA,series,0,3,,0.8,1\n";
    std::ostringstream log;
    CHECK(cmd_evaluate(dir / "s.csv", dir / "out", log) == 0);
    const auto rows = lines(slurp(dir / "out" / "evaluation.csv"));
    REQUIRE(rows.size() == 2);
    CHECK(rows[1].find("0.75") != std::string::npos);

    std::ofstream(dir / "one.csv") << "score,label\n0.3,1\n0.2,1\n";
    CHECK(cmd_evaluate(dir / "one.csv", dir / "out2", log) == 3);
}

TEST_CASE("command line surface") {
    const auto dir = scratch("cli");
    const auto log = dir / "log.txt";

    REQUIRE(cli("synth --profile desk --seed 7 --out \"" + (dir / "a").string() + "\"", log) == 0);
    const auto digest_a = slurp(log);
    REQUIRE(cli("synth --profile desk --seed 7 --out \"" + (dir / "b").string() + "\"", log) == 0);
    CHECK(slurp(log) == digest_a);
    CHECK(tree(dir / "a") == tree(dir / "b"));

    std::ofstream(dir / "quiet.json") << json{{"profile", "default"}, {"event_rate", 0.0}}.dump();
    REQUIRE(cli("synth --config \"" + (dir / "quiet.json").string() + "\" --out \"" + (dir / "q").string() + "\"",
                log) == 0);
    CHECK(lines(slurp(dir / "q" / "labels.csv")).size() == 1);
    const auto header = lines(slurp(dir / "q" / "series_000.csv")).front();
    CHECK(std::count(header.begin(), header.end(), ',') == 8);  // t plus 8 channels

    std::ofstream(dir / "bad.json") << json{{"models", {"NotAModel"}}}.dump();
    CHECK(cli("run --config \"" + (dir / "bad.json").string() + "\"", log) == 1);
    CHECK(slurp(log).find("unknown model") != std::string::npos);

    std::ofstream(dir / "s.csv") << "score,label\n0.9,1\n0.1,0\n";
    CHECK(cli("evaluate --scores \"" + (dir / "s.csv").string() + "\" --out \"" + (dir / "ev").string() + "\"",
              log) == 0);
    CHECK(fs::exists(dir / "ev" / "evaluation.csv"));
    CHECK(cli("explain --artifacts \"" + (dir / "nothing").string() + "\" --series \"" + (dir / "s.csv").string() +
                  "\" --step 3",
              log) == 64);  // usage error: artifact directory missing
    CHECK(cli("frobnicate", log) == 64);
}
