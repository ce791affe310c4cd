#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"

#include "shiftex/assignment.hpp"
#include "shiftex/cli.hpp"
#include "shiftex/config.hpp"
#include "shiftex/errors.hpp"

using namespace shiftex;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("shiftex_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

json small_config(const fs::path& out) {
    return {{"parties", 10},
            {"window", {{"mode", "tumbling"}, {"length", 120}}},
            {"windows", 3},
            {"schedule",
             {{"events",
               {{{"window", 1}, {"fraction", 0.5}, {"covariate", {{{"rotation", 1.5707963}}, {{"shift", 1.5}}}}},
                {{"window", 2}, {"fraction", 0.5}, {"label_alpha", 0.3}}}}}},
            {"aggregator", {{"rounds_per_window", 3}, {"bootstrap_rounds", 5}}},
            {"out_dir", out.string()}};
}

fs::path write_config(const fs::path& dir, const json& j) {
    const auto path = dir / "config.json";
    std::ofstream(path) << j.dump(2);
    return path;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "shiftex");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("default config round trips through JSON") {
    const RunConfig def;
    const auto j = run_config_to_json(def);
    CHECK(run_config_to_json(parse_run_config(j)) == j);
    CHECK(run_config_to_json(parse_run_config(json::object())) == j);
}

TEST_CASE("unknown keys and bad types name the field") {
    auto expect_error = [](const json& j, const std::string& fragment) {
        try {
            parse_run_config(j);
            FAIL("accepted " << j.dump());
        } catch (const UsageError& e) {
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
        }
    };
    expect_error({{"bogus", 1}}, "bogus");
    expect_error({{"thresholds", {{"tau", 0.9}}}}, "thresholds.tau");
    expect_error({{"parties", "many"}}, "parties");
    expect_error({{"aggregator", {{"kernel", "laplace"}}}}, "aggregator.kernel");
    expect_error({{"methods", {"oort"}}}, "methods");
    expect_error({{"schedule", {{"events", {{{"window", 1}, {"fraction", 0.5}, {"covariate", {{{"warp", 1}}}}}}}}}},
                 "schedule.events[0].covariate[0]");
    expect_error({{"windows", 2}}, "horizon");
}

TEST_CASE("overrides") {
    json doc = {{"methods", {"shiftex", "fedavg_global"}}};
    apply_override(doc, "methods=fedavg_global");
    CHECK(doc["methods"] == json::array({"fedavg_global"}));
    apply_override(doc, "thresholds.tau_merge=0.9");
    CHECK(doc["thresholds"]["tau_merge"] == 0.9);
    apply_override(doc, "out_dir=results");
    CHECK(doc["out_dir"] == "results");
    CHECK_THROWS_AS(apply_override(doc, "no_equals"), UsageError);
    const auto rc = parse_run_config(doc);
    CHECK(rc.experiment.methods.size() == 1);
    CHECK(rc.experiment.methods.front().thresholds.tau_merge == 0.9);
}

TEST_CASE("run writes outputs and echoes their paths") {
    const auto dir = scratch("run");
    const auto cfg = write_config(dir, small_config(dir / "out"));
    std::string out;
    REQUIRE(run({"run", "--config", cfg.string(), "--seed", "7"}, &out) == exit_ok);
    for (const char* name : {"metrics.csv", "summary.csv", "registry_w0.json", "registry_w2.json"}) {
        CHECK(fs::exists(dir / "out" / name));
        CHECK(out.find((dir / "out" / name).string()) != std::string::npos);
    }
    CHECK(slurp(dir / "out" / "metrics.csv").find("shiftex,7,") != std::string::npos);
}

TEST_CASE("method override restricts the summary") {
    const auto dir = scratch("override");
    const auto cfg = write_config(dir, small_config(dir / "out"));
    REQUIRE(run({"run", "--config", cfg.string(), "--override", "methods=fedavg_global"}) == exit_ok);
    const auto summary = slurp(dir / "out" / "summary.csv");
    CHECK(summary.find("fedavg_global") != std::string::npos);
    CHECK(summary.find("shiftex") == std::string::npos);
    CHECK(summary.find("fedprox") == std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out" / "registry_w0.json"));
}

TEST_CASE("usage errors exit with 2") {
    const auto dir = scratch("errors");
    std::string err;
    CHECK(run({"run", "--config", (dir / "missing.json").string()}, nullptr, &err) == exit_usage);
    CHECK(err.find("missing.json") != std::string::npos);

    std::ofstream(dir / "broken.json") << "{\n  \"parties\": 10,\n  oops\n}";
    CHECK(run({"run", "--config", (dir / "broken.json").string()}, nullptr, &err) == exit_usage);
    CHECK(err.find("line 3") != std::string::npos);

    const auto cfg = write_config(dir, small_config(dir / "out"));
    CHECK(run({"run", "--config", cfg.string(), "--override", "parties=-3"}, nullptr, &err) == exit_usage);
    CHECK(err.find("parties") != std::string::npos);
    CHECK(run({"frobnicate"}) == exit_usage);
    CHECK(run({}) == exit_usage);
    CHECK(run({"run"}) == exit_usage);
    CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("calibrate writes positive, monotone, reproducible thresholds") {
    const auto dir = scratch("calibrate");
    auto j = small_config(dir / "a");
    j["schedule"] = {{"events", json::array()}};
    const auto cfg = write_config(dir, j);
    std::string out;
    REQUIRE(run({"calibrate", "--config", cfg.string()}, &out) == exit_ok);
    CHECK(out.find("thresholds.json") != std::string::npos);
    const auto a = json::parse(slurp(dir / "a" / "thresholds.json"));
    CHECK(a["delta_cov"].get<double>() > 0.0);
    CHECK(a["delta_label"].get<double>() > 0.0);

    REQUIRE(run({"calibrate", "--config", cfg.string(), "--out-dir", (dir / "b").string()}) == exit_ok);
    CHECK(slurp(dir / "a" / "thresholds.json") == slurp(dir / "b" / "thresholds.json"));

    REQUIRE(run({"calibrate", "--config", cfg.string(), "--out-dir", (dir / "c").string(), "--override",
                 "thresholds.p_value=0.01"}) == exit_ok);
    const auto c = json::parse(slurp(dir / "c" / "thresholds.json"));
    CHECK(c["delta_cov"].get<double>() >= a["delta_cov"].get<double>());
    CHECK(c["delta_label"].get<double>() >= a["delta_label"].get<double>());
}

TEST_CASE("gap over empty, dominated, fuzzed and oversized corpora") {
    const auto dir = scratch("gap");
    std::string out;
    fs::create_directories(dir / "empty");
    CHECK(run({"gap", (dir / "empty").string()}, &out) == exit_ok);
    CHECK(out.find("0 instances") != std::string::npos);

    // Expert 0 costs nothing for anyone, so both solvers agree.
    json dominated = json::array();
    for (int t = 0; t < 5; ++t) {
        AssignmentProblem p;
        std::vector<std::vector<double>> costs;
        for (int i = 0; i <= t; ++i) {
            p.parties.push_back({i, EmbeddingSet::from_rows({{0.0}}), LabelHistogram::uniform(2), 1.0});
            costs.push_back({0.0, 1.0 + i, 2.0});
        }
        p.existing = {{0, EmbeddingSet::from_rows({{0.0}}), std::nullopt}, {1, EmbeddingSet::from_rows({{1.0}}), std::nullopt}};
        p.candidates = {{9, EmbeddingSet::from_rows({{2.0}}), std::nullopt}};
        p.mu_balance = 0.0;
        p.costs = costs;
        dominated.push_back(problem_to_json(p));
    }
    std::ofstream(dir / "dominated.json") << json{{"instances", dominated}}.dump();
    REQUIRE(run({"gap", (dir / "dominated.json").string()}, &out) == exit_ok);
    CHECK(out.find("5 instances, 0 skipped, mean gap 1.000000, max gap 1.000000") != std::string::npos);

    REQUIRE(run({"gap", "--fuzz", "200"}, &out) == exit_ok);
    CHECK(out.find("200 instances") != std::string::npos);

    AssignmentProblem big;
    big.existing = {{0, EmbeddingSet::from_rows({{0.0}}), std::nullopt}};
    for (int i = 0; i < 20; ++i) big.parties.push_back({i, EmbeddingSet::from_rows({{0.1 * i}}), LabelHistogram::uniform(2), 1.0});
    fs::create_directories(dir / "mixed");
    std::ofstream(dir / "mixed" / "a_big.json") << problem_to_json(big).dump();
    std::ofstream(dir / "mixed" / "b_small.json") << dominated[0].dump();
    REQUIRE(run({"gap", (dir / "mixed").string()}, &out) == exit_ok);
    CHECK(out.find("a_big.json skipped") != std::string::npos);
    CHECK(out.find("1 instances, 1 skipped") != std::string::npos);

    CHECK(run({"gap", (dir / "nowhere").string()}) == exit_usage);
}

}
