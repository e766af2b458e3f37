#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "divswitch/cli.hpp"
#include "divswitch/config.hpp"

using namespace divswitch;
namespace fs = std::filesystem;

namespace {

const std::string kConfigs = DIVSWITCH_CONFIG_DIR;

std::string cfg(const std::string& name) { return kConfigs + "/" + name; }

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::path(::testing::TempDir()) / ("divswitch_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Json read_json(const fs::path& p) { return Json::parse(slurp(p)); }

struct Result {
    int code;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST(Config, DefaultsWhenSectionsMissing) {
    const Config c = parse_config(Json::parse(R"({"regimes": [{"name": "a", "delta": 0.5,
        "drift": {"kind": "constant", "a": 0.3}, "vol": {"kind": "constant", "s": 1}}],
        "q_matrix": [[0]], "costs": {"c": 0.1, "d": 0.1}, "l_bar": 1})"));
    EXPECT_FALSE(c.numerics.x_max.has_value());
    EXPECT_EQ(c.numerics.grid_n, Defaults::grid_n);
    EXPECT_EQ(c.numerics.tol, Defaults::tol);
    EXPECT_EQ(c.simulation.paths, Defaults::paths);
    EXPECT_EQ(c.simulation.dt, Defaults::dt);
    EXPECT_FALSE(c.simulation.horizon.has_value());
    EXPECT_NEAR(resolved_horizon(c), std::log(1e4) / 0.5, 1e-12);
    EXPECT_DOUBLE_EQ(resolved_x_max(c), default_x_max(c.model));
}

TEST(Config, ParsesSections) {
    const Config c = parse_config(parse_json_text(read_text_file(cfg("small_domain.json")), "small"));
    ASSERT_TRUE(c.numerics.x_max.has_value());
    EXPECT_EQ(*c.numerics.x_max, 0.5);
    EXPECT_EQ(c.numerics.grid_n, 200u);
    const Config f = parse_config(parse_json_text(read_text_file(cfg("fast_two_regime.json")), "fast"));
    EXPECT_EQ(f.simulation.paths, 100000u);
    EXPECT_EQ(f.simulation.seed, 7u);
    EXPECT_EQ(f.model.size(), 2u);
}

TEST(Config, RejectsBadNumerics) {
    Json doc = parse_json_text(read_text_file(cfg("brownian.json")), "b");
    doc["numerics"]["grid_n"] = 1;
    EXPECT_THROW(parse_config(doc), ConfigError);
    doc["numerics"]["grid_n"] = 2.5;
    EXPECT_THROW(parse_config(doc), ConfigError);
    doc["numerics"]["grid_n"] = 100;
    doc["numerics"]["x_max"] = "huge";
    EXPECT_THROW(parse_config(doc), ConfigError);
    doc["numerics"]["x_max"] = -3;
    EXPECT_THROW(parse_config(doc), ConfigError);
    doc["numerics"]["x_max"] = 10;
    doc["simulation"]["seed"] = -1;
    EXPECT_THROW(parse_config(doc), ConfigError);
    EXPECT_THROW(parse_json_text("{not json", "broken"), ConfigError);
    EXPECT_THROW(read_text_file(cfg("does_not_exist.json")), ConfigError);
}

TEST(Sha256, KnownVector) {
    EXPECT_EQ(cli::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Cli, SolveWritesListedOutputs) {
    const fs::path dir = fresh_dir("solve");
    const Result r = run_cli({"solve", "--config", cfg("brownian.json"), "--out-dir", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (const char* f : {"value_function.csv", "summary.json", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
    const Json m = read_json(dir / "manifest.json");
    EXPECT_EQ(m["command"], "solve");
    EXPECT_EQ(m["status"], "ok");
    EXPECT_EQ(m["config_sha256"], cli::sha256_hex(read_text_file(cfg("brownian.json"))));
    std::vector<std::string> listed = m["files"];
    for (const auto& entry : fs::directory_iterator(dir))
        EXPECT_NE(std::find(listed.begin(), listed.end(), entry.path().filename().string()), listed.end())
            << entry.path();
    for (const auto& name : listed) EXPECT_TRUE(fs::exists(dir / name)) << name;

    const std::string csv = slurp(dir / "value_function.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "x,V_base,dV_base,residual_base");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2002);
    EXPECT_EQ(csv.find('\r'), std::string::npos);

    const Json s = read_json(dir / "summary.json");
    EXPECT_EQ(s["thresholds"][0]["boundary_case"], "interior");
    EXPECT_NEAR(s["thresholds"][0]["b"].get<double>(), 1.3791, 0.08);
    EXPECT_TRUE(s["class_D"].get<bool>());
}

TEST(Cli, ValidateBadDeltaNamesRule) {
    const fs::path dir = fresh_dir("bad_delta");
    const Result r = run_cli({"validate", "--config", cfg("bad_delta.json"), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 1);
    const Json rep = read_json(dir / "validation_report.json");
    EXPECT_FALSE(rep["pass"].get<bool>());
    EXPECT_EQ(rep["violations"][0]["rule"], "delta_positive");
    EXPECT_NE(r.err.find("delta must be positive"), std::string::npos);
}

TEST(Cli, ValidatePassingAndFailingModels) {
    EXPECT_EQ(run_cli({"validate", "--config", cfg("three_regime.json"), "--out-dir", fresh_dir("v3").string()}).code, 0);
    const fs::path dir = fresh_dir("steep");
    EXPECT_EQ(run_cli({"validate", "--config", cfg("steep_drift.json"), "--out-dir", dir.string()}).code, 1);
    EXPECT_EQ(read_json(dir / "validation_report.json")["violations"][0]["rule"], "condition2");
    EXPECT_EQ(run_cli({"solve", "--config", cfg("steep_drift.json"), "--out-dir", dir.string()}).code, 1);
}

TEST(Cli, CappedThresholdExitsTwo) {
    const fs::path dir = fresh_dir("capped");
    const Result r = run_cli({"solve", "--config", cfg("small_domain.json"), "--out-dir", dir.string()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("enlarge x_max"), std::string::npos);
    EXPECT_NE(read_json(dir / "manifest.json")["status"].get<std::string>().find("failed"), std::string::npos);
}

TEST(Cli, UsageErrorsExitOne) {
    const std::string out = fresh_dir("usage").string();
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"solve"}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--config", cfg("missing.json"), "--out-dir", out}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", out}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", out, "--thresholds", "0.1,0.2",
                       "--summary", out + "/summary.json"})
                  .code,
              1);
    EXPECT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", out, "--thresholds", "0.1"}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", out, "--thresholds", "0.1,0.2",
                       "--regime", "nowhere", "--paths", "10"})
                  .code,
              1);
    EXPECT_EQ(run_cli({"solve", "--config", cfg("brownian.json"), "--out-dir", out, "--x-max", "wide"}).code, 1);
    EXPECT_EQ(run_cli({"solve", "--config", cfg("brownian.json"), "--out-dir", out, "--grid-n", "1"}).code, 1);
    EXPECT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", out, "--thresholds", "0.1,0.2",
                       "--dt", "0.05", "--paths", "10"})
                  .code,
              1);
    EXPECT_EQ(run_cli({"--version"}).code, 0);
}

TEST(Cli, OverridesReachTheManifest) {
    const fs::path dir = fresh_dir("override");
    const Result r = run_cli({"solve", "--config", cfg("brownian.json"), "--out-dir", dir.string(), "--grid-n", "500",
                              "--tol", "1e-7", "--x-max", "200"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json n = read_json(dir / "manifest.json")["numerics"];
    EXPECT_EQ(n["grid_n"], 500);
    EXPECT_EQ(n["tol"], 1e-7);
    EXPECT_EQ(n["x_max"], 200.0);
    EXPECT_EQ(n["x_max_source"], "config");
    const std::string csv = slurp(dir / "value_function.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 502);

    const fs::path sim = fresh_dir("override_sim");
    ASSERT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", sim.string(), "--thresholds",
                       "0.2,0.3", "--paths", "50", "--dt", "5e-4", "--horizon", "1.5", "--seed", "99"})
                  .code,
              0);
    const Json s = read_json(sim / "manifest.json")["simulation"];
    EXPECT_EQ(s["paths"], 50);
    EXPECT_EQ(s["dt"], 5e-4);
    EXPECT_EQ(s["horizon"], 1.5);
    EXPECT_EQ(s["seed"], 99);
}

TEST(Cli, RerunsAreByteIdentical) {
    const fs::path a = fresh_dir("rerun_a"), b = fresh_dir("rerun_b");
    for (const auto& [d, w] : {std::pair{a, "1"}, std::pair{b, "3"}})
        ASSERT_EQ(run_cli({"solve", "--config", cfg("three_regime.json"), "--out-dir", d.string(), "--emit-plot-data",
                           "--workers", w})
                      .code,
                  0);
    EXPECT_EQ(slurp(a / "value_function.csv"), slurp(b / "value_function.csv"));
    EXPECT_EQ(slurp(a / "plot_data.csv"), slurp(b / "plot_data.csv"));
}

TEST(Cli, SimulateAndCompareFromSummary) {
    const fs::path base = fresh_dir("fast_solve");
    ASSERT_EQ(run_cli({"solve", "--config", cfg("fast_two_regime.json"), "--out-dir", base.string()}).code, 0);
    const std::string summary = (base / "summary.json").string();

    const fs::path s1 = fresh_dir("sim_w1"), s3 = fresh_dir("sim_w3");
    for (const auto& [d, w] : {std::pair{s1, "1"}, std::pair{s3, "3"}})
        ASSERT_EQ(run_cli({"simulate", "--config", cfg("fast_two_regime.json"), "--out-dir", d.string(), "--summary",
                           summary, "--paths", "300", "--x0", "0,0.2", "--regime", "stress", "--workers", w})
                      .code,
                  0);
    const std::string csv = slurp(s1 / "simulation.csv");
    EXPECT_EQ(csv, slurp(s3 / "simulation.csv"));
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "x0,regime,paths,dt,horizon,seed,b_calm,b_stress,mean,std_error,tail_bias_bound,tail_bias_dividends,"
              "tail_bias_injections");
    EXPECT_NE(csv.find("\n0.2,stress,300,"), std::string::npos);

    const fs::path c1 = fresh_dir("cmp1"), c2 = fresh_dir("cmp2");
    for (const auto& d : {c1, c2})
        ASSERT_EQ(run_cli({"compare", "--config", cfg("fast_two_regime.json"), "--out-dir", d.string(), "--paths", "300",
                           "--emit-plot-data"})
                      .code,
                  0);
    const std::string dom = slurp(c1 / "dominance.csv");
    EXPECT_EQ(dom, slurp(c2 / "dominance.csv"));
    EXPECT_EQ(slurp(c1 / "plot_data.csv"), slurp(c2 / "plot_data.csv"));
    EXPECT_EQ(dom.substr(0, dom.find('\n')), "label,b_calm,b_stress,mean,std_error,tail_bias_bound,diff_mean,diff_std_error,verdict");
    for (const char* label : {"\noptimal,", "\nscale_0.5,", "\nscale_0.75,", "\nscale_1.25,", "\nscale_1.5,", "\nzero,"})
        EXPECT_NE(dom.find(label), std::string::npos) << label;
    const Json m = read_json(c1 / "manifest.json");
    std::vector<std::string> files = m["files"];
    EXPECT_NE(std::find(files.begin(), files.end(), "dominance.csv"), files.end());
    EXPECT_NE(std::find(files.begin(), files.end(), "plot_data.csv"), files.end());
}
