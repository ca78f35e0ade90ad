#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "qtt/cli/app.hpp"
#include "qtt/io.hpp"

namespace fs = std::filesystem;
using qtt::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qtt_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) { return qtt::io::read_file(p.string()); }

}  // namespace

TEST(Cli, VersionAndHelp) {
  EXPECT_EQ(invoke({"--version"}).code, 0);
  const auto h = invoke({"--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("sweep"), std::string::npos);
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
}

TEST(Cli, MissingFieldExitsWithConfigError) {
  const auto dir = scratch("missing");
  const auto cfg = dir / "bad.yaml";
  std::ofstream(cfg) << "source:\n  pair_rate_cps: 2e6\nacquisition_time_s: 1\neta_herald: 0.4\n"
                        "bob:\n  channel_dB: -23\n";
  const auto r = invoke({"--config", cfg.string(), "--out", dir.string(), "simulate"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bob.background_cps"), std::string::npos) << r.err;
  EXPECT_FALSE(fs::exists(dir / "manifest.json"));
}

TEST(Cli, SimulateWritesHistogramAndResult) {
  const auto dir = scratch("simulate");
  const auto r = invoke({"--seed", "3", "--out", dir.string(), "simulate"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto result = nlohmann::json::parse(slurp(dir / "result.json"));
  EXPECT_TRUE(result.at("success").get<bool>());
  EXPECT_NEAR(result.at("fit").at("sigma_tau_ps").get<double>(), 400.0, 40.0);
  std::ifstream h(dir / "histogram.csv");
  const auto hist = qtt::io::read_histogram_csv(h);
  EXPECT_EQ(hist.bin_count(), 20000u);
  const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(manifest.at("command"), "simulate");
  EXPECT_EQ(manifest.at("seed"), 3);
  EXPECT_EQ(manifest.at("outputs").size(), 2u);
}

TEST(Cli, RerunsAreByteIdenticalAndReplayMatches) {
  const auto a = scratch("rerun_a"), b = scratch("rerun_b"), c = scratch("rerun_c");
  const std::vector<std::string> cmd{"sweep", "--attenuations", "-10,-30", "--backgrounds", "0,4e5",
                                     "--trials", "3"};
  auto with = [&](const fs::path& d, const std::string& jobs) {
    std::vector<std::string> v{"--seed", "9", "--jobs", jobs, "--out", d.string()};
    v.insert(v.end(), cmd.begin(), cmd.end());
    return v;
  };
  ASSERT_EQ(invoke(with(a, "1")).code, 0);
  ASSERT_EQ(invoke(with(b, "8")).code, 0);
  for (const char* f : {"sweep.csv", "threshold.csv"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  const auto rp = invoke({"--out", c.string(), "replay", (a / "manifest.json").string()});
  EXPECT_EQ(rp.code, 0) << rp.err;
  EXPECT_NE(rp.out.find("match    sweep.csv"), std::string::npos);
  EXPECT_EQ(slurp(a / "sweep.csv"), slurp(c / "sweep.csv"));
}

TEST(Cli, ReplayDetectsTampering) {
  const auto a = scratch("tamper_a"), b = scratch("tamper_b");
  ASSERT_EQ(invoke({"--out", a.string(), "ao"}).code, 0);
  auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  m["outputs"][0]["sha256"] = std::string(64, '0');
  std::ofstream(a / "manifest.json") << m.dump(2);
  const auto r = invoke({"--out", b.string(), "replay", (a / "manifest.json").string()});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("MISMATCH"), std::string::npos);
}

TEST(Cli, AnalyticAndAoOutputs) {
  const auto dir = scratch("analytic");
  const auto r = invoke({"--out", dir.string(), "analytic", "--backgrounds", "2e5,8e5",
                         "--attenuations", "-20,-30", "--dead-time-acquisitions", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "analytic.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "attenuation_dB,background_cps,S_peak,mu_b,p_success");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  ASSERT_EQ(invoke({"--out", dir.string(), "ao"}).code, 0);
  const auto ao = slurp(dir / "ao.csv");
  EXPECT_EQ(ao.find("nan"), std::string::npos);
  EXPECT_EQ(ao.find("inf"), std::string::npos);
}

TEST(Cli, InvalidOptionValues) {
  const auto dir = scratch("invalid");
  EXPECT_EQ(invoke({"--out", dir.string(), "allan", "--acquisitions", "2"}).code, 2);
  EXPECT_EQ(invoke({"--out", dir.string(), "allan", "--clock", "quartz"}).code, 2);
  EXPECT_EQ(invoke({"--preset", "moon", "--out", dir.string(), "ao"}).code, 2);
  EXPECT_EQ(invoke({"--jobs", "0", "ao"}).code, 2);
}
