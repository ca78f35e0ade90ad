#include <filesystem>
#include <sstream>

#include <gtest/gtest.h>

#include "qtt/config.hpp"
#include "qtt/io.hpp"

using namespace qtt;

namespace {

const char* kMinimal = R"(source:
  pair_rate_cps: 2.0e6
acquisition_time_s: 1
eta_herald: 0.4
alice:
  detector: SPAD
  eta_spec: 0.9
  eta_det: 0.6
bob:
  detector: SPAD
  channel_dB: -23
  background_cps: 9.0e5
)";

ConfigError config_error(const std::string& text) {
  try {
    parse_config(text, "test.yaml");
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError";
  return ConfigError("", 0, "");
}

}  // namespace

TEST(Config, MinimalFileMatchesReferencePreset) {
  const auto c = parse_config(kMinimal, "test.yaml");
  const auto p = scenario_preset("reference");
  EXPECT_EQ(c.scenario.streams, p.scenario.streams);
  EXPECT_NEAR(c.scenario.correlator.expected_sigma_ps, 405.9, 0.05);
  EXPECT_NEAR(c.scenario.streams.bob.channel_efficiency(), 5.0118723e-3, 1e-9);
  EXPECT_EQ(c.scenario.streams.alice.dead_time_ps, 84000.0);
}

TEST(Config, MissingFieldNamesTheField) {
  std::string text = kMinimal;
  text.erase(text.find("  background_cps"));
  const auto e = config_error(text);
  EXPECT_EQ(e.field(), "bob.background_cps");
  EXPECT_NE(std::string(e.what()).find("bob.background_cps"), std::string::npos);

  const auto e2 = config_error("acquisition_time_s: 1\n");
  EXPECT_EQ(e2.field(), "source.pair_rate_cps");
}

TEST(Config, UnknownKeyReportsLine) {
  std::string text = kMinimal;
  text += "correlator:\n  bin_width_ps: 100\n  bin_wdith_ps: 10\n";
  const auto e = config_error(text);
  EXPECT_EQ(e.field(), "correlator.bin_wdith_ps");
  EXPECT_EQ(e.line(), 15);
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_EQ(config_error(std::string(kMinimal) + "seed: banana\n").field(), "seed");
  std::string bad = kMinimal;
  bad.replace(bad.find("0.4"), 3, "1.4");
  EXPECT_EQ(config_error(bad).field(), "eta_herald");
  EXPECT_EQ(config_error("preset: reference\nbob:\n  channel_dB: 3\n").field(), "bob.channel_dB");
  EXPECT_EQ(config_error("preset: nope\n").field(), "preset");
  const auto syntax = config_error("preset: [reference\n");
  EXPECT_GT(syntax.line(), 0);
}

TEST(Config, DeadTimeUnitsAndValidationField) {
  const auto c = parse_config("preset: reference\nbob:\n  dead_time_ns: 50\n");
  EXPECT_EQ(c.scenario.streams.bob.dead_time_ps, 50000.0);
  const auto e = config_error("preset: reference\nbob:\n  dead_time_ns: 50\n  dead_time_ps: 1\n");
  EXPECT_EQ(e.field(), "bob.dead_time_ps");
  const auto v = config_error("preset: reference\nalice:\n  jitter_det_ps: -3\n");
  EXPECT_EQ(v.field(), "alice");
}

TEST(Config, PresetsAndOverrides) {
  const auto c = parse_config("preset: daytime\nclock:\n  preset: RbFS\nbob:\n  background_cps: 1\n");
  EXPECT_EQ(c.scenario.streams.bob.background_cps, 1.0);
  EXPECT_EQ(c.scenario.streams.clock.drift, 3.4e-10);
  EXPECT_EQ(c.scenario.streams.clock.freq_jitter, 3e-12);
  const auto s = scenario_preset("sota");
  EXPECT_EQ(s.scenario.correlator.bin_width_ps, 10);
  EXPECT_EQ(s.scenario.streams.bob.jitter_det_ps, 50.0);
  EXPECT_EQ(scenario_preset("nighttime").scenario.streams.bob.background_cps, 1e5);
  EXPECT_EQ(scenario_preset("daytime").scenario.streams.bob.background_cps, 2.14e6);
  EXPECT_THROW(detector_preset("APD"), ConfigError);
  EXPECT_EQ(clock_preset("CsFS").freq_jitter, 5e-13);
}

TEST(Config, SnapshotRoundTrip) {
  for (const auto& name : scenario_preset_names()) {
    auto c = scenario_preset(name);
    c.seed = 77;
    c.sweep.trials = 12;
    c.fiber.link.alpha_dB_per_km = 0.2;
    const auto text = to_json(c).dump(2);
    const auto back = parse_config(text, "snapshot");
    EXPECT_EQ(back, c) << name;
    EXPECT_EQ(to_json(back).dump(2), text) << name;
  }
}

TEST(Config, BaseConfigSuppliesDefaults) {
  const auto base = scenario_preset("nighttime");
  const auto c = parse_config("bob:\n  channel_dB: -30\n", "x", &base);
  EXPECT_EQ(c.scenario.streams.bob.background_cps, 1e5);
  EXPECT_NEAR(c.scenario.streams.bob.channel_efficiency(), 1e-3, 1e-12);
}

TEST(Io, FormatNumberRoundTrips) {
  for (double v : {0.0, 1.0, -23.0, 0.1, 1.0 / 3.0, 2.14e6, 5.0118723362727e-3})
    EXPECT_EQ(std::stod(io::format_number(v)), v);
  EXPECT_EQ(io::format_number(std::nan("")), "nan");
  EXPECT_EQ(io::format_number(2e5), "2e+05");
}

TEST(Io, HistogramCsvRoundTrip) {
  CorrelationHistogram h;
  h.bin_width_ps = 100;
  h.range = DifferenceRange{-300, 300};
  h.counts = {1, 0, 5, 9, 2, 0};
  std::stringstream ss;
  io::write_histogram_csv(ss, h);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "bin_center_ps,count");
  const auto back = io::read_histogram_csv(ss);
  EXPECT_EQ(back.counts, h.counts);
  EXPECT_EQ(back.range, h.range);
  EXPECT_EQ(back.bin_width_ps, 100);
}

TEST(Io, CsvHeaders) {
  auto header = [](const std::string& s) { return s.substr(0, s.find('\n')); };
  SweepGrid g{{-10}, {0}, 1, {1.0}, {5.0}};
  std::ostringstream a, b, c, d, e;
  io::write_sweep_csv(a, g);
  EXPECT_EQ(header(a.str()), "attenuation_dB,background_cps,p_success,mean_N_T");
  EXPECT_EQ(a.str(), "attenuation_dB,background_cps,p_success,mean_N_T\n-10,0,1,5\n");
  io::write_threshold_csv(b, {{0.0, -30.0}, {1e5, std::nullopt}});
  EXPECT_EQ(b.str(), "background_cps,threshold_dB\n0,-30\n1e+05,nan\n");
  io::write_adev_csv(c, AdevCurve{{1.0}, {2e-10}, {3}});
  EXPECT_EQ(header(c.str()), "tau_s,sigma_y");
  io::write_fiber_csv(d, {});
  EXPECT_EQ(header(d.str()), "length_km,attenuation_dB,p_success,mean_N_T");
  OffsetSeries os;
  os.taus_ps = {1.0, std::nan("")};
  os.true_taus_ps = {1.0, 2.0};
  os.drift_eff = {0.0, 0.0};
  os.corrections_ps = {0.0, 0.0};
  io::write_offset_series_csv(e, os);
  EXPECT_EQ(e.str(), "t_s,tau_hat_ps,tau_true_ps,drift_eff,correction_ps\n0,1,1,0,0\n1,nan,2,0,0\n");
}

TEST(Io, ResultJsonUsesNullForNonFinite) {
  CorrelationResult r;
  r.sem_ps = std::numeric_limits<double>::infinity();
  const auto j = io::to_json(r);
  EXPECT_TRUE(j.at("sem_ps").is_null());
  EXPECT_EQ(j.at("success"), false);
}

TEST(Io, Sha256KnownVector) {
  EXPECT_EQ(io::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Config, ShippedConfigsLoad) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(QTT_CONFIG_DIR)) {
    if (e.path().extension() != ".yaml") continue;
    EXPECT_NO_THROW(load_config(e.path().string())) << e.path();
    ++n;
  }
  EXPECT_GE(n, 4u);
  auto ref = load_config(std::string(QTT_CONFIG_DIR) + "/reference.yaml");
  EXPECT_EQ(ref.seed, std::optional<std::uint64_t>(1));
  ref.seed.reset();
  EXPECT_EQ(ref, scenario_preset("reference"));
  EXPECT_EQ(load_config(std::string(QTT_CONFIG_DIR) + "/fiber.yaml").scenario.streams.heralding(), 0.8);
}
