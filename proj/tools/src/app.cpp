#include "qtt/cli/app.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qtt/analytic.hpp"
#include "qtt/io.hpp"
#include "qtt/links.hpp"
#include "qtt/stats.hpp"

#ifndef QTT_VERSION
#define QTT_VERSION "dev"
#endif

namespace qtt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string version() { return QTT_VERSION; }

namespace {

std::string csv(const std::function<void(std::ostream&)>& writer) {
  std::ostringstream ss;
  writer(ss);
  return ss.str();
}

double to_db(double eta) { return eta > 0.0 ? linear_to_db(eta) : -INFINITY; }

}  // namespace

Outputs cmd_simulate(const Context& ctx) {
  const auto& sc = ctx.config.scenario;
  const auto streams = build_bob_stream(sc.streams, RngSeed{ctx.seed});
  const auto rec = recover_offset_detailed(streams.alice, streams.bob, sc.correlator);
  json result = io::to_json(rec.result);
  result["truth"] = {{"tau_true_ps", streams.truth.expected_tau_ps},
                     {"true_coincidences", streams.truth.true_coincidences},
                     {"alice_singles", streams.alice.size()},
                     {"bob_singles", streams.bob.size()},
                     {"alice_dead_time_survival", streams.truth.alice_dead_time_survival()},
                     {"bob_dead_time_survival", streams.truth.bob_dead_time_survival()}};
  const double err = rec.result.fit.tau_hat_ps - streams.truth.expected_tau_ps;
  result["offset_error_ps"] = std::isfinite(err) ? json(err) : json(nullptr);
  result["within_tolerance"] = std::abs(err) <= sc.tolerance_ps();
  return {{"histogram.csv", csv([&](std::ostream& o) { io::write_histogram_csv(o, rec.histogram); })},
          {"result.json", result.dump(2) + "\n"}};
}

Outputs cmd_sweep(const Context& ctx) {
  const auto& a = ctx.args;
  const auto grid = sweep(ctx.config.scenario, a.at("attenuations_dB").get<std::vector<double>>(),
                          a.at("background_cps").get<std::vector<double>>(), a.at("trials").get<int>(),
                          RngSeed{ctx.seed}, ctx.jobs);
  const auto curve = threshold_attenuation_curve(grid, a.at("level").get<double>());
  Outputs out{{"sweep.csv", csv([&](std::ostream& o) { io::write_sweep_csv(o, grid); })},
              {"threshold.csv", csv([&](std::ostream& o) { io::write_threshold_csv(o, curve); })}};
  std::size_t present = 0;
  for (const auto& p : curve) present += p.threshold_dB.has_value();
  if (present >= 3) {
    const auto fit = fit_threshold_curve(curve);
    out.emplace_back("threshold_fit.json", json{{"c2", fit.c2},
                                                {"c1", fit.c1},
                                                {"c0", fit.c0},
                                                {"rms_residual_dB", fit.rms_residual_dB}}
                                                   .dump(2) +
                                               "\n");
  }
  return out;
}

namespace {

// Detector and clock presets for tracking runs. SOTA replaces the channel
// and the clock with the benign-channel lower bound.
RunConfig tracking_config(const Context& ctx) {
  RunConfig cfg = ctx.config;
  auto& sc = cfg.scenario;
  const auto detector = ctx.args.at("detector").get<std::string>();
  const auto clock = ctx.args.at("clock").get<std::string>();
  apply_clock(sc.streams.clock, clock_preset(clock));
  if (detector == "SOTA") {
    apply_detector(sc.streams, sc.correlator, detector_preset("SNSPD"));
    apply_clock(sc.streams.clock, clock_preset("SOTA"));
    sc.streams.bob.set_channel_db(-5.7);
    sc.streams.bob.background_cps = 300.0;
  } else {
    apply_detector(sc.streams, sc.correlator, detector_preset(detector));
  }
  cfg.finalize();
  return cfg;
}

}  // namespace

Outputs cmd_allan(const Context& ctx) {
  const auto& a = ctx.args;
  const int n = a.at("acquisitions").get<int>();
  if (n < 3) throw std::invalid_argument("allan needs at least 3 acquisitions");
  const RunConfig cfg = tracking_config(ctx);
  TrackingOptions opt;
  opt.feedback = a.at("feedback").get<bool>();
  const auto series = continuous_tracking(cfg.scenario, n, cfg.scenario.streams.clock,
                                          RngSeed{ctx.seed}, ctx.jobs, opt);
  const auto max_m = std::min<std::size_t>(a.at("max_m").get<std::size_t>(),
                                           (series.size() - 1) / 2);
  const auto curve = overlapping_adev(series, max_m);
  return {{"offsets.csv", csv([&](std::ostream& o) { io::write_offset_series_csv(o, series); })},
          {"adev.csv", csv([&](std::ostream& o) { io::write_adev_csv(o, curve); })}};
}

Outputs cmd_analytic(const Context& ctx) {
  const auto& a = ctx.args;
  const auto atts = a.at("attenuations_dB").get<std::vector<double>>();
  const auto bgs = a.at("background_cps").get<std::vector<double>>();
  const int order = a.at("order").get<int>();
  const double level = a.at("level").get<double>();
  const int dead_acq = a.at("dead_time_acquisitions").get<int>();

  std::vector<io::AnalyticRow> rows;
  std::ostringstream thr;
  thr << "background_cps,threshold_dB,threshold_closed_form_dB,threshold_root_dB,c2,c1,"
         "eta_dead_A,eta_dead_B\n";
  for (std::size_t ib = 0; ib < bgs.size(); ++ib) {
    Scenario sc = ctx.config.scenario;
    sc.set_background_cps(bgs[ib]);
    const auto [dead_a, dead_b] =
        dead_time_efficiencies(sc, derive_seed(RngSeed{ctx.seed}, {ib}), dead_acq);
    const auto base = analytic_scenario(sc, dead_a, dead_b, order);
    for (double att : atts) {
      auto s = base;
      s.eta_b = db_to_linear(att);
      const double peak = analytic::peak(s).height;
      const double mu = analytic::accidental_mean(s.background_a_cps, s.background_b_cps,
                                                  s.bin_width_ps, s.acquisition_time_s);
      rows.push_back({att, bgs[ib], peak, mu, analytic::prob_success(peak, mu, order)});
    }
    const auto t = analytic::threshold_attenuation(level, bgs[ib], base);
    thr << io::format_number(bgs[ib]) << ',' << io::format_number(to_db(t.eta_b_expanded)) << ','
        << io::format_number(to_db(t.eta_b_closed_form)) << ','
        << io::format_number(t.eta_b_root ? to_db(*t.eta_b_root) : NAN) << ','
        << io::format_number(t.c2) << ',' << io::format_number(t.c1) << ','
        << io::format_number(dead_a) << ',' << io::format_number(dead_b) << '\n';
  }
  return {{"analytic.csv", csv([&](std::ostream& o) { io::write_analytic_csv(o, rows); })},
          {"analytic_threshold.csv", thr.str()}};
}

Outputs cmd_fiber(const Context& ctx) {
  const auto& a = ctx.args;
  Scenario sc = ctx.config.scenario;
  sc.streams.set_heralding(a.at("eta_herald").get<double>());
  links::FiberLink link = ctx.config.fiber.link;
  link.alpha_dB_per_km = a.at("alpha_dB_per_km").get<double>();
  link.background_cps = a.at("background_cps").get<double>();
  const auto points = fiber_success_curve(sc, link, a.at("lengths_km").get<std::vector<double>>(),
                                          a.at("trials").get<int>(), RngSeed{ctx.seed}, ctx.jobs);
  return {{"fiber.csv", csv([&](std::ostream& o) { io::write_fiber_csv(o, points); })}};
}

Outputs cmd_ao(const Context& ctx) {
  const auto zeniths = ctx.args.at("zenith_deg").get<std::vector<double>>();
  const auto& rx = ctx.config.freespace.receiver;
  std::vector<io::FreespaceRow> rows;
  for (double z : zeniths) {
    const auto at = links::at_zenith(rx, z);
    io::FreespaceRow r;
    r.zenith_deg = z;
    r.r0_m = at.r0_m;
    r.greenwood_hz = at.greenwood_hz;
    r.sigma2_tracking = links::residual_error_tracking(at);
    r.sigma2_ao = links::residual_error_ao(at);
    r.eta_tracking = links::coupling_efficiency(r.sigma2_tracking);
    r.eta_ao = links::coupling_efficiency(r.sigma2_ao);
    rows.push_back(r);
  }
  return {{"ao.csv", csv([&](std::ostream& o) { io::write_freespace_csv(o, rows); })}};
}

Outputs cmd_sem(const Context& ctx) {
  const auto& a = ctx.args;
  const auto atts = a.at("attenuations_dB").get<std::vector<double>>();
  const int runs = a.at("runs").get<int>();
  std::vector<io::SemRow> rows;
  json skipped = json::array();
  for (std::size_t i = 0; i < atts.size(); ++i) {
    Scenario sc = ctx.config.scenario;
    sc.set_attenuation_db(atts[i]);
    try {
      rows.push_back({atts[i], sem_sampling(sc, runs, derive_seed(RngSeed{ctx.seed}, {i}), ctx.jobs)});
    } catch (const std::runtime_error& e) {
      skipped.push_back({{"attenuation_dB", atts[i]}, {"reason", e.what()}});
    }
  }
  json fit = {{"points", rows.size()}, {"skipped", skipped}};
  if (!rows.empty()) {
    std::vector<double> n, measured, formula;
    for (const auto& r : rows) {
      n.push_back(r.sample.mean_n_true);
      measured.push_back(r.sample.sem_measured_ps);
      formula.push_back(r.sample.sem_formula_ps);
    }
    const double a_meas = fit_inverse_sqrt(n, measured);
    const double a_form = fit_inverse_sqrt(n, formula);
    fit["a_measured_ps"] = a_meas;
    fit["a_formula_ps"] = a_form;
    fit["ratio"] = a_meas / a_form;
  }
  return {{"sem.csv", csv([&](std::ostream& o) { io::write_sem_csv(o, rows); })},
          {"sem_fit.json", fit.dump(2) + "\n"}};
}

Outputs dispatch(const std::string& command, const Context& ctx) {
  if (command == "simulate") return cmd_simulate(ctx);
  if (command == "sweep") return cmd_sweep(ctx);
  if (command == "allan") return cmd_allan(ctx);
  if (command == "analytic") return cmd_analytic(ctx);
  if (command == "fiber") return cmd_fiber(ctx);
  if (command == "ao") return cmd_ao(ctx);
  if (command == "sem") return cmd_sem(ctx);
  throw std::invalid_argument("unknown command '" + command + "'");
}

json write_run(const std::string& command, const Context& ctx, const Outputs& outputs,
               const fs::path& out_dir, double wall_time_s) {
  fs::create_directories(out_dir);
  json files = json::array();
  for (const auto& [name, contents] : outputs) {
    io::write_file((out_dir / name).string(), contents);
    files.push_back({{"file", name}, {"sha256", io::sha256_hex(contents)}, {"bytes", contents.size()}});
  }
  json manifest{{"tool", "qtt"},
                {"version", version()},
                {"command", command},
                {"args", ctx.args},
                {"seed", ctx.seed},
                {"jobs", ctx.jobs},
                {"config", to_json(ctx.config)},
                {"outputs", files},
                {"wall_time_s", wall_time_s}};
  io::write_file((out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return manifest;
}

namespace {

struct Timed {
  Outputs outputs;
  double seconds = 0.0;
};

Timed timed_dispatch(const std::string& command, const Context& ctx) {
  const auto t0 = std::chrono::steady_clock::now();
  Timed t{dispatch(command, ctx), 0.0};
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return t;
}

// Values that default to the config unless given on the command line.
struct ListOpt {
  std::vector<double> values;
  CLI::Option* opt = nullptr;
  std::vector<double> get(const std::vector<double>& fallback) const {
    return opt && opt->count() ? values : fallback;
  }
};

template <typename T>
struct ScalarOpt {
  T value{};
  CLI::Option* opt = nullptr;
  T get(T fallback) const { return opt && opt->count() ? value : fallback; }
};

ListOpt add_list(CLI::App* app, const std::string& name, const std::string& help) {
  ListOpt l;
  l.opt = app->add_option(name, l.values, help)->delimiter(',');
  return l;
}

int replay(const std::string& manifest_path, const std::string& out_dir, int jobs_override,
           std::ostream& out, std::ostream& err) {
  const json m = json::parse(io::read_file(manifest_path));
  Context ctx;
  ctx.config = parse_config(m.at("config").dump(), manifest_path + ":config");
  ctx.seed = m.at("seed").get<std::uint64_t>();
  ctx.jobs = jobs_override > 0 ? jobs_override : m.at("jobs").get<int>();
  ctx.args = m.at("args");
  const auto command = m.at("command").get<std::string>();
  const auto run = timed_dispatch(command, ctx);
  write_run(command, ctx, run.outputs, out_dir, run.seconds);
  bool all_match = true;
  for (const auto& f : m.at("outputs")) {
    const auto name = f.at("file").get<std::string>();
    const auto it = std::find_if(run.outputs.begin(), run.outputs.end(),
                                 [&](const auto& o) { return o.first == name; });
    const bool match = it != run.outputs.end() && io::sha256_hex(it->second) == f.at("sha256");
    all_match = all_match && match;
    out << (match ? "match    " : "MISMATCH ") << name << '\n';
  }
  if (!all_match) err << "replay: outputs differ from manifest\n";
  return all_match ? kOk : kRuntimeError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantum time transfer simulator and analysis tool", "qtt"};
  app.set_version_flag("--version", version());
  app.require_subcommand(1);

  std::string config_path, preset, out_dir = ".";
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  app.add_option("--config", config_path, "Scenario config (YAML or JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed (default: config seed or 1)");
  app.add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out_dir, "Output directory");
  app.add_option("--preset", preset, "Base scenario: " + [] {
    std::string s;
    for (const auto& n : scenario_preset_names()) s += (s.empty() ? "" : ", ") + n;
    return s;
  }());
  app.fallthrough();

  auto* simulate = app.add_subcommand("simulate", "One acquisition: histogram and offset fit");

  auto* sw = app.add_subcommand("sweep", "Success probability over attenuation x background");
  auto sw_att = add_list(sw, "--attenuations", "Attenuations in dB, comma separated");
  auto sw_bg = add_list(sw, "--backgrounds", "Bob background rates in cps");
  ScalarOpt<int> sw_trials;
  sw_trials.opt = sw->add_option("--trials", sw_trials.value, "Trials per cell");
  ScalarOpt<double> sw_level;
  sw_level.opt = sw->add_option("--level", sw_level.value, "Threshold success level");

  auto* al = app.add_subcommand("allan", "Continuous tracking and overlapping Allan deviation");
  ScalarOpt<int> al_n;
  al_n.opt = al->add_option("--acquisitions", al_n.value, "Number of back-to-back acquisitions");
  std::string al_clock = "perfect", al_det = "SPAD";
  al->add_option("--clock", al_clock, "Clock preset")->check(CLI::IsMember(clock_preset_names()));
  std::vector<std::string> det_names = detector_preset_names();
  det_names.push_back("SOTA");
  al->add_option("--detector", al_det, "Detector preset")->check(CLI::IsMember(det_names));
  ScalarOpt<std::size_t> al_m;
  al_m.opt = al->add_option("--max-m", al_m.value, "Largest averaging factor");
  bool al_feedback = false;
  al->add_flag("--feedback", al_feedback, "Apply offset and drift corrections between windows");

  auto* an = app.add_subcommand("analytic", "Closed-form success probability and thresholds");
  auto an_att = add_list(an, "--attenuations", "Attenuations in dB");
  auto an_bg = add_list(an, "--backgrounds", "Bob background rates in cps");
  ScalarOpt<int> an_order;
  an_order.opt = an->add_option("--order", an_order.value, "Order statistic n");
  ScalarOpt<double> an_level;
  an_level.opt = an->add_option("--level", an_level.value, "Threshold success level");
  int an_dead = 2;
  an->add_option("--dead-time-acquisitions", an_dead, "Simulated acquisitions per dead-time estimate")
      ->check(CLI::PositiveNumber);

  auto* fb = app.add_subcommand("fiber", "Success probability against fiber length");
  auto fb_len = add_list(fb, "--lengths", "Fiber lengths in km");
  ScalarOpt<int> fb_trials;
  fb_trials.opt = fb->add_option("--trials", fb_trials.value, "Trials per length");
  ScalarOpt<double> fb_herald, fb_bg, fb_alpha;
  fb_herald.opt = fb->add_option("--eta-herald", fb_herald.value, "Heralding efficiency");
  fb_bg.opt = fb->add_option("--background-cps", fb_bg.value, "Background rate at Bob");
  fb_alpha.opt = fb->add_option("--alpha-db-per-km", fb_alpha.value, "Fiber loss coefficient");

  auto* ao = app.add_subcommand("ao", "Residual phase error and coupling against zenith angle");
  auto ao_z = add_list(ao, "--zenith", "Zenith angles in degrees");

  auto* sm = app.add_subcommand("sem", "Offset scatter against true coincidences");
  auto sm_att = add_list(sm, "--attenuations", "Attenuations in dB");
  ScalarOpt<int> sm_runs;
  sm_runs.opt = sm->add_option("--runs", sm_runs.value, "Runs per point");

  auto* rp = app.add_subcommand("replay", "Re-run a manifest and compare output digests");
  std::string manifest_path;
  rp->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required()->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::CallForVersion&) {
    out << version() << '\n';
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "qtt: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (rp->parsed()) return replay(manifest_path, out_dir, jobs, out, err);

    Context ctx;
    ctx.jobs = jobs;
    if (!config_path.empty()) {
      std::optional<RunConfig> base;
      if (!preset.empty()) base = scenario_preset(preset);
      ctx.config = load_config(config_path, base ? &*base : nullptr);
    } else {
      ctx.config = scenario_preset(preset.empty() ? "reference" : preset);
    }
    ctx.seed = seed.value_or(ctx.config.seed.value_or(1));
    const auto& c = ctx.config;

    std::string command;
    if (simulate->parsed()) {
      command = "simulate";
    } else if (sw->parsed()) {
      command = "sweep";
      ctx.args = {{"attenuations_dB", sw_att.get(c.sweep.attenuations_dB)},
                  {"background_cps", sw_bg.get(c.sweep.background_cps)},
                  {"trials", sw_trials.get(c.sweep.trials)},
                  {"level", sw_level.get(c.sweep.level)}};
    } else if (al->parsed()) {
      command = "allan";
      ctx.args = {{"acquisitions", al_n.get(c.tracking.acquisitions)},
                  {"clock", al_clock},
                  {"detector", al_det},
                  {"max_m", al_m.get(c.tracking.max_m)},
                  {"feedback", al_feedback || c.tracking.feedback}};
    } else if (an->parsed()) {
      command = "analytic";
      const auto atts = c.analytic.attenuations_dB.empty() ? c.sweep.attenuations_dB
                                                           : c.analytic.attenuations_dB;
      ctx.args = {{"attenuations_dB", an_att.get(atts)},
                  {"background_cps", an_bg.get(c.sweep.background_cps)},
                  {"order", an_order.get(c.analytic.order)},
                  {"level", an_level.get(c.analytic.level)},
                  {"dead_time_acquisitions", an_dead}};
    } else if (fb->parsed()) {
      command = "fiber";
      ctx.args = {{"lengths_km", fb_len.get(c.fiber.lengths_km)},
                  {"trials", fb_trials.get(c.fiber.trials)},
                  {"eta_herald", fb_herald.get(c.scenario.streams.heralding())},
                  {"background_cps", fb_bg.get(c.fiber.link.background_cps)},
                  {"alpha_dB_per_km", fb_alpha.get(c.fiber.link.alpha_dB_per_km)}};
    } else if (ao->parsed()) {
      command = "ao";
      ctx.args = {{"zenith_deg", ao_z.get(c.freespace.zenith_deg)}};
    } else if (sm->parsed()) {
      command = "sem";
      ctx.args = {{"attenuations_dB", sm_att.get(c.sem.attenuations_dB)},
                  {"runs", sm_runs.get(c.sem.runs)}};
    }
    const auto result = timed_dispatch(command, ctx);
    const auto manifest = write_run(command, ctx, result.outputs, out_dir, result.seconds);
    for (const auto& f : manifest.at("outputs"))
      out << f.at("file").get<std::string>() << ' ' << f.at("sha256").get<std::string>() << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    err << "qtt: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "qtt: invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "qtt: " << e.what() << '\n';
    return kRuntimeError;
  }
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace qtt::cli
