#include "qtt/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

namespace qtt {

ConfigError::ConfigError(std::string field, int line, const std::string& message)
    : std::runtime_error((line > 0 ? "line " + std::to_string(line) + ": " : std::string()) +
                         (field.empty() ? std::string() : field + ": ") + message),
      field_(std::move(field)),
      line_(line) {}

namespace {

const std::map<std::string, DetectorPreset>& detectors() {
  static const std::map<std::string, DetectorPreset> m{
      {"SPAD", {"SPAD", 287.0, 4.0, 84'000.0, 100}},
      {"SNSPD", {"SNSPD", 50.0, 4.0, 50'000.0, 10}},
  };
  return m;
}

const std::map<std::string, ClockPreset>& clocks() {
  static const std::map<std::string, ClockPreset> m{
      {"RbFS", {"RbFS", 3.4e-10, 3e-12}},
      {"CsFS", {"CsFS", 3.4e-10, 5e-13}},
      {"perfect", {"perfect", 0.0, 0.0}},
      {"SOTA", {"SOTA", 3e-17, 2e-16}},
  };
  return m;
}

template <typename Map>
std::vector<std::string> keys_of(const Map& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

int line_of(const YAML::Node& n) {
  const auto mark = n.Mark();
  return mark.line >= 0 ? mark.line + 1 : 0;
}

// A YAML mapping whose keys are consumed one by one; leftovers are errors.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsMap()) throw ConfigError(path_, line_of(node_), "expected a mapping");
  }

  bool has(const std::string& key) const { return node_ && node_[key]; }
  std::string field(const std::string& key) const {
    if (key.empty()) return path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  YAML::Node raw(const std::string& key) {
    used_.insert(key);
    return node_ ? node_[key] : YAML::Node();
  }

  template <typename T>
  bool read(const std::string& key, T& out) {
    if (!has(key)) return false;
    const YAML::Node n = raw(key);
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key), line_of(n), "expected " + type_name<T>());
    }
    return true;
  }

  template <typename T>
  T require(const std::string& key) {
    T v{};
    if (!read(key, v)) throw ConfigError(field(key), line_of(node_), "missing required field");
    return v;
  }

  bool read_list(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return false;
    const YAML::Node n = raw(key);
    if (!n.IsSequence()) throw ConfigError(field(key), line_of(n), "expected a list of numbers");
    std::vector<double> v;
    for (const auto& e : n) {
      try {
        v.push_back(e.as<double>());
      } catch (const YAML::Exception&) {
        throw ConfigError(field(key), line_of(e), "expected a number");
      }
    }
    if (v.empty()) throw ConfigError(field(key), line_of(n), "list must be non-empty");
    out = std::move(v);
    return true;
  }

  Section child(const std::string& key) { return Section(raw(key), field(key)); }

  int line(const std::string& key) const { return has(key) ? line_of(node_[key]) : line_of(node_); }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError(field(key), line_of(kv.first), "unknown key");
    }
  }

 private:
  template <typename T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else return "a number";
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> used_;
};

// Wraps value checks so they report the key and line.
template <typename F>
void checked(Section& s, const std::string& key, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.field(key), s.line(key), e.what());
  }
}

void read_efficiency(Section& s, const std::string& name, double& eta) {
  double v = 0.0;
  if (s.read(name, v)) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(s.field(name), s.line(name), "must lie in [0, 1]");
    eta = v;
  }
  if (s.read(name + "_dB", v)) {
    if (s.has(name)) throw ConfigError(s.field(name + "_dB"), s.line(name + "_dB"), "conflicts with " + name);
    if (!(v <= 0.0)) throw ConfigError(s.field(name + "_dB"), s.line(name + "_dB"), "dB values must be <= 0");
    eta = db_to_linear(v);
  }
}

void read_channel(Section s, ChannelParams& ch, bool require_loss, bool require_background) {
  std::string det;
  if (s.read("detector", det)) {
    const auto it = detectors().find(det);
    if (it == detectors().end())
      throw ConfigError(s.field("detector"), s.line("detector"),
                        "unknown detector preset '" + det + "' (valid: " + join(keys_of(detectors())) + ")");
    ch.jitter_det_ps = it->second.jitter_det_ps;
    ch.jitter_tt_ps = it->second.jitter_tt_ps;
    ch.dead_time_ps = it->second.dead_time_ps;
  }
  const bool lumped = s.has("channel_dB");
  const bool chain = s.has("eta_spec") || s.has("eta_det") || s.has("eta_rec") || s.has("eta_trans") ||
                     s.has("eta_spec_dB") || s.has("eta_det_dB") || s.has("eta_rec_dB") || s.has("eta_trans_dB");
  if (lumped && chain)
    throw ConfigError(s.field("channel_dB"), s.line("channel_dB"),
                      "channel_dB replaces the eta_* chain; give one or the other");
  if (require_loss && !lumped && !chain)
    throw ConfigError(s.field("channel_dB"), s.line(""), "missing required field (or eta_* chain)");
  if (lumped) {
    const double db = s.require<double>("channel_dB");
    checked(s, "channel_dB", [&] { ch.set_channel_db(db); });
  }
  read_efficiency(s, "eta_spec", ch.eta_spec);
  read_efficiency(s, "eta_det", ch.eta_det);
  read_efficiency(s, "eta_rec", ch.eta_rec);
  read_efficiency(s, "eta_trans", ch.eta_trans);
  if (require_background && !s.has("background_cps"))
    throw ConfigError(s.field("background_cps"), s.line(""), "missing required field");
  s.read("background_cps", ch.background_cps);
  double ns = 0.0;
  if (s.read("dead_time_ns", ns)) ch.dead_time_ps = ns * kPsPerNs;
  if (s.read("dead_time_ps", ch.dead_time_ps) && s.has("dead_time_ns"))
    throw ConfigError(s.field("dead_time_ps"), s.line("dead_time_ps"), "conflicts with dead_time_ns");
  s.read("jitter_det_ps", ch.jitter_det_ps);
  s.read("jitter_tt_ps", ch.jitter_tt_ps);
  try {
    ch.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(s.field(""), s.line(""), e.what());
  }
  s.finish();
}

void read_clock(Section s, ClockModel& clock) {
  std::string preset;
  if (s.read("preset", preset)) {
    const auto it = clocks().find(preset);
    if (it == clocks().end())
      throw ConfigError(s.field("preset"), s.line("preset"),
                        "unknown clock preset '" + preset + "' (valid: " + join(keys_of(clocks())) + ")");
    apply_clock(clock, it->second);
  }
  s.read("offset_ps", clock.offset_ps);
  s.read("drift", clock.drift);
  s.read("freq_jitter", clock.freq_jitter);
  checked(s, "freq_jitter", [&] { clock.validate(); });
  s.finish();
}

void read_correlator(Section s, CorrelatorParams& c, std::optional<double>& expected_sigma) {
  s.read("bin_width_ps", c.bin_width_ps);
  s.read("range_lo_ps", c.range.lo);
  s.read("range_hi_ps", c.range.hi);
  double sigma = 0.0;
  if (s.read("expected_sigma_ps", sigma)) expected_sigma = sigma;
  s.read("min_width_factor", c.min_width_factor);
  s.read("max_width_factor", c.max_width_factor);
  s.read("min_height_sigmas", c.min_height_sigmas);
  s.read("coincidence_sigmas", c.coincidence_sigmas);
  s.read("window_sigmas", c.fit.window_sigmas);
  s.read("max_iterations", c.fit.max_iterations);
  s.read("max_window_expansions", c.fit.max_window_expansions);
  s.read("partitions", c.partitions);
  s.finish();
}

void require_positive_int(Section& s, const std::string& key, int v) {
  if (v < 1) throw ConfigError(s.field(key), s.line(key), "must be >= 1");
}

}  // namespace

const DetectorPreset& detector_preset(const std::string& name) {
  const auto it = detectors().find(name);
  if (it == detectors().end())
    throw ConfigError("detector", 0,
                      "unknown detector preset '" + name + "' (valid: " + join(detector_preset_names()) + ")");
  return it->second;
}

const ClockPreset& clock_preset(const std::string& name) {
  const auto it = clocks().find(name);
  if (it == clocks().end())
    throw ConfigError("clock", 0,
                      "unknown clock preset '" + name + "' (valid: " + join(clock_preset_names()) + ")");
  return it->second;
}

std::vector<std::string> detector_preset_names() { return keys_of(detectors()); }
std::vector<std::string> clock_preset_names() { return keys_of(clocks()); }
std::vector<std::string> scenario_preset_names() { return {"daytime", "nighttime", "reference", "sota"}; }

void apply_detector(StreamConfig& streams, CorrelatorParams& correlator, const DetectorPreset& d) {
  for (ChannelParams* ch : {&streams.alice, &streams.bob}) {
    ch->jitter_det_ps = d.jitter_det_ps;
    ch->jitter_tt_ps = d.jitter_tt_ps;
    ch->dead_time_ps = d.dead_time_ps;
  }
  correlator.bin_width_ps = d.bin_width_ps;
}

void apply_clock(ClockModel& clock, const ClockPreset& c) {
  clock.drift = c.drift;
  clock.freq_jitter = c.freq_jitter;
}

void RunConfig::finalize() {
  scenario.correlator.expected_sigma_ps =
      expected_sigma_ps ? *expected_sigma_ps : system_jitter_ps(scenario.streams);
  scenario.validate();
}

RunConfig scenario_preset(const std::string& name) {
  RunConfig c;
  auto& st = c.scenario.streams;
  st.source.pair_rate_cps = 2.0e6;
  st.acquisition_time_s = 1.0;
  st.alice.eta_spec = 0.9;
  st.alice.eta_det = 0.6;
  st.bob.set_channel_db(-23.0);
  st.set_heralding(0.4);
  apply_detector(st, c.scenario.correlator, detector_preset("SPAD"));
  apply_clock(st.clock, clock_preset("perfect"));
  if (name == "reference") {
    st.bob.background_cps = 9.0e5;
  } else if (name == "daytime") {
    st.bob.background_cps = 2.14e6;
  } else if (name == "nighttime") {
    st.bob.background_cps = 1.0e5;
  } else if (name == "sota") {
    // Benign channel and SOTA clocks; detector jitter is not specified for
    // this bound, SNSPD values are used.
    apply_detector(st, c.scenario.correlator, detector_preset("SNSPD"));
    apply_clock(st.clock, clock_preset("SOTA"));
    st.bob.set_channel_db(-5.7);
    st.bob.background_cps = 300.0;
  } else {
    throw ConfigError("preset", 0,
                      "unknown scenario preset '" + name + "' (valid: " + join(scenario_preset_names()) + ")");
  }
  c.finalize();
  return c;
}

RunConfig parse_config(const std::string& text, const std::string& source_name) {
  return parse_config(text, source_name, nullptr);
}

RunConfig parse_config(const std::string& text, const std::string& source_name,
                       const RunConfig* base) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError("", e.mark.line + 1, source_name + ": YAML syntax error: " + e.msg);
  }
  if (!root || root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  Section top(root, "");

  RunConfig c;
  std::string preset;
  const bool has_preset = top.read("preset", preset);
  if (has_preset) {
    try {
      c = scenario_preset(preset);
    } catch (const ConfigError& e) {
      throw ConfigError("preset", top.line("preset"), e.what());
    }
  } else if (base) {
    c = *base;
  }
  auto& st = c.scenario.streams;
  const bool required = !has_preset && !base;

  std::uint64_t seed = 0;
  if (top.read("seed", seed)) c.seed = seed;

  std::string det;
  if (top.read("detector", det)) {
    if (!detectors().count(det))
      throw ConfigError("detector", top.line("detector"),
                        "unknown detector preset '" + det + "' (valid: " + join(detector_preset_names()) + ")");
    apply_detector(st, c.scenario.correlator, detector_preset(det));
  }

  {
    Section s = top.child("source");
    if (required) s.require<double>("pair_rate_cps");
    s.read("pair_rate_cps", st.source.pair_rate_cps);
    s.read("fixed_count", st.source.fixed_count);
    s.finish();
  }
  if (required) top.require<double>("acquisition_time_s");
  top.read("acquisition_time_s", st.acquisition_time_s);
  double herald = 0.0;
  if (required) top.require<double>("eta_herald");
  if (top.read("eta_herald", herald)) {
    if (!(herald >= 0.0 && herald <= 1.0))
      throw ConfigError("eta_herald", top.line("eta_herald"), "must lie in [0, 1]");
    st.set_heralding(herald);
  }
  if (required && !top.has("bob")) throw ConfigError("bob", 0, "missing required section");
  read_channel(top.child("alice"), st.alice, false, false);
  read_channel(top.child("bob"), st.bob, required, required);
  st.set_heralding(st.bob.eta_herald);
  read_clock(top.child("clock"), st.clock);

  std::string model;
  if (top.read("dead_time_model", model)) {
    if (model == "paralyzable") st.dead_time_model = DeadTimeModel::paralyzable;
    else if (model == "nonparalyzable") st.dead_time_model = DeadTimeModel::nonparalyzable;
    else
      throw ConfigError("dead_time_model", top.line("dead_time_model"),
                        "expected paralyzable or nonparalyzable");
  }
  read_correlator(top.child("correlator"), c.scenario.correlator, c.expected_sigma_ps);
  top.read("success_tolerance_ps", c.scenario.success_tolerance_ps);

  {
    Section s = top.child("sweep");
    s.read_list("attenuations_dB", c.sweep.attenuations_dB);
    s.read_list("background_cps", c.sweep.background_cps);
    s.read("trials", c.sweep.trials);
    require_positive_int(s, "trials", c.sweep.trials);
    s.read("level", c.sweep.level);
    s.finish();
  }
  {
    Section s = top.child("sem");
    s.read_list("attenuations_dB", c.sem.attenuations_dB);
    s.read("runs", c.sem.runs);
    require_positive_int(s, "runs", c.sem.runs);
    s.finish();
  }
  {
    Section s = top.child("tracking");
    s.read("acquisitions", c.tracking.acquisitions);
    s.read("max_m", c.tracking.max_m);
    s.read("feedback", c.tracking.feedback);
    s.finish();
  }
  {
    Section s = top.child("fiber");
    s.read("alpha_dB_per_km", c.fiber.link.alpha_dB_per_km);
    s.read("background_cps", c.fiber.link.background_cps);
    s.read_list("lengths_km", c.fiber.lengths_km);
    s.read("trials", c.fiber.trials);
    require_positive_int(s, "trials", c.fiber.trials);
    checked(s, "alpha_dB_per_km", [&] { c.fiber.link.validate(); });
    s.finish();
  }
  {
    Section s = top.child("analytic");
    s.read("order", c.analytic.order);
    require_positive_int(s, "order", c.analytic.order);
    s.read_list("attenuations_dB", c.analytic.attenuations_dB);
    s.read("level", c.analytic.level);
    s.finish();
  }
  {
    Section s = top.child("freespace");
    auto& rx = c.freespace.receiver;
    s.read("aperture_m", rx.aperture_m);
    s.read("r0_m", rx.r0_m);
    s.read("tracking_greenwood_hz", rx.tracking_greenwood_hz);
    s.read("tracking_bandwidth_hz", rx.tracking_bandwidth_hz);
    s.read("greenwood_hz", rx.greenwood_hz);
    s.read("ao_bandwidth_hz", rx.ao_bandwidth_hz);
    s.read("actuators", rx.actuators);
    s.read("fov_multiplier", rx.fov_multiplier);
    s.read_list("zenith_deg", c.freespace.zenith_deg);
    checked(s, "aperture_m", [&] { rx.validate(); });
    s.finish();
  }
  top.finish();

  try {
    c.finalize();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", 0, e.what());
  }
  return c;
}

RunConfig load_config(const std::string& path, const RunConfig* base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("", 0, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path, base);
}

nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& st = c.scenario.streams;
  auto channel = [](const ChannelParams& ch) {
    return json{{"eta_spec", ch.eta_spec},         {"eta_det", ch.eta_det},
                {"eta_rec", ch.eta_rec},           {"eta_trans", ch.eta_trans},
                {"background_cps", ch.background_cps}, {"dead_time_ps", ch.dead_time_ps},
                {"jitter_det_ps", ch.jitter_det_ps},   {"jitter_tt_ps", ch.jitter_tt_ps}};
  };
  const auto& cp = c.scenario.correlator;
  json corr{{"bin_width_ps", cp.bin_width_ps},
            {"range_lo_ps", cp.range.lo},
            {"range_hi_ps", cp.range.hi},
            {"min_width_factor", cp.min_width_factor},
            {"max_width_factor", cp.max_width_factor},
            {"min_height_sigmas", cp.min_height_sigmas},
            {"coincidence_sigmas", cp.coincidence_sigmas},
            {"window_sigmas", cp.fit.window_sigmas},
            {"max_iterations", cp.fit.max_iterations},
            {"max_window_expansions", cp.fit.max_window_expansions},
            {"partitions", cp.partitions}};
  if (c.expected_sigma_ps) corr["expected_sigma_ps"] = *c.expected_sigma_ps;
  const auto& rx = c.freespace.receiver;
  json j{
      {"source", {{"pair_rate_cps", st.source.pair_rate_cps}, {"fixed_count", st.source.fixed_count}}},
      {"acquisition_time_s", st.acquisition_time_s},
      {"eta_herald", st.heralding()},
      {"alice", channel(st.alice)},
      {"bob", channel(st.bob)},
      {"clock",
       {{"offset_ps", st.clock.offset_ps}, {"drift", st.clock.drift}, {"freq_jitter", st.clock.freq_jitter}}},
      {"dead_time_model",
       st.dead_time_model == DeadTimeModel::paralyzable ? "paralyzable" : "nonparalyzable"},
      {"correlator", corr},
      {"success_tolerance_ps", c.scenario.success_tolerance_ps},
      {"sweep",
       {{"attenuations_dB", c.sweep.attenuations_dB},
        {"background_cps", c.sweep.background_cps},
        {"trials", c.sweep.trials},
        {"level", c.sweep.level}}},
      {"sem", {{"attenuations_dB", c.sem.attenuations_dB}, {"runs", c.sem.runs}}},
      {"tracking",
       {{"acquisitions", c.tracking.acquisitions},
        {"max_m", c.tracking.max_m},
        {"feedback", c.tracking.feedback}}},
      {"fiber",
       {{"alpha_dB_per_km", c.fiber.link.alpha_dB_per_km},
        {"background_cps", c.fiber.link.background_cps},
        {"lengths_km", c.fiber.lengths_km},
        {"trials", c.fiber.trials}}},
      {"analytic", {{"order", c.analytic.order}, {"level", c.analytic.level}}},
      {"freespace",
       {{"aperture_m", rx.aperture_m},
        {"r0_m", rx.r0_m},
        {"tracking_greenwood_hz", rx.tracking_greenwood_hz},
        {"tracking_bandwidth_hz", rx.tracking_bandwidth_hz},
        {"greenwood_hz", rx.greenwood_hz},
        {"ao_bandwidth_hz", rx.ao_bandwidth_hz},
        {"actuators", rx.actuators},
        {"fov_multiplier", rx.fov_multiplier},
        {"zenith_deg", c.freespace.zenith_deg}}},
  };
  if (!c.analytic.attenuations_dB.empty())
    j["analytic"]["attenuations_dB"] = c.analytic.attenuations_dB;
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

}  // namespace qtt
