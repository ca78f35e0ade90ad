#include "qtt/timetags.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <random>
#include <stdexcept>
#include <string>

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/exponential_distribution.hpp>
#include <boost/random/geometric_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>

namespace qtt {

namespace {

struct Detection {
  TimeTag t;
  std::int64_t pair;  // -1 for background
};

TimeTag time_of(TimeTag t) { return t; }
TimeTag time_of(const Detection& d) { return d.t; }
TimeTag& time_ref(TimeTag& t) { return t; }
TimeTag& time_ref(Detection& d) { return d.t; }

void require_efficiency(double eta, const char* field) {
  if (!(eta >= 0.0 && eta <= 1.0))
    throw std::invalid_argument(std::string(field) + " must lie in [0, 1], got " +
                                std::to_string(eta));
}

void require_non_negative(double v, const char* field) {
  if (!(v >= 0.0) || !std::isfinite(v))
    throw std::invalid_argument(std::string(field) + " must be finite and >= 0, got " +
                                std::to_string(v));
}

void sort_tags(std::vector<TimeTag>& tags) { std::sort(tags.begin(), tags.end()); }

void sort_tags(std::vector<Detection>& tags) {
  std::sort(tags.begin(), tags.end(),
            [](const Detection& a, const Detection& b) { return a.t < b.t; });
}

// Jitter of a few hundred ps against microsecond spacing leaves the data
// almost sorted; insertion sort handles that in linear time. Pathological
// inputs fall back to a full sort once the move budget is exhausted.
template <typename T>
void restore_order(std::vector<T>& v) {
  std::size_t budget = 8 * v.size() + 64;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (time_of(v[i - 1]) <= time_of(v[i])) continue;
    T x = v[i];
    std::size_t j = i;
    while (j > 0 && time_of(v[j - 1]) > time_of(x)) {
      v[j] = v[j - 1];
      --j;
      if (--budget == 0) {
        v[j] = x;
        sort_tags(v);
        return;
      }
    }
    v[j] = x;
  }
}

template <typename T>
void jitter_in_place(std::vector<T>& v, double sigma_ps, RngSeed seed) {
  if (!(sigma_ps >= 0.0)) throw std::invalid_argument("jitter sigma must be >= 0");
  if (sigma_ps == 0.0 || v.empty()) return;
  Engine eng = make_engine(seed);
  boost::random::normal_distribution<double> normal(0.0, sigma_ps);
  for (auto& e : v) time_ref(e) += round_ps(normal(eng));
  restore_order(v);
}

// Bernoulli thinning. Sparse survival skips ahead with geometric gaps, which
// is the same process as per-element coin flips.
template <typename In, typename Emit>
void thin(const std::vector<In>& in, double eta, RngSeed seed, Emit&& emit) {
  require_efficiency(eta, "eta");
  if (eta == 0.0 || in.empty()) return;
  if (eta == 1.0) {
    for (std::size_t i = 0; i < in.size(); ++i) emit(i);
    return;
  }
  Engine eng = make_engine(seed);
  if (eta < 0.5) {
    // Number of failures before the next success.
    boost::random::geometric_distribution<long long> gap(eta);
    std::size_t i = static_cast<std::size_t>(gap(eng));
    while (i < in.size()) {
      emit(i);
      i += 1 + static_cast<std::size_t>(gap(eng));
    }
  } else {
    boost::random::bernoulli_distribution<double> keep(eta);
    for (std::size_t i = 0; i < in.size(); ++i)
      if (keep(eng)) emit(i);
  }
}

// Homogeneous Poisson process on [0, T_a] from cumulative exponential gaps.
// The count is Poisson(rate * T_a) and the points, given the count, are
// uniform order statistics, so no sort is needed.
std::vector<TimeTag> poisson_process(double rate_cps, double acquisition_time_s, RngSeed seed) {
  std::vector<TimeTag> out;
  if (rate_cps <= 0.0) return out;
  Engine eng = make_engine(seed);
  const double span_ps = seconds_to_ps(acquisition_time_s);
  const double mean = rate_cps * acquisition_time_s;
  out.reserve(static_cast<std::size_t>(mean + 6.0 * std::sqrt(mean) + 16.0));
  boost::random::exponential_distribution<double> gap(1.0);
  const double scale = span_ps / mean;
  double t = 0.0;
  for (;;) {
    t += gap(eng) * scale;
    if (t > span_ps) break;
    out.push_back(round_ps(t));
  }
  return out;
}

// Exactly n sorted uniform points on [0, T_a]: normalized partial sums of
// n + 1 exponential gaps.
std::vector<TimeTag> uniform_order_statistics(std::size_t n, double acquisition_time_s,
                                              RngSeed seed) {
  Engine eng = make_engine(seed);
  boost::random::exponential_distribution<double> gap(1.0);
  std::vector<double> sums(n);
  double s = 0.0;
  for (auto& v : sums) v = (s += gap(eng));
  const double total = s + gap(eng);
  const double scale = seconds_to_ps(acquisition_time_s) / total;
  std::vector<TimeTag> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = round_ps(sums[i] * scale);
  return out;
}

template <typename T>
std::vector<T> dead_time_filter(const std::vector<T>& in, double dead_time_ps,
                                DeadTimeModel model) {
  require_non_negative(dead_time_ps, "dead_time_ps");
  if (dead_time_ps == 0.0 || in.empty()) return in;
  std::vector<T> out;
  out.reserve(in.size());
  out.push_back(in.front());
  TimeTag reference = time_of(in.front());
  for (std::size_t i = 1; i < in.size(); ++i) {
    const TimeTag t = time_of(in[i]);
    const bool alive = static_cast<double>(t - reference) >= dead_time_ps;
    if (alive) out.push_back(in[i]);
    // Paralyzable detectors restart the dead window on every arrival.
    if (model == DeadTimeModel::paralyzable || alive) reference = t;
  }
  return out;
}

TimeTag affine_map(TimeTag t, double offset_ps, double drift) {
  const double shifted = static_cast<double>(t) + offset_ps;
  return t + round_ps(offset_ps + shifted * drift);
}

}  // namespace

bool TimeTagSeries::is_sorted() const { return std::is_sorted(tags.begin(), tags.end()); }

double ChannelParams::channel_efficiency() const {
  return eta_spec * eta_det * eta_rec * eta_trans;
}

double ChannelParams::detection_efficiency() const { return channel_efficiency() * eta_herald; }

double ChannelParams::jitter_ps() const {
  return std::sqrt(jitter_det_ps * jitter_det_ps + jitter_tt_ps * jitter_tt_ps);
}

void ChannelParams::set_channel_db(double channel_db) {
  if (!(channel_db <= 0.0)) throw std::invalid_argument("channel loss in dB must be <= 0");
  eta_spec = eta_det = eta_rec = 1.0;
  eta_trans = db_to_linear(channel_db);
}

void ChannelParams::validate() const {
  require_efficiency(eta_spec, "eta_spec");
  require_efficiency(eta_det, "eta_det");
  require_efficiency(eta_rec, "eta_rec");
  require_efficiency(eta_trans, "eta_trans");
  require_efficiency(eta_herald, "eta_herald");
  require_non_negative(background_cps, "background_cps");
  require_non_negative(dead_time_ps, "dead_time_ps");
  require_non_negative(jitter_det_ps, "jitter_det_ps");
  require_non_negative(jitter_tt_ps, "jitter_tt_ps");
}

void ClockModel::validate() const {
  if (!std::isfinite(offset_ps) || !std::isfinite(drift))
    throw std::invalid_argument("clock offset and drift must be finite");
  require_non_negative(freq_jitter, "freq_jitter");
}

void StreamConfig::set_heralding(double eta_herald) {
  alice.eta_herald = eta_herald;
  bob.eta_herald = eta_herald;
}

void StreamConfig::validate() const {
  if (!(source.pair_rate_cps > 0.0) || !std::isfinite(source.pair_rate_cps))
    throw std::invalid_argument("pair_rate_cps must be > 0");
  if (!(acquisition_time_s > 0.0) || !std::isfinite(acquisition_time_s))
    throw std::invalid_argument("acquisition_time_s must be > 0");
  alice.validate();
  bob.validate();
  clock.validate();
}

double GroundTruth::alice_dead_time_survival() const {
  return alice_before_dead_time == 0
             ? 1.0
             : static_cast<double>(alice_after_dead_time) / alice_before_dead_time;
}

double GroundTruth::bob_dead_time_survival() const {
  return bob_before_dead_time == 0
             ? 1.0
             : static_cast<double>(bob_after_dead_time) / bob_before_dead_time;
}

std::pair<TimeTagSeries, TimeTagSeries> generate_pair_stream(double pair_rate_cps,
                                                             double acquisition_time_s,
                                                             RngSeed seed, bool fixed_count) {
  if (!(pair_rate_cps > 0.0)) throw std::invalid_argument("pair rate must be > 0");
  if (!(acquisition_time_s > 0.0)) throw std::invalid_argument("acquisition time must be > 0");
  TimeTagSeries series;
  series.acquisition_time_s = acquisition_time_s;
  if (fixed_count) {
    const auto n = static_cast<std::size_t>(std::llround(pair_rate_cps * acquisition_time_s));
    series.tags = uniform_order_statistics(n, acquisition_time_s, seed);
  } else {
    series.tags = poisson_process(pair_rate_cps, acquisition_time_s, seed);
  }
  TimeTagSeries copy = series;
  return {std::move(copy), std::move(series)};
}

TimeTagSeries apply_jitter(const TimeTagSeries& series, double sigma_ps, RngSeed seed) {
  TimeTagSeries out = series;
  jitter_in_place(out.tags, sigma_ps, seed);
  return out;
}

TimeTagSeries apply_loss(const TimeTagSeries& series, double eta, RngSeed seed) {
  TimeTagSeries out;
  out.acquisition_time_s = series.acquisition_time_s;
  out.tags.reserve(static_cast<std::size_t>(series.size() * std::clamp(eta, 0.0, 1.0) * 1.05) + 16);
  thin(series.tags, eta, seed, [&](std::size_t i) { out.tags.push_back(series.tags[i]); });
  return out;
}

TimeTagSeries inject_background(const TimeTagSeries& series, double rate_cps,
                                double acquisition_time_s, RngSeed seed) {
  require_non_negative(rate_cps, "background rate");
  if (rate_cps == 0.0) return series;
  const auto noise = poisson_process(rate_cps, acquisition_time_s, seed);
  TimeTagSeries out;
  out.acquisition_time_s = series.acquisition_time_s;
  out.tags.resize(series.size() + noise.size());
  std::merge(series.tags.begin(), series.tags.end(), noise.begin(), noise.end(), out.tags.begin());
  return out;
}

TimeTagSeries apply_dead_time(const TimeTagSeries& series, double dead_time_ps,
                              DeadTimeModel model) {
  return TimeTagSeries{dead_time_filter(series.tags, dead_time_ps, model),
                       series.acquisition_time_s};
}

TimeTagSeries apply_affine(const TimeTagSeries& series, double offset_ps, double drift) {
  if (!std::isfinite(offset_ps) || !std::isfinite(drift))
    throw std::invalid_argument("affine map parameters must be finite");
  TimeTagSeries out = series;
  if (offset_ps == 0.0 && drift == 0.0) return out;
  for (auto& t : out.tags) t = affine_map(t, offset_ps, drift);
  return out;
}

double draw_effective_drift(const ClockModel& clock, RngSeed seed) {
  clock.validate();
  if (clock.freq_jitter == 0.0) return clock.drift;
  Engine eng = make_engine(seed);
  boost::random::normal_distribution<double> normal(clock.drift, clock.freq_jitter);
  return normal(eng);
}

TimeTagSeries apply_clock(const TimeTagSeries& series, const ClockModel& clock, RngSeed seed) {
  return apply_affine(series, clock.offset_ps, draw_effective_drift(clock, seed));
}

SimulatedStreams build_bob_stream(const StreamConfig& config, RngSeed seed,
                                  BuildOptions options) {
  config.validate();
  return build_bob_stream(config, seed,
                          draw_effective_drift(config.clock, derive_seed(seed, "bob.clock")),
                          options);
}

SimulatedStreams build_bob_stream(const StreamConfig& config, RngSeed seed, double drift_eff,
                                  BuildOptions options) {
  config.validate();
  const double t_a = config.acquisition_time_s;

  const RngSeed pair_seed = derive_seed(seed, "pairs");
  TimeTagSeries pairs;
  pairs.tags = config.source.fixed_count
                   ? uniform_order_statistics(static_cast<std::size_t>(std::llround(
                                                  config.source.pair_rate_cps * t_a)),
                                              t_a, pair_seed)
                   : poisson_process(config.source.pair_rate_cps, t_a, pair_seed);

  GroundTruth truth;
  truth.pairs_generated = pairs.size();

  auto detect = [&](const ChannelParams& rx, std::string_view party) {
    std::vector<Detection> out;
    const std::string p(party);
    thin(pairs.tags, rx.detection_efficiency(), derive_seed(seed, p + ".loss"),
         [&](std::size_t i) {
           out.push_back(Detection{pairs.tags[i], static_cast<std::int64_t>(i)});
         });
    jitter_in_place(out, rx.jitter_ps(), derive_seed(seed, p + ".jitter"));
    const auto noise =
        poisson_process(rx.background_cps, t_a, derive_seed(seed, p + ".background"));
    if (!noise.empty()) {
      std::vector<Detection> merged;
      merged.reserve(out.size() + noise.size());
      auto it = out.begin();
      for (TimeTag t : noise) {
        while (it != out.end() && it->t <= t) merged.push_back(*it++);
        merged.push_back(Detection{t, -1});
      }
      merged.insert(merged.end(), it, out.end());
      out = std::move(merged);
    }
    return out;
  };

  auto alice = detect(config.alice, "alice");
  auto bob = detect(config.bob, "bob");

  truth.alice_before_dead_time = alice.size();
  truth.bob_before_dead_time = bob.size();
  alice = dead_time_filter(alice, config.alice.dead_time_ps, config.dead_time_model);
  bob = dead_time_filter(bob, config.bob.dead_time_ps, config.dead_time_model);
  truth.alice_after_dead_time = alice.size();
  truth.bob_after_dead_time = bob.size();

  {
    std::vector<bool> seen(pairs.size(), false);
    for (const auto& d : alice)
      if (d.pair >= 0) seen[static_cast<std::size_t>(d.pair)] = true;
    for (const auto& d : bob)
      if (d.pair >= 0 && seen[static_cast<std::size_t>(d.pair)]) ++truth.true_coincidences;
  }

  truth.clock_offset_ps = config.clock.offset_ps;
  truth.drift_eff = drift_eff;
  truth.expected_tau_ps =
      0.0 - config.clock.offset_ps - (config.clock.offset_ps + 0.5 * seconds_to_ps(t_a)) * drift_eff;

  SimulatedStreams out;
  out.alice.acquisition_time_s = t_a;
  out.bob.acquisition_time_s = t_a;
  out.alice.tags.reserve(alice.size());
  out.bob.tags.reserve(bob.size());
  for (const auto& d : alice) out.alice.tags.push_back(d.t);
  for (const auto& d : bob) out.bob.tags.push_back(affine_map(d.t, config.clock.offset_ps, drift_eff));
  if (options.keep_pair_ids) {
    truth.alice_pair_ids.reserve(alice.size());
    truth.bob_pair_ids.reserve(bob.size());
    for (const auto& d : alice) truth.alice_pair_ids.push_back(d.pair);
    for (const auto& d : bob) truth.bob_pair_ids.push_back(d.pair);
  }
  out.truth = std::move(truth);
  return out;
}

}  // namespace qtt
