#include "qtt/io.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include <openssl/evp.h>

namespace qtt::io {

namespace {

std::string num(double v) { return format_number(v); }

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

void write_histogram_csv(std::ostream& out, const CorrelationHistogram& hist) {
  out << "bin_center_ps,count\n";
  for (std::size_t j = 0; j < hist.bin_count(); ++j)
    out << num(hist.bin_center_ps(j)) << ',' << hist.counts[j] << '\n';
}

CorrelationHistogram read_histogram_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "bin_center_ps,count")
    throw std::runtime_error("histogram CSV: expected header 'bin_center_ps,count'");
  std::vector<double> centers;
  CorrelationHistogram h;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("histogram CSV: malformed row '" + line + "'");
    centers.push_back(std::stod(line.substr(0, comma)));
    h.counts.push_back(std::stoll(line.substr(comma + 1)));
  }
  if (centers.size() < 2) throw std::runtime_error("histogram CSV: need at least two bins");
  const double w = centers[1] - centers[0];
  h.bin_width_ps = static_cast<TimeTag>(std::llround(w));
  h.range.lo = static_cast<TimeTag>(std::llround(centers.front() - 0.5 * w));
  h.range.hi = h.range.lo + h.bin_width_ps * static_cast<TimeTag>(centers.size());
  return h;
}

nlohmann::json to_json(const CorrelationResult& r) {
  const auto& f = r.fit;
  return nlohmann::json{
      {"fit",
       {{"tau_hat_ps", finite_or_null(f.tau_hat_ps)},
        {"sigma_tau_ps", finite_or_null(f.sigma_tau_ps)},
        {"amplitude", finite_or_null(f.amplitude)},
        {"baseline", finite_or_null(f.baseline)},
        {"fit_rmse", finite_or_null(f.fit_rmse)},
        {"converged", f.converged},
        {"iterations", f.iterations},
        {"window_first_bin", f.window_first},
        {"window_last_bin", f.window_last},
        {"failure", f.failure}}},
      {"N_C", finite_or_null(r.n_coincidences)},
      {"N_AC", finite_or_null(r.n_accidentals)},
      {"N_T", finite_or_null(r.n_true)},
      {"sem_ps", finite_or_null(r.sem_ps)},
      {"success", r.success},
      {"diagnostic", r.diagnostic},
  };
}

void write_sweep_csv(std::ostream& out, const SweepGrid& grid) {
  out << "attenuation_dB,background_cps,p_success,mean_N_T\n";
  for (std::size_t ia = 0; ia < grid.attenuations_dB.size(); ++ia)
    for (std::size_t ib = 0; ib < grid.background_cps.size(); ++ib) {
      const auto k = grid.index(ia, ib);
      out << num(grid.attenuations_dB[ia]) << ',' << num(grid.background_cps[ib]) << ','
          << num(grid.success_prob[k]) << ',' << num(grid.mean_n_true[k]) << '\n';
    }
}

void write_threshold_csv(std::ostream& out, const std::vector<ThresholdPoint>& curve) {
  out << "background_cps,threshold_dB\n";
  for (const auto& p : curve)
    out << num(p.background_cps) << ',' << (p.threshold_dB ? num(*p.threshold_dB) : "nan") << '\n';
}

void write_adev_csv(std::ostream& out, const AdevCurve& curve) {
  out << "tau_s,sigma_y\n";
  for (std::size_t i = 0; i < curve.tau_s.size(); ++i)
    out << num(curve.tau_s[i]) << ',' << num(curve.sigma_y[i]) << '\n';
}

void write_offset_series_csv(std::ostream& out, const OffsetSeries& s) {
  out << "t_s,tau_hat_ps,tau_true_ps,drift_eff,correction_ps\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << num(static_cast<double>(i) * s.acquisition_time_s) << ',' << num(s.taus_ps[i]) << ','
        << num(s.true_taus_ps[i]) << ',' << num(s.drift_eff[i]) << ',' << num(s.corrections_ps[i])
        << '\n';
}

void write_fiber_csv(std::ostream& out, const std::vector<FiberPoint>& points) {
  out << "length_km,attenuation_dB,p_success,mean_N_T\n";
  for (const auto& p : points)
    out << num(p.length_km) << ',' << num(p.attenuation_dB) << ',' << num(p.estimate.p_hat) << ','
        << num(p.estimate.mean_n_true) << '\n';
}

void write_sem_csv(std::ostream& out, const std::vector<SemRow>& rows) {
  out << "attenuation_dB,mean_N_T,sem_measured_ps,sem_formula_ps,mean_sigma_ps,runs,successes\n";
  for (const auto& r : rows)
    out << num(r.attenuation_dB) << ',' << num(r.sample.mean_n_true) << ','
        << num(r.sample.sem_measured_ps) << ',' << num(r.sample.sem_formula_ps) << ','
        << num(r.sample.mean_sigma_ps) << ',' << r.sample.runs << ',' << r.sample.successes << '\n';
}

void write_analytic_csv(std::ostream& out, const std::vector<AnalyticRow>& rows) {
  out << "attenuation_dB,background_cps,S_peak,mu_b,p_success\n";
  for (const auto& r : rows)
    out << num(r.attenuation_dB) << ',' << num(r.background_cps) << ',' << num(r.s_peak) << ','
        << num(r.mu_b) << ',' << num(r.p_success) << '\n';
}

void write_freespace_csv(std::ostream& out, const std::vector<FreespaceRow>& rows) {
  out << "zenith_deg,r0_m,greenwood_hz,sigma2_tracking_rad2,sigma2_ao_rad2,eta_tracking,eta_ao\n";
  for (const auto& r : rows)
    out << num(r.zenith_deg) << ',' << num(r.r0_m) << ',' << num(r.greenwood_hz) << ','
        << num(r.sigma2_tracking) << ',' << num(r.sigma2_ao) << ',' << num(r.eta_tracking) << ','
        << num(r.eta_ao) << '\n';
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << contents;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xf];
  }
  return out;
}

}  // namespace qtt::io
