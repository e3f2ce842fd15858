// Envelope order spectrum pipeline and bearing fault-order arithmetic.
#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bxai/io.hpp"

namespace bxai {

inline constexpr double kPi = 3.14159265358979323846264338327950288;

enum class HealthClass : std::uint8_t { healthy = 0, inner_race = 1, outer_race = 2 };
inline constexpr int kNumClasses = 3;

inline const char* to_string(HealthClass c) {
  switch (c) {
    case HealthClass::healthy: return "healthy";
    case HealthClass::inner_race: return "inner_race";
    case HealthClass::outer_race: return "outer_race";
  }
  return "?";
}

inline HealthClass health_class_from_string(const std::string& s) {
  if (s == "healthy") return HealthClass::healthy;
  if (s == "inner_race") return HealthClass::inner_race;
  if (s == "outer_race") return HealthClass::outer_race;
  throw std::invalid_argument("unknown health class: " + s);
}

struct BearingGeometry {
  int n_rollers = 8;
  double inner_diameter_d = 1.0;
  double outer_diameter_D = 4.0;
  double load_angle_phi = 0.0;  // radians
  double shaft_freq_fr = 25.0;  // Hz

  void validate() const {
    if (n_rollers < 1) throw std::invalid_argument("n_rollers must be >= 1");
    if (!(inner_diameter_d > 0.0) || !(inner_diameter_d < outer_diameter_D))
      throw std::invalid_argument("require 0 < d < D");
    if (!(shaft_freq_fr > 0.0)) throw std::invalid_argument("shaft_freq_fr must be > 0");
  }
};

struct FaultOrders {
  double bpfo_order = 0.0;
  double bpfi_order = 0.0;
};

// Dimensionless ball-pass orders: (n/2)(1 -/+ (d/D) cos phi).
inline FaultOrders compute_fault_orders(const BearingGeometry& geom) {
  geom.validate();
  const double ratio = geom.inner_diameter_d / geom.outer_diameter_D;
  const double c = std::cos(geom.load_angle_phi);
  const double half_n = 0.5 * static_cast<double>(geom.n_rollers);
  return {half_n * (1.0 - ratio * c), half_n * (1.0 + ratio * c)};
}

struct OrderGrid {
  double order_min = 0.0;
  double order_max = 30.0;
  std::uint32_t n_bins = 1536;

  double bin_width() const { return (order_max - order_min) / n_bins; }
  double bin_center(std::uint32_t i) const {
    return order_min + (static_cast<double>(i) + 0.5) * bin_width();
  }
  bool operator==(const OrderGrid&) const = default;

  void validate() const {
    if (n_bins == 0 || !(order_max > order_min))
      throw std::invalid_argument("invalid order grid");
  }
};

struct EnvelopeSpectrum {
  std::vector<float> amplitudes;  // length grid.n_bins, all >= 0
  OrderGrid grid;
  HealthClass label = HealthClass::healthy;
  std::uint32_t sample_id = 0;
  double shaft_freq_fr = 0.0;
};

struct SubBands {
  // Three [lo, hi] intervals in order units, centered at f_c, 2 f_c, 3 f_c.
  std::array<std::pair<double, double>, 3> bands;
};

inline SubBands make_sub_bands(double fault_order, double epsilon,
                               double order_max = 30.0) {
  if (!(fault_order > 0.0)) throw std::invalid_argument("fault_order must be > 0");
  if (!(epsilon > 0.0) || epsilon > 0.2)
    throw std::invalid_argument("epsilon must be in (0, 0.2]");
  if (3.0 * fault_order * (1.0 + epsilon) > order_max)
    throw std::invalid_argument("sub-bands exceed order_max");
  SubBands sb;
  for (int h = 0; h < 3; ++h) {
    const double fc = (h + 1) * fault_order;
    sb.bands[h] = {fc * (1.0 - epsilon), fc * (1.0 + epsilon)};
  }
  return sb;
}

// Sorted, de-duplicated indices of bins whose centers fall inside any band.
inline std::vector<std::uint32_t> band_indices(const SubBands& bands,
                                               const OrderGrid& grid) {
  grid.validate();
  std::vector<std::uint32_t> idx;
  for (std::uint32_t i = 0; i < grid.n_bins; ++i) {
    const double c = grid.bin_center(i);
    for (const auto& [lo, hi] : bands.bands) {
      if (lo < grid.order_min || hi > grid.order_max)
        throw std::invalid_argument("band outside grid range");
      if (c >= lo && c <= hi) {
        idx.push_back(i);
        break;
      }
    }
  }
  if (idx.empty())
    throw std::runtime_error("no bin centers inside sub-bands; grid too coarse");
  return idx;
}

namespace detail {

// FFTW planner is not thread-safe; execution of a ready plan is.
inline std::mutex& fftw_plan_mutex() {
  static std::mutex m;
  return m;
}

inline void fft_inplace(std::vector<std::complex<double>>& data, int sign) {
  const int n = static_cast<int>(data.size());
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    plan = fftw_plan_dft_1d(n, buf, buf, sign, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard<std::mutex> lock(fftw_plan_mutex());
    fftw_destroy_plan(plan);
  }
}

}  // namespace detail

// |analytic signal| via the frequency-domain discrete Hilbert transform:
// zero negative frequencies, double positive ones, keep DC and Nyquist.
inline std::vector<double> hilbert_envelope(const std::vector<double>& signal) {
  const std::size_t n = signal.size();
  if (n < 4) throw std::invalid_argument("hilbert_envelope needs length >= 4");
  std::vector<std::complex<double>> spec(n);
  for (std::size_t i = 0; i < n; ++i) spec[i] = signal[i];
  detail::fft_inplace(spec, FFTW_FORWARD);
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < half; ++k) spec[k] *= 2.0;
  if (n % 2 == 1) spec[half] *= 2.0;  // odd n: no Nyquist bin
  for (std::size_t k = half + 1; k < n; ++k) spec[k] = 0.0;
  detail::fft_inplace(spec, FFTW_BACKWARD);
  std::vector<double> env(n);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) env[i] = std::abs(spec[i]) * inv_n;
  return env;
}

// Envelope -> mean removal -> Hann window -> FFT magnitude -> order axis ->
// linear interpolation onto grid bin centers.
inline EnvelopeSpectrum envelope_order_spectrum(const std::vector<double>& signal,
                                                double sample_rate,
                                                double shaft_freq,
                                                const OrderGrid& grid) {
  grid.validate();
  if (signal.size() < 256)
    throw std::invalid_argument("signal too short (need >= 256 samples)");
  if (!(shaft_freq > 0.0)) throw std::invalid_argument("shaft_freq must be > 0");
  if (!(sample_rate > 2.0 * shaft_freq * grid.order_max))
    throw std::invalid_argument("sample_rate too low for requested order range");

  const std::size_t n = signal.size();
  std::vector<double> env = hilbert_envelope(signal);

  double mean = 0.0;
  for (double v : env) mean += v;
  mean /= static_cast<double>(n);

  std::vector<std::complex<double>> spec(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                             static_cast<double>(n - 1));
    spec[i] = (env[i] - mean) * w;
  }
  detail::fft_inplace(spec, FFTW_FORWARD);

  // One-sided magnitudes; order of bin k is (k * fs / n) / fr.
  const std::size_t n_half = n / 2 + 1;
  const double order_step = sample_rate / (static_cast<double>(n) * shaft_freq);
  std::vector<double> mag(n_half);
  for (std::size_t k = 0; k < n_half; ++k) mag[k] = std::abs(spec[k]);

  EnvelopeSpectrum out;
  out.grid = grid;
  out.shaft_freq_fr = shaft_freq;
  out.amplitudes.resize(grid.n_bins);
  for (std::uint32_t i = 0; i < grid.n_bins; ++i) {
    const double o = grid.bin_center(i);
    const double pos = o / order_step;
    const auto k0 = static_cast<std::size_t>(pos);
    if (k0 + 1 >= n_half) {
      out.amplitudes[i] = static_cast<float>(mag[n_half - 1]);
      continue;
    }
    const double frac = pos - static_cast<double>(k0);
    out.amplitudes[i] =
        static_cast<float>(mag[k0] * (1.0 - frac) + mag[k0 + 1] * frac);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset file format "BXAI" (little-endian) and CSV import.

struct Dataset {
  OrderGrid grid;
  std::vector<EnvelopeSpectrum> samples;
};

inline void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open for writing: " + path);
  io::write_magic(os, "BXAI");
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(ds.samples.size()));
  io::write_le<std::uint32_t>(os, ds.grid.n_bins);
  io::write_le<double>(os, ds.grid.order_min);
  io::write_le<double>(os, ds.grid.order_max);
  for (const auto& s : ds.samples) {
    if (s.amplitudes.size() != ds.grid.n_bins)
      throw io::FormatError("sample bin count does not match dataset grid");
    io::write_le<std::uint32_t>(os, s.sample_id);
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(s.label));
    io::write_le<double>(os, s.shaft_freq_fr);
    io::write_vec(os, s.amplitudes);
  }
  if (!os) throw io::FormatError("write failed: " + path);
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open: " + path);
  io::expect_magic(is, "BXAI");
  const auto version = io::read_le<std::uint16_t>(is);
  if (version != 1) throw io::FormatError("unsupported BXAI version");
  const auto n_samples = io::read_le<std::uint32_t>(is);
  Dataset ds;
  ds.grid.n_bins = io::read_le<std::uint32_t>(is);
  ds.grid.order_min = io::read_le<double>(is);
  ds.grid.order_max = io::read_le<double>(is);
  ds.grid.validate();
  ds.samples.resize(n_samples);
  for (auto& s : ds.samples) {
    s.grid = ds.grid;
    s.sample_id = io::read_le<std::uint32_t>(is);
    const auto raw_label = io::read_le<std::uint8_t>(is);
    if (raw_label > 2) throw io::FormatError("invalid label byte");
    s.label = static_cast<HealthClass>(raw_label);
    s.shaft_freq_fr = io::read_le<double>(is);
    io::read_vec(is, s.amplitudes, ds.grid.n_bins);
  }
  return ds;
}

// CSV rows: sample_id,label,shaft_freq,a_0,...,a_{n_bins-1}
inline Dataset import_csv_dataset(const std::string& path, const OrderGrid& grid) {
  grid.validate();
  std::ifstream is(path);
  if (!is) throw io::FormatError("cannot open: " + path);
  Dataset ds;
  ds.grid = grid;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    EnvelopeSpectrum s;
    s.grid = grid;
    try {
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("missing id");
      s.sample_id = static_cast<std::uint32_t>(std::stoul(field));
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("missing label");
      if (field.size() == 1 && field[0] >= '0' && field[0] <= '2')
        s.label = static_cast<HealthClass>(field[0] - '0');
      else
        s.label = health_class_from_string(field);
      if (!std::getline(ss, field, ',')) throw std::invalid_argument("missing fr");
      s.shaft_freq_fr = std::stod(field);
      s.amplitudes.reserve(grid.n_bins);
      while (std::getline(ss, field, ','))
        s.amplitudes.push_back(std::stof(field));
    } catch (const std::exception& e) {
      throw io::FormatError("CSV line " + std::to_string(lineno) + ": " + e.what());
    }
    if (s.amplitudes.size() != grid.n_bins)
      throw io::FormatError("CSV line " + std::to_string(lineno) + ": expected " +
                            std::to_string(grid.n_bins) + " amplitudes, got " +
                            std::to_string(s.amplitudes.size()));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace bxai
