// Synthetic bearing vibration generator: decaying-resonance impulse trains at
// the ball-pass rates, shaft-rate modulation for inner-race faults, Gaussian
// noise. Deterministic per (config, seed) with independent per-sample streams.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/rng.hpp"

namespace bxai {

struct SynthConfig {
  BearingGeometry geometry;
  std::array<std::uint32_t, 3> class_counts = {200, 200, 200};  // healthy, inner, outer
  std::uint32_t signal_len = 6400;
  double sample_rate = 16000.0;
  double resonance_freq = 3000.0;  // Hz
  double resonance_damping = 600.0;  // 1/s
  double impulse_amplitude = 1.0;
  double noise_std = 0.15;
  double jitter_std = 0.02;  // fraction of the impact period
  // Per-sample severity/noise spread; makes some samples clear prototypes and
  // others marginal, which the removal experiment depends on.
  double amplitude_spread = 0.65;  // amplitude factor ~ U[1-s, 1+s]
  double noise_spread = 0.5;       // noise factor ~ U[1-s, 1+s]
  // Per-sample amplitude modulation of the noise floor: depth ~ U[0, max],
  // modulation order ~ U[min, max] in multiples of the shaft frequency. Gives
  // every sample an individual low-order envelope signature (run-to-run load
  // variation), so no class collapses onto a single spectral direction. Kept
  // well below the lowest fault order so it never mimics a fault.
  double mod_depth_max = 0.8;
  double mod_order_min = 0.3;
  double mod_order_max = 2.5;
  // Per-sample transfer-path variation: the resonance decay rate and the
  // impact timing jitter are drawn per sample (factor ~ U[1-s, 1+s]). Both
  // reshape the relative amplitudes of the fault-order harmonics, so samples
  // of one fault class differ inside the fault bands, not just outside them.
  double damping_spread = 0.8;
  double jitter_spread = 0.9;
  std::uint64_t seed = 42;

  void validate() const {
    geometry.validate();
    if (signal_len < 1024) throw std::invalid_argument("signal_len must be >= 1024");
    if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
    if (jitter_std < 0.0 || jitter_std > 0.05)
      throw std::invalid_argument("jitter_std must be in [0, 0.05]");
    if (mod_depth_max < 0.0 || mod_depth_max > 1.0)
      throw std::invalid_argument("mod_depth_max must be in [0, 1]");
    if (damping_spread < 0.0 || damping_spread >= 1.0 || jitter_spread < 0.0 ||
        jitter_spread >= 1.0)
      throw std::invalid_argument("spreads must be in [0, 1)");
    if (jitter_std * (1.0 + jitter_spread) > 0.05)
      throw std::invalid_argument("jitter_std * (1 + jitter_spread) must be <= 0.05");
    if (!(mod_order_min > 0.0) || !(mod_order_max >= mod_order_min))
      throw std::invalid_argument("modulation order range must be positive");
    if (!(resonance_freq < sample_rate / 2.0))
      throw std::invalid_argument("resonance_freq must be below Nyquist");
  }
};

struct TimeSample {
  std::vector<double> signal;
  HealthClass label = HealthClass::healthy;
  double shaft_freq_fr = 0.0;
};

inline std::vector<double> generate_sample(HealthClass cls, const SynthConfig& cfg,
                                           Rng& rng) {
  cfg.validate();
  const std::uint32_t n = cfg.signal_len;
  const double dt = 1.0 / cfg.sample_rate;
  const double fr = cfg.geometry.shaft_freq_fr;
  std::vector<double> x(n, 0.0);

  const double amp_factor =
      rng.uniform(1.0 - cfg.amplitude_spread, 1.0 + cfg.amplitude_spread);
  const double noise_factor =
      rng.uniform(1.0 - cfg.noise_spread, 1.0 + cfg.noise_spread);
  const double damping = cfg.resonance_damping *
                         rng.uniform(1.0 - cfg.damping_spread,
                                     1.0 + cfg.damping_spread);
  const double jitter_std = cfg.jitter_std *
                            rng.uniform(1.0 - cfg.jitter_spread,
                                        1.0 + cfg.jitter_spread);

  if (cls != HealthClass::healthy) {
    const FaultOrders orders = compute_fault_orders(cfg.geometry);
    const double fault_order =
        cls == HealthClass::inner_race ? orders.bpfi_order : orders.bpfo_order;
    const double impact_rate = fault_order * fr;
    const double period = 1.0 / impact_rate;
    const double duration = static_cast<double>(n) * dt;
    const double phase0 = rng.uniform() * period;
    // Extend past the window so a truncated tail response is still present.
    const int n_impacts = static_cast<int>((duration + phase0) / period) + 2;
    for (int m = 0; m < n_impacts; ++m) {
      const double jitter = rng.normal() * jitter_std * period;
      const double t0 = static_cast<double>(m) * period - phase0 + jitter;
      double amp = cfg.impulse_amplitude * amp_factor *
                   (1.0 + 0.1 * rng.normal());
      if (cls == HealthClass::inner_race) {
        // Inner race rotates through the load zone: shaft-rate modulation.
        amp *= 1.0 + 0.7 * std::cos(2.0 * kPi * fr * t0);
      }
      if (t0 >= duration) continue;
      const auto i0 = static_cast<std::int64_t>(std::ceil(std::max(t0, 0.0) / dt));
      // 6 time constants of the resonance decay.
      const auto i1 = std::min<std::int64_t>(
          n, i0 + static_cast<std::int64_t>(6.0 / (damping * dt)) + 1);
      for (std::int64_t i = i0; i < i1; ++i) {
        const double tau = static_cast<double>(i) * dt - t0;
        x[static_cast<std::size_t>(i)] +=
            amp * std::exp(-damping * tau) *
            std::sin(2.0 * kPi * cfg.resonance_freq * tau);
      }
    }
  }

  const double shaft_amp = 0.1 * cfg.impulse_amplitude;
  const double shaft_phase = rng.uniform() * 2.0 * kPi;
  const double sigma = cfg.noise_std * noise_factor;
  const double mod_depth = rng.uniform(0.0, cfg.mod_depth_max);
  const double mod_freq =
      rng.uniform(cfg.mod_order_min, cfg.mod_order_max) * fr;
  const double mod_phase = rng.uniform() * 2.0 * kPi;
  for (std::uint32_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    x[i] += shaft_amp * std::sin(2.0 * kPi * fr * t + shaft_phase);
    const double env =
        1.0 + mod_depth * std::sin(2.0 * kPi * mod_freq * t + mod_phase);
    x[i] += sigma * env * rng.normal();
  }
  return x;
}

// Samples are emitted class-major (healthy, inner, outer). Stream ids encode
// (class, index) so growing one class's count leaves other samples unchanged.
inline std::vector<TimeSample> generate_dataset(const SynthConfig& cfg) {
  cfg.validate();
  std::vector<TimeSample> out;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto cls = static_cast<HealthClass>(c);
    for (std::uint32_t i = 0; i < cfg.class_counts[static_cast<std::size_t>(c)]; ++i) {
      Rng rng = Rng::substream(cfg.seed, (static_cast<std::uint64_t>(c) << 32) | i);
      TimeSample s;
      s.label = cls;
      s.shaft_freq_fr = cfg.geometry.shaft_freq_fr;
      s.signal = generate_sample(cls, cfg, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

inline Dataset spectra_from_time_samples(const std::vector<TimeSample>& samples,
                                         const SynthConfig& cfg,
                                         const OrderGrid& grid) {
  Dataset ds;
  ds.grid = grid;
  std::uint32_t id = 0;
  for (const auto& s : samples) {
    EnvelopeSpectrum sp =
        envelope_order_spectrum(s.signal, cfg.sample_rate, s.shaft_freq_fr, grid);
    sp.label = s.label;
    sp.sample_id = id++;
    ds.samples.push_back(std::move(sp));
  }
  return ds;
}

// Stratified split: per class, shuffle deterministically, first (1-f) to
// train. Class ratios preserved within one sample.
inline void stratified_split(const Dataset& ds, double test_fraction,
                             std::uint64_t seed, Dataset& train, Dataset& test) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
    throw std::invalid_argument("test_fraction must be in (0, 1)");
  train.grid = test.grid = ds.grid;
  train.samples.clear();
  test.samples.clear();
  for (int c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
      if (static_cast<int>(ds.samples[i].label) == c) idx.push_back(i);
    Rng rng = Rng::substream(seed, 0x51b17ULL + static_cast<std::uint64_t>(c));
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_test = static_cast<std::size_t>(
        std::lround(test_fraction * static_cast<double>(idx.size())));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_test ? test : train).samples.push_back(ds.samples[idx[i]]);
    }
  }
}

}  // namespace bxai
