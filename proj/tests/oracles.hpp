// Independent brute-force oracles used by the tests. These deliberately avoid
// the library's FFT / vectorized paths.
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/nn.hpp"

namespace oracles {

// O(N^2) DFT.
inline std::vector<std::complex<double>> dft(
    const std::vector<std::complex<double>>& x, int sign) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = sign * 2.0 * bxai::kPi * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

// Hilbert envelope via the direct DFT: same one-sided spectrum convention as
// the implementation, different transform.
inline std::vector<double> hilbert_envelope_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> spec(n);
  for (std::size_t i = 0; i < n; ++i) spec[i] = x[i];
  spec = dft(spec, -1);
  const std::size_t half = n / 2;
  for (std::size_t k = 1; k < half; ++k) spec[k] *= 2.0;
  if (n % 2 == 1) spec[half] *= 2.0;
  for (std::size_t k = half + 1; k < n; ++k) spec[k] = 0.0;
  spec = dft(spec, +1);
  std::vector<double> env(n);
  for (std::size_t i = 0; i < n; ++i)
    env[i] = std::abs(spec[i]) / static_cast<double>(n);
  return env;
}

// Full envelope-order-spectrum pipeline on top of the DFT oracle.
inline std::vector<double> envelope_order_spectrum_dft(
    const std::vector<double>& signal, double sample_rate, double shaft_freq,
    const bxai::OrderGrid& grid) {
  const std::size_t n = signal.size();
  auto env = hilbert_envelope_dft(signal);
  double mean = 0.0;
  for (double v : env) mean += v;
  mean /= static_cast<double>(n);
  std::vector<std::complex<double>> buf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * bxai::kPi * static_cast<double>(i) /
                                          static_cast<double>(n - 1));
    buf[i] = (env[i] - mean) * w;
  }
  buf = dft(buf, -1);
  const std::size_t n_half = n / 2 + 1;
  const double order_step = sample_rate / (static_cast<double>(n) * shaft_freq);
  std::vector<double> out(grid.n_bins);
  for (std::uint32_t i = 0; i < grid.n_bins; ++i) {
    const double pos = grid.bin_center(i) / order_step;
    const auto k0 = static_cast<std::size_t>(pos);
    if (k0 + 1 >= n_half) {
      out[i] = std::abs(buf[n_half - 1]);
      continue;
    }
    const double frac = pos - static_cast<double>(k0);
    out[i] = std::abs(buf[k0]) * (1.0 - frac) + std::abs(buf[k0 + 1]) * frac;
  }
  return out;
}

// Naive same-padding cross-correlation, one sample.
template <class T>
std::vector<T> conv1d_naive(const std::vector<std::vector<T>>& x,  // [in_c][L]
                            const bxai::ConvParams<T>& p, std::uint32_t oc) {
  const std::size_t L = x[0].size();
  const int half = static_cast<int>(p.k) / 2;
  std::vector<T> y(L, T(0));
  for (std::size_t i = 0; i < L; ++i) {
    double acc = static_cast<double>(p.b[oc]);
    for (std::uint32_t ic = 0; ic < p.in_c; ++ic)
      for (std::uint32_t t = 0; t < p.k; ++t) {
        const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) + static_cast<int>(t) - half;
        if (j < 0 || j >= static_cast<std::ptrdiff_t>(L)) continue;
        acc += static_cast<double>(p.wk(oc, ic)[t]) *
               static_cast<double>(x[ic][static_cast<std::size_t>(j)]);
      }
    y[i] = static_cast<T>(acc);
  }
  return y;
}

}  // namespace oracles
