// Grad-CAM at the last conv block's feature map, plus the CAM-Full / CAM-Sub
// activation vectors at input resolution.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/nn.hpp"

namespace bxai {

struct GradCamMap {
  std::vector<double> values;  // length Z
  HealthClass cls = HealthClass::healthy;
};

enum class CamKind : std::uint8_t { full = 0, sub = 1 };

struct ActivationVector {
  std::vector<double> values;
  CamKind kind = CamKind::full;
  HealthClass cls = HealthClass::healthy;
};

// Per-class sub-band configuration. Healthy has no fault frequency and hence
// no bands; CAM-Sub falls back to the full vector for it.
struct BandsByClass {
  std::optional<SubBands> inner;
  std::optional<SubBands> outer;

  const std::optional<SubBands>& for_class(HealthClass c) const {
    static const std::optional<SubBands> none;
    switch (c) {
      case HealthClass::inner_race: return inner;
      case HealthClass::outer_race: return outer;
      case HealthClass::healthy: return none;
    }
    return none;
  }

  static BandsByClass from_geometry(const BearingGeometry& geom, double epsilon,
                                    double order_max = 30.0) {
    const FaultOrders fo = compute_fault_orders(geom);
    BandsByClass b;
    b.inner = make_sub_bands(fo.bpfi_order, epsilon, order_max);
    b.outer = make_sub_bands(fo.bpfo_order, epsilon, order_max);
    return b;
  }
};

// alpha_k = (1/Z) * sum_i dY/dA_i^k  (average over map positions).
template <class T>
std::vector<double> importance_weights(const BatchMap<T>& grads) {
  std::vector<double> alpha(grads.c);
  for (std::size_t k = 0; k < grads.c; ++k) {
    double s = 0.0;
    const T* g = grads.at(0, k);
    for (std::size_t i = 0; i < grads.len; ++i) s += static_cast<double>(g[i]);
    alpha[k] = s / static_cast<double>(grads.len);
  }
  return alpha;
}

// map_i = sum_k alpha_k * A_i^k. No ReLU clamp; signed importance kept.
template <class T>
GradCamMap gradcam_map(const std::vector<double>& alpha, const BatchMap<T>& A,
                       HealthClass cls, bool relu_clamp = false) {
  if (alpha.size() != A.c) throw std::invalid_argument("gradcam_map: shape mismatch");
  GradCamMap m;
  m.cls = cls;
  m.values.assign(A.len, 0.0);
  for (std::size_t k = 0; k < A.c; ++k) {
    const T* a = A.at(0, k);
    for (std::size_t i = 0; i < A.len; ++i)
      m.values[i] += alpha[k] * static_cast<double>(a[i]);
  }
  if (relu_clamp)
    for (auto& v : m.values) v = std::max(v, 0.0);
  return m;
}

// Linear interpolation from Z knots placed at the centers of their receptive
// strides up to n_bins points; clamped beyond the end knots.
inline std::vector<double> upsample_to_input(const GradCamMap& map,
                                             std::uint32_t n_bins) {
  const std::size_t z = map.values.size();
  if (z == 0 || n_bins % z != 0)
    throw std::invalid_argument("upsample: n_bins must be a multiple of Z");
  const double stride = static_cast<double>(n_bins) / static_cast<double>(z);
  std::vector<double> out(n_bins);
  for (std::uint32_t i = 0; i < n_bins; ++i) {
    // Knot j sits at input position (j + 0.5) * stride - 0.5.
    const double pos = (static_cast<double>(i) + 0.5) / stride - 0.5;
    if (pos <= 0.0) {
      out[i] = map.values.front();
    } else if (pos >= static_cast<double>(z - 1)) {
      out[i] = map.values.back();
    } else {
      const auto j = static_cast<std::size_t>(pos);
      const double frac = pos - static_cast<double>(j);
      out[i] = map.values[j] * (1.0 - frac) + map.values[j + 1] * frac;
    }
  }
  return out;
}

// Forward + class-logit gradient + Eqs for alpha and the map, upsampled to
// input resolution. Runs in eval mode so explanations are batch-independent.
template <class T>
ActivationVector activation_vector(Model<T>& model, const EnvelopeSpectrum& s,
                                   HealthClass cls, CamKind kind,
                                   const BandsByClass& bands) {
  BatchMap<T> x(1, 1, model.arch.input_len);
  if (s.amplitudes.size() != model.arch.input_len)
    throw std::invalid_argument("activation_vector: spectrum length mismatch");
  for (std::size_t i = 0; i < s.amplitudes.size(); ++i)
    x.v[i] = static_cast<T>(s.amplitudes[i]);
  auto tr = forward(model, x, Mode::eval);
  auto grads = logit_grad_wrt_feature_map(model, tr, static_cast<std::uint32_t>(cls));
  auto alpha = importance_weights(grads);
  auto map = gradcam_map(alpha, tr.feature_map(), cls);
  auto full = upsample_to_input(map, static_cast<std::uint32_t>(s.amplitudes.size()));
  // Round through the model's storage precision so query-side vectors match
  // persisted library vectors bit for bit.
  if constexpr (std::is_same_v<T, float>)
    for (auto& v : full) v = static_cast<double>(static_cast<float>(v));

  ActivationVector av;
  av.cls = cls;
  const auto& class_bands = bands.for_class(cls);
  if (kind == CamKind::sub && class_bands.has_value()) {
    const auto idx = band_indices(*class_bands, s.grid);
    av.kind = CamKind::sub;
    av.values.reserve(idx.size());
    for (auto i : idx) av.values.push_back(full[i]);
  } else {
    if (kind == CamKind::sub && cls != HealthClass::healthy)
      throw std::invalid_argument("CAM-Sub requested for a class with no sub-bands");
    av.kind = CamKind::full;
    av.values = std::move(full);
  }
  return av;
}

}  // namespace bxai
