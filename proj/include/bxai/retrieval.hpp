// Prediction basis retrieval: normalized-activation Euclidean distance over
// same-class library entries, exact scan, top-K.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bxai/gradcam.hpp"
#include "bxai/library.hpp"
#include "bxai/nn.hpp"

namespace bxai {

inline std::vector<double> l2_normalize(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  const double norm = std::sqrt(s);
  if (!(norm > 0.0))
    throw std::runtime_error(
        "zero activation vector: class score is insensitive to the feature map");
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / norm;
  return out;
}

inline double activation_distance(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("activation_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

struct BasisEntry {
  std::uint32_t entry_id = 0;
  HealthClass cls = HealthClass::healthy;
  double distance = 0.0;
};

struct PredictionBasis {
  std::uint32_t sample_id = 0;
  HealthClass predicted = HealthClass::healthy;
  std::vector<float> probabilities;
  std::vector<BasisEntry> basis;  // ascending distance, ties by entry_id
  CamKind algo = CamKind::full;
  bool sub_fell_back_to_full = false;  // healthy class under CAM-Sub
};

namespace detail {

// Project a stored full vector to the class's band indices (CAM-Sub), or
// pass it through (CAM-Full / healthy fallback).
inline std::vector<double> project_for_class(const std::vector<float>& full,
                                             HealthClass cls, CamKind algo,
                                             const BandsByClass& bands,
                                             const OrderGrid& grid) {
  if (algo == CamKind::sub) {
    const auto& cb = bands.for_class(cls);
    if (cb.has_value()) {
      const auto idx = band_indices(*cb, grid);
      std::vector<double> out;
      out.reserve(idx.size());
      for (auto i : idx) out.push_back(static_cast<double>(full[i]));
      return out;
    }
  }
  return std::vector<double>(full.begin(), full.end());
}

}  // namespace detail

template <class T>
PredictionBasis retrieve_basis(Model<T>& model, const HealthLibrary& lib,
                               const EnvelopeSpectrum& test, std::uint32_t k,
                               CamKind algo, const BandsByClass& bands) {
  if constexpr (std::is_same_v<T, float>) check_fingerprint(lib, model);

  PredictionBasis out;
  out.sample_id = test.sample_id;
  out.algo = algo;
  auto pred = predict(model, test);
  out.predicted = static_cast<HealthClass>(pred.cls);
  out.probabilities.assign(pred.probs.begin(), pred.probs.end());
  out.sub_fell_back_to_full =
      algo == CamKind::sub && !bands.for_class(out.predicted).has_value();

  // Test activation vector for the predicted class (falls back to Full for
  // healthy under CAM-Sub, matching the library-side projection).
  const CamKind effective =
      out.sub_fell_back_to_full ? CamKind::full : algo;
  auto test_av = activation_vector(model, test, out.predicted, effective, bands);
  auto test_norm = l2_normalize(test_av.values);

  std::vector<BasisEntry> all;
  for (const auto& e : lib.entries) {
    if (e.cls != out.predicted) continue;
    auto train_vec =
        detail::project_for_class(e.full_vector, e.cls, algo, bands, lib.grid);
    auto train_norm = l2_normalize(train_vec);
    all.push_back({e.sample_id, e.cls, activation_distance(test_norm, train_norm)});
  }
  if (k < 1 || k > all.size())
    throw std::invalid_argument("K out of range: class has " +
                                std::to_string(all.size()) + " library entries");
  std::sort(all.begin(), all.end(), [](const BasisEntry& a, const BasisEntry& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.entry_id < b.entry_id;
  });
  all.resize(k);
  out.basis = std::move(all);
  return out;
}

}  // namespace bxai
