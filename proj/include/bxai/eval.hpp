// Training-sample importance evaluation: distance matrix, average-distance
// ranking, top-fraction removal with re-training, random-removal baseline,
// confusion matrices.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/gradcam.hpp"
#include "bxai/library.hpp"
#include "bxai/nn.hpp"
#include "bxai/retrieval.hpp"
#include "bxai/rng.hpp"

namespace bxai {

// Rows: training entries; columns: test samples. Cross-class pairs are
// undefined (NaN sentinel); only same-class distances are ever compared.
struct DistanceMatrix {
  std::size_t n_train = 0, n_test = 0;
  std::vector<double> values;  // row-major, NaN = undefined
  std::vector<std::uint32_t> train_ids, test_ids;
  std::vector<HealthClass> train_cls, test_pred_cls;
  CamKind algo = CamKind::full;

  double at(std::size_t i, std::size_t j) const { return values[i * n_test + j]; }
  static bool defined(double v) { return !std::isnan(v); }
};

template <class T>
DistanceMatrix distance_matrix(Model<T>& model, const HealthLibrary& lib,
                               const Dataset& test_set, CamKind algo,
                               const BandsByClass& bands) {
  if constexpr (std::is_same_v<T, float>) check_fingerprint(lib, model);
  DistanceMatrix dm;
  dm.algo = algo;
  dm.n_train = lib.entries.size();
  dm.n_test = test_set.samples.size();
  dm.values.assign(dm.n_train * dm.n_test,
                   std::numeric_limits<double>::quiet_NaN());
  for (const auto& e : lib.entries) {
    dm.train_ids.push_back(e.sample_id);
    dm.train_cls.push_back(e.cls);
  }

  // Normalize each library entry once per class projection.
  std::vector<std::vector<double>> train_norm(dm.n_train);
  for (std::size_t i = 0; i < dm.n_train; ++i)
    train_norm[i] = l2_normalize(detail::project_for_class(
        lib.entries[i].full_vector, lib.entries[i].cls, algo, bands, lib.grid));

  for (std::size_t j = 0; j < dm.n_test; ++j) {
    const auto& s = test_set.samples[j];
    auto pred = predict(model, s);
    const auto cj = static_cast<HealthClass>(pred.cls);
    dm.test_ids.push_back(s.sample_id);
    dm.test_pred_cls.push_back(cj);
    const CamKind effective =
        (algo == CamKind::sub && !bands.for_class(cj).has_value()) ? CamKind::full
                                                                   : algo;
    auto test_norm =
        l2_normalize(activation_vector(model, s, cj, effective, bands).values);
    for (std::size_t i = 0; i < dm.n_train; ++i) {
      if (dm.train_cls[i] != cj) continue;
      dm.values[i * dm.n_test + j] = activation_distance(test_norm, train_norm[i]);
    }
  }
  return dm;
}

// Mean distance of each training entry to same-class test samples; lower
// means more important. Entries whose class never appears in the test
// predictions rank least important.
inline std::vector<double> avg_train_importance(const DistanceMatrix& dm,
                                                std::vector<std::size_t>* warn_rows
                                                = nullptr) {
  std::vector<double> avg(dm.n_train);
  for (std::size_t i = 0; i < dm.n_train; ++i) {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t j = 0; j < dm.n_test; ++j) {
      const double v = dm.at(i, j);
      if (DistanceMatrix::defined(v)) {
        s += v;
        ++n;
      }
    }
    if (n == 0) {
      avg[i] = std::numeric_limits<double>::infinity();
      if (warn_rows) warn_rows->push_back(i);
    } else {
      avg[i] = s / static_cast<double>(n);
    }
  }
  return avg;
}

// Removes the floor(fraction * N) entries with the smallest average distance
// (most important); the remainder keeps its original order.
inline Dataset remove_top_fraction(const Dataset& train_set,
                                   const std::vector<double>& importance,
                                   double fraction) {
  if (importance.size() != train_set.samples.size())
    throw std::invalid_argument("importance length mismatch");
  if (fraction < 0.0 || fraction >= 1.0)
    throw std::invalid_argument("fraction must be in [0, 1)");
  const auto n_remove = static_cast<std::size_t>(
      fraction * static_cast<double>(train_set.samples.size()));
  std::vector<std::size_t> order(train_set.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (importance[a] != importance[b]) return importance[a] < importance[b];
    return a < b;
  });
  std::vector<bool> removed(order.size(), false);
  for (std::size_t r = 0; r < n_remove; ++r) removed[order[r]] = true;
  Dataset out;
  out.grid = train_set.grid;
  for (std::size_t i = 0; i < removed.size(); ++i)
    if (!removed[i]) out.samples.push_back(train_set.samples[i]);
  return out;
}

// Uniform removal without replacement; dedicated seed per repeat.
inline Dataset remove_random_fraction(const Dataset& train_set, double fraction,
                                      std::uint64_t seed) {
  const auto n = train_set.samples.size();
  const auto n_remove = static_cast<std::size_t>(fraction * static_cast<double>(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::substream(seed, 0xDE1E7EULL);
  for (std::size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<bool> removed(n, false);
  for (std::size_t r = 0; r < n_remove; ++r) removed[order[r]] = true;
  Dataset out;
  out.grid = train_set.grid;
  for (std::size_t i = 0; i < n; ++i)
    if (!removed[i]) out.samples.push_back(train_set.samples[i]);
  return out;
}

enum class RemovalMethod : std::uint8_t { random = 0, cam_full = 1, cam_sub = 2 };

inline const char* to_string(RemovalMethod m) {
  switch (m) {
    case RemovalMethod::random: return "random";
    case RemovalMethod::cam_full: return "cam-full";
    case RemovalMethod::cam_sub: return "cam-sub";
  }
  return "?";
}

struct RemovalRepeat {
  std::uint32_t repeat = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
};

struct RemovalResult {
  RemovalMethod method = RemovalMethod::random;
  double fraction = 0.0;
  std::vector<RemovalRepeat> repeats;

  double mean_accuracy() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : repeats)
      if (!r.failed) {
        s += r.test_accuracy;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
  double std_accuracy() const {
    const double m = mean_accuracy();
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : repeats)
      if (!r.failed) {
        s += (r.test_accuracy - m) * (r.test_accuracy - m);
        ++n;
      }
    return n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;
  }
  double mean_loss() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : repeats)
      if (!r.failed) {
        s += r.test_loss;
        ++n;
      }
    return n ? s / static_cast<double>(n) : 0.0;
  }
};

struct RemovalExperimentConfig {
  std::vector<double> fractions = {0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45};
  std::vector<RemovalMethod> methods = {RemovalMethod::random, RemovalMethod::cam_full,
                                        RemovalMethod::cam_sub};
  std::uint32_t n_repeats = 10;
  std::uint64_t base_seed = 1000;
  std::uint32_t threads = 1;
};

// Fixed-size index-addressed results make the parallel schedule irrelevant to
// the output.
inline void parallel_for(std::size_t n, std::uint32_t threads,
                         const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<std::size_t> next{0};
  for (std::uint32_t t = 0; t < std::min<std::size_t>(threads, n); ++t)
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  for (auto& th : pool) th.join();
}

// Re-trains fresh models on reduced training sets and evaluates each on the
// unchanged test set. CAM removals are deterministic (repeats differ only in
// training seed); Random removals use a dedicated removal seed per repeat.
template <class T>
std::vector<RemovalResult> removal_experiment(
    const Dataset& train_set, const Dataset& test_set, const ModelArch& arch,
    const TrainConfig& train_cfg, const std::vector<double>& importance_full,
    const std::vector<double>& importance_sub, const RemovalExperimentConfig& cfg,
    const std::function<void(const std::string&)>& log = {}) {
  struct Job {
    RemovalMethod method;
    double fraction;
    std::uint32_t repeat;
  };
  std::vector<Job> jobs;
  for (auto m : cfg.methods)
    for (double f : cfg.fractions)
      for (std::uint32_t r = 0; r < cfg.n_repeats; ++r) jobs.push_back({m, f, r});

  std::vector<RemovalRepeat> results(jobs.size());
  parallel_for(jobs.size(), cfg.threads, [&](std::size_t ji) {
    const Job& job = jobs[ji];
    RemovalRepeat rep;
    rep.repeat = job.repeat;
    // Training seeds shared across methods at the same repeat index, so the
    // comparison isolates the removal strategy.
    rep.seed = cfg.base_seed + job.repeat;
    try {
      Dataset reduced;
      if (job.method == RemovalMethod::random) {
        // Removal randomness independent of training randomness.
        const std::uint64_t removal_seed =
            cfg.base_seed * 7919 + 104729ULL * job.repeat +
            static_cast<std::uint64_t>(job.fraction * 1000.0);
        reduced = remove_random_fraction(train_set, job.fraction, removal_seed);
      } else {
        const auto& imp = job.method == RemovalMethod::cam_full ? importance_full
                                                                : importance_sub;
        reduced = remove_top_fraction(train_set, imp, job.fraction);
      }
      Model<T> model = Model<T>::init(arch, rep.seed);
      TrainConfig tc = train_cfg;
      tc.seed = rep.seed;
      train(model, reduced, tc);
      auto [loss, acc] = evaluate(model, test_set);
      rep.test_loss = loss;
      rep.test_accuracy = acc;
    } catch (const std::exception& e) {
      rep.failed = true;
      if (log) log(std::string("repeat failed: ") + e.what());
    }
    results[ji] = rep;
  });

  // Aggregate by (method, fraction) in declaration order.
  std::vector<RemovalResult> out;
  for (auto m : cfg.methods)
    for (double f : cfg.fractions) {
      RemovalResult rr;
      rr.method = m;
      rr.fraction = f;
      for (std::size_t ji = 0; ji < jobs.size(); ++ji)
        if (jobs[ji].method == m && jobs[ji].fraction == f)
          rr.repeats.push_back(results[ji]);
      out.push_back(std::move(rr));
    }
  return out;
}

struct ConfusionMatrix {
  std::uint32_t n_classes = 3;
  std::vector<std::uint64_t> counts;  // [true][predicted]

  std::uint64_t at(std::uint32_t t, std::uint32_t p) const {
    return counts[t * n_classes + p];
  }
  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts) s += c;
    return s;
  }
};

template <class T>
ConfusionMatrix confusion_matrix(Model<T>& model, const Dataset& test_set) {
  ConfusionMatrix cm;
  cm.n_classes = model.arch.n_classes;
  cm.counts.assign(static_cast<std::size_t>(cm.n_classes) * cm.n_classes, 0);
  for (const auto& s : test_set.samples) {
    auto pred = predict(model, s);
    cm.counts[static_cast<std::size_t>(s.label) * cm.n_classes + pred.cls]++;
  }
  return cm;
}

}  // namespace bxai
