// Minimal 1D CNN with manual backpropagation: three conv->BN->ReLU->maxpool
// blocks, global max pool, dense + softmax. Templated on the scalar type so
// gradient checks can run in double while the shipped path stores f32.
// Reductions accumulate in double.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/io.hpp"
#include "bxai/rng.hpp"

namespace bxai {

struct ModelArch {
  std::uint32_t n_blocks = 3;
  std::vector<std::uint32_t> channels = {16, 32, 64};
  std::vector<std::uint32_t> kernels = {9, 7, 5};
  std::uint32_t pool = 2;  // size == stride
  std::uint32_t n_classes = 3;
  std::uint32_t input_len = 1536;

  void validate() const {
    if (n_blocks == 0 || channels.size() != n_blocks || kernels.size() != n_blocks)
      throw std::invalid_argument("arch: channels/kernels must have n_blocks entries");
    if (input_len % (1u << n_blocks) != 0)
      throw std::invalid_argument("arch: input_len must be divisible by 2^n_blocks");
    for (auto k : kernels)
      if (k % 2 == 0) throw std::invalid_argument("arch: kernel sizes must be odd");
    if (n_classes < 2) throw std::invalid_argument("arch: need >= 2 classes");
  }

  std::uint32_t feature_len() const { return input_len >> n_blocks; }  // Z
  std::uint32_t feature_channels() const { return channels.back(); }   // K
  bool operator==(const ModelArch&) const = default;
};

// [n][c][len] row-major, innermost contiguous in position.
template <class T>
struct BatchMap {
  std::size_t n = 0, c = 0, len = 0;
  std::vector<T> v;

  BatchMap() = default;
  BatchMap(std::size_t n_, std::size_t c_, std::size_t len_)
      : n(n_), c(c_), len(len_), v(n_ * c_ * len_, T(0)) {}
  T* at(std::size_t b, std::size_t ch) { return v.data() + (b * c + ch) * len; }
  const T* at(std::size_t b, std::size_t ch) const {
    return v.data() + (b * c + ch) * len;
  }
};

template <class T>
struct ConvParams {
  std::uint32_t in_c = 0, out_c = 0, k = 0;
  std::vector<T> w;  // [out][in][k]
  std::vector<T> b;  // [out]
  T* wk(std::uint32_t oc, std::uint32_t ic) {
    return w.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k;
  }
  const T* wk(std::uint32_t oc, std::uint32_t ic) const {
    return w.data() + (static_cast<std::size_t>(oc) * in_c + ic) * k;
  }
};

template <class T>
struct BatchNormParams {
  std::vector<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  double momentum = 0.1;
  bool initialized = false;  // running stats seen at least one batch
};

enum class Mode { train, eval };
enum class Optimizer { sgd_momentum, adam };

template <class T>
struct Model {
  ModelArch arch;
  std::vector<ConvParams<T>> conv;     // n_blocks
  std::vector<BatchNormParams<T>> bn;  // n_blocks
  std::vector<T> dense_w;              // [n_classes][K]
  std::vector<T> dense_b;              // [n_classes]

  static Model init(const ModelArch& arch, std::uint64_t seed) {
    arch.validate();
    Model m;
    m.arch = arch;
    Rng rng = Rng::substream(seed, 0x1417ULL);
    std::uint32_t in_c = 1;
    for (std::uint32_t l = 0; l < arch.n_blocks; ++l) {
      ConvParams<T> cp;
      cp.in_c = in_c;
      cp.out_c = arch.channels[l];
      cp.k = arch.kernels[l];
      cp.w.resize(static_cast<std::size_t>(cp.out_c) * cp.in_c * cp.k);
      cp.b.assign(cp.out_c, T(0));
      // He-uniform over fan-in.
      const double limit = std::sqrt(6.0 / (static_cast<double>(cp.in_c) * cp.k));
      for (auto& w : cp.w) w = static_cast<T>(rng.uniform(-limit, limit));
      m.conv.push_back(std::move(cp));

      BatchNormParams<T> bp;
      bp.gamma.assign(arch.channels[l], T(1));
      bp.beta.assign(arch.channels[l], T(0));
      bp.running_mean.assign(arch.channels[l], T(0));
      bp.running_var.assign(arch.channels[l], T(1));
      m.bn.push_back(std::move(bp));
      in_c = arch.channels[l];
    }
    const std::uint32_t K = arch.feature_channels();
    m.dense_w.resize(static_cast<std::size_t>(arch.n_classes) * K);
    m.dense_b.assign(arch.n_classes, T(0));
    const double limit = std::sqrt(6.0 / static_cast<double>(K));
    for (auto& w : m.dense_w) w = static_cast<T>(rng.uniform(-limit, limit));
    return m;
  }

  template <class U>
  Model<U> cast() const {
    Model<U> out;
    out.arch = arch;
    for (const auto& cp : conv) {
      ConvParams<U> c2;
      c2.in_c = cp.in_c;
      c2.out_c = cp.out_c;
      c2.k = cp.k;
      c2.w.assign(cp.w.begin(), cp.w.end());
      c2.b.assign(cp.b.begin(), cp.b.end());
      out.conv.push_back(std::move(c2));
    }
    for (const auto& bp : bn) {
      BatchNormParams<U> b2;
      b2.gamma.assign(bp.gamma.begin(), bp.gamma.end());
      b2.beta.assign(bp.beta.begin(), bp.beta.end());
      b2.running_mean.assign(bp.running_mean.begin(), bp.running_mean.end());
      b2.running_var.assign(bp.running_var.begin(), bp.running_var.end());
      b2.momentum = bp.momentum;
      b2.initialized = bp.initialized;
      out.bn.push_back(std::move(b2));
    }
    out.dense_w.assign(dense_w.begin(), dense_w.end());
    out.dense_b.assign(dense_b.begin(), dense_b.end());
    return out;
  }
};

inline constexpr double kBnEps = 1e-5;

// ---------------------------------------------------------------------------
// Layer primitives (batched). Cross-correlation convention, zero same-padding.

template <class T>
BatchMap<T> conv1d_forward(const BatchMap<T>& x, const ConvParams<T>& p) {
  if (x.c != p.in_c) throw std::invalid_argument("conv1d: channel mismatch");
  const std::size_t L = x.len;
  const int half = static_cast<int>(p.k) / 2;
  BatchMap<T> y(x.n, p.out_c, L);
  std::vector<double> acc(L);
  for (std::size_t b = 0; b < x.n; ++b) {
    for (std::uint32_t oc = 0; oc < p.out_c; ++oc) {
      std::fill(acc.begin(), acc.end(), static_cast<double>(p.b[oc]));
      for (std::uint32_t ic = 0; ic < p.in_c; ++ic) {
        const T* xin = x.at(b, ic);
        const T* w = p.wk(oc, ic);
        for (std::uint32_t t = 0; t < p.k; ++t) {
          const int s = static_cast<int>(t) - half;
          const double wt = static_cast<double>(w[t]);
          const std::size_t i0 = static_cast<std::size_t>(std::max(0, -s));
          const std::size_t i1 = L - static_cast<std::size_t>(std::max(0, s));
          for (std::size_t i = i0; i < i1; ++i)
            acc[i] += wt * static_cast<double>(xin[static_cast<std::ptrdiff_t>(i) + s]);
        }
      }
      T* yo = y.at(b, oc);
      for (std::size_t i = 0; i < L; ++i) yo[i] = static_cast<T>(acc[i]);
    }
  }
  return y;
}

// dL/dx, dL/dw, dL/db from dL/dy.
template <class T>
void conv1d_backward(const BatchMap<T>& x, const ConvParams<T>& p,
                     const BatchMap<T>& dy, BatchMap<T>& dx,
                     std::vector<T>& dw, std::vector<T>& db) {
  const std::size_t L = x.len;
  const int half = static_cast<int>(p.k) / 2;
  dx = BatchMap<T>(x.n, x.c, L);
  std::vector<double> dw_acc(p.w.size(), 0.0);
  std::vector<double> db_acc(p.out_c, 0.0);
  std::vector<double> dx_acc(L);
  for (std::size_t b = 0; b < x.n; ++b) {
    for (std::uint32_t oc = 0; oc < p.out_c; ++oc) {
      const T* g = dy.at(b, oc);
      double s = 0.0;
      for (std::size_t i = 0; i < L; ++i) s += static_cast<double>(g[i]);
      db_acc[oc] += s;
      for (std::uint32_t ic = 0; ic < p.in_c; ++ic) {
        const T* xin = x.at(b, ic);
        double* dwk = dw_acc.data() + (static_cast<std::size_t>(oc) * p.in_c + ic) * p.k;
        for (std::uint32_t t = 0; t < p.k; ++t) {
          const int sh = static_cast<int>(t) - half;
          const std::size_t i0 = static_cast<std::size_t>(std::max(0, -sh));
          const std::size_t i1 = L - static_cast<std::size_t>(std::max(0, sh));
          double acc = 0.0;
          for (std::size_t i = i0; i < i1; ++i)
            acc += static_cast<double>(g[i]) *
                   static_cast<double>(xin[static_cast<std::ptrdiff_t>(i) + sh]);
          dwk[t] += acc;
        }
      }
    }
    for (std::uint32_t ic = 0; ic < p.in_c; ++ic) {
      std::fill(dx_acc.begin(), dx_acc.end(), 0.0);
      for (std::uint32_t oc = 0; oc < p.out_c; ++oc) {
        const T* g = dy.at(b, oc);
        const T* w = p.wk(oc, ic);
        for (std::uint32_t t = 0; t < p.k; ++t) {
          const int sh = static_cast<int>(t) - half;
          const double wt = static_cast<double>(w[t]);
          // x index i+sh receives g[i]*w[t]  =>  dx[j] += g[j-sh]*w[t]
          const std::size_t j0 = static_cast<std::size_t>(std::max(0, sh));
          const std::size_t j1 = L - static_cast<std::size_t>(std::max(0, -sh));
          for (std::size_t j = j0; j < j1; ++j)
            dx_acc[j] += wt * static_cast<double>(g[static_cast<std::ptrdiff_t>(j) - sh]);
        }
      }
      T* dxo = dx.at(b, ic);
      for (std::size_t i = 0; i < L; ++i) dxo[i] = static_cast<T>(dx_acc[i]);
    }
  }
  dw.resize(p.w.size());
  db.resize(p.out_c);
  for (std::size_t i = 0; i < dw.size(); ++i) dw[i] = static_cast<T>(dw_acc[i]);
  for (std::size_t i = 0; i < db.size(); ++i) db[i] = static_cast<T>(db_acc[i]);
}

template <class T>
struct BnCache {
  std::vector<double> mean, inv_std;  // per channel, stats actually used
  BatchMap<T> xhat;
};

template <class T>
BatchMap<T> batchnorm_forward(const BatchMap<T>& x, BatchNormParams<T>& p,
                              Mode mode, BnCache<T>* cache) {
  if (x.c != p.gamma.size()) throw std::invalid_argument("batchnorm: channel mismatch");
  if (mode == Mode::train && x.n < 2)
    throw std::invalid_argument("batchnorm train mode needs batch size >= 2");
  if (mode == Mode::eval && !p.initialized)
    throw std::runtime_error("batchnorm eval before any running-stat update");
  BatchMap<T> y(x.n, x.c, x.len);
  const double count = static_cast<double>(x.n * x.len);
  if (cache) {
    cache->mean.assign(x.c, 0.0);
    cache->inv_std.assign(x.c, 0.0);
    cache->xhat = BatchMap<T>(x.n, x.c, x.len);
  }
  for (std::size_t ch = 0; ch < x.c; ++ch) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < x.n; ++b) {
        const T* xi = x.at(b, ch);
        for (std::size_t i = 0; i < x.len; ++i) s += static_cast<double>(xi[i]);
      }
      mean = s / count;
      double v = 0.0;
      for (std::size_t b = 0; b < x.n; ++b) {
        const T* xi = x.at(b, ch);
        for (std::size_t i = 0; i < x.len; ++i) {
          const double d = static_cast<double>(xi[i]) - mean;
          v += d * d;
        }
      }
      var = v / count;
      const double mom = p.momentum;
      p.running_mean[ch] = static_cast<T>(
          (1.0 - mom) * static_cast<double>(p.running_mean[ch]) + mom * mean);
      p.running_var[ch] = static_cast<T>(
          (1.0 - mom) * static_cast<double>(p.running_var[ch]) + mom * var);
    } else {
      mean = static_cast<double>(p.running_mean[ch]);
      var = static_cast<double>(p.running_var[ch]);
    }
    const double inv_std = 1.0 / std::sqrt(var + kBnEps);
    const double g = static_cast<double>(p.gamma[ch]);
    const double be = static_cast<double>(p.beta[ch]);
    if (cache) {
      cache->mean[ch] = mean;
      cache->inv_std[ch] = inv_std;
    }
    for (std::size_t b = 0; b < x.n; ++b) {
      const T* xi = x.at(b, ch);
      T* yo = y.at(b, ch);
      T* xh = cache ? cache->xhat.at(b, ch) : nullptr;
      for (std::size_t i = 0; i < x.len; ++i) {
        const double xhat = (static_cast<double>(xi[i]) - mean) * inv_std;
        if (xh) xh[i] = static_cast<T>(xhat);
        yo[i] = static_cast<T>(g * xhat + be);
      }
    }
  }
  if (mode == Mode::train) p.initialized = true;
  return y;
}

template <class T>
void batchnorm_backward(const BatchNormParams<T>& p, const BnCache<T>& cache,
                        const BatchMap<T>& dy, Mode mode, BatchMap<T>& dx,
                        std::vector<T>& dgamma, std::vector<T>& dbeta) {
  const std::size_t n = dy.n, C = dy.c, L = dy.len;
  dx = BatchMap<T>(n, C, L);
  dgamma.assign(C, T(0));
  dbeta.assign(C, T(0));
  const double count = static_cast<double>(n * L);
  for (std::size_t ch = 0; ch < C; ++ch) {
    const double g = static_cast<double>(p.gamma[ch]);
    const double inv_std = cache.inv_std[ch];
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const T* dyi = dy.at(b, ch);
      const T* xh = cache.xhat.at(b, ch);
      for (std::size_t i = 0; i < L; ++i) {
        sum_dy += static_cast<double>(dyi[i]);
        sum_dy_xhat += static_cast<double>(dyi[i]) * static_cast<double>(xh[i]);
      }
    }
    dgamma[ch] = static_cast<T>(sum_dy_xhat);
    dbeta[ch] = static_cast<T>(sum_dy);
    for (std::size_t b = 0; b < n; ++b) {
      const T* dyi = dy.at(b, ch);
      const T* xh = cache.xhat.at(b, ch);
      T* dxo = dx.at(b, ch);
      for (std::size_t i = 0; i < L; ++i) {
        double v;
        if (mode == Mode::train) {
          v = g * inv_std *
              (static_cast<double>(dyi[i]) - sum_dy / count -
               static_cast<double>(xh[i]) * sum_dy_xhat / count);
        } else {
          v = g * inv_std * static_cast<double>(dyi[i]);
        }
        dxo[i] = static_cast<T>(v);
      }
    }
  }
}

template <class T>
BatchMap<T> relu(const BatchMap<T>& x) {
  BatchMap<T> y = x;
  for (auto& v : y.v) v = std::max(v, T(0));
  return y;
}

// Max pool size 2 / stride 2; ties break to the first (lower) index.
template <class T>
BatchMap<T> maxpool1d(const BatchMap<T>& x, std::vector<std::uint32_t>& argmax) {
  if (x.len % 2 != 0) throw std::invalid_argument("maxpool1d: odd length");
  BatchMap<T> y(x.n, x.c, x.len / 2);
  argmax.assign(x.n * x.c * y.len, 0);
  std::size_t p = 0;
  for (std::size_t b = 0; b < x.n; ++b)
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      const T* xi = x.at(b, ch);
      T* yo = y.at(b, ch);
      for (std::size_t i = 0; i < y.len; ++i, ++p) {
        const std::size_t j = 2 * i;
        if (xi[j] >= xi[j + 1]) {
          yo[i] = xi[j];
          argmax[p] = static_cast<std::uint32_t>(j);
        } else {
          yo[i] = xi[j + 1];
          argmax[p] = static_cast<std::uint32_t>(j + 1);
        }
      }
    }
  return y;
}

// Per-channel max over positions; ties break to the first index.
template <class T>
void global_maxpool(const BatchMap<T>& x, std::vector<T>& vals,
                    std::vector<std::uint32_t>& argmax) {
  vals.assign(x.n * x.c, T(0));
  argmax.assign(x.n * x.c, 0);
  for (std::size_t b = 0; b < x.n; ++b)
    for (std::size_t ch = 0; ch < x.c; ++ch) {
      const T* xi = x.at(b, ch);
      T best = xi[0];
      std::uint32_t bi = 0;
      for (std::size_t i = 1; i < x.len; ++i)
        if (xi[i] > best) {
          best = xi[i];
          bi = static_cast<std::uint32_t>(i);
        }
      vals[b * x.c + ch] = best;
      argmax[b * x.c + ch] = bi;
    }
}

// Softmax with max-subtraction; accumulation in double.
template <class T>
std::vector<T> softmax(const std::vector<T>& logits) {
  std::vector<T> p(logits.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (auto v : logits) mx = std::max(mx, static_cast<double>(v));
  double s = 0.0;
  std::vector<double> e(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    e[i] = std::exp(static_cast<double>(logits[i]) - mx);
    s += e[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) p[i] = static_cast<T>(e[i] / s);
  return p;
}

// ---------------------------------------------------------------------------
// Full model forward/backward.

template <class T>
struct BlockTrace {
  BatchMap<T> input;  // block input
  BatchMap<T> conv_out;
  BnCache<T> bn_cache;
  BatchMap<T> bn_out;
  BatchMap<T> relu_out;
  std::vector<std::uint32_t> pool_argmax;
  BatchMap<T> pooled;
};

template <class T>
struct ForwardTrace {
  Mode mode = Mode::eval;
  std::size_t batch = 0;
  std::vector<BlockTrace<T>> blocks;
  // Last block's pooled output is the Grad-CAM feature map A (K x Z).
  std::vector<T> gmp_vals;                // [n][K]
  std::vector<std::uint32_t> gmp_argmax;  // [n][K]
  std::vector<T> logits;                  // [n][C]
  std::vector<T> probs;                   // [n][C]

  const BatchMap<T>& feature_map() const { return blocks.back().pooled; }
};

template <class T>
ForwardTrace<T> forward(Model<T>& model, const BatchMap<T>& input, Mode mode) {
  model.arch.validate();
  if (input.c != 1 || input.len != model.arch.input_len)
    throw std::invalid_argument("forward: input shape mismatch");
  ForwardTrace<T> tr;
  tr.mode = mode;
  tr.batch = input.n;
  BatchMap<T> x = input;
  for (std::uint32_t l = 0; l < model.arch.n_blocks; ++l) {
    BlockTrace<T> bt;
    bt.input = std::move(x);
    bt.conv_out = conv1d_forward(bt.input, model.conv[l]);
    bt.bn_out = batchnorm_forward(bt.conv_out, model.bn[l], mode, &bt.bn_cache);
    bt.relu_out = relu(bt.bn_out);
    bt.pooled = maxpool1d(bt.relu_out, bt.pool_argmax);
    x = bt.pooled;
    tr.blocks.push_back(std::move(bt));
  }
  global_maxpool(x, tr.gmp_vals, tr.gmp_argmax);
  const std::uint32_t K = model.arch.feature_channels();
  const std::uint32_t C = model.arch.n_classes;
  tr.logits.assign(input.n * C, T(0));
  tr.probs.assign(input.n * C, T(0));
  for (std::size_t b = 0; b < input.n; ++b) {
    std::vector<T> lg(C);
    for (std::uint32_t c = 0; c < C; ++c) {
      double acc = static_cast<double>(model.dense_b[c]);
      for (std::uint32_t k = 0; k < K; ++k)
        acc += static_cast<double>(model.dense_w[static_cast<std::size_t>(c) * K + k]) *
               static_cast<double>(tr.gmp_vals[b * K + k]);
      lg[c] = static_cast<T>(acc);
    }
    auto pb = softmax(lg);
    for (std::uint32_t c = 0; c < C; ++c) {
      tr.logits[b * C + c] = lg[c];
      tr.probs[b * C + c] = pb[c];
    }
  }
  return tr;
}

template <class T>
struct Gradients {
  std::vector<std::vector<T>> conv_w, conv_b;  // per block
  std::vector<std::vector<T>> bn_gamma, bn_beta;
  std::vector<T> dense_w, dense_b;
};

// Mean softmax cross-entropy over the batch.
template <class T>
double batch_loss(const ForwardTrace<T>& tr, const std::vector<std::uint8_t>& labels,
                  std::uint32_t n_classes) {
  double loss = 0.0;
  for (std::size_t b = 0; b < tr.batch; ++b) {
    const double p = static_cast<double>(tr.probs[b * n_classes + labels[b]]);
    loss -= std::log(std::max(p, 1e-30));
  }
  return loss / static_cast<double>(tr.batch);
}

// Gradients of mean softmax-CE loss w.r.t. all parameters.
template <class T>
Gradients<T> backward(const Model<T>& model, const ForwardTrace<T>& tr,
                      const std::vector<std::uint8_t>& labels) {
  const std::uint32_t C = model.arch.n_classes;
  const std::uint32_t K = model.arch.feature_channels();
  const std::size_t n = tr.batch;
  if (labels.size() != n) throw std::invalid_argument("backward: label count mismatch");
  Gradients<T> g;

  // dlogits = (p - onehot)/n
  std::vector<double> dlogits(n * C);
  for (std::size_t b = 0; b < n; ++b)
    for (std::uint32_t c = 0; c < C; ++c)
      dlogits[b * C + c] =
          (static_cast<double>(tr.probs[b * C + c]) - (labels[b] == c ? 1.0 : 0.0)) /
          static_cast<double>(n);

  // Dense layer.
  g.dense_w.assign(model.dense_w.size(), T(0));
  g.dense_b.assign(C, T(0));
  std::vector<double> dgmp(n * K, 0.0);
  for (std::uint32_t c = 0; c < C; ++c) {
    double db = 0.0;
    for (std::size_t b = 0; b < n; ++b) db += dlogits[b * C + c];
    g.dense_b[c] = static_cast<T>(db);
    for (std::uint32_t k = 0; k < K; ++k) {
      double dw = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        dw += dlogits[b * C + c] * static_cast<double>(tr.gmp_vals[b * K + k]);
      g.dense_w[static_cast<std::size_t>(c) * K + k] = static_cast<T>(dw);
    }
  }
  for (std::size_t b = 0; b < n; ++b)
    for (std::uint32_t k = 0; k < K; ++k)
      for (std::uint32_t c = 0; c < C; ++c)
        dgmp[b * K + k] +=
            dlogits[b * C + c] *
            static_cast<double>(model.dense_w[static_cast<std::size_t>(c) * K + k]);

  // Global max pool: gradient flows only to argmax positions.
  const auto& A = tr.feature_map();
  BatchMap<T> dA(A.n, A.c, A.len);
  for (std::size_t b = 0; b < n; ++b)
    for (std::uint32_t k = 0; k < K; ++k)
      dA.at(b, k)[tr.gmp_argmax[b * K + k]] = static_cast<T>(dgmp[b * K + k]);

  // Blocks in reverse.
  const std::uint32_t B = model.arch.n_blocks;
  g.conv_w.resize(B);
  g.conv_b.resize(B);
  g.bn_gamma.resize(B);
  g.bn_beta.resize(B);
  BatchMap<T> grad = std::move(dA);
  for (std::uint32_t l = B; l-- > 0;) {
    const BlockTrace<T>& bt = tr.blocks[l];
    // Max pool backward.
    BatchMap<T> drelu(bt.relu_out.n, bt.relu_out.c, bt.relu_out.len);
    {
      std::size_t p = 0;
      for (std::size_t b = 0; b < grad.n; ++b)
        for (std::size_t ch = 0; ch < grad.c; ++ch) {
          const T* gi = grad.at(b, ch);
          T* go = drelu.at(b, ch);
          for (std::size_t i = 0; i < grad.len; ++i, ++p)
            go[bt.pool_argmax[p]] += gi[i];
        }
    }
    // ReLU backward.
    for (std::size_t i = 0; i < drelu.v.size(); ++i)
      if (bt.bn_out.v[i] <= T(0)) drelu.v[i] = T(0);
    // BN backward.
    BatchMap<T> dconv;
    batchnorm_backward(model.bn[l], bt.bn_cache, drelu, tr.mode, dconv,
                       g.bn_gamma[l], g.bn_beta[l]);
    // Conv backward.
    BatchMap<T> dx;
    conv1d_backward(bt.input, model.conv[l], dconv, dx, g.conv_w[l], g.conv_b[l]);
    grad = std::move(dx);
  }
  return g;
}

// Jacobian row d(logit c)/dA for sample b: nonzero only at the per-channel
// global-max positions, with value dense_w[c][k].
template <class T>
BatchMap<T> logit_grad_wrt_feature_map(const Model<T>& model,
                                       const ForwardTrace<T>& tr, std::uint32_t cls,
                                       std::size_t b = 0) {
  const std::uint32_t K = model.arch.feature_channels();
  const std::uint32_t Z = model.arch.feature_len();
  if (cls >= model.arch.n_classes) throw std::invalid_argument("bad class index");
  BatchMap<T> dA(1, K, Z);
  for (std::uint32_t k = 0; k < K; ++k)
    dA.at(0, k)[tr.gmp_argmax[b * K + k]] =
        model.dense_w[static_cast<std::size_t>(cls) * K + k];
  return dA;
}

// Recompute logits from a (possibly perturbed) feature map; used by tests to
// finite-difference d(logit)/dA.
template <class T>
std::vector<T> logits_from_feature_map(const Model<T>& model, const BatchMap<T>& A,
                                       std::size_t b = 0) {
  const std::uint32_t K = model.arch.feature_channels();
  const std::uint32_t C = model.arch.n_classes;
  std::vector<T> vals;
  std::vector<std::uint32_t> arg;
  global_maxpool(A, vals, arg);
  std::vector<T> lg(C);
  for (std::uint32_t c = 0; c < C; ++c) {
    double acc = static_cast<double>(model.dense_b[c]);
    for (std::uint32_t k = 0; k < K; ++k)
      acc += static_cast<double>(model.dense_w[static_cast<std::size_t>(c) * K + k]) *
             static_cast<double>(vals[b * K + k]);
    lg[c] = static_cast<T>(acc);
  }
  return lg;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
  double learning_rate = 1e-3;
  std::uint32_t batch_size = 32;
  std::uint32_t max_epochs = 50;
  std::uint32_t patience = 8;  // early-stopping patience in epochs; 0 disables
  double val_fraction = 0.15;
  Optimizer optimizer = Optimizer::sgd_momentum;
  double momentum = 0.9;
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::uint32_t epoch = 0;
  double train_loss = 0.0, train_acc = 0.0;
  double val_loss = 0.0, val_acc = 0.0;
};

template <class T>
std::uint32_t predict_class(const std::vector<T>& probs) {
  // Tie broken toward the lowest class index.
  std::uint32_t best = 0;
  for (std::uint32_t c = 1; c < probs.size(); ++c)
    if (probs[c] > probs[best]) best = c;
  return best;
}

template <class T>
struct PredictResult {
  std::uint32_t cls = 0;
  std::vector<T> probs;
};

template <class T>
PredictResult<T> predict(Model<T>& model, const EnvelopeSpectrum& s) {
  BatchMap<T> x(1, 1, model.arch.input_len);
  if (s.amplitudes.size() != model.arch.input_len)
    throw std::invalid_argument("predict: spectrum length mismatch");
  for (std::size_t i = 0; i < s.amplitudes.size(); ++i)
    x.v[i] = static_cast<T>(s.amplitudes[i]);
  auto tr = forward(model, x, Mode::eval);
  PredictResult<T> r;
  r.probs = tr.probs;
  r.cls = predict_class(r.probs);
  return r;
}

template <class T>
std::pair<double, double> evaluate(Model<T>& model, const Dataset& ds) {
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& s : ds.samples) {
    BatchMap<T> x(1, 1, model.arch.input_len);
    for (std::size_t i = 0; i < s.amplitudes.size(); ++i)
      x.v[i] = static_cast<T>(s.amplitudes[i]);
    auto tr = forward(model, x, Mode::eval);
    std::vector<std::uint8_t> lab{static_cast<std::uint8_t>(s.label)};
    loss += batch_loss(tr, lab, model.arch.n_classes);
    if (predict_class(std::vector<T>(tr.probs.begin(), tr.probs.end())) ==
        static_cast<std::uint32_t>(s.label))
      ++correct;
  }
  const double n = static_cast<double>(ds.samples.size());
  return {loss / n, static_cast<double>(correct) / n};
}

template <class T>
std::vector<EpochStats> train(Model<T>& model, const Dataset& train_set,
                              const TrainConfig& cfg) {
  model.arch.validate();
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be > 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  std::array<std::size_t, 3> per_class{0, 0, 0};
  for (const auto& s : train_set.samples)
    ++per_class[static_cast<std::size_t>(s.label)];
  for (std::uint32_t c = 0; c < model.arch.n_classes; ++c)
    if (per_class[c] == 0)
      throw std::invalid_argument("train: class " + std::to_string(c) +
                                  " has no samples");

  // Deterministic validation carve-out (tail of a fixed shuffle).
  std::vector<std::size_t> order(train_set.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng = Rng::substream(cfg.seed, 0x7107ULL);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.below(i)]);
  auto n_val = static_cast<std::size_t>(cfg.val_fraction *
                                        static_cast<double>(order.size()));
  if (order.size() - n_val < 2 * cfg.batch_size) n_val = 0;
  std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val),
                                   order.end());
  std::vector<std::size_t> train_idx(order.begin(),
                                     order.end() - static_cast<std::ptrdiff_t>(n_val));

  // Momentum / Adam state.
  Gradients<T> vel;
  Gradients<T> adam_m, adam_v;
  auto zero_like = [&](Gradients<T>& gz) {
    gz.conv_w.resize(model.conv.size());
    gz.conv_b.resize(model.conv.size());
    gz.bn_gamma.resize(model.bn.size());
    gz.bn_beta.resize(model.bn.size());
    for (std::size_t l = 0; l < model.conv.size(); ++l) {
      gz.conv_w[l].assign(model.conv[l].w.size(), T(0));
      gz.conv_b[l].assign(model.conv[l].b.size(), T(0));
      gz.bn_gamma[l].assign(model.bn[l].gamma.size(), T(0));
      gz.bn_beta[l].assign(model.bn[l].beta.size(), T(0));
    }
    gz.dense_w.assign(model.dense_w.size(), T(0));
    gz.dense_b.assign(model.dense_b.size(), T(0));
  };
  zero_like(vel);
  zero_like(adam_m);
  zero_like(adam_v);
  std::uint64_t adam_t = 0;

  auto apply = [&](std::vector<T>& param, const std::vector<T>& grad,
                   std::vector<T>& v, std::vector<T>& m1, std::vector<T>& m2) {
    if (cfg.optimizer == Optimizer::sgd_momentum) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        v[i] = static_cast<T>(cfg.momentum * static_cast<double>(v[i]) -
                              cfg.learning_rate * static_cast<double>(grad[i]));
        param[i] = static_cast<T>(static_cast<double>(param[i]) +
                                  static_cast<double>(v[i]));
      }
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
      const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double gi = static_cast<double>(grad[i]);
        m1[i] = static_cast<T>(b1 * static_cast<double>(m1[i]) + (1.0 - b1) * gi);
        m2[i] = static_cast<T>(b2 * static_cast<double>(m2[i]) + (1.0 - b2) * gi * gi);
        const double mhat = static_cast<double>(m1[i]) / bc1;
        const double vhat = static_cast<double>(m2[i]) / bc2;
        param[i] = static_cast<T>(static_cast<double>(param[i]) -
                                  cfg.learning_rate * mhat /
                                      (std::sqrt(vhat) + eps));
      }
    }
  };

  std::vector<EpochStats> history;
  Model<T> best_model = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::uint32_t since_best = 0;

  Rng epoch_rng = Rng::substream(cfg.seed, 0xE90CULL);
  for (std::uint32_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    for (std::size_t i = train_idx.size(); i > 1; --i)
      std::swap(train_idx[i - 1], train_idx[epoch_rng.below(i)]);

    double epoch_loss = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += cfg.batch_size) {
      const std::size_t nb = std::min<std::size_t>(cfg.batch_size,
                                                   train_idx.size() - start);
      if (nb < 2) break;  // BN train mode needs >= 2
      BatchMap<T> x(nb, 1, model.arch.input_len);
      std::vector<std::uint8_t> labels(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& s = train_set.samples[train_idx[start + b]];
        for (std::size_t i = 0; i < s.amplitudes.size(); ++i)
          x.at(b, 0)[i] = static_cast<T>(s.amplitudes[i]);
        labels[b] = static_cast<std::uint8_t>(s.label);
      }
      auto tr = forward(model, x, Mode::train);
      const double loss = batch_loss(tr, labels, model.arch.n_classes);
      if (!std::isfinite(loss))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(nb);
      for (std::size_t b = 0; b < nb; ++b) {
        std::vector<T> pb(tr.probs.begin() + static_cast<std::ptrdiff_t>(
                                                 b * model.arch.n_classes),
                          tr.probs.begin() + static_cast<std::ptrdiff_t>(
                                                 (b + 1) * model.arch.n_classes));
        if (predict_class(pb) == labels[b]) ++correct;
      }
      seen += nb;
      auto g = backward(model, tr, labels);
      ++adam_t;
      for (std::size_t l = 0; l < model.conv.size(); ++l) {
        apply(model.conv[l].w, g.conv_w[l], vel.conv_w[l], adam_m.conv_w[l],
              adam_v.conv_w[l]);
        apply(model.conv[l].b, g.conv_b[l], vel.conv_b[l], adam_m.conv_b[l],
              adam_v.conv_b[l]);
        apply(model.bn[l].gamma, g.bn_gamma[l], vel.bn_gamma[l], adam_m.bn_gamma[l],
              adam_v.bn_gamma[l]);
        apply(model.bn[l].beta, g.bn_beta[l], vel.bn_beta[l], adam_m.bn_beta[l],
              adam_v.bn_beta[l]);
      }
      apply(model.dense_w, g.dense_w, vel.dense_w, adam_m.dense_w, adam_v.dense_w);
      apply(model.dense_b, g.dense_b, vel.dense_b, adam_m.dense_b, adam_v.dense_b);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = epoch_loss / static_cast<double>(std::max<std::size_t>(seen, 1));
    st.train_acc = static_cast<double>(correct) /
                   static_cast<double>(std::max<std::size_t>(seen, 1));
    if (!val_idx.empty()) {
      Dataset val;
      val.grid = train_set.grid;
      for (auto i : val_idx) val.samples.push_back(train_set.samples[i]);
      auto [vl, va] = evaluate(model, val);
      st.val_loss = vl;
      st.val_acc = va;
    } else {
      st.val_loss = st.train_loss;
      st.val_acc = st.train_acc;
    }
    history.push_back(st);

    if (st.val_loss < best_val - 1e-9) {
      best_val = st.val_loss;
      best_model = model;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }
  }
  model = best_model;
  return history;
}

// ---------------------------------------------------------------------------
// Model weights file "BXMW" (f32, little-endian). Bit-exact round trip.

inline void save_model(const Model<float>& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open for writing: " + path);
  io::write_magic(os, "BXMW");
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint32_t>(os, m.arch.n_blocks);
  for (std::uint32_t l = 0; l < m.arch.n_blocks; ++l) {
    io::write_le<std::uint32_t>(os, m.arch.channels[l]);
    io::write_le<std::uint32_t>(os, m.arch.kernels[l]);
  }
  io::write_le<std::uint32_t>(os, m.arch.input_len);
  io::write_le<std::uint32_t>(os, m.arch.n_classes);
  for (std::uint32_t l = 0; l < m.arch.n_blocks; ++l) {
    io::write_vec(os, m.conv[l].w);
    io::write_vec(os, m.conv[l].b);
    io::write_vec(os, m.bn[l].gamma);
    io::write_vec(os, m.bn[l].beta);
  }
  io::write_vec(os, m.dense_w);
  io::write_vec(os, m.dense_b);
  for (std::uint32_t l = 0; l < m.arch.n_blocks; ++l) {
    io::write_vec(os, m.bn[l].running_mean);
    io::write_vec(os, m.bn[l].running_var);
    io::write_le<std::uint8_t>(os, m.bn[l].initialized ? 1 : 0);
  }
  if (!os) throw io::FormatError("write failed: " + path);
}

inline Model<float> load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open: " + path);
  io::expect_magic(is, "BXMW");
  if (io::read_le<std::uint16_t>(is) != 1)
    throw io::FormatError("unsupported BXMW version");
  ModelArch arch;
  arch.n_blocks = io::read_le<std::uint32_t>(is);
  if (arch.n_blocks == 0 || arch.n_blocks > 16)
    throw io::FormatError("implausible block count");
  arch.channels.resize(arch.n_blocks);
  arch.kernels.resize(arch.n_blocks);
  for (std::uint32_t l = 0; l < arch.n_blocks; ++l) {
    arch.channels[l] = io::read_le<std::uint32_t>(is);
    arch.kernels[l] = io::read_le<std::uint32_t>(is);
  }
  arch.input_len = io::read_le<std::uint32_t>(is);
  arch.n_classes = io::read_le<std::uint32_t>(is);
  arch.validate();
  Model<float> m = Model<float>::init(arch, 0);
  for (std::uint32_t l = 0; l < arch.n_blocks; ++l) {
    io::read_vec(is, m.conv[l].w, m.conv[l].w.size());
    io::read_vec(is, m.conv[l].b, m.conv[l].b.size());
    io::read_vec(is, m.bn[l].gamma, m.bn[l].gamma.size());
    io::read_vec(is, m.bn[l].beta, m.bn[l].beta.size());
  }
  io::read_vec(is, m.dense_w, m.dense_w.size());
  io::read_vec(is, m.dense_b, m.dense_b.size());
  for (std::uint32_t l = 0; l < arch.n_blocks; ++l) {
    io::read_vec(is, m.bn[l].running_mean, m.bn[l].running_mean.size());
    io::read_vec(is, m.bn[l].running_var, m.bn[l].running_var.size());
    m.bn[l].initialized = io::read_le<std::uint8_t>(is) != 0;
  }
  return m;
}

}  // namespace bxai
