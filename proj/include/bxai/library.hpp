// Health library: one (full activation vector, health class) entry per
// training sample, persisted with a model fingerprint so stale libraries are
// detected at query time.
#pragma once

#include <openssl/sha.h>

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/gradcam.hpp"
#include "bxai/nn.hpp"

namespace bxai {

using Fingerprint = std::array<std::uint8_t, 32>;

inline Fingerprint sha256_bytes(const void* data, std::size_t n) {
  Fingerprint out;
  SHA256(static_cast<const unsigned char*>(data), n, out.data());
  return out;
}

// Content hash of the serialized weights; any weight change invalidates
// libraries built from the model.
inline Fingerprint model_fingerprint(const Model<float>& m) {
  std::ostringstream os(std::ios::binary);
  {
    // Serialize through the BXMW writer for a canonical byte stream.
    std::string tmp;
    std::ostringstream buf(std::ios::binary);
    io::write_le<std::uint32_t>(buf, m.arch.input_len);
    io::write_le<std::uint32_t>(buf, m.arch.n_classes);
    for (std::uint32_t l = 0; l < m.arch.n_blocks; ++l) {
      io::write_le<std::uint32_t>(buf, m.arch.channels[l]);
      io::write_le<std::uint32_t>(buf, m.arch.kernels[l]);
      io::write_vec(buf, m.conv[l].w);
      io::write_vec(buf, m.conv[l].b);
      io::write_vec(buf, m.bn[l].gamma);
      io::write_vec(buf, m.bn[l].beta);
      io::write_vec(buf, m.bn[l].running_mean);
      io::write_vec(buf, m.bn[l].running_var);
    }
    io::write_vec(buf, m.dense_w);
    io::write_vec(buf, m.dense_b);
    tmp = buf.str();
    return sha256_bytes(tmp.data(), tmp.size());
  }
}

struct LibraryEntry {
  std::uint32_t sample_id = 0;
  HealthClass cls = HealthClass::healthy;
  std::vector<float> full_vector;  // un-normalized, input resolution
};

struct HealthLibrary {
  std::vector<LibraryEntry> entries;
  CamKind algo = CamKind::full;
  double epsilon = 0.05;
  OrderGrid grid;
  Fingerprint fingerprint{};
};

// Full-resolution vectors are always stored; the Sub projection is applied
// lazily at query time, so one library serves both algorithms.
inline HealthLibrary build_library(Model<float>& model, const Dataset& train_set,
                                   CamKind algo, const BandsByClass& bands,
                                   double epsilon) {
  HealthLibrary lib;
  lib.algo = algo;
  lib.epsilon = epsilon;
  lib.grid = train_set.grid;
  lib.fingerprint = model_fingerprint(model);
  lib.entries.reserve(train_set.samples.size());
  for (const auto& s : train_set.samples) {
    auto av = activation_vector(model, s, s.label, CamKind::full, bands);
    LibraryEntry e;
    e.sample_id = s.sample_id;
    e.cls = s.label;
    e.full_vector.assign(av.values.begin(), av.values.end());
    lib.entries.push_back(std::move(e));
  }
  return lib;
}

inline void save_library(const HealthLibrary& lib, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open for writing: " + path);
  io::write_magic(os, "BXHL");
  io::write_le<std::uint16_t>(os, 1);
  io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(lib.algo));
  io::write_le<double>(os, lib.epsilon);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(lib.entries.size()));
  io::write_le<std::uint32_t>(os, lib.grid.n_bins);
  io::write_le<double>(os, lib.grid.order_min);
  io::write_le<double>(os, lib.grid.order_max);
  io::write_bytes(os, lib.fingerprint.data(), lib.fingerprint.size());
  for (const auto& e : lib.entries) {
    if (e.full_vector.size() != lib.grid.n_bins)
      throw io::FormatError("library entry length does not match grid");
    io::write_le<std::uint32_t>(os, e.sample_id);
    io::write_le<std::uint8_t>(os, static_cast<std::uint8_t>(e.cls));
    io::write_vec(os, e.full_vector);
  }
  if (!os) throw io::FormatError("write failed: " + path);
}

inline HealthLibrary load_library(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io::FormatError("cannot open: " + path);
  io::expect_magic(is, "BXHL");
  if (io::read_le<std::uint16_t>(is) != 1)
    throw io::FormatError("unsupported BXHL version");
  HealthLibrary lib;
  const auto algo = io::read_le<std::uint8_t>(is);
  if (algo > 1) throw io::FormatError("invalid algo byte");
  lib.algo = static_cast<CamKind>(algo);
  lib.epsilon = io::read_le<double>(is);
  const auto n_entries = io::read_le<std::uint32_t>(is);
  lib.grid.n_bins = io::read_le<std::uint32_t>(is);
  lib.grid.order_min = io::read_le<double>(is);
  lib.grid.order_max = io::read_le<double>(is);
  lib.grid.validate();
  io::read_bytes(is, lib.fingerprint.data(), lib.fingerprint.size());
  lib.entries.resize(n_entries);
  for (auto& e : lib.entries) {
    e.sample_id = io::read_le<std::uint32_t>(is);
    const auto cls = io::read_le<std::uint8_t>(is);
    if (cls > 2) throw io::FormatError("invalid class byte");
    e.cls = static_cast<HealthClass>(cls);
    io::read_vec(is, e.full_vector, lib.grid.n_bins);
  }
  return lib;
}

struct FingerprintMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_fingerprint(const HealthLibrary& lib, const Model<float>& model) {
  if (lib.fingerprint != model_fingerprint(model))
    throw FingerprintMismatch(
        "library fingerprint does not match model weights; rebuild the library");
}

}  // namespace bxai
