// bxai: bearing fault diagnosis with activation-similarity explanations.
//
// Subcommands: synth, train, build-library, explain, eval-removal.
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.
#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bxai/dsp.hpp"
#include "bxai/eval.hpp"
#include "bxai/gradcam.hpp"
#include "bxai/library.hpp"
#include "bxai/nn.hpp"
#include "bxai/retrieval.hpp"
#include "bxai/svg.hpp"
#include "bxai/synthgen.hpp"

namespace fs = std::filesystem;
using namespace bxai;

namespace {

std::string g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::uint32_t env_thread_cap() {
  const char* s = std::getenv("BXAI_THREADS");
  if (!s || !*s) return 0;
  const long v = std::strtol(s, nullptr, 10);
  if (v < 1) throw CLI::ValidationError("BXAI_THREADS must be a positive integer");
  return static_cast<std::uint32_t>(v);
}

std::uint32_t resolve_threads(std::uint32_t requested) {
  std::uint32_t t = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  const std::uint32_t cap = env_thread_cap();
  if (cap) t = std::min(t, cap);
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io::FormatError("cannot open for writing: " + path.string());
  os << text;
  if (!os) throw io::FormatError("write failed: " + path.string());
}

CamKind parse_algo(const std::string& s) {
  if (s == "cam-full") return CamKind::full;
  if (s == "cam-sub") return CamKind::sub;
  throw CLI::ValidationError("--algo must be cam-full or cam-sub");
}

const char* algo_name(CamKind k) { return k == CamKind::sub ? "cam-sub" : "cam-full"; }

// Geometry + epsilon flags shared by every subcommand that needs fault bands.
// Defaults match the synth subcommand (d/D = 0.2375, bpfo 3.05) so a pipeline
// run with default flags uses consistent sub-bands end to end.
struct GeomOpts {
  BearingGeometry geom{8, 0.2375, 1.0, 0.0, 25.0};
  double epsilon = 0.05;

  void attach(CLI::App* cmd, bool with_epsilon = true) {
    cmd->add_option("--rollers", geom.n_rollers, "Number of rolling elements")
        ->capture_default_str();
    cmd->add_option("--roller-d", geom.inner_diameter_d, "Rolling element diameter d")
        ->capture_default_str();
    cmd->add_option("--pitch-D", geom.outer_diameter_D, "Pitch diameter D")
        ->capture_default_str();
    cmd->add_option("--contact-angle", geom.load_angle_phi,
                    "Contact angle phi in radians")
        ->capture_default_str();
    cmd->add_option("--shaft-freq", geom.shaft_freq_fr, "Shaft frequency in Hz")
        ->capture_default_str();
    if (with_epsilon)
      cmd->add_option("--epsilon", epsilon,
                      "Sub-band half-width as a fraction of the fault order")
          ->capture_default_str();
  }
};

struct TrainOpts {
  TrainConfig cfg;
  std::vector<std::uint32_t> channels = {16, 32, 64};
  std::vector<std::uint32_t> kernels = {9, 7, 5};
  std::string optimizer = "sgd";

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", cfg.max_epochs, "Maximum training epochs")
        ->capture_default_str();
    cmd->add_option("--lr", cfg.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--batch-size", cfg.batch_size, "Mini-batch size")
        ->capture_default_str();
    cmd->add_option("--patience", cfg.patience,
                    "Early-stopping patience in epochs (0 disables)")
        ->capture_default_str();
    cmd->add_option("--val-fraction", cfg.val_fraction,
                    "Fraction of training data held out for early stopping")
        ->capture_default_str();
    cmd->add_option("--optimizer", optimizer, "Optimizer: sgd or adam")
        ->check(CLI::IsMember({"sgd", "adam"}))
        ->capture_default_str();
    cmd->add_option("--channels", channels, "Conv channels per block")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    cmd->add_option("--kernels", kernels, "Conv kernel sizes per block")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
  }

  TrainConfig resolved(std::uint64_t seed) const {
    TrainConfig c = cfg;
    c.seed = seed;
    c.optimizer = optimizer == "adam" ? Optimizer::adam : Optimizer::sgd_momentum;
    return c;
  }

  ModelArch arch(std::uint32_t input_len) const {
    ModelArch a;
    a.channels = channels;
    a.kernels = kernels;
    a.input_len = input_len;
    a.validate();
    return a;
  }
};

Dataset load_any_dataset(const std::string& path, std::uint32_t bins) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") {
    OrderGrid grid;
    grid.n_bins = bins;
    return import_csv_dataset(path, grid);
  }
  return load_dataset(path);
}

void require_grid_match(const Dataset& ds, const Model<float>& m,
                        const std::string& what) {
  if (ds.grid.n_bins != m.arch.input_len)
    throw io::FormatError(what + ": dataset has " + std::to_string(ds.grid.n_bins) +
                          " bins but the model expects " +
                          std::to_string(m.arch.input_len));
}

std::string probs_json(const std::vector<float>& probs) {
  std::string s = "[";
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (i) s += ",";
    s += g9(static_cast<double>(probs[i]));
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, SynthConfig& cfg, std::uint32_t bins,
              double test_fraction, std::uint64_t split_seed) {
  fs::create_directories(out_dir);
  OrderGrid grid;
  grid.n_bins = bins;
  grid.validate();

  auto time_samples = generate_dataset(cfg);
  auto all = spectra_from_time_samples(time_samples, cfg, grid);
  Dataset train_set, test_set;
  stratified_split(all, test_fraction, split_seed, train_set, test_set);
  save_dataset(train_set, (fs::path(out_dir) / "train.bxai").string());
  save_dataset(test_set, (fs::path(out_dir) / "test.bxai").string());

  // Sidecar: the exact configuration that produced the files.
  std::ostringstream js;
  js << "{\n"
     << "  \"geometry\": {\"n_rollers\": " << cfg.geometry.n_rollers
     << ", \"roller_d\": " << g9(cfg.geometry.inner_diameter_d)
     << ", \"pitch_D\": " << g9(cfg.geometry.outer_diameter_D)
     << ", \"contact_angle\": " << g9(cfg.geometry.load_angle_phi)
     << ", \"shaft_freq\": " << g9(cfg.geometry.shaft_freq_fr) << "},\n"
     << "  \"class_counts\": [" << cfg.class_counts[0] << ", " << cfg.class_counts[1]
     << ", " << cfg.class_counts[2] << "],\n"
     << "  \"signal_len\": " << cfg.signal_len << ",\n"
     << "  \"sample_rate\": " << g9(cfg.sample_rate) << ",\n"
     << "  \"resonance_freq\": " << g9(cfg.resonance_freq) << ",\n"
     << "  \"resonance_damping\": " << g9(cfg.resonance_damping) << ",\n"
     << "  \"impulse_amplitude\": " << g9(cfg.impulse_amplitude) << ",\n"
     << "  \"noise_std\": " << g9(cfg.noise_std) << ",\n"
     << "  \"jitter_std\": " << g9(cfg.jitter_std) << ",\n"
     << "  \"amplitude_spread\": " << g9(cfg.amplitude_spread) << ",\n"
     << "  \"noise_spread\": " << g9(cfg.noise_spread) << ",\n"
     << "  \"damping_spread\": " << g9(cfg.damping_spread) << ",\n"
     << "  \"jitter_spread\": " << g9(cfg.jitter_spread) << ",\n"
     << "  \"mod_depth_max\": " << g9(cfg.mod_depth_max) << ",\n"
     << "  \"mod_order_min\": " << g9(cfg.mod_order_min) << ",\n"
     << "  \"mod_order_max\": " << g9(cfg.mod_order_max) << ",\n"
     << "  \"seed\": " << cfg.seed << ",\n"
     << "  \"split_seed\": " << split_seed << ",\n"
     << "  \"test_fraction\": " << g9(test_fraction) << ",\n"
     << "  \"bins\": " << bins << "\n"
     << "}\n";
  write_text(fs::path(out_dir) / "synth_config.json", js.str());

  std::cout << "synth: wrote " << train_set.samples.size() << " train / "
            << test_set.samples.size() << " test samples to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(const std::string& train_path, const std::string& model_path,
              const std::string& history_path, const TrainOpts& topts,
              std::uint64_t seed, std::uint32_t bins) {
  Dataset train_set = load_any_dataset(train_path, bins);
  Model<float> model = Model<float>::init(topts.arch(train_set.grid.n_bins), seed);
  auto history = train(model, train_set, topts.resolved(seed));
  save_model(model, model_path);

  if (!history_path.empty()) {
    std::ostringstream cs;
    cs << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    for (const auto& e : history)
      cs << e.epoch << "," << g9(e.train_loss) << "," << g9(e.train_acc) << ","
         << g9(e.val_loss) << "," << g9(e.val_acc) << "\n";
    write_text(history_path, cs.str());
  }
  std::cout << "train: " << history.size() << " epochs, final train_acc="
            << g9(history.empty() ? 0.0 : history.back().train_acc) << ", model -> "
            << model_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// build-library
// ---------------------------------------------------------------------------

int cmd_build_library(const std::string& train_path, const std::string& model_path,
                      const std::string& out_path, CamKind algo, const GeomOpts& go,
                      std::uint32_t bins) {
  Dataset train_set = load_any_dataset(train_path, bins);
  Model<float> model = load_model(model_path);
  require_grid_match(train_set, model, "build-library");
  auto bands = BandsByClass::from_geometry(go.geom, go.epsilon, train_set.grid.order_max);
  auto lib = build_library(model, train_set, algo, bands, go.epsilon);
  save_library(lib, out_path);
  std::cout << "build-library: " << lib.entries.size() << " entries -> " << out_path
            << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// explain
// ---------------------------------------------------------------------------

int cmd_explain(const std::string& test_path, const std::string& train_path,
                const std::string& model_path, const std::string& lib_path,
                const std::string& out_dir, std::vector<std::uint32_t> ids,
                std::uint32_t top_k, CamKind algo, const GeomOpts& go,
                std::uint32_t bins, bool plots) {
  Dataset test_set = load_any_dataset(test_path, bins);
  Dataset train_set;
  if (!train_path.empty()) train_set = load_any_dataset(train_path, bins);
  Model<float> model = load_model(model_path);
  require_grid_match(test_set, model, "explain");
  HealthLibrary lib = load_library(lib_path);
  check_fingerprint(lib, model);
  if (lib.grid != test_set.grid)
    throw io::FormatError("explain: library grid does not match the test dataset");
  auto bands = BandsByClass::from_geometry(go.geom, go.epsilon, test_set.grid.order_max);
  const FaultOrders fo = compute_fault_orders(go.geom);

  fs::create_directories(out_dir);
  std::ostringstream report;
  std::size_t n_done = 0;
  for (const auto& s : test_set.samples) {
    if (!ids.empty() &&
        std::find(ids.begin(), ids.end(), s.sample_id) == ids.end())
      continue;
    auto pb = retrieve_basis(model, lib, s, top_k, algo, bands);

    report << "{\"sample_id\":" << pb.sample_id << ",\"predicted_class\":\""
           << to_string(pb.predicted) << "\",\"probabilities\":"
           << probs_json(pb.probabilities) << ",\"algo\":\"" << algo_name(pb.algo)
           << "\",\"fell_back_to_full\":" << (pb.sub_fell_back_to_full ? "true" : "false")
           << ",\"basis\":[";
    for (std::size_t i = 0; i < pb.basis.size(); ++i) {
      if (i) report << ",";
      report << "{\"entry_id\":" << pb.basis[i].entry_id << ",\"class\":\""
             << to_string(pb.basis[i].cls) << "\",\"distance\":"
             << g9(pb.basis[i].distance) << "}";
    }
    report << "]}\n";

    if (plots) {
      std::vector<svg::Panel> panels;
      const auto panel_for = [&](const EnvelopeSpectrum& sp, const std::string& title) {
        svg::Panel p;
        p.title = title;
        p.spectrum = sp.amplitudes;
        p.importance = activation_vector(model, sp, pb.predicted,
                                         CamKind::full, bands)
                           .values;
        return p;
      };
      panels.push_back(panel_for(
          s, "test sample " + std::to_string(s.sample_id) + " (predicted " +
                 to_string(pb.predicted) + ")"));
      for (const auto& b : pb.basis) {
        const std::string title = "basis " + std::to_string(b.entry_id) + " (" +
                                  to_string(b.cls) + ", distance " +
                                  g9(b.distance) + ")";
        // Basis samples live in the training set; when it is supplied, plot
        // the real spectrum with its own Grad-CAM heat. Otherwise fall back
        // to the stored activation vector, which shares the same axis.
        const EnvelopeSpectrum* src = nullptr;
        if (!train_set.samples.empty())
          for (const auto& ts : train_set.samples)
            if (ts.sample_id == b.entry_id) {
              src = &ts;
              break;
            }
        if (src) {
          panels.push_back(panel_for(*src, title));
        } else {
          for (const auto& e : lib.entries) {
            if (e.sample_id != b.entry_id) continue;
            svg::Panel p;
            p.title = title;
            p.spectrum.assign(e.full_vector.begin(), e.full_vector.end());
            p.importance.assign(e.full_vector.begin(), e.full_vector.end());
            panels.push_back(std::move(p));
            break;
          }
        }
      }
      std::optional<SubBands> shade;
      std::optional<double> order;
      if (pb.predicted == HealthClass::inner_race) {
        shade = bands.inner;
        order = fo.bpfi_order;
      } else if (pb.predicted == HealthClass::outer_race) {
        shade = bands.outer;
        order = fo.bpfo_order;
      }
      write_text(fs::path(out_dir) /
                     ("explain_" + std::to_string(s.sample_id) + ".svg"),
                 svg::explain_plot(panels, test_set.grid, shade, order));
    }
    ++n_done;
  }
  if (!ids.empty() && n_done != ids.size())
    throw io::FormatError("explain: some requested sample ids are not in the dataset");
  write_text(fs::path(out_dir) / "report.jsonl", report.str());
  std::cout << "explain: wrote " << n_done << " records to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval-removal
// ---------------------------------------------------------------------------

int cmd_eval_removal(const std::string& train_path, const std::string& test_path,
                     const std::string& model_path, const std::string& lib_path,
                     const std::string& out_dir, std::vector<double> fractions,
                     std::uint32_t repeats, std::uint64_t base_seed,
                     const TrainOpts& topts, const GeomOpts& go, std::uint32_t bins,
                     std::uint32_t threads, bool plots) {
  Dataset train_set = load_any_dataset(train_path, bins);
  Dataset test_set = load_any_dataset(test_path, bins);
  Model<float> model = load_model(model_path);
  require_grid_match(train_set, model, "eval-removal");
  require_grid_match(test_set, model, "eval-removal");
  HealthLibrary lib = load_library(lib_path);
  check_fingerprint(lib, model);
  auto bands = BandsByClass::from_geometry(go.geom, go.epsilon, train_set.grid.order_max);
  if (lib.entries.size() != train_set.samples.size())
    throw io::FormatError("eval-removal: library entry count does not match train set");

  // Importance = average distance to same-class test samples, once per algorithm.
  auto imp_full = avg_train_importance(
      distance_matrix(model, lib, test_set, CamKind::full, bands));
  auto imp_sub = avg_train_importance(
      distance_matrix(model, lib, test_set, CamKind::sub, bands));

  RemovalExperimentConfig rc;
  rc.fractions = fractions;
  rc.n_repeats = repeats;
  rc.base_seed = base_seed;
  rc.threads = resolve_threads(threads);

  const TrainConfig tc = topts.resolved(base_seed);
  const ModelArch arch = topts.arch(train_set.grid.n_bins);
  auto results = removal_experiment<float>(
      train_set, test_set, arch, tc, imp_full, imp_sub, rc,
      [](const std::string& m) { std::cerr << "warning: " << m << "\n"; });

  fs::create_directories(out_dir);
  {
    std::ostringstream cs;
    cs << "method,fraction,repeat,seed,test_accuracy,test_loss\n";
    for (const auto& rr : results)
      for (const auto& rep : rr.repeats) {
        cs << to_string(rr.method) << "," << g9(rr.fraction) << "," << rep.repeat
           << "," << rep.seed << ",";
        if (rep.failed)
          cs << "failed,failed\n";
        else
          cs << g9(rep.test_accuracy) << "," << g9(rep.test_loss) << "\n";
      }
    write_text(fs::path(out_dir) / "results.csv", cs.str());
  }

  // Confusion matrices at 20% and 40% removal, first repeat's seed.
  for (const auto& rr : results) {
    const bool snapshot = std::fabs(rr.fraction - 0.20) < 1e-9 ||
                          std::fabs(rr.fraction - 0.40) < 1e-9;
    if (!snapshot) continue;
    Dataset reduced;
    if (rr.method == RemovalMethod::random) {
      const std::uint64_t removal_seed =
          base_seed * 7919 + static_cast<std::uint64_t>(rr.fraction * 1000.0);
      reduced = remove_random_fraction(train_set, rr.fraction, removal_seed);
    } else {
      const auto& imp =
          rr.method == RemovalMethod::cam_full ? imp_full : imp_sub;
      reduced = remove_top_fraction(train_set, imp, rr.fraction);
    }
    Model<float> m = Model<float>::init(arch, base_seed);
    TrainConfig tcc = tc;
    tcc.seed = base_seed;
    train(m, reduced, tcc);
    auto cm = confusion_matrix(m, test_set);
    std::ostringstream cs;
    cs << "true\\pred";
    for (std::uint32_t c = 0; c < cm.n_classes; ++c)
      cs << "," << to_string(static_cast<HealthClass>(c));
    cs << "\n";
    for (std::uint32_t t = 0; t < cm.n_classes; ++t) {
      cs << to_string(static_cast<HealthClass>(t));
      for (std::uint32_t p = 0; p < cm.n_classes; ++p) cs << "," << cm.at(t, p);
      cs << "\n";
    }
    char frac_name[16];
    std::snprintf(frac_name, sizeof(frac_name), "%.2f", rr.fraction);
    write_text(fs::path(out_dir) / (std::string("confusion_") +
                                    to_string(rr.method) + "_" + frac_name + ".csv"),
               cs.str());
  }

  if (plots) {
    const char* colors[3] = {"#1f77b4", "#d62728", "#2ca02c"};
    std::vector<svg::Series> acc, loss;
    std::size_t ci = 0;
    for (auto m : rc.methods) {
      svg::Series sa, sl;
      sa.label = sl.label = to_string(m);
      sa.color = sl.color = colors[ci % 3];
      ++ci;
      for (const auto& rr : results) {
        if (rr.method != m) continue;
        sa.x.push_back(rr.fraction);
        sa.mean.push_back(rr.mean_accuracy());
        sa.stddev.push_back(rr.std_accuracy());
        sl.x.push_back(rr.fraction);
        sl.mean.push_back(rr.mean_loss());
        sl.stddev.push_back(0.0);
      }
      acc.push_back(std::move(sa));
      loss.push_back(std::move(sl));
    }
    write_text(fs::path(out_dir) / "accuracy_vs_fraction.svg",
               svg::curves_plot(acc, "test accuracy"));
    write_text(fs::path(out_dir) / "loss_vs_fraction.svg",
               svg::curves_plot(loss, "test loss"));
  }

  std::cout << "eval-removal: " << results.size() << " (method, fraction) cells x "
            << repeats << " repeats -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bxai: bearing fault diagnosis with explanation-by-example"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from an INI/TOML config file");

  std::uint64_t seed = 42;
  std::uint32_t bins = 1536;

  // --- synth ---
  auto* synth = app.add_subcommand("synth", "Generate a synthetic spectrum dataset");
  SynthConfig scfg;
  std::string synth_out = "data";
  double test_fraction = 0.2;
  std::vector<std::uint32_t> counts = {200, 200, 200};
  synth->add_option("--out-dir", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--counts", counts,
                    "Samples per class: healthy,inner_race,outer_race")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  synth->add_option("--test-fraction", test_fraction, "Held-out test fraction")
      ->capture_default_str();
  synth->add_option("--signal-len", scfg.signal_len, "Time samples per signal")
      ->capture_default_str();
  synth->add_option("--sample-rate", scfg.sample_rate, "Sampling rate in Hz")
      ->capture_default_str();
  synth->add_option("--noise-std", scfg.noise_std, "Additive noise std")
      ->capture_default_str();
  GeomOpts synth_geom;
  synth_geom.attach(synth, /*with_epsilon=*/false);

  // --- train ---
  auto* tr = app.add_subcommand("train", "Train the CNN classifier");
  std::string train_path, model_out = "model.bxmw", history_out = "history.csv";
  tr->add_option("--train", train_path, "Training dataset (.bxai or .csv)")
      ->required();
  tr->add_option("--model", model_out, "Output model file")->capture_default_str();
  tr->add_option("--history", history_out, "Per-epoch metrics CSV ('' to skip)")
      ->capture_default_str();
  TrainOpts topts;
  topts.attach(tr);

  // --- build-library ---
  auto* bl = app.add_subcommand("build-library",
                                "Build the health library from training samples");
  std::string bl_train, bl_model, bl_out = "library.bxhl", bl_algo = "cam-full";
  bl->add_option("--train", bl_train, "Training dataset used to fit the model")
      ->required();
  bl->add_option("--model", bl_model, "Trained model file")->required();
  bl->add_option("--out", bl_out, "Output library file")->capture_default_str();
  bl->add_option("--algo", bl_algo, "Default retrieval algorithm: cam-full or cam-sub")
      ->check(CLI::IsMember({"cam-full", "cam-sub"}))
      ->capture_default_str();
  GeomOpts bl_geom;
  bl_geom.geom.inner_diameter_d = 0.2375;
  bl_geom.geom.outer_diameter_D = 1.0;
  bl_geom.attach(bl);

  // --- explain ---
  auto* ex = app.add_subcommand("explain",
                                "Explain test predictions via prediction bases");
  std::string ex_test, ex_train, ex_model, ex_lib, ex_out = "explain",
              ex_algo = "cam-full";
  std::vector<std::uint32_t> ex_ids;
  std::uint32_t top_k = 4;
  bool ex_no_plots = false;
  ex->add_option("--test", ex_test, "Test dataset (.bxai or .csv)")->required();
  ex->add_option("--train", ex_train,
                 "Training dataset, used to plot basis spectra");
  ex->add_option("--model", ex_model, "Trained model file")->required();
  ex->add_option("--library", ex_lib, "Health library file")->required();
  ex->add_option("--out-dir", ex_out, "Output directory")->capture_default_str();
  ex->add_option("--ids", ex_ids, "Sample ids to explain (default: all)")
      ->delimiter(',');
  ex->add_option("--top-k", top_k, "Number of basis samples per prediction")
      ->capture_default_str();
  ex->add_option("--algo", ex_algo, "cam-full or cam-sub")
      ->check(CLI::IsMember({"cam-full", "cam-sub"}))
      ->capture_default_str();
  ex->add_flag("--no-plots", ex_no_plots, "Skip SVG generation");
  GeomOpts ex_geom;
  ex_geom.geom.inner_diameter_d = 0.2375;
  ex_geom.geom.outer_diameter_D = 1.0;
  ex_geom.attach(ex);

  // --- eval-removal ---
  auto* ev = app.add_subcommand(
      "eval-removal", "Sample-removal importance experiment with re-training");
  std::string ev_train, ev_test, ev_model, ev_lib, ev_out = "removal";
  std::vector<double> ev_fractions = {0.10, 0.15, 0.20, 0.25,
                                      0.30, 0.35, 0.40, 0.45};
  std::uint32_t ev_repeats = 10, ev_threads = 0;
  bool ev_no_plots = false;
  ev->add_option("--train", ev_train, "Training dataset")->required();
  ev->add_option("--test", ev_test, "Test dataset")->required();
  ev->add_option("--model", ev_model, "Trained model file")->required();
  ev->add_option("--library", ev_lib, "Health library file")->required();
  ev->add_option("--out-dir", ev_out, "Output directory")->capture_default_str();
  ev->add_option("--fractions", ev_fractions, "Removal fractions")
      ->delimiter(',');
  ev->add_option("--repeats", ev_repeats, "Re-training repeats per cell")
      ->capture_default_str();
  ev->add_option("--threads", ev_threads,
                 "Worker threads (0 = hardware, capped by BXAI_THREADS)")
      ->capture_default_str();
  ev->add_flag("--no-plots", ev_no_plots, "Skip SVG generation");
  GeomOpts ev_geom;
  ev_geom.geom.inner_diameter_d = 0.2375;
  ev_geom.geom.outer_diameter_D = 1.0;
  ev_geom.attach(ev);
  TrainOpts ev_topts;
  ev_topts.attach(ev);

  for (auto* cmd : {synth, tr, bl, ex, ev}) {
    cmd->add_option("--seed", seed, "Deterministic seed")->capture_default_str();
    cmd->add_option("--bins", bins, "Order-spectrum bins (CSV import / synth)")
        ->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;  // help/version -> 0, any usage problem -> 1
  }

  try {
    if (synth->parsed()) {
      scfg.geometry = synth_geom.geom;
      scfg.class_counts = {counts[0], counts[1], counts[2]};
      scfg.seed = seed;
      return cmd_synth(synth_out, scfg, bins, test_fraction, seed);
    }
    if (tr->parsed())
      return cmd_train(train_path, model_out, history_out, topts, seed, bins);
    if (bl->parsed())
      return cmd_build_library(bl_train, bl_model, bl_out, parse_algo(bl_algo),
                               bl_geom, bins);
    if (ex->parsed())
      return cmd_explain(ex_test, ex_train, ex_model, ex_lib, ex_out, ex_ids,
                         top_k, parse_algo(ex_algo), ex_geom, bins, !ex_no_plots);
    if (ev->parsed())
      return cmd_eval_removal(ev_train, ev_test, ev_model, ev_lib, ev_out,
                              ev_fractions, ev_repeats, seed, ev_topts, ev_geom,
                              bins, ev_threads, !ev_no_plots);
  } catch (const io::FormatError& e) {
    std::cerr << "error (data/format): " << e.what() << "\n";
    return 2;
  } catch (const FingerprintMismatch& e) {
    std::cerr << "error (data/format): " << e.what() << "\n";
    return 2;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error (usage): " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error (usage): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error (numeric): " << e.what() << "\n";
    return 3;
  }
  return 1;
}
