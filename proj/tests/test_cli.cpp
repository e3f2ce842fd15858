#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

#ifndef BXAI_CLI_PATH
#error "BXAI_CLI_PATH must be defined by the build"
#endif

const std::string kCli = BXAI_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

// One pipeline run shared by the whole suite (training is the slow part).
struct Pipeline {
  fs::path dir;
  std::string train_flags =
      " --epochs 8 --optimizer adam --lr 0.02 --batch-size 6 --val-fraction 0"
      " --channels 4,4,4 --kernels 5,5,3";

  Pipeline() {
    dir = fs::temp_directory_path() / "bxai_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    REQUIRE(run("synth --out-dir " + (dir / "data").string() +
                " --counts 10,10,10 --seed 42") == 0);
    REQUIRE(run("train --train " + (dir / "data/train.bxai").string() +
                " --model " + (dir / "model.bxmw").string() + " --history " +
                (dir / "hist.csv").string() + train_flags + " --seed 1") == 0);
    REQUIRE(run("build-library --train " + (dir / "data/train.bxai").string() +
                " --model " + (dir / "model.bxmw").string() + " --out " +
                (dir / "lib.bxhl").string()) == 0);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("synth writes datasets plus a config sidecar, reproducibly") {
  auto& p = pipeline();
  CHECK(fs::exists(p.dir / "data/train.bxai"));
  CHECK(fs::exists(p.dir / "data/test.bxai"));
  CHECK(fs::exists(p.dir / "data/synth_config.json"));
  // 30 samples at test fraction 0.2 -> 24 train / 6 test.
  const auto sidecar = slurp(p.dir / "data/synth_config.json");
  CHECK(sidecar.find("\"seed\": 42") != std::string::npos);

  REQUIRE(run("synth --out-dir " + (p.dir / "data2").string() +
              " --counts 10,10,10 --seed 42") == 0);
  CHECK(slurp(p.dir / "data/train.bxai") == slurp(p.dir / "data2/train.bxai"));
  CHECK(slurp(p.dir / "data/test.bxai") == slurp(p.dir / "data2/test.bxai"));

  REQUIRE(run("synth --out-dir " + (p.dir / "data3").string() +
              " --counts 10,10,10 --seed 43") == 0);
  CHECK(slurp(p.dir / "data/train.bxai") != slurp(p.dir / "data3/train.bxai"));
}

TEST_CASE("train emits a per-epoch history CSV and a reproducible model") {
  auto& p = pipeline();
  const auto hist = slurp(p.dir / "hist.csv");
  CHECK(hist.rfind("epoch,train_loss,train_acc,val_loss,val_acc\n", 0) == 0);
  CHECK(count_lines(hist) >= 2);  // header + at least one epoch

  REQUIRE(run("train --train " + (p.dir / "data/train.bxai").string() +
              " --model " + (p.dir / "model2.bxmw").string() + " --history ''" +
              p.train_flags + " --seed 1") == 0);
  CHECK(slurp(p.dir / "model.bxmw") == slurp(p.dir / "model2.bxmw"));
}

TEST_CASE("explain writes JSON-lines records and SVG panels") {
  auto& p = pipeline();
  REQUIRE(run("explain --test " + (p.dir / "data/test.bxai").string() +
              " --train " + (p.dir / "data/train.bxai").string() + " --model " +
              (p.dir / "model.bxmw").string() + " --library " +
              (p.dir / "lib.bxhl").string() + " --out-dir " +
              (p.dir / "exp").string() + " --top-k 2 --algo cam-sub") == 0);
  const auto report = slurp(p.dir / "exp/report.jsonl");
  CHECK(count_lines(report) == 6);  // all 6 test samples
  CHECK(report.find("\"predicted_class\":") != std::string::npos);
  CHECK(report.find("\"basis\":[{\"entry_id\":") != std::string::npos);
  CHECK(report.find("\"algo\":\"cam-sub\"") != std::string::npos);
  // Distances carry 9 significant digits.
  const auto dpos = report.find("\"distance\":");
  REQUIRE(dpos != std::string::npos);
  const auto dend = report.find_first_of("},", dpos + 11);
  const std::string dval = report.substr(dpos + 11, dend - dpos - 11);
  std::size_t digits = 0;
  for (char c : dval)
    if (c >= '0' && c <= '9') ++digits;
  CHECK(digits >= 9);

  // One SVG per record, deterministic across reruns.
  std::size_t n_svg = 0;
  for (const auto& e : fs::directory_iterator(p.dir / "exp"))
    if (e.path().extension() == ".svg") ++n_svg;
  CHECK(n_svg == 6);
  REQUIRE(run("explain --test " + (p.dir / "data/test.bxai").string() +
              " --train " + (p.dir / "data/train.bxai").string() + " --model " +
              (p.dir / "model.bxmw").string() + " --library " +
              (p.dir / "lib.bxhl").string() + " --out-dir " +
              (p.dir / "exp2").string() + " --top-k 2 --algo cam-sub") == 0);
  CHECK(slurp(p.dir / "exp/report.jsonl") == slurp(p.dir / "exp2/report.jsonl"));
  for (const auto& e : fs::directory_iterator(p.dir / "exp"))
    if (e.path().extension() == ".svg")
      CHECK(slurp(e.path()) == slurp(p.dir / "exp2" / e.path().filename()));
}

TEST_CASE("eval-removal emits the full results grid and confusion CSVs") {
  auto& p = pipeline();
  REQUIRE(run("eval-removal --train " + (p.dir / "data/train.bxai").string() +
              " --test " + (p.dir / "data/test.bxai").string() + " --model " +
              (p.dir / "model.bxmw").string() + " --library " +
              (p.dir / "lib.bxhl").string() + " --out-dir " +
              (p.dir / "rem").string() +
              " --fractions 0.2,0.4 --repeats 2 --epochs 3" +
              " --optimizer adam --lr 0.02 --batch-size 6 --val-fraction 0"
              " --channels 4,4,4 --kernels 5,5,3 --seed 100") == 0);
  const auto csv = slurp(p.dir / "rem/results.csv");
  CHECK(csv.rfind("method,fraction,repeat,seed,test_accuracy,test_loss\n", 0) == 0);
  CHECK(count_lines(csv) == 1 + 3 * 2 * 2);  // header + methods x fractions x repeats
  for (const char* m : {"random", "cam-full", "cam-sub"})
    for (const char* f : {"0.20", "0.40"})
      CHECK(fs::exists(p.dir / "rem" /
                       (std::string("confusion_") + m + "_" + f + ".csv")));
  CHECK(fs::exists(p.dir / "rem/accuracy_vs_fraction.svg"));
  CHECK(fs::exists(p.dir / "rem/loss_vs_fraction.svg"));
  const auto cm = slurp(p.dir / "rem/confusion_random_0.20.csv");
  CHECK(cm.rfind("true\\pred,healthy,inner_race,outer_race\n", 0) == 0);
}

TEST_CASE("exit codes distinguish usage, data, and numeric failures") {
  auto& p = pipeline();
  CHECK(run("--help") == 0);
  CHECK(run("train --bogus-flag") == 1);
  CHECK(run("nonexistent-subcommand") == 1);
  CHECK(run("synth --out-dir " + (p.dir / "bad").string() + " --rollers 0") == 1);
  CHECK(run("train --train " + (p.dir / "missing.bxai").string() + " --model " +
            (p.dir / "m.bxmw").string()) == 2);
  // Truncated dataset file -> data/format error.
  {
    const auto bytes = slurp(p.dir / "data/train.bxai");
    std::ofstream os(p.dir / "trunc.bxai", std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK(run("build-library --train " + (p.dir / "trunc.bxai").string() +
            " --model " + (p.dir / "model.bxmw").string() + " --out " +
            (p.dir / "l.bxhl").string()) == 2);
  // Library built from different weights -> fingerprint mismatch (data error).
  REQUIRE(run("train --train " + (p.dir / "data/train.bxai").string() +
              " --model " + (p.dir / "other.bxmw").string() + " --history ''" +
              p.train_flags + " --seed 2") == 0);
  CHECK(run("explain --test " + (p.dir / "data/test.bxai").string() +
            " --model " + (p.dir / "other.bxmw").string() + " --library " +
            (p.dir / "lib.bxhl").string() + " --out-dir " +
            (p.dir / "exp3").string()) == 2);
}

TEST_CASE("BXAI_THREADS caps eval-removal parallelism without changing output") {
  auto& p = pipeline();
  const std::string common =
      "eval-removal --train " + (p.dir / "data/train.bxai").string() +
      " --test " + (p.dir / "data/test.bxai").string() + " --model " +
      (p.dir / "model.bxmw").string() + " --library " +
      (p.dir / "lib.bxhl").string() +
      " --fractions 0.3 --repeats 2 --epochs 2 --no-plots" +
      " --optimizer adam --lr 0.02 --batch-size 6 --val-fraction 0"
      " --channels 4,4,4 --kernels 5,5,3 --seed 100";
  const std::string c1 = "BXAI_THREADS=1 " + kCli + " " + common + " --out-dir " +
                         (p.dir / "remt1").string() + " >/dev/null 2>&1";
  const std::string c2 = "BXAI_THREADS=3 " + kCli + " " + common + " --out-dir " +
                         (p.dir / "remt3").string() + " >/dev/null 2>&1";
  REQUIRE(WEXITSTATUS(std::system(c1.c_str())) == 0);
  REQUIRE(WEXITSTATUS(std::system(c2.c_str())) == 0);
  CHECK(slurp(p.dir / "remt1/results.csv") == slurp(p.dir / "remt3/results.csv"));
}

TEST_CASE("CSV dataset import round-trips through the pipeline") {
  auto& p = pipeline();
  // Hand-write a tiny CSV with 8 bins and run train on it.
  const std::uint32_t bins = 8;
  std::ostringstream csv;
  for (int i = 0; i < 12; ++i) {
    csv << i << "," << (i % 3) << ",25.0";
    for (std::uint32_t b = 0; b < bins; ++b)
      csv << "," << (0.1 * (i % 3) + 0.01 * b);
    csv << "\n";
  }
  {
    std::ofstream os(p.dir / "tiny.csv");
    os << csv.str();
  }
  CHECK(run("train --train " + (p.dir / "tiny.csv").string() + " --bins 8" +
            " --model " + (p.dir / "csv.bxmw").string() + " --history ''" +
            " --epochs 1 --batch-size 4 --val-fraction 0 --channels 2,2,2"
            " --kernels 3,3,3 --seed 5") == 0);
  CHECK(fs::exists(p.dir / "csv.bxmw"));
}
