// End-to-end checks of the command-line harness (subprocess invocations of
// the installed binary) plus the raster/grid helpers it is built on.

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "hypernets/dataset.hpp"
#include "hypernets/errors.hpp"
#include "hypernets/experiment.hpp"
#include "hypernets/glyphs.hpp"
#include "hypernets/gradcheck_suite.hpp"
#include "hypernets/model_io.hpp"
#include "hypernets/pgm.hpp"
#include "hypernets/trainer.hpp"

using namespace hypernets;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "hypernets_harness";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path scratch(const std::string& name) {
  fs::path p = scratch_root() / name;
  fs::create_directories(p);
  return p;
}

struct CmdResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

CmdResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path dir = scratch("cli_io");
  const fs::path out_file = dir / ("out" + std::to_string(counter) + ".txt");
  const fs::path err_file = dir / ("err" + std::to_string(counter) + ".txt");
  ++counter;
  const std::string cmd = std::string(CLI_BINARY) + " " + args + " > " + out_file.string() +
                          " 2> " + err_file.string();
  const int raw = std::system(cmd.c_str());
  CmdResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
  REQUIRE(out.good());
}

// A config small enough that a full run takes well under a second.
std::string tiny_config(const std::string& out_dir, const std::string& extra_optim = "",
                        int test_count = 20) {
  std::ostringstream cfg;
  cfg << R"({
  "experiment": "rotation_discrete",
  "architecture": "deep_hypernet",
  "image_side": 8,
  "seed": 3,
  "out_dir": ")"
      << out_dir << R"(",
  "data": {
    "glyphs_per_class": 3,
    "holdout_classes": [1, 4],
    "train_count": 40,
    "test_count": )"
      << test_count << R"(,
    "angles": { "default": { "set": [0, 45, 90, 135, 180, 225, 270, 315] } },
    "test_angles": { "default": { "set": [22.5, 67.5, 112.5] } }
  },
  "model": { "latent": 4, "enc_channels": [2, 3] },
  "optim": { "learning_rate": 0.001, "batch_size": 8, "epochs": 2)"
      << extra_optim << R"( },
  "grid": { "rows": 2, "column_pairs": 3 }
})";
  return cfg.str();
}

std::vector<std::string> csv_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::string csv_field(const std::string& line, int index) {
  std::istringstream in(line);
  std::string field;
  for (int i = 0; i <= index; ++i) std::getline(in, field, ',');
  return field;
}

}  // namespace

TEST_CASE("quantization maps intensities to the full byte range") {
  CHECK(quantize_intensity(0.0) == 0);
  CHECK(quantize_intensity(1.0) == 255);
  CHECK(quantize_intensity(0.5) == 128);  // round half away from zero
  CHECK(quantize_intensity(-0.3) == 0);
  CHECK(quantize_intensity(1.7) == 255);
  CHECK(quantize_intensity(1.0 / 255.0) == 1);
}

TEST_CASE("tile_grid lays out cells with single-pixel white separators") {
  const int side = 4;
  std::vector<Image> cells;
  for (int k = 0; k < 6; ++k) {
    Image img = Image::zeros(side);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) img.at(r, c) = k * 0.1;
    cells.push_back(img);
  }
  const Canvas canvas = tile_grid(cells, 3);  // 2 rows x 3 columns
  CHECK(canvas.width == (side + 1) * 3 - 1);
  CHECK(canvas.height == (side + 1) * 2 - 1);
  // Cell contents land at their block origin.
  CHECK(canvas.at(0, 0) == doctest::Approx(0.0));
  CHECK(canvas.at(0, side + 1) == doctest::Approx(0.1));
  CHECK(canvas.at(side + 1, 0) == doctest::Approx(0.3));
  CHECK(canvas.at(side + 1, 2 * (side + 1)) == doctest::Approx(0.5));
  // Separator rows/columns stay white.
  for (int r = 0; r < canvas.height; ++r) CHECK(canvas.at(r, side) == 1.0);
  for (int c = 0; c < canvas.width; ++c) CHECK(canvas.at(side, c) == 1.0);

  // A partial final row leaves the unused cells white.
  cells.pop_back();
  const Canvas partial = tile_grid(cells, 3);
  CHECK(partial.height == (side + 1) * 2 - 1);
  CHECK(partial.at(side + 1, 2 * (side + 1)) == 1.0);

  CHECK_THROWS_AS(tile_grid({}, 3), ContractError);
  cells.push_back(Image::zeros(side + 1));
  CHECK_THROWS_AS(tile_grid(cells, 3), DimensionError);
}

TEST_CASE("PGM files round-trip through the strict loader") {
  const fs::path dir = scratch("pgm");
  Canvas canvas(5, 3, 1.0);
  canvas.at(0, 0) = 0.0;
  canvas.at(1, 2) = 0.5;
  canvas.at(2, 4) = 1.0;
  const std::string path = (dir / "roundtrip.pgm").string();
  save_pgm(canvas, path);

  const Canvas back = load_pgm(path);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 3);
  CHECK(back.at(0, 0) == 0.0);
  CHECK(back.at(2, 4) == 1.0);
  CHECK(back.at(1, 2) == doctest::Approx(128.0 / 255.0));

  // Header is the exact dialect we promise.
  const std::string raw = slurp(path);
  CHECK(raw.substr(0, 9) == "P5\n5 3\n25");
  CHECK(raw.size() == std::string("P5\n5 3\n255\n").size() + 15);

  write_file(dir / "bad_magic.pgm", "P6\n5 3\n255\n xxx");
  CHECK_THROWS_AS(load_pgm((dir / "bad_magic.pgm").string()), FormatError);
  write_file(dir / "truncated.pgm", "P5\n5 3\n255\nab");
  CHECK_THROWS_AS(load_pgm((dir / "truncated.pgm").string()), FormatError);
}

TEST_CASE("comparison grid pairs the reference with the produced image") {
  const GlyphSet glyphs = synth_glyphs(8, 2, 7);

  SUBCASE("an oracle that answers the reference makes odd and even columns identical") {
    const Dataset data = make_dataset(glyphs, Task::Rotation, AnglePolicy{}, AffineRanges{}, 9, 5);
    const OutputFn oracle = [&](const Sample& s) { return model_target(s, Task::Rotation); };
    const Canvas canvas = comparison_grid(data, oracle, 2, 2);
    const int side = 8;
    CHECK(canvas.width == (side + 1) * 4 - 1);
    CHECK(canvas.height == (side + 1) * 2 - 1);
    for (int pair = 0; pair < 4; ++pair) {
      const int r0 = (pair / 2) * (side + 1);
      const int c_ref = (pair % 2) * 2 * (side + 1);
      const int c_out = c_ref + side + 1;
      for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
          CHECK(canvas.at(r0 + r, c_ref + c) == canvas.at(r0 + r, c_out + c));
    }
  }

  SUBCASE("compensation grids show the warped input in the reference column") {
    const Dataset data =
        make_dataset(glyphs, Task::Compensation, AnglePolicy{}, AffineRanges{}, 4, 5);
    const OutputFn oracle = [&](const Sample& s) { return model_target(s, Task::Compensation); };
    const Canvas canvas = comparison_grid(data, oracle, 1, 4);
    const Image& warped = model_input(data.samples[0], Task::Compensation);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) CHECK(canvas.at(r, c) == warped.at(r, c));
  }
}

TEST_CASE("gradcheck command reports every op exactly once and respects tolerance") {
  const CmdResult ok = run_cli("gradcheck --seeds 1");
  CHECK(ok.exit_code == 0);
  for (const std::string& op : registered_ops()) {
    const std::string needle = "op " + op + " ";
    std::size_t count = 0;
    for (std::size_t pos = ok.out.find(needle); pos != std::string::npos;
         pos = ok.out.find(needle, pos + 1))
      ++count;
    CHECK_MESSAGE(count == 1, "op ", op, " appears ", count, " times");
  }
  CHECK(ok.out.find("full_model_loss") != std::string::npos);
  CHECK(ok.out.find("gradcheck PASS") != std::string::npos);

  const CmdResult forced = run_cli("gradcheck --seeds 1 --tol 1e-16");
  CHECK(forced.exit_code == 1);
  CHECK(forced.out.find("gradcheck FAIL: worst offender") != std::string::npos);
}

TEST_CASE("gen-data writes caches that reload bit-identically") {
  const fs::path dir = scratch("gen_data");
  write_file(dir / "cfg.json", tiny_config((dir / "ignored").string()));
  const std::string out_a = (dir / "a").string();
  const std::string out_b = (dir / "b").string();

  const CmdResult a = run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " + out_a);
  REQUIRE_MESSAGE(a.exit_code == 0, a.err);
  const CmdResult b = run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " + out_b);
  REQUIRE(b.exit_code == 0);
  CHECK(a.out.find("train: 40 samples") != std::string::npos);
  CHECK(a.out.find("test: 20 samples") != std::string::npos);
  // Same provenance hashes for the same config (paths differ).
  auto hashes = [](const std::string& text) {
    std::vector<std::string> found;
    for (std::size_t pos = text.find("hash 0x"); pos != std::string::npos;
         pos = text.find("hash 0x", pos + 1))
      found.push_back(text.substr(pos, 23));
    return found;
  };
  REQUIRE(hashes(a.out).size() == 2);
  CHECK(hashes(a.out) == hashes(b.out));

  for (const char* name : {"train.hypd", "test.hypd"}) {
    const std::string bytes_a = slurp(fs::path(out_a) / name);
    const std::string bytes_b = slurp(fs::path(out_b) / name);
    CHECK(!bytes_a.empty());
    CHECK(bytes_a == bytes_b);
  }

  const Dataset reloaded = load_dataset(out_a + "/train.hypd");
  CHECK(reloaded.samples.size() == 40);
  const std::ostringstream hash_text;
  char expect[32];
  std::snprintf(expect, sizeof expect, "0x%016llx",
                static_cast<unsigned long long>(dataset_hash(reloaded)));
  CHECK(a.out.find(expect) != std::string::npos);

  // The test split of this config holds out classes 1 and 4.
  const Dataset test_set = load_dataset(out_a + "/test.hypd");
  for (const Sample& s : test_set.samples) CHECK((s.class_label == 1 || s.class_label == 4));
}

TEST_CASE("run writes exactly the declared artifacts and is byte-deterministic") {
  const fs::path dir = scratch("run");
  const std::string out1 = (dir / "r1").string();
  const std::string out2 = (dir / "r2").string();
  write_file(dir / "cfg1.json", tiny_config(out1));
  write_file(dir / "cfg2.json", tiny_config(out2));

  const CmdResult r1 = run_cli("run --config " + (dir / "cfg1.json").string());
  REQUIRE_MESSAGE(r1.exit_code == 0, r1.err);
  const CmdResult r2 = run_cli("run --config " + (dir / "cfg2.json").string());
  REQUIRE(r2.exit_code == 0);

  // Exactly the declared artifact set, nothing else.
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(out1))
    names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());
  const std::vector<std::string> expected = {"loss.csv", "model.hypn", "summary.txt",
                                             "test_grid.pgm", "train_grid.pgm"};
  CHECK(names == expected);

  // Byte-identical outputs for identical configs (out_dir differs only).
  CHECK(slurp(fs::path(out1) / "model.hypn") == slurp(fs::path(out2) / "model.hypn"));
  CHECK(slurp(fs::path(out1) / "loss.csv") == slurp(fs::path(out2) / "loss.csv"));
  CHECK(slurp(fs::path(out1) / "train_grid.pgm") == slurp(fs::path(out2) / "train_grid.pgm"));

  // Loss CSV: header plus one row per epoch.
  const auto lines = csv_lines(slurp(fs::path(out1) / "loss.csv"));
  REQUIRE(lines.size() == 3);
  CHECK(lines[0].substr(0, 26) == "epoch,train_loss,test_loss");

  // Grid dimensions follow the config (rows 2, column_pairs 3, side 8).
  const Canvas grid = load_pgm((fs::path(out1) / "test_grid.pgm").string());
  CHECK(grid.width == 9 * 6 - 1);
  CHECK(grid.height == 9 * 2 - 1);

  // Summary names the final losses.
  const std::string summary = slurp(fs::path(out1) / "summary.txt");
  CHECK(summary.find("final test loss: ") != std::string::npos);
  CHECK(summary.find("parameters: ") != std::string::npos);

  // Training from pre-generated caches reproduces the same bytes.
  const std::string cache_dir = (dir / "cache").string();
  const CmdResult gd =
      run_cli("gen-data --config " + (dir / "cfg1.json").string() + " --out " + cache_dir);
  REQUIRE(gd.exit_code == 0);
  const std::string out3 = (dir / "r3").string();
  const CmdResult r3 = run_cli("run --config " + (dir / "cfg1.json").string() + " --out " + out3 +
                               " --data " + cache_dir);
  REQUIRE_MESSAGE(r3.exit_code == 0, r3.err);
  CHECK(slurp(fs::path(out1) / "model.hypn") == slurp(fs::path(out3) / "model.hypn"));
  CHECK(slurp(fs::path(out1) / "loss.csv") == slurp(fs::path(out3) / "loss.csv"));
}

TEST_CASE("invalid configs exit 2 and name the offending field") {
  const fs::path dir = scratch("bad_cfg");

  write_file(dir / "bad_batch.json", R"({"experiment": "affine", "architecture": "deep_hypernet",
    "optim": {"batch_size": 0}})");
  CmdResult r = run_cli("run --config " + (dir / "bad_batch.json").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("optim.batch_size") != std::string::npos);

  write_file(dir / "unknown_key.json", R"({"experiment": "affine",
    "architecture": "deep_hypernet", "data": {"glyphs": 3}})");
  r = run_cli("run --config " + (dir / "unknown_key.json").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("data.glyphs") != std::string::npos);
  CHECK(r.err.find("unknown key") != std::string::npos);

  write_file(dir / "mismatch.json", R"({"experiment": "compensation",
    "architecture": "deep_hypernet"})");
  r = run_cli("run --config " + (dir / "mismatch.json").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("architecture") != std::string::npos);

  write_file(dir / "missing.json", R"({"experiment": "affine"})");
  r = run_cli("run --config " + (dir / "missing.json").string());
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("architecture") != std::string::npos);

  write_file(dir / "not_json.json", "not json at all {");
  r = run_cli("run --config " + (dir / "not_json.json").string());
  CHECK(r.exit_code == 2);

  r = run_cli("run --config " + (dir / "does_not_exist.json").string());
  CHECK(r.exit_code == 2);
}

TEST_CASE("training divergence exits 3") {
  const fs::path dir = scratch("diverge");
  const std::string out = (dir / "o").string();
  // Adam steps are bounded by the learning rate, so the rate must be large
  // enough that a single jump overflows the forward products into NaN.
  write_file(dir / "cfg.json", tiny_config(out, ", \"shuffle_seed\": 1"));
  std::string cfg = slurp(dir / "cfg.json");
  const std::string key = "\"learning_rate\": 0.001";
  cfg.replace(cfg.find(key), key.size(), "\"learning_rate\": 1e300, \"epochs\": 5");
  write_file(dir / "cfg.json", cfg);
  const CmdResult r = run_cli("run --config " + (dir / "cfg.json").string());
  CHECK(r.exit_code == 3);
  CHECK(r.err.find("diverged") != std::string::npos);
}

TEST_CASE("eval reproduces the training CSV and rejects corrupt models") {
  const fs::path dir = scratch("eval");
  const std::string out = (dir / "run").string();
  write_file(dir / "cfg.json", tiny_config(out));
  REQUIRE(run_cli("run --config " + (dir / "cfg.json").string()).exit_code == 0);
  const std::string cache = (dir / "cache").string();
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " + cache)
              .exit_code == 0);

  const CmdResult ev = run_cli("eval --model " + out + "/model.hypn --data " + cache +
                               "/test.hypd --out " + (dir / "evalout").string());
  REQUIRE_MESSAGE(ev.exit_code == 0, ev.err);

  // The printed mean equals the last CSV row's test loss, digit for digit.
  const auto lines = csv_lines(slurp(fs::path(out) / "loss.csv"));
  const std::string final_test_loss = csv_field(lines.back(), 2);
  CHECK(ev.out.find("mean loss: " + final_test_loss + "\n") != std::string::npos);
  CHECK(ev.out.find("class 1: ") != std::string::npos);
  CHECK(ev.out.find("class 4: ") != std::string::npos);

  const std::string eval_csv = slurp(dir / "evalout" / "eval.csv");
  CHECK(eval_csv.find("mean_loss,class_0") == 0);
  CHECK(eval_csv.find(final_test_loss) != std::string::npos);

  // Task-incompatible dataset: an affine cache against a rotation model.
  write_file(dir / "affine.json", R"({"experiment": "affine", "architecture": "deep_hypernet",
    "image_side": 8, "out_dir": "unused",
    "data": {"glyphs_per_class": 2, "train_count": 8, "test_count": 8},
    "model": {"latent": 4, "enc_channels": [2, 3]}, "optim": {"epochs": 1}})");
  REQUIRE(run_cli("gen-data --config " + (dir / "affine.json").string() + " --out " +
                  (dir / "affine_cache").string())
              .exit_code == 0);
  const CmdResult bad_task = run_cli("eval --model " + out + "/model.hypn --data " +
                                     (dir / "affine_cache").string() + "/test.hypd");
  CHECK(bad_task.exit_code == 2);

  // Corrupt magic is called out by name.
  std::string model_bytes = slurp(fs::path(out) / "model.hypn");
  model_bytes[0] = 'X';
  write_file(dir / "corrupt.hypn", model_bytes);
  const CmdResult corrupt =
      run_cli("eval --model " + (dir / "corrupt.hypn").string() + " --data " + cache + "/test.hypd");
  CHECK(corrupt.exit_code == 2);
  CHECK(corrupt.err.find("bad magic") != std::string::npos);
}

TEST_CASE("two disjoint same-policy test sets agree within three standard errors") {
  const fs::path dir = scratch("noise");
  const std::string out = (dir / "run").string();
  // The pool must be at least as large as the draw count, otherwise the 500
  // samples share a handful of glyphs and their losses are cluster-correlated,
  // which a per-sample standard error cannot represent.
  write_file(dir / "cfg.json", R"({
  "experiment": "rotation_continuous",
  "architecture": "deep_hypernet",
  "image_side": 8,
  "seed": 3,
  "out_dir": ")" + out + R"(",
  "data": { "glyphs_per_class": 50, "train_count": 40, "test_count": 500 },
  "model": { "latent": 4, "enc_channels": [2, 3] },
  "optim": { "learning_rate": 0.001, "batch_size": 8, "epochs": 2 }
})");
  REQUIRE(run_cli("run --config " + (dir / "cfg.json").string()).exit_code == 0);
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "cache_a").string() + " --seed 3")
              .exit_code == 0);
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " +
                  (dir / "cache_b").string() + " --seed 301")
              .exit_code == 0);

  const Model model = load_model(out + "/model.hypn");
  auto stats = [&](const std::string& path) {
    const Dataset data = load_dataset(path);
    std::vector<double> losses;
    for (const Sample& s : data.samples) {
      const Image pred = predict_image(model, s, data.task);
      const Image& target = model_target(s, data.task);
      double sum = 0.0;
      for (std::size_t i = 0; i < pred.pixels.size(); ++i) {
        const double d = pred.pixels[i] - target.pixels[i];
        sum += d * d;
      }
      losses.push_back(sum / static_cast<double>(pred.pixels.size()));
    }
    double mean = 0.0;
    for (double v : losses) mean += v;
    mean /= static_cast<double>(losses.size());
    double var = 0.0;
    for (double v : losses) var += (v - mean) * (v - mean);
    var /= static_cast<double>(losses.size() - 1);
    const double se = std::sqrt(var / static_cast<double>(losses.size()));
    return std::pair<double, double>(mean, se);
  };
  const auto [mean_a, se_a] = stats((dir / "cache_a" / "test.hypd").string());
  const auto [mean_b, se_b] = stats((dir / "cache_b" / "test.hypd").string());
  const double combined = std::sqrt(se_a * se_a + se_b * se_b);
  CHECK_MESSAGE(std::abs(mean_a - mean_b) <= 3.0 * combined,
                "means ", mean_a, " vs ", mean_b, ", combined se ", combined);
}

TEST_CASE("render clamps oversized row requests with a warning") {
  const fs::path dir = scratch("render");
  const std::string out = (dir / "run").string();
  write_file(dir / "cfg.json", tiny_config(out));
  REQUIRE(run_cli("run --config " + (dir / "cfg.json").string()).exit_code == 0);
  const std::string cache = (dir / "cache").string();
  REQUIRE(run_cli("gen-data --config " + (dir / "cfg.json").string() + " --out " + cache)
              .exit_code == 0);

  // 20 test samples; 999 rows of 4 pairs clamps to 5 rows.
  const std::string grid_path = (dir / "grid.pgm").string();
  const CmdResult r = run_cli("render --model " + out + "/model.hypn --data " + cache +
                              "/test.hypd --out " + grid_path + " --rows 999 --cols 4");
  CHECK(r.exit_code == 0);
  CHECK(r.err.find("warning") != std::string::npos);
  const Canvas grid = load_pgm(grid_path);
  CHECK(grid.height == 9 * 5 - 1);
  CHECK(grid.width == 9 * 8 - 1);

  const CmdResult ok = run_cli("render --model " + out + "/model.hypn --data " + cache +
                               "/test.hypd --out " + grid_path + " --rows 2 --cols 2");
  CHECK(ok.exit_code == 0);
  CHECK(ok.err.empty());
  const Canvas small = load_pgm(grid_path);
  CHECK(small.height == 9 * 2 - 1);
  CHECK(small.width == 9 * 4 - 1);
}

TEST_CASE("help documents the config schema") {
  const CmdResult help = run_cli("--help");
  CHECK(help.exit_code == 0);
  for (const char* key : {"holdout_classes", "learning_rate", "column_pairs", "softmax_axis",
                          "test_angles", "idx_images"})
    CHECK_MESSAGE(help.out.find(key) != std::string::npos, "missing key ", key);
  const CmdResult sub = run_cli("run --help");
  CHECK(sub.exit_code == 0);
  CHECK(sub.out.find("holdout_classes") != std::string::npos);
}
