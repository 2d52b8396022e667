#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "hypernets/dataset.hpp"
#include "hypernets/model.hpp"
#include "hypernets/pgm.hpp"
#include "hypernets/trainer.hpp"

namespace hypernets {

// The four shipped experiment families. The name selects the task and the
// conventional data policy; everything else is configurable.
enum class ExperimentKind { RotationDiscrete, RotationContinuous, Affine, Compensation };

const char* experiment_name(ExperimentKind k);
ExperimentKind experiment_from_name(const std::string& name);  // SpecError on unknown
Task experiment_task(ExperimentKind k);

struct GridConfig {
  int rows = 8;          // grid rows
  int column_pairs = 4;  // (reference, output) pairs per row
};

struct DataConfig {
  std::string source = "synthetic";  // "synthetic" | "idx"
  std::string idx_images;            // image file path, required when source == "idx"
  std::string idx_labels;            // label file path, optional
  int glyphs_per_class = 20;         // synthetic pool size per class
  std::vector<int> holdout_classes;  // removed from training; when non-empty the
                                     // test split draws only these classes
  int train_count = 2000;
  int test_count = 500;
  AnglePolicy angles;                       // transform policy for training draws
  std::optional<AnglePolicy> test_angles;   // test-time policy; defaults to `angles`
  AffineRanges affine;                      // parameter ranges for the affine task
};

// One file fully determines a run: model, data recipe, optimizer, outputs.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::RotationDiscrete;
  ModelSpec model;  // architecture, image_side, control_dim and seeds resolved
  DataConfig data;
  OptimConfig optim;
  GridConfig grid;
  std::string out_dir = "out";
  std::uint64_t seed = 1;  // master seed; derives every unset sub-seed
  // True when the config file pinned the sub-seed explicitly; otherwise the
  // master seed derives it (so --seed alone re-seeds the whole run).
  bool init_seed_pinned = false;
  bool shuffle_seed_pinned = false;
};

// Parses the JSON config text. Unknown keys, wrong types, and out-of-range
// values throw SpecError naming the offending field path. The result still
// needs finalize_experiment_config before use.
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

// Resolves derived fields (control width from the task, sub-seeds from the
// master seed) and validates cross-field consistency (experiment/architecture
// compatibility, angle policies, optimizer ranges, model plan). Call after
// any command-line seed override.
void finalize_experiment_config(ExperimentConfig& cfg);

// Documented key schema for --help and the README.
std::string config_schema_text();

// Human-readable run description (no timestamps, so artifacts stay
// byte-deterministic).
std::string describe_experiment(const ExperimentConfig& cfg);

struct DatasetPair {
  Dataset train;
  Dataset test;
};

// Deterministically builds both splits from the config: glyph pools (holdout
// classes removed from training; test pool re-jittered or holdout-only),
// then per-split transform draws. Sub-seeds derive from cfg.seed.
DatasetPair build_datasets(const ExperimentConfig& cfg);

// Produces one output image per sample; used to render comparison grids.
using OutputFn = std::function<Image(const Sample&)>;

// Rows of (reference, model output) pairs tiled with 1-pixel separators.
// Reference column: the ground-truth transformed image for the
// generalization tasks, the warped input for the compensation task.
// Draws at most rows*column_pairs samples from the front of the dataset.
Canvas comparison_grid(const Dataset& data, const OutputFn& output, int rows, int column_pairs);
Canvas comparison_grid(const Model& model, const Dataset& data, int rows, int column_pairs);

// Runs the model on one sample (pure, no tape) and reshapes to an image.
Image predict_image(const Model& model, const Sample& s, Task task);

// Artifact names inside out_dir.
inline constexpr const char* kModelFileName = "model.hypn";
inline constexpr const char* kLossCsvName = "loss.csv";
inline constexpr const char* kTrainGridName = "train_grid.pgm";
inline constexpr const char* kTestGridName = "test_grid.pgm";
inline constexpr const char* kSummaryName = "summary.txt";
inline constexpr const char* kTrainCacheName = "train.hypd";
inline constexpr const char* kTestCacheName = "test.hypd";

struct RunArtifacts {
  std::string model_path;
  std::string loss_csv_path;
  std::string train_grid_path;
  std::string test_grid_path;
  std::string summary_path;
};

struct RunResult {
  Model model;
  LossHistory history;
  EvalResult train_eval;
  EvalResult test_eval;
  RunArtifacts artifacts;
};

// Full pipeline: build datasets (or load the caches under data_dir when
// given), build the model, train, evaluate, and write every artifact into
// cfg.out_dir. Progress lines go to `log` when provided.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr,
                         const std::string& data_dir = "");

}  // namespace hypernets
