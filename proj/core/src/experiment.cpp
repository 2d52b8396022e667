#include "hypernets/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

#include "hypernets/errors.hpp"
#include "hypernets/glyphs.hpp"
#include "hypernets/idx.hpp"
#include "hypernets/model_io.hpp"
#include "hypernets/rng.hpp"

namespace hypernets {

namespace {

using nlohmann::json;

// Sub-seed derivation indices off the master seed; stable contract so a run
// is reproducible from its config file alone.
constexpr std::uint64_t kSeedTrainGlyphs = 1;
constexpr std::uint64_t kSeedTestGlyphs = 2;
constexpr std::uint64_t kSeedTrainDraws = 3;
constexpr std::uint64_t kSeedTestDraws = 4;
constexpr std::uint64_t kSeedInit = 5;
constexpr std::uint64_t kSeedShuffle = 6;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw SpecError(path + ": " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void expect_object(const json& j, const std::string& path) {
  if (!j.is_object()) fail(path.empty() ? "config" : path, "expected an object");
}

void check_keys(const json& j, const std::string& path,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) fail(join(path, item.key()), "unknown key");
  }
}

long long integer_value(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  return v.get<long long>();
}

int get_int(const json& j, const std::string& path, const char* key, int def, long long lo,
            long long hi = std::numeric_limits<int>::max()) {
  if (!j.contains(key)) return def;
  const long long x = integer_value(j.at(key), join(path, key));
  if (x < lo || x > hi)
    fail(join(path, key),
         "out of range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return static_cast<int>(x);
}

double get_number(const json& j, const std::string& path, const char* key, double def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) fail(join(path, key), "expected a number");
  return v.get<double>();
}

std::uint64_t get_u64(const json& j, const std::string& path, const char* key, std::uint64_t def,
                      bool* present = nullptr) {
  if (present) *present = j.contains(key);
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    const long long x = v.get<long long>();
    if (x < 0) fail(join(path, key), "must be >= 0");
    return static_cast<std::uint64_t>(x);
  }
  fail(join(path, key), "expected an unsigned integer");
}

std::string get_string(const json& j, const std::string& path, const char* key,
                       const std::string& def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string()) fail(join(path, key), "expected a string");
  return v.get<std::string>();
}

std::vector<int> get_int_list(const json& j, const std::string& path, const char* key,
                              std::vector<int> def, long long lo) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_array()) fail(join(path, key), "expected a list of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string p = join(path, key) + "[" + std::to_string(i) + "]";
    const long long x = integer_value(v[i], p);
    if (x < lo) fail(p, "must be >= " + std::to_string(lo));
    if (x > std::numeric_limits<int>::max()) fail(p, "too large");
    out.push_back(static_cast<int>(x));
  }
  return out;
}

AngleSpec parse_angle_spec(const json& j, const std::string& path) {
  expect_object(j, path);
  check_keys(j, path, {"set", "range"});
  const bool has_set = j.contains("set");
  const bool has_range = j.contains("range");
  if (has_set == has_range) fail(path, "give exactly one of \"set\" or \"range\"");
  if (has_set) {
    const json& v = j.at("set");
    if (!v.is_array() || v.empty()) fail(join(path, "set"), "expected a non-empty list of numbers");
    std::vector<double> values;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number())
        fail(join(path, "set") + "[" + std::to_string(i) + "]", "expected a number");
      values.push_back(v[i].get<double>());
    }
    return AngleSpec::discrete_set(std::move(values));
  }
  const json& v = j.at("range");
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    fail(join(path, "range"), "expected [lo, hi]");
  return AngleSpec::range(v[0].get<double>(), v[1].get<double>());
}

AnglePolicy parse_angle_policy(const json& j, const std::string& path) {
  expect_object(j, path);
  check_keys(j, path, {"default", "overrides"});
  AnglePolicy policy;
  if (j.contains("default")) policy.default_spec = parse_angle_spec(j.at("default"), join(path, "default"));
  if (j.contains("overrides")) {
    const json& ov = j.at("overrides");
    expect_object(ov, join(path, "overrides"));
    for (const auto& item : ov.items()) {
      const std::string p = join(path, "overrides") + "." + item.key();
      int cls = -1;
      try {
        std::size_t used = 0;
        cls = std::stoi(item.key(), &used);
        if (used != item.key().size()) cls = -1;
      } catch (const std::exception&) {
        cls = -1;
      }
      if (cls < 0 || cls > 9) fail(p, "override keys must be class labels 0..9");
      policy.overrides[cls] = parse_angle_spec(item.value(), p);
    }
  }
  return policy;
}

AffineRanges parse_affine_ranges(const json& j, const std::string& path) {
  expect_object(j, path);
  check_keys(j, path, {"rot_deg", "scale_lo", "scale_hi", "shear", "translate_frac"});
  AffineRanges r;
  r.rot_deg = get_number(j, path, "rot_deg", r.rot_deg);
  r.scale_lo = get_number(j, path, "scale_lo", r.scale_lo);
  r.scale_hi = get_number(j, path, "scale_hi", r.scale_hi);
  r.shear = get_number(j, path, "shear", r.shear);
  r.translate_frac = get_number(j, path, "translate_frac", r.translate_frac);
  if (!(r.scale_lo > 0.0) || !(r.scale_hi >= r.scale_lo))
    fail(path, "scale range must satisfy 0 < scale_lo <= scale_hi");
  if (r.rot_deg < 0.0) fail(join(path, "rot_deg"), "must be >= 0");
  if (r.shear < 0.0) fail(join(path, "shear"), "must be >= 0");
  if (r.translate_frac < 0.0) fail(join(path, "translate_frac"), "must be >= 0");
  return r;
}

DataConfig parse_data_config(const json& j, const std::string& path) {
  expect_object(j, path);
  check_keys(j, path,
             {"source", "idx_images", "idx_labels", "glyphs_per_class", "holdout_classes",
              "train_count", "test_count", "angles", "test_angles", "affine"});
  DataConfig d;
  d.source = get_string(j, path, "source", d.source);
  if (d.source != "synthetic" && d.source != "idx")
    fail(join(path, "source"), "expected \"synthetic\" or \"idx\"");
  d.idx_images = get_string(j, path, "idx_images", "");
  d.idx_labels = get_string(j, path, "idx_labels", "");
  d.glyphs_per_class = get_int(j, path, "glyphs_per_class", d.glyphs_per_class, 1);
  d.holdout_classes = get_int_list(j, path, "holdout_classes", {}, 0);
  {
    std::set<int> seen;
    for (int cls : d.holdout_classes) {
      if (cls > 9) fail(join(path, "holdout_classes"), "class labels must be 0..9");
      if (!seen.insert(cls).second)
        fail(join(path, "holdout_classes"), "duplicate class " + std::to_string(cls));
    }
    if (seen.size() >= 10) fail(join(path, "holdout_classes"), "cannot hold out every class");
  }
  d.train_count = get_int(j, path, "train_count", d.train_count, 1);
  d.test_count = get_int(j, path, "test_count", d.test_count, 1);
  if (j.contains("angles")) d.angles = parse_angle_policy(j.at("angles"), join(path, "angles"));
  if (j.contains("test_angles"))
    d.test_angles = parse_angle_policy(j.at("test_angles"), join(path, "test_angles"));
  if (j.contains("affine")) d.affine = parse_affine_ranges(j.at("affine"), join(path, "affine"));
  return d;
}

void parse_model_overrides(const json& j, const std::string& path, ModelSpec& m,
                           bool* init_seed_pinned) {
  expect_object(j, path);
  check_keys(j, path,
             {"latent", "enc_channels", "kernel", "stride", "control_hidden",
              "ctrl_conv_channels", "softmax_axis", "init_seed"});
  m.latent = get_int(j, path, "latent", m.latent, 1);
  m.enc_channels = get_int_list(j, path, "enc_channels", m.enc_channels, 1);
  m.kernel = get_int(j, path, "kernel", m.kernel, 1);
  m.stride = get_int(j, path, "stride", m.stride, 1);
  m.control_hidden = get_int_list(j, path, "control_hidden", m.control_hidden, 1);
  m.ctrl_conv_channels = get_int_list(j, path, "ctrl_conv_channels", m.ctrl_conv_channels, 1);
  if (j.contains("softmax_axis")) {
    const std::string s = get_string(j, path, "softmax_axis", "");
    try {
      m.softmax_axis = parse_softmax_axis(s);
    } catch (const std::exception& e) {
      fail(join(path, "softmax_axis"), e.what());
    }
  }
  m.init_seed = get_u64(j, path, "init_seed", m.init_seed, init_seed_pinned);
}

OptimConfig parse_optim_config(const json& j, const std::string& path, bool* shuffle_pinned) {
  expect_object(j, path);
  check_keys(j, path,
             {"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "epochs",
              "shuffle_seed"});
  OptimConfig o;
  o.learning_rate = get_number(j, path, "learning_rate", o.learning_rate);
  if (!(o.learning_rate >= 0.0) || !std::isfinite(o.learning_rate))
    fail(join(path, "learning_rate"), "must be finite and >= 0");
  o.beta1 = get_number(j, path, "beta1", o.beta1);
  o.beta2 = get_number(j, path, "beta2", o.beta2);
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) fail(join(path, "beta1"), "must be in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) fail(join(path, "beta2"), "must be in [0, 1)");
  o.epsilon = get_number(j, path, "epsilon", o.epsilon);
  if (!(o.epsilon > 0.0)) fail(join(path, "epsilon"), "must be > 0");
  o.batch_size = get_int(j, path, "batch_size", o.batch_size, 1);
  o.epochs = get_int(j, path, "epochs", o.epochs, 1);
  o.shuffle_seed = get_u64(j, path, "shuffle_seed", o.shuffle_seed, shuffle_pinned);
  return o;
}

GridConfig parse_grid_config(const json& j, const std::string& path) {
  expect_object(j, path);
  check_keys(j, path, {"rows", "column_pairs"});
  GridConfig g;
  g.rows = get_int(j, path, "rows", g.rows, 1);
  g.column_pairs = get_int(j, path, "column_pairs", g.column_pairs, 1);
  return g;
}

GlyphSet filter_glyphs(const GlyphSet& pool, const std::vector<int>& holdout, bool keep_holdout) {
  GlyphSet out;
  out.side = pool.side;
  for (std::size_t i = 0; i < pool.images.size(); ++i) {
    const bool held = std::find(holdout.begin(), holdout.end(), pool.labels[i]) != holdout.end();
    if (held == keep_holdout) {
      out.images.push_back(pool.images[i]);
      out.labels.push_back(pool.labels[i]);
    }
  }
  return out;
}

GlyphSet idx_pool(const DataConfig& d, int side) {
  GlyphSet pool;
  pool.side = side;
  pool.images = load_idx_images(d.idx_images, side);
  if (!d.idx_labels.empty()) {
    pool.labels = load_idx_labels(d.idx_labels);
    if (pool.labels.size() != pool.images.size())
      throw SpecError("data.idx_labels: " + std::to_string(pool.labels.size()) +
                      " labels for " + std::to_string(pool.images.size()) + " images");
  } else {
    pool.labels.assign(pool.images.size(), 0);
  }
  return pool;
}

std::string hex_u64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

const char* experiment_name(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::RotationDiscrete: return "rotation_discrete";
    case ExperimentKind::RotationContinuous: return "rotation_continuous";
    case ExperimentKind::Affine: return "affine";
    case ExperimentKind::Compensation: return "compensation";
  }
  throw ContractError("unreachable experiment kind");
}

ExperimentKind experiment_from_name(const std::string& name) {
  if (name == "rotation_discrete") return ExperimentKind::RotationDiscrete;
  if (name == "rotation_continuous") return ExperimentKind::RotationContinuous;
  if (name == "affine") return ExperimentKind::Affine;
  if (name == "compensation") return ExperimentKind::Compensation;
  throw SpecError("unknown experiment \"" + name +
                  "\"; expected rotation_discrete, rotation_continuous, affine, or compensation");
}

Task experiment_task(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::RotationDiscrete:
    case ExperimentKind::RotationContinuous: return Task::Rotation;
    case ExperimentKind::Affine: return Task::Affine;
    case ExperimentKind::Compensation: return Task::Compensation;
  }
  throw ContractError("unreachable experiment kind");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw SpecError(std::string("config: not valid JSON: ") + e.what());
  }
  expect_object(root, "");
  check_keys(root, "",
             {"experiment", "architecture", "image_side", "seed", "out_dir", "data", "model",
              "optim", "grid"});

  ExperimentConfig cfg;
  if (!root.contains("experiment")) fail("experiment", "missing required key");
  cfg.experiment = experiment_from_name(get_string(root, "", "experiment", ""));
  if (!root.contains("architecture")) fail("architecture", "missing required key");
  try {
    cfg.model.architecture = parse_architecture(get_string(root, "", "architecture", ""));
  } catch (const std::exception& e) {
    fail("architecture", e.what());
  }
  cfg.model.image_side = get_int(root, "", "image_side", 16, 4, 4096);
  cfg.seed = get_u64(root, "", "seed", 1);
  cfg.out_dir = get_string(root, "", "out_dir", cfg.out_dir);
  if (root.contains("data")) cfg.data = parse_data_config(root.at("data"), "data");
  if (root.contains("model"))
    parse_model_overrides(root.at("model"), "model", cfg.model, &cfg.init_seed_pinned);
  if (root.contains("optim"))
    cfg.optim = parse_optim_config(root.at("optim"), "optim", &cfg.shuffle_seed_pinned);
  if (root.contains("grid")) cfg.grid = parse_grid_config(root.at("grid"), "grid");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SpecError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

void finalize_experiment_config(ExperimentConfig& cfg) {
  const Task task = experiment_task(cfg.experiment);

  const bool is_comp_arch = cfg.model.architecture == Architecture::CompensationHypernet;
  if (task == Task::Compensation && !is_comp_arch)
    fail("architecture", "the compensation experiment requires compensation_hypernet");
  if (task != Task::Compensation && is_comp_arch)
    fail("architecture", "compensation_hypernet only runs the compensation experiment");

  switch (task) {
    case Task::Rotation: cfg.model.control_dim = 2; break;
    case Task::Affine: cfg.model.control_dim = 6; break;
    case Task::Compensation: cfg.model.control_dim = 0; break;
  }

  if (!cfg.init_seed_pinned) cfg.model.init_seed = mix_seed(cfg.seed, kSeedInit);
  if (!cfg.shuffle_seed_pinned) cfg.optim.shuffle_seed = mix_seed(cfg.seed, kSeedShuffle);

  if (cfg.data.source == "idx") {
    if (cfg.data.idx_images.empty()) fail("data.idx_images", "required when source is \"idx\"");
    if (!cfg.data.holdout_classes.empty() && cfg.data.idx_labels.empty())
      fail("data.holdout_classes", "needs data.idx_labels to identify classes");
  }

  if (task != Task::Affine) {
    try {
      cfg.data.angles.validate();
    } catch (const std::exception& e) {
      fail("data.angles", e.what());
    }
    if (cfg.data.test_angles) {
      try {
        cfg.data.test_angles->validate();
      } catch (const std::exception& e) {
        fail("data.test_angles", e.what());
      }
    }
  }

  try {
    validate_optim_config(cfg.optim);
  } catch (const std::exception& e) {
    fail("optim", e.what());
  }

  // Surfaces inconsistent model geometry (side/stride mismatches, empty
  // stages) now, before any artifact is touched.
  param_plan(cfg.model);
}

std::string config_schema_text() {
  return R"(Config file: a single JSON object. Unknown keys are rejected.

Top level
  experiment        (required) "rotation_discrete" | "rotation_continuous" |
                    "affine" | "compensation"
  architecture      (required) "simple_hypernet" | "deep_hypernet" |
                    "conditioned_ae" | "compensation_hypernet"
                    (compensation_hypernet pairs exclusively with the
                    compensation experiment)
  image_side        int, default 16
  seed              unsigned int, default 1; master seed. Every unset sub-seed
                    (model init, shuffling, glyph pools, transform draws)
                    derives from it, so changing the seed re-seeds the run.
  out_dir           string, default "out"; all artifacts are written here

data
  source            "synthetic" (default) | "idx"
  idx_images        path to an IDX image file (required for source "idx")
  idx_labels        path to an IDX label file (optional; without it all images
                    get class 0 and holdout_classes must stay empty)
  glyphs_per_class  int >= 1, default 20; synthetic pool size per class
  holdout_classes   list of class labels 0..9; removed from the training pool.
                    When non-empty the test split draws ONLY these classes;
                    when empty the test pool is re-jittered with a fresh seed.
  train_count       int >= 1, default 2000
  test_count        int >= 1, default 500
  angles            transform policy for rotation/compensation training draws:
                    { "default": SPEC, "overrides": {"4": SPEC, ...} }
                    SPEC is {"set": [deg, ...]} or {"range": [lo, hi]} (degrees,
                    hi exclusive). Default: full circle.
  test_angles       same shape; used for the test split (defaults to "angles")
  affine            affine draw ranges (affine experiment only):
                    rot_deg, scale_lo, scale_hi, shear, translate_frac

model (architecture-specific overrides; unused fields are ignored)
  latent            int >= 1, default 64; bottleneck width
  enc_channels      list of ints, default [8, 16]; encoder conv channels,
                    mirrored by the decoder
  kernel            int >= 1, default 3; conv kernel side
  stride            int >= 1, default 2; conv stride per stage
  control_hidden    list of ints, default []; hidden widths of the dense
                    control branch
  ctrl_conv_channels list of ints, default [8, 16]; conv channels of the
                    image-reading control branch (compensation only)
  softmax_axis      "per_row" (default) | "per_column" | "flat"
  init_seed         unsigned int; pins initialization (otherwise derived
                    from the master seed)

optim
  learning_rate     float >= 0, default 0.001
  beta1, beta2      floats in [0, 1), defaults 0.9 / 0.999
  epsilon           float > 0, default 1e-8
  batch_size        int >= 1, default 32
  epochs            int >= 1, default 10
  shuffle_seed      unsigned int; pins shuffling (otherwise derived)

grid
  rows              int >= 1, default 8; comparison-grid rows
  column_pairs      int >= 1, default 4; (reference, output) pairs per row
)";
}

std::string describe_experiment(const ExperimentConfig& cfg) {
  const Task task = experiment_task(cfg.experiment);
  std::ostringstream out;
  out << "experiment: " << experiment_name(cfg.experiment) << "\n";
  out << "architecture: " << architecture_name(cfg.model.architecture) << "\n";
  out << "image side: " << cfg.model.image_side << "\n";
  out << "master seed: " << cfg.seed << " (init " << hex_u64(cfg.model.init_seed) << ", shuffle "
      << hex_u64(cfg.optim.shuffle_seed) << ")\n";
  out << "data: " << cfg.data.source;
  if (cfg.data.source == "synthetic") out << ", " << cfg.data.glyphs_per_class << " glyphs/class";
  else out << " (" << cfg.data.idx_images << ")";
  out << ", train " << cfg.data.train_count << ", test " << cfg.data.test_count << "\n";
  out << "holdout classes:";
  if (cfg.data.holdout_classes.empty()) {
    out << " none";
  } else {
    for (int cls : cfg.data.holdout_classes) out << ' ' << cls;
  }
  out << "\n";
  if (task != Task::Affine) {
    out << "train angles: " << cfg.data.angles.describe() << "\n";
    out << "test angles: "
        << (cfg.data.test_angles ? cfg.data.test_angles->describe() : std::string("same as train"))
        << "\n";
  } else {
    const AffineRanges& a = cfg.data.affine;
    out << "affine ranges: rot +/-" << a.rot_deg << " deg, scale [" << a.scale_lo << ", "
        << a.scale_hi << "], shear +/-" << a.shear << ", translate +/-" << a.translate_frac
        << " * side px\n";
  }
  out << "optimizer: adam lr " << cfg.optim.learning_rate << ", betas " << cfg.optim.beta1 << "/"
      << cfg.optim.beta2 << ", eps " << cfg.optim.epsilon << ", batch " << cfg.optim.batch_size
      << ", epochs " << cfg.optim.epochs << "\n";
  return out.str();
}

DatasetPair build_datasets(const ExperimentConfig& cfg) {
  const Task task = experiment_task(cfg.experiment);
  const int side = cfg.model.image_side;

  GlyphSet train_pool, test_pool;
  if (cfg.data.source == "synthetic") {
    train_pool = filter_glyphs(
        synth_glyphs(side, cfg.data.glyphs_per_class, mix_seed(cfg.seed, kSeedTrainGlyphs)),
        cfg.data.holdout_classes, /*keep_holdout=*/false);
    const GlyphSet fresh =
        synth_glyphs(side, cfg.data.glyphs_per_class, mix_seed(cfg.seed, kSeedTestGlyphs));
    test_pool = cfg.data.holdout_classes.empty()
                    ? fresh
                    : filter_glyphs(fresh, cfg.data.holdout_classes, /*keep_holdout=*/true);
  } else {
    const GlyphSet pool = idx_pool(cfg.data, side);
    train_pool = filter_glyphs(pool, cfg.data.holdout_classes, /*keep_holdout=*/false);
    test_pool = cfg.data.holdout_classes.empty()
                    ? pool
                    : filter_glyphs(pool, cfg.data.holdout_classes, /*keep_holdout=*/true);
  }
  if (train_pool.images.empty())
    throw SpecError("data.holdout_classes: no training glyphs left after filtering");
  if (test_pool.images.empty())
    throw SpecError("data.holdout_classes: no test glyphs match the holdout set");

  const AnglePolicy& test_angles =
      cfg.data.test_angles ? *cfg.data.test_angles : cfg.data.angles;
  DatasetPair pair;
  pair.train = make_dataset(train_pool, task, cfg.data.angles, cfg.data.affine,
                            cfg.data.train_count, mix_seed(cfg.seed, kSeedTrainDraws));
  pair.test = make_dataset(test_pool, task, test_angles, cfg.data.affine, cfg.data.test_count,
                           mix_seed(cfg.seed, kSeedTestDraws));
  return pair;
}

Image predict_image(const Model& model, const Sample& s, Task task) {
  const Tensor x = model_input(s, task).as_tensor();
  std::optional<Tensor> phi;
  const std::vector<double> ctrl = sample_control(s, task);
  if (!ctrl.empty()) phi = Tensor({static_cast<int>(ctrl.size())}, ctrl);
  const Tensor y = forward(model, x, phi);
  return Image(model.spec.image_side, y.values());
}

Canvas comparison_grid(const Dataset& data, const OutputFn& output, int rows, int column_pairs) {
  if (rows < 1 || column_pairs < 1)
    throw ContractError("comparison_grid: rows and column_pairs must be >= 1");
  if (data.samples.empty()) throw ContractError("comparison_grid: empty dataset");
  const std::size_t want = static_cast<std::size_t>(rows) * static_cast<std::size_t>(column_pairs);
  const std::size_t n = std::min(want, data.samples.size());
  std::vector<Image> cells;
  cells.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& s = data.samples[i];
    // Reference column: what the pair is judged against. For generalization
    // tasks that is the transformed target; for compensation, the warped
    // input the model must undo.
    const Image& reference =
        data.task == Task::Compensation ? model_input(s, data.task) : model_target(s, data.task);
    cells.push_back(reference);
    cells.push_back(output(s));
  }
  return tile_grid(cells, 2 * column_pairs);
}

Canvas comparison_grid(const Model& model, const Dataset& data, int rows, int column_pairs) {
  return comparison_grid(
      data, [&](const Sample& s) { return predict_image(model, s, data.task); }, rows,
      column_pairs);
}

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log,
                         const std::string& data_dir) {
  namespace fs = std::filesystem;
  const Task task = experiment_task(cfg.experiment);

  DatasetPair data;
  if (data_dir.empty()) {
    data = build_datasets(cfg);
  } else {
    const fs::path dir(data_dir);
    data.train = load_dataset((dir / kTrainCacheName).string());
    data.test = load_dataset((dir / kTestCacheName).string());
    for (const Dataset* d : {&data.train, &data.test}) {
      if (d->task != task)
        throw SpecError("data cache: task " + std::string(task_name(d->task)) +
                        " does not match experiment " + experiment_name(cfg.experiment));
      if (d->side != cfg.model.image_side)
        throw SpecError("data cache: side " + std::to_string(d->side) +
                        " does not match image_side " + std::to_string(cfg.model.image_side));
    }
    if (static_cast<int>(data.train.samples.size()) != cfg.data.train_count ||
        static_cast<int>(data.test.samples.size()) != cfg.data.test_count)
      throw SpecError("data cache: sample counts do not match the config");
  }

  Model model = build_model(cfg.model);
  if (log) {
    (*log) << "[run] " << experiment_name(cfg.experiment) << " with "
           << architecture_name(cfg.model.architecture) << " (" << param_count(cfg.model)
           << " parameters)\n";
    (*log) << "[run] train " << data.train.samples.size() << " samples (hash "
           << hex_u64(dataset_hash(data.train)) << "), test " << data.test.samples.size()
           << " (hash " << hex_u64(dataset_hash(data.test)) << ")\n";
  }

  fs::create_directories(cfg.out_dir);

  const EpochCallback progress = [&](int epoch, double train_loss, double test_loss) {
    if (log) {
      (*log) << "[run] epoch " << epoch << ": train " << format_g(train_loss) << ", test "
             << format_g(test_loss) << "\n";
      log->flush();
    }
  };
  LossHistory history = train(model, data.train, data.test, cfg.optim, progress);

  const EvalResult train_eval = evaluate(model, data.train);
  const EvalResult test_eval = evaluate(model, data.test);

  const fs::path out(cfg.out_dir);
  RunArtifacts art;
  art.model_path = (out / kModelFileName).string();
  art.loss_csv_path = (out / kLossCsvName).string();
  art.train_grid_path = (out / kTrainGridName).string();
  art.test_grid_path = (out / kTestGridName).string();
  art.summary_path = (out / kSummaryName).string();

  save_model(art.model_path, model);
  save_loss_csv(art.loss_csv_path, history);
  save_pgm(comparison_grid(model, data.train, cfg.grid.rows, cfg.grid.column_pairs),
           art.train_grid_path);
  save_pgm(comparison_grid(model, data.test, cfg.grid.rows, cfg.grid.column_pairs),
           art.test_grid_path);

  {
    std::ofstream summary(art.summary_path, std::ios::binary);
    if (!summary) throw ContractError("cannot write " + art.summary_path);
    summary << describe_experiment(cfg);
    summary << "parameters: " << param_count(cfg.model) << "\n";
    summary << "train set hash: " << hex_u64(dataset_hash(data.train)) << "\n";
    summary << "test set hash: " << hex_u64(dataset_hash(data.test)) << "\n";
    summary << "final train loss (post-training evaluation): " << format_g(train_eval.mean)
            << "\n";
    summary << "final test loss: " << format_g(test_eval.mean) << "\n";
    summary << "per-class test loss:\n";
    for (const auto& [cls, mean] : test_eval.per_class)
      summary << "  class " << cls << ": " << format_g(mean) << "\n";
    summary << "artifacts: " << kModelFileName << ' ' << kLossCsvName << ' ' << kTrainGridName
            << ' ' << kTestGridName << ' ' << kSummaryName << "\n";
  }

  if (log) {
    (*log) << "[run] final test loss " << format_g(test_eval.mean) << "; artifacts in "
           << cfg.out_dir << "\n";
  }
  return RunResult{std::move(model), std::move(history), train_eval, test_eval, std::move(art)};
}

}  // namespace hypernets
