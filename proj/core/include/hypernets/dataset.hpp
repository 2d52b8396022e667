#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "hypernets/glyphs.hpp"
#include "hypernets/image.hpp"

namespace hypernets {

enum class Task { Rotation, Affine, Compensation };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

// Angle distribution for one class: a discrete set or a continuous range.
// All angles live in [0, 360).
struct AngleSpec {
  bool discrete = false;
  std::vector<double> values;       // discrete mode
  double lo = 0.0, hi = 360.0;      // continuous mode, [lo, hi)

  static AngleSpec discrete_set(std::vector<double> v);
  static AngleSpec range(double lo, double hi);
};

// Default spec plus per-class overrides (e.g. classes 4 and 9 restricted to
// [0, 90) while the rest span the full circle).
struct AnglePolicy {
  AngleSpec default_spec = AngleSpec::range(0.0, 360.0);
  std::map<int, AngleSpec> overrides;

  const AngleSpec& for_class(int cls) const;
  void validate() const;
  std::string describe() const;
};

struct Sample {
  Image x;        // canonical glyph
  Image x_prime;  // transformed glyph
  TransformParams phi;
  int class_label = 0;
};

struct Dataset {
  Task task = Task::Rotation;
  int side = 0;
  std::vector<Sample> samples;
  std::string provenance;
};

// Draws `count` samples: pick a glyph, draw transform parameters per policy,
// warp. Per-sample randomness derives from mix_seed(seed, index), so
// regeneration is bit-identical. Rotation/affine samples pair (x, warp(x));
// compensation samples keep the same layout but are consumed input-reversed
// (the warped image is the model input and the canonical one the target).
Dataset make_dataset(const GlyphSet& source, Task task, const AnglePolicy& angles,
                     const AffineRanges& affine, int count, std::uint64_t seed);

// Which image the model sees / must produce for a given task.
const Image& model_input(const Sample& s, Task task);
const Image& model_target(const Sample& s, Task task);
// Control vector fed to the transformation branch; empty for compensation.
std::vector<double> sample_control(const Sample& s, Task task);

// FNV-1a over every pixel and parameter byte; the regeneration invariant.
std::uint64_t dataset_hash(const Dataset& d);

// Binary cache ("HYPD"): magic, version, length-prefixed provenance text,
// then samples as little-endian f64 buffers. Round-trips bit-exactly.
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace hypernets
