#include "hypernets/dataset.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hypernets/errors.hpp"
#include "hypernets/rng.hpp"

namespace hypernets {

const char* task_name(Task t) {
  switch (t) {
    case Task::Rotation: return "rotation";
    case Task::Affine: return "affine";
    case Task::Compensation: return "compensation";
  }
  return "?";
}

Task task_from_name(const std::string& name) {
  if (name == "rotation") return Task::Rotation;
  if (name == "affine") return Task::Affine;
  if (name == "compensation") return Task::Compensation;
  throw FormatError("unknown task '" + name + "'");
}

AngleSpec AngleSpec::discrete_set(std::vector<double> v) {
  AngleSpec s;
  s.discrete = true;
  s.values = std::move(v);
  return s;
}

AngleSpec AngleSpec::range(double lo, double hi) {
  AngleSpec s;
  s.discrete = false;
  s.lo = lo;
  s.hi = hi;
  return s;
}

const AngleSpec& AnglePolicy::for_class(int cls) const {
  auto it = overrides.find(cls);
  return it == overrides.end() ? default_spec : it->second;
}

namespace {

void validate_spec(const AngleSpec& s, const std::string& where) {
  if (s.discrete) {
    if (s.values.empty()) throw ContractError(where + ": discrete angle set is empty");
    for (double v : s.values) {
      if (!(v >= 0.0 && v < 360.0)) {
        throw ContractError(where + ": angle " + std::to_string(v) + " outside [0, 360)");
      }
    }
  } else {
    if (!(s.lo >= 0.0 && s.hi <= 360.0 && s.lo < s.hi)) {
      throw ContractError(where + ": range [" + std::to_string(s.lo) + ", " + std::to_string(s.hi) +
                          ") invalid");
    }
  }
}

std::string describe_spec(const AngleSpec& s) {
  std::ostringstream out;
  if (s.discrete) {
    out << '{';
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      if (i) out << ',';
      out << s.values[i];
    }
    out << '}';
  } else {
    out << '[' << s.lo << ',' << s.hi << ')';
  }
  return out.str();
}

double draw_angle(Rng& rng, const AngleSpec& s) {
  if (s.discrete) return s.values[static_cast<std::size_t>(rng.pick_index(s.values.size()))];
  return rng.uniform(s.lo, s.hi);
}

}  // namespace

void AnglePolicy::validate() const {
  validate_spec(default_spec, "angle policy default");
  for (const auto& [cls, spec] : overrides) {
    validate_spec(spec, "angle policy override for class " + std::to_string(cls));
  }
}

std::string AnglePolicy::describe() const {
  std::ostringstream out;
  out << "default=" << describe_spec(default_spec);
  for (const auto& [cls, spec] : overrides) {
    out << " class" << cls << '=' << describe_spec(spec);
  }
  return out.str();
}

Dataset make_dataset(const GlyphSet& source, Task task, const AnglePolicy& angles,
                     const AffineRanges& affine, int count, std::uint64_t seed) {
  if (source.images.empty()) throw ContractError("make_dataset: empty glyph source");
  if (count < 1) throw ContractError("make_dataset: count must be >= 1");
  if (task != Task::Affine) angles.validate();

  Dataset d;
  d.task = task;
  d.side = source.side;
  d.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const int pick = rng.pick_index(source.images.size());
    Sample s;
    s.x = source.images[static_cast<std::size_t>(pick)];
    s.class_label = source.labels[static_cast<std::size_t>(pick)];
    if (task == Task::Affine) {
      const AffineParams p = sample_affine_params(rng, affine, source.side);
      s.phi = p;
      s.x_prime = affine_transform(s.x, p);
    } else {
      const double angle = draw_angle(rng, angles.for_class(s.class_label));
      s.phi = encode_angle(angle);
      s.x_prime = rotate_image(s.x, angle);
    }
    d.samples.push_back(std::move(s));
  }

  std::ostringstream prov;
  prov << "glyphs side=" << source.side << " n=" << source.images.size() << " | task="
       << task_name(task) << " | ";
  if (task == Task::Affine) {
    prov << "affine rot=" << affine.rot_deg << " scale=[" << affine.scale_lo << ','
         << affine.scale_hi << "] shear=" << affine.shear << " translate=" << affine.translate_frac;
  } else {
    prov << "angles " << angles.describe();
  }
  prov << " | count=" << count << " seed=" << seed;
  d.provenance = prov.str();
  return d;
}

const Image& model_input(const Sample& s, Task task) {
  return task == Task::Compensation ? s.x_prime : s.x;
}

const Image& model_target(const Sample& s, Task task) {
  return task == Task::Compensation ? s.x : s.x_prime;
}

std::vector<double> sample_control(const Sample& s, Task task) {
  if (task == Task::Compensation) return {};
  return control_vector(s.phi);
}

namespace {

constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_f64(std::uint64_t& h, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    h ^= (bits >> (8 * i)) & 0xffu;
    h *= kFnvPrime;
  }
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

struct Reader {
  std::vector<unsigned char> bytes;
  std::size_t off = 0;
  std::string path;

  void need(std::size_t n, const char* what) {
    if (off + n > bytes.size()) {
      throw FormatError(std::string("truncated dataset cache: ") + what + " at byte " +
                        std::to_string(off) + " in " + path);
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    const std::uint16_t v = static_cast<std::uint16_t>(bytes[off] | (bytes[off + 1] << 8));
    off += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[off + i]) << (8 * i);
    off += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[off + i]) << (8 * i);
    off += 8;
    return std::bit_cast<double>(v);
  }
};

}  // namespace

std::uint64_t dataset_hash(const Dataset& d) {
  std::uint64_t h = kFnvOffset;
  for (const Sample& s : d.samples) {
    for (double v : s.x.pixels) fnv_f64(h, v);
    for (double v : s.x_prime.pixels) fnv_f64(h, v);
    for (double v : control_vector(s.phi)) fnv_f64(h, v);
    fnv_f64(h, static_cast<double>(s.class_label));
  }
  return h;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out.write("HYPD", 4);
  put_u16(out, 1);  // version
  put_u32(out, static_cast<std::uint32_t>(d.provenance.size()));
  out.write(d.provenance.data(), static_cast<std::streamsize>(d.provenance.size()));
  out.put(static_cast<char>(d.task));
  put_u32(out, static_cast<std::uint32_t>(d.side));
  put_u32(out, static_cast<std::uint32_t>(d.samples.size()));
  for (const Sample& s : d.samples) {
    put_u32(out, static_cast<std::uint32_t>(s.class_label));
    const std::vector<double> params = control_vector(s.phi);
    out.put(std::holds_alternative<RotationParams>(s.phi) ? 0 : 1);
    for (double v : params) put_f64(out, v);
    for (double v : s.x.pixels) put_f64(out, v);
    for (double v : s.x_prime.pixels) put_f64(out, v);
  }
  if (!out) throw FormatError("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  Reader r;
  r.path = path;
  r.bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  r.need(4, "magic");
  if (std::memcmp(r.bytes.data(), "HYPD", 4) != 0) {
    throw FormatError("bad dataset magic at byte 0 in " + path);
  }
  r.off = 4;
  const std::uint16_t version = r.u16("version");
  if (version != 1) {
    throw FormatError("unsupported dataset version " + std::to_string(version) + " at byte 4");
  }
  const std::uint32_t prov_len = r.u32("provenance length");
  r.need(prov_len, "provenance text");
  Dataset d;
  d.provenance.assign(reinterpret_cast<const char*>(r.bytes.data() + r.off), prov_len);
  r.off += prov_len;
  r.need(1, "task tag");
  const unsigned char task_tag = r.bytes[r.off++];
  if (task_tag > 2) throw FormatError("bad task tag at byte " + std::to_string(r.off - 1));
  d.task = static_cast<Task>(task_tag);
  d.side = static_cast<int>(r.u32("side"));
  if (d.side <= 0 || d.side > 4096) {
    throw FormatError("implausible image side " + std::to_string(d.side));
  }
  const std::uint32_t count = r.u32("sample count");
  const std::size_t npix = static_cast<std::size_t>(d.side) * d.side;
  d.samples.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Sample s;
    s.class_label = static_cast<int>(r.u32("class label"));
    r.need(1, "param tag");
    const unsigned char tag = r.bytes[r.off++];
    if (tag == 0) {
      RotationParams p;
      p.sin_a = r.f64("sin");
      p.cos_a = r.f64("cos");
      s.phi = p;
    } else if (tag == 1) {
      AffineParams p;
      p.a11 = r.f64("a11");
      p.a12 = r.f64("a12");
      p.a13 = r.f64("a13");
      p.a21 = r.f64("a21");
      p.a22 = r.f64("a22");
      p.a23 = r.f64("a23");
      s.phi = p;
    } else {
      throw FormatError("bad param tag at byte " + std::to_string(r.off - 1));
    }
    std::vector<double> xp(npix), xpp(npix);
    for (double& v : xp) v = r.f64("canonical pixels");
    for (double& v : xpp) v = r.f64("transformed pixels");
    s.x = Image(d.side, std::move(xp));
    s.x_prime = Image(d.side, std::move(xpp));
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace hypernets
