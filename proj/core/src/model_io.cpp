#include "hypernets/model_io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

#include "hypernets/errors.hpp"

namespace hypernets {

namespace {

constexpr char kMagic[4] = {'H', 'Y', 'P', 'N'};
constexpr std::uint16_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;

  void need(std::size_t n, const char* what) {
    if (pos + n > buf.size()) {
      throw FormatError(std::string("model file truncated reading ") + what + " at byte " +
                        std::to_string(pos));
    }
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
    pos += 8;
    return std::bit_cast<double>(bits);
  }
};

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out.push_back(',');
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<int> split_ints(const std::string& s, const std::string& key) {
  std::vector<int> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    const std::string tok = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw FormatError("bad integer \"" + tok + "\" in spec field " + key);
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Fixed field order; both writer and reader walk this list.
constexpr const char* kFieldOrder[] = {
    "architecture",       "image_side", "control_dim",        "latent",
    "enc_channels",       "kernel",     "stride",             "control_hidden",
    "ctrl_conv_channels", "softmax_axis", "init_seed",
};

}  // namespace

std::string spec_to_text(const ModelSpec& s) {
  std::ostringstream out;
  out << "architecture=" << architecture_name(s.architecture) << '\n'
      << "image_side=" << s.image_side << '\n'
      << "control_dim=" << s.control_dim << '\n'
      << "latent=" << s.latent << '\n'
      << "enc_channels=" << join_ints(s.enc_channels) << '\n'
      << "kernel=" << s.kernel << '\n'
      << "stride=" << s.stride << '\n'
      << "control_hidden=" << join_ints(s.control_hidden) << '\n'
      << "ctrl_conv_channels=" << join_ints(s.ctrl_conv_channels) << '\n'
      << "softmax_axis=" << softmax_axis_name(s.softmax_axis) << '\n'
      << "init_seed=" << s.init_seed << '\n';
  return out.str();
}

ModelSpec spec_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<std::string, std::string>> fields;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("spec line missing '=': \"" + line + "\"");
    fields.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  constexpr std::size_t n_fields = sizeof(kFieldOrder) / sizeof(kFieldOrder[0]);
  if (fields.size() != n_fields) {
    throw FormatError("spec block has " + std::to_string(fields.size()) + " fields, expected " +
                      std::to_string(n_fields));
  }
  for (std::size_t i = 0; i < n_fields; ++i) {
    if (fields[i].first != kFieldOrder[i]) {
      throw FormatError("spec field " + std::to_string(i + 1) + " is \"" + fields[i].first +
                        "\", expected \"" + kFieldOrder[i] + "\"");
    }
  }
  auto to_int = [](const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      const int r = std::stoi(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
      return r;
    } catch (const std::exception&) {
      throw FormatError("bad integer \"" + v + "\" in spec field " + key);
    }
  };
  ModelSpec s;
  s.architecture = parse_architecture(fields[0].second);
  s.image_side = to_int("image_side", fields[1].second);
  s.control_dim = to_int("control_dim", fields[2].second);
  s.latent = to_int("latent", fields[3].second);
  s.enc_channels = split_ints(fields[4].second, "enc_channels");
  s.kernel = to_int("kernel", fields[5].second);
  s.stride = to_int("stride", fields[6].second);
  s.control_hidden = split_ints(fields[7].second, "control_hidden");
  s.ctrl_conv_channels = split_ints(fields[8].second, "ctrl_conv_channels");
  s.softmax_axis = parse_softmax_axis(fields[9].second);
  try {
    std::size_t used = 0;
    s.init_seed = std::stoull(fields[10].second, &used);
    if (used != fields[10].second.size()) throw std::invalid_argument(fields[10].second);
  } catch (const std::exception&) {
    throw FormatError("bad integer \"" + fields[10].second + "\" in spec field init_seed");
  }
  return s;
}

void save_model(const std::string& path, const Model& model) {
  const std::vector<ParamPlan> plan = param_plan(model.spec);
  if (plan.size() != model.params.size()) {
    throw ContractError("model has " + std::to_string(model.params.size()) +
                        " parameter tensors, plan expects " + std::to_string(plan.size()));
  }
  std::string out;
  out.append(kMagic, 4);
  put_u16(out, kVersion);
  const std::string spec_text = spec_to_text(model.spec);
  put_u32(out, static_cast<std::uint32_t>(spec_text.size()));
  out += spec_text;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Tensor& t = model.params[i].value;
    if (t.shape() != plan[i].shape) {
      throw ContractError("parameter " + plan[i].name + " has shape " + shape_str(t.shape()) +
                          ", plan expects " + shape_str(plan[i].shape));
    }
    for (double v : t.values()) put_f64(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw FormatError("short write to " + path);
}

Model load_model(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf};
  r.need(4, "magic");
  if (buf.compare(0, 4, kMagic, 4) != 0) throw FormatError("bad magic; not a model file: " + path);
  r.pos = 4;
  const std::uint16_t version = r.u16("format version");
  if (version != kVersion) {
    throw FormatError("unsupported model format version " + std::to_string(version));
  }
  const std::uint32_t spec_len = r.u32("spec length");
  r.need(spec_len, "spec text");
  const std::string spec_text = buf.substr(r.pos, spec_len);
  r.pos += spec_len;
  Model m;
  m.spec = spec_from_text(spec_text);
  const std::vector<ParamPlan> plan = param_plan(m.spec);
  m.params.reserve(plan.size());
  for (const ParamPlan& p : plan) {
    std::vector<double> values(static_cast<std::size_t>(numel(p.shape)));
    for (double& v : values) v = r.f64(p.name.c_str());
    m.params.push_back({p.name, p.tag, Tensor(p.shape, std::move(values))});
  }
  if (r.pos != buf.size()) {
    throw FormatError("model file has " + std::to_string(buf.size() - r.pos) +
                      " trailing bytes after the last parameter");
  }
  return m;
}

}  // namespace hypernets
