#include "hypernets/model.hpp"

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "hypernets/errors.hpp"
#include "hypernets/rng.hpp"

namespace hypernets {

namespace {

std::string itos(std::int64_t v) { return std::to_string(v); }

double dense_scale(int in, int out) { return std::sqrt(6.0 / (in + out)); }

double conv_scale(int c_in, int c_out, int k) { return std::sqrt(6.0 / ((c_in + c_out) * k * k)); }

// Geometry shared by the builder and the forward pass.
struct StagePlan {
  int conv_stages = 0;     // number of encoder conv layers
  int conv_out_side = 0;   // spatial side after the encoder convs
  int flat = 0;            // flattened encoder feature count
  int dec_in = 0;          // width of the decoder's first dense output
  int mod_out = 0;         // rows of the modulated matrix
  int mod_in = 0;          // columns of the modulated matrix
  int ctrl_flat = 0;       // flattened control-conv features (compensation)
};

void require(bool ok, const std::string& stage, const std::string& what) {
  if (!ok) throw SpecError(stage + ": " + what);
}

StagePlan stage_plan(const ModelSpec& s) {
  StagePlan p;
  require(s.image_side >= 2, "input", "image_side must be >= 2, got " + itos(s.image_side));
  require(s.kernel >= 1, "encoder", "kernel must be >= 1, got " + itos(s.kernel));
  require(s.stride >= 1, "encoder", "stride must be >= 1, got " + itos(s.stride));
  if (s.architecture == Architecture::CompensationHypernet) {
    require(s.control_dim == 0, "control branch",
            "control_dim must be 0 for compensation_hypernet, got " + itos(s.control_dim));
  } else {
    require(s.control_dim >= 1, "control branch",
            "control_dim must be >= 1 for " + std::string(architecture_name(s.architecture)) +
                ", got " + itos(s.control_dim));
  }
  for (int w : s.control_hidden)
    require(w >= 1, "control branch", "hidden width must be >= 1, got " + itos(w));

  if (s.architecture == Architecture::SimpleHypernet) {
    p.mod_in = s.image_side * s.image_side;
    p.mod_out = p.mod_in;
    return p;
  }

  require(!s.enc_channels.empty(), "encoder", "enc_channels must not be empty");
  for (int c : s.enc_channels)
    require(c >= 1, "encoder", "channel count must be >= 1, got " + itos(c));
  require(s.latent >= 1, "latent", "latent width must be >= 1, got " + itos(s.latent));

  p.conv_stages = static_cast<int>(s.enc_channels.size());
  int side = s.image_side;
  for (int i = 0; i < p.conv_stages; ++i) {
    require(side % s.stride == 0, "encoder",
            "conv stage " + itos(i + 1) + " input side " + itos(side) +
                " is not divisible by stride " + itos(s.stride));
    side /= s.stride;
  }
  require(side >= 1, "encoder", "image collapses to nothing after the conv stages");
  p.conv_out_side = side;
  p.flat = s.enc_channels.back() * side * side;
  p.dec_in = p.flat;
  p.mod_out = p.dec_in;
  p.mod_in = s.latent;

  if (s.architecture == Architecture::CompensationHypernet) {
    require(!s.ctrl_conv_channels.empty(), "control branch", "ctrl_conv_channels must not be empty");
    for (int c : s.ctrl_conv_channels)
      require(c >= 1, "control branch", "channel count must be >= 1, got " + itos(c));
    int cside = s.image_side;
    for (std::size_t i = 0; i < s.ctrl_conv_channels.size(); ++i) {
      require(cside % s.stride == 0, "control branch",
              "conv stage " + itos(static_cast<int>(i) + 1) + " input side " + itos(cside) +
                  " is not divisible by stride " + itos(s.stride));
      cside /= s.stride;
    }
    p.ctrl_flat = s.ctrl_conv_channels.back() * cside * cside;
  }
  return p;
}

// Appends the dense control chain mapping `in_dim` to `logit_dim`.
void plan_dense_ctrl(std::vector<ParamPlan>& plan, const ModelSpec& s, int in_dim, int logit_dim) {
  int prev = in_dim;
  for (std::size_t i = 0; i < s.control_hidden.size(); ++i) {
    const int w = s.control_hidden[i];
    const std::string base = "ctrl_dense" + itos(static_cast<int>(i) + 1);
    plan.push_back({base + ".W", ParamTag::ControlBranch, Shape{w, prev}, dense_scale(prev, w)});
    plan.push_back({base + ".b", ParamTag::ControlBranch, Shape{w}, 0.0});
    prev = w;
  }
  plan.push_back({"ctrl_out.W", ParamTag::ControlBranch, Shape{logit_dim, prev},
                  0.1 * dense_scale(prev, logit_dim)});
  plan.push_back({"ctrl_out.b", ParamTag::ControlBranch, Shape{logit_dim}, 0.0});
}

void plan_encoder(std::vector<ParamPlan>& plan, const ModelSpec& s, const StagePlan& p) {
  int prev_c = 1;
  for (int i = 0; i < p.conv_stages; ++i) {
    const int c = s.enc_channels[i];
    const std::string base = "enc_conv" + itos(i + 1);
    plan.push_back({base + ".kernels", ParamTag::Plain, Shape{c, prev_c, s.kernel, s.kernel},
                    conv_scale(prev_c, c, s.kernel)});
    plan.push_back({base + ".bias", ParamTag::Plain, Shape{c}, 0.0});
    prev_c = c;
  }
  plan.push_back({"enc_dense.W", ParamTag::Plain, Shape{s.latent, p.flat},
                  dense_scale(p.flat, s.latent)});
  plan.push_back({"enc_dense.b", ParamTag::Plain, Shape{s.latent}, 0.0});
}

void plan_decoder(std::vector<ParamPlan>& plan, const ModelSpec& s, const StagePlan& p) {
  (void)p;
  int prev_c = s.enc_channels.back();
  for (int i = p.conv_stages - 1; i >= 0; --i) {
    const int c = i > 0 ? s.enc_channels[i - 1] : 1;
    const std::string base = "dec_deconv" + itos(p.conv_stages - i);
    plan.push_back({base + ".kernels", ParamTag::Plain, Shape{prev_c, c, s.kernel, s.kernel},
                    conv_scale(prev_c, c, s.kernel)});
    plan.push_back({base + ".bias", ParamTag::Plain, Shape{c}, 0.0});
    prev_c = c;
  }
}

}  // namespace

const char* architecture_name(Architecture a) {
  switch (a) {
    case Architecture::SimpleHypernet: return "simple_hypernet";
    case Architecture::DeepHypernet: return "deep_hypernet";
    case Architecture::ConditionedAe: return "conditioned_ae";
    case Architecture::CompensationHypernet: return "compensation_hypernet";
  }
  throw ContractError("unknown architecture enum value");
}

const char* softmax_axis_name(SoftmaxAxis a) {
  switch (a) {
    case SoftmaxAxis::PerRow: return "per_row";
    case SoftmaxAxis::PerColumn: return "per_column";
    case SoftmaxAxis::Flat: return "flat";
  }
  throw ContractError("unknown softmax axis enum value");
}

const char* param_tag_name(ParamTag t) {
  switch (t) {
    case ParamTag::ModulatedCore: return "modulated_core";
    case ParamTag::ControlBranch: return "control_branch";
    case ParamTag::Plain: return "plain";
  }
  throw ContractError("unknown param tag enum value");
}

Architecture parse_architecture(const std::string& s) {
  if (s == "simple_hypernet") return Architecture::SimpleHypernet;
  if (s == "deep_hypernet") return Architecture::DeepHypernet;
  if (s == "conditioned_ae") return Architecture::ConditionedAe;
  if (s == "compensation_hypernet") return Architecture::CompensationHypernet;
  throw SpecError("unknown architecture \"" + s + "\"");
}

SoftmaxAxis parse_softmax_axis(const std::string& s) {
  if (s == "per_row") return SoftmaxAxis::PerRow;
  if (s == "per_column") return SoftmaxAxis::PerColumn;
  if (s == "flat") return SoftmaxAxis::Flat;
  throw SpecError("unknown softmax axis \"" + s + "\"");
}

std::vector<ParamPlan> param_plan(const ModelSpec& s) {
  const StagePlan p = stage_plan(s);
  std::vector<ParamPlan> plan;
  switch (s.architecture) {
    case Architecture::SimpleHypernet: {
      plan.push_back({"mod_dense.W", ParamTag::ModulatedCore, Shape{p.mod_out, p.mod_in},
                      dense_scale(p.mod_in, p.mod_out)});
      plan.push_back({"mod_dense.b", ParamTag::Plain, Shape{p.mod_out}, 0.0});
      plan_dense_ctrl(plan, s, s.control_dim, p.mod_out * p.mod_in);
      break;
    }
    case Architecture::DeepHypernet: {
      plan_encoder(plan, s, p);
      plan.push_back({"mod_dense.W", ParamTag::ModulatedCore, Shape{p.mod_out, p.mod_in},
                      dense_scale(p.mod_in, p.mod_out)});
      plan.push_back({"mod_dense.b", ParamTag::Plain, Shape{p.mod_out}, 0.0});
      plan_dense_ctrl(plan, s, s.control_dim, p.mod_out * p.mod_in);
      plan_decoder(plan, s, p);
      break;
    }
    case Architecture::ConditionedAe: {
      plan_encoder(plan, s, p);
      const int dec_in_width = s.latent + s.control_dim;
      plan.push_back({"dec_dense.W", ParamTag::Plain, Shape{p.dec_in, dec_in_width},
                      dense_scale(dec_in_width, p.dec_in)});
      plan.push_back({"dec_dense.b", ParamTag::Plain, Shape{p.dec_in}, 0.0});
      plan_decoder(plan, s, p);
      break;
    }
    case Architecture::CompensationHypernet: {
      plan_encoder(plan, s, p);
      plan.push_back({"mod_dense.W", ParamTag::ModulatedCore, Shape{p.mod_out, p.mod_in},
                      dense_scale(p.mod_in, p.mod_out)});
      plan.push_back({"mod_dense.b", ParamTag::Plain, Shape{p.mod_out}, 0.0});
      int prev_c = 1;
      for (std::size_t i = 0; i < s.ctrl_conv_channels.size(); ++i) {
        const int c = s.ctrl_conv_channels[i];
        const std::string base = "ctrl_conv" + itos(static_cast<int>(i) + 1);
        plan.push_back({base + ".kernels", ParamTag::ControlBranch,
                        Shape{c, prev_c, s.kernel, s.kernel}, conv_scale(prev_c, c, s.kernel)});
        plan.push_back({base + ".bias", ParamTag::ControlBranch, Shape{c}, 0.0});
        prev_c = c;
      }
      const int logit_dim = p.mod_out * p.mod_in;
      plan.push_back({"ctrl_out.W", ParamTag::ControlBranch, Shape{logit_dim, p.ctrl_flat},
                      0.1 * dense_scale(p.ctrl_flat, logit_dim)});
      plan.push_back({"ctrl_out.b", ParamTag::ControlBranch, Shape{logit_dim}, 0.0});
      plan_decoder(plan, s, p);
      break;
    }
  }
  return plan;
}

std::int64_t param_count(const ModelSpec& spec) {
  std::int64_t total = 0;
  for (const ParamPlan& p : param_plan(spec)) total += numel(p.shape);
  return total;
}

Model build_model(const ModelSpec& spec) {
  const std::vector<ParamPlan> plan = param_plan(spec);
  Model m;
  m.spec = spec;
  m.params.reserve(plan.size());
  Rng rng(spec.init_seed);
  for (const ParamPlan& p : plan) {
    std::vector<double> values(static_cast<std::size_t>(numel(p.shape)), 0.0);
    if (p.init_scale > 0.0) {
      for (double& v : values) v = rng.uniform(-p.init_scale, p.init_scale);
    }
    m.params.push_back({p.name, p.tag, Tensor(p.shape, std::move(values))});
  }
  return m;
}

Tensor modulation_matrix(const Tensor& logits, int out, int in, SoftmaxAxis axis) {
  if (static_cast<std::int64_t>(logits.values().size()) != static_cast<std::int64_t>(out) * in) {
    throw DimensionError("modulation logits have " + itos(static_cast<std::int64_t>(logits.values().size())) + " entries, expected " +
                         itos(static_cast<std::int64_t>(out) * in));
  }
  const Tensor grid = reshape(logits, Shape{out, in});
  switch (axis) {
    case SoftmaxAxis::PerRow: return softmax(grid, 1);
    case SoftmaxAxis::PerColumn: return softmax(grid, 0);
    case SoftmaxAxis::Flat:
      return reshape(softmax(reshape(logits, Shape{1, out * in}), 1), Shape{out, in});
  }
  throw ContractError("unknown softmax axis enum value");
}

Tensor modulated_dense(const Tensor& x, const Tensor& W, const Tensor& b, const Tensor& logits,
                       SoftmaxAxis axis) {
  if (W.shape().size() != 2) throw DimensionError("modulated weight matrix must be 2-d");
  const int out = W.shape()[0], in = W.shape()[1];
  const Tensor mod = modulation_matrix(logits, out, in, axis);
  return add(matmul(hadamard(mod, W), x), b);
}

Tensor hyper_dense_forward(const Tensor& x, const HyperDenseLayer& layer, const Tensor& control) {
  if (layer.ctrl_weights.empty() || layer.ctrl_weights.size() != layer.ctrl_biases.size()) {
    throw ContractError("control branch needs matching weight/bias lists, at least one layer");
  }
  const int expect = layer.ctrl_weights.front().shape()[1];
  if (static_cast<std::int64_t>(control.values().size()) != expect) {
    throw DimensionError("control vector has " + itos(static_cast<std::int64_t>(control.values().size())) + " entries, expected " +
                         itos(expect));
  }
  Tensor h = control;
  for (std::size_t i = 0; i + 1 < layer.ctrl_weights.size(); ++i) {
    h = apply_activation(add(matmul(layer.ctrl_weights[i], h), layer.ctrl_biases[i]),
                         Activation::Tanh);
  }
  const Tensor logits = add(matmul(layer.ctrl_weights.back(), h), layer.ctrl_biases.back());
  return modulated_dense(x, layer.W, layer.b, logits, layer.softmax_axis);
}

namespace {

// Sequential reader over the canonical parameter order.
struct Cursor {
  const std::vector<Tensor>& p;
  std::size_t i = 0;
  const Tensor& next() {
    if (i >= p.size()) throw ContractError("parameter list is shorter than the model plan");
    return p[i++];
  }
};

Tensor relu(const Tensor& t) { return apply_activation(t, Activation::Relu); }
Tensor tanh_act(const Tensor& t) { return apply_activation(t, Activation::Tanh); }

// Dense control chain: tanh hidden layers, linear final layer.
Tensor dense_ctrl_logits(Cursor& cur, const ModelSpec& s, const Tensor& control) {
  Tensor h = control;
  for (std::size_t i = 0; i < s.control_hidden.size(); ++i) {
    const Tensor& W = cur.next();
    const Tensor& b = cur.next();
    h = tanh_act(add(matmul(W, h), b));
  }
  const Tensor& W = cur.next();
  const Tensor& b = cur.next();
  return add(matmul(W, h), b);
}

Tensor run_encoder(Cursor& cur, const ModelSpec& s, const StagePlan& plan, const Tensor& x,
                   ForwardTrace* trace) {
  Tensor h = x;
  for (int i = 0; i < plan.conv_stages; ++i) {
    const Tensor& k = cur.next();
    const Tensor& b = cur.next();
    h = relu(channel_bias(conv2d(h, k, s.stride, Padding::Same), b));
    if (trace) trace->encoder.push_back(h);
  }
  h = reshape(h, Shape{plan.flat});
  const Tensor& W = cur.next();
  const Tensor& b = cur.next();
  const Tensor z = relu(add(matmul(W, h), b));
  if (trace) trace->encoder.push_back(z);
  return z;
}

Tensor run_decoder(Cursor& cur, const ModelSpec& s, const StagePlan& plan, const Tensor& d) {
  Tensor h = reshape(d, Shape{s.enc_channels.back(), plan.conv_out_side, plan.conv_out_side});
  for (int i = 0; i < plan.conv_stages; ++i) {
    const Tensor& k = cur.next();
    const Tensor& b = cur.next();
    h = channel_bias(conv2d_transpose(h, k, s.stride), b);
    h = i + 1 < plan.conv_stages ? relu(h) : apply_activation(h, Activation::Sigmoid);
  }
  return h;
}

}  // namespace

Tensor forward(const ModelSpec& spec, const std::vector<Tensor>& params, const Tensor& x,
               const std::optional<Tensor>& phi, ForwardTrace* trace) {
  const StagePlan plan = stage_plan(spec);
  if (x.shape() != Shape{1, spec.image_side, spec.image_side}) {
    throw DimensionError("input must be [1 x " + itos(spec.image_side) + " x " +
                         itos(spec.image_side) + "], got " + shape_str(x.shape()));
  }
  const bool wants_phi = spec.control_dim > 0;
  if (wants_phi && !phi.has_value()) {
    throw ContractError(std::string(architecture_name(spec.architecture)) +
                        " requires a control vector");
  }
  if (!wants_phi && phi.has_value()) {
    throw ContractError(std::string(architecture_name(spec.architecture)) +
                        " conditions on the input image; a control vector must not be passed");
  }
  if (wants_phi && static_cast<std::int64_t>(phi->values().size()) != spec.control_dim) {
    throw DimensionError("control vector has " + itos(static_cast<std::int64_t>(phi->values().size())) + " entries, expected " +
                         itos(spec.control_dim));
  }

  Cursor cur{params};
  Tensor out;
  switch (spec.architecture) {
    case Architecture::SimpleHypernet: {
      const Tensor flat = reshape(x, Shape{plan.mod_in});
      if (trace) trace->encoder.push_back(flat);
      const Tensor& W = cur.next();
      const Tensor& b = cur.next();
      const Tensor logits = dense_ctrl_logits(cur, spec, *phi);
      if (trace) {
        trace->logits = logits;
        trace->modulation = modulation_matrix(logits, plan.mod_out, plan.mod_in, spec.softmax_axis);
      }
      const Tensor y = modulated_dense(flat, W, b, logits, spec.softmax_axis);
      out = reshape(apply_activation(y, Activation::Sigmoid),
                    Shape{1, spec.image_side, spec.image_side});
      break;
    }
    case Architecture::DeepHypernet:
    case Architecture::CompensationHypernet: {
      const Tensor z = run_encoder(cur, spec, plan, x, trace);
      const Tensor& W = cur.next();
      const Tensor& b = cur.next();
      Tensor logits;
      if (spec.architecture == Architecture::DeepHypernet) {
        logits = dense_ctrl_logits(cur, spec, *phi);
      } else {
        Tensor c = x;
        for (std::size_t i = 0; i < spec.ctrl_conv_channels.size(); ++i) {
          const Tensor& ck = cur.next();
          const Tensor& cb = cur.next();
          c = tanh_act(channel_bias(conv2d(c, ck, spec.stride, Padding::Same), cb));
        }
        c = reshape(c, Shape{plan.ctrl_flat});
        const Tensor& cw = cur.next();
        const Tensor& cbias = cur.next();
        logits = add(matmul(cw, c), cbias);
      }
      if (trace) {
        trace->logits = logits;
        trace->modulation = modulation_matrix(logits, plan.mod_out, plan.mod_in, spec.softmax_axis);
      }
      const Tensor d = relu(modulated_dense(z, W, b, logits, spec.softmax_axis));
      out = run_decoder(cur, spec, plan, d);
      break;
    }
    case Architecture::ConditionedAe: {
      const Tensor z = run_encoder(cur, spec, plan, x, trace);
      const Tensor& W = cur.next();
      const Tensor& b = cur.next();
      const Tensor d = relu(add(matmul(W, concat(z, *phi)), b));
      out = run_decoder(cur, spec, plan, d);
      break;
    }
  }
  if (cur.i != params.size()) {
    throw ContractError("parameter list is longer than the model plan: consumed " +
                        itos(static_cast<std::int64_t>(cur.i)) + " of " +
                        itos(static_cast<std::int64_t>(params.size())));
  }
  return out;
}

Tensor forward(const Model& model, const Tensor& x, const std::optional<Tensor>& phi,
               ForwardTrace* trace) {
  std::vector<Tensor> params;
  params.reserve(model.params.size());
  for (const NamedParam& p : model.params) params.push_back(p.value);
  return forward(model.spec, params, x, phi, trace);
}

}  // namespace hypernets
