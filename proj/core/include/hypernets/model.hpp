#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hypernets/ops.hpp"
#include "hypernets/tensor.hpp"

namespace hypernets {

// Four architectures share one forward contract: image in, image of the same
// shape out. The two hypernet variants route a control vector through a small
// "control branch" whose output logits, squashed by a softmax, gate the
// weights of one designated dense layer multiplicatively.

enum class Architecture {
  SimpleHypernet,        // flatten -> modulated dense -> sigmoid
  DeepHypernet,          // conv encoder -> latent -> modulated dense -> deconv decoder
  ConditionedAe,         // same encoder/decoder, control concatenated onto the latent
  CompensationHypernet,  // deep core whose control branch reads the input image itself
};

// Axis along which modulation logits are normalized. Per-row means each
// output unit's incoming weights compete for a total mass of 1.
enum class SoftmaxAxis { PerRow, PerColumn, Flat };

// Which side of the parameter partition a tensor belongs to: the control
// branch (omega) or the core network; the core's modulated matrix is tagged
// separately so it can be identified without name parsing.
enum class ParamTag { ModulatedCore, ControlBranch, Plain };

const char* architecture_name(Architecture a);
const char* softmax_axis_name(SoftmaxAxis a);
const char* param_tag_name(ParamTag t);
Architecture parse_architecture(const std::string& s);
SoftmaxAxis parse_softmax_axis(const std::string& s);

struct ModelSpec {
  Architecture architecture = Architecture::DeepHypernet;
  int image_side = 16;
  // Length of the control vector phi: 2 for rotation (sin, cos), 6 for
  // affine coefficients, 0 for the self-conditioned compensation model.
  int control_dim = 2;
  // Latent width L of the encoder's dense layer (all but simple_hypernet).
  int latent = 64;
  // Encoder conv channel counts; the decoder mirrors them in reverse.
  std::vector<int> enc_channels = {8, 16};
  int kernel = 3;
  int stride = 2;
  // Hidden widths of the dense control branch (simple/deep hypernet).
  std::vector<int> control_hidden = {};
  // Conv channels of the image-reading control branch (compensation only).
  std::vector<int> ctrl_conv_channels = {8, 16};
  SoftmaxAxis softmax_axis = SoftmaxAxis::PerRow;
  std::uint64_t init_seed = 1;
};

// Planned parameter tensor: creation order in this vector is the canonical
// parameter order used by initialization, serialization, and forward().
struct ParamPlan {
  std::string name;
  ParamTag tag;
  Shape shape;
  // Half-width of the uniform init range; 0 means initialize to zeros.
  double init_scale = 0.0;
};

// Validates the spec and lays out every parameter tensor in canonical order.
// Throws SpecError naming the offending stage if shapes cannot chain.
std::vector<ParamPlan> param_plan(const ModelSpec& spec);

// Total number of scalar parameters implied by the spec.
std::int64_t param_count(const ModelSpec& spec);

struct NamedParam {
  std::string name;
  ParamTag tag;
  Tensor value;
};

struct Model {
  ModelSpec spec;
  std::vector<NamedParam> params;
};

// Builds a model with freshly initialized parameters. Weights are uniform in
// [-s, s] with s = sqrt(6 / (fan_in + fan_out)); biases are zero; the control
// branch's final layer shrinks s by 10x so the initial modulation is nearly
// uniform. Same spec and seed give bit-identical parameters.
Model build_model(const ModelSpec& spec);

// One dense layer whose weight matrix is gated by softmaxed control logits.
struct HyperDenseLayer {
  Tensor W;  // [out x in] core weights, the matrix being modulated
  Tensor b;  // [out], never modulated
  // Dense chain mapping the control vector to out*in logits; hidden layers
  // use tanh, the final layer is linear.
  std::vector<Tensor> ctrl_weights;
  std::vector<Tensor> ctrl_biases;
  SoftmaxAxis softmax_axis = SoftmaxAxis::PerRow;
};

// Gates W with softmaxed logits and applies the result: returns
// (softmax(logits) (*) W) . x + b, where logits is a flat vector of length
// out*in produced by any upstream network. Differentiable end to end.
Tensor modulated_dense(const Tensor& x, const Tensor& W, const Tensor& b, const Tensor& logits,
                       SoftmaxAxis axis);

// The softmax-normalized modulation matrix [out x in] for given logits.
Tensor modulation_matrix(const Tensor& logits, int out, int in, SoftmaxAxis axis);

// Runs the layer's own dense control branch on `control`, then the gated
// product. Throws DimensionError if `control` does not match the branch input.
Tensor hyper_dense_forward(const Tensor& x, const HyperDenseLayer& layer, const Tensor& control);

// Intermediate activations exposed for inspection and tests.
struct ForwardTrace {
  // softmax-normalized modulation matrix [out x in]; empty for conditioned_ae.
  Tensor modulation;
  // raw control logits before the softmax; empty for conditioned_ae.
  Tensor logits;
  // activations from input up to (and including) the latent code,
  // i.e. everything upstream of the modulated / decoder dense layer.
  std::vector<Tensor> encoder;
};

// Forward pass. `x` is [1 x side x side]; returns a tensor of the same
// shape. `phi` must be present iff spec.control_dim > 0 (contract error
// otherwise); its length must equal control_dim. `params` are the model's
// parameters in canonical order — pass tape-bound leaves to differentiate.
Tensor forward(const ModelSpec& spec, const std::vector<Tensor>& params, const Tensor& x,
               const std::optional<Tensor>& phi, ForwardTrace* trace = nullptr);

// Convenience overload over the model's stored (constant) parameters.
Tensor forward(const Model& model, const Tensor& x, const std::optional<Tensor>& phi,
               ForwardTrace* trace = nullptr);

}  // namespace hypernets
