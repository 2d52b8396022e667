#pragma once

#include "hypernets/tape.hpp"
#include "hypernets/tensor.hpp"

namespace hypernets {

// Differentiable operations over Tensor. Each op computes its forward value
// eagerly; a node is recorded iff at least one operand is tape-bound.
// Operands bound to two different tapes are a contract violation.

enum class Activation { Relu, Tanh, Sigmoid };
enum class Padding { Same, Valid };

const char* activation_name(Activation kind);

// A[m x k] * B[k x n] -> [m x n], or A[m x k] * B[k] -> [m].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise product; shapes must match.
Tensor hadamard(const Tensor& a, const Tensor& b);

// Elementwise sum; shapes must match.
Tensor add(const Tensor& a, const Tensor& b);

// x * c for a plain scalar c.
Tensor scale(const Tensor& x, double c);

// 1-d concatenation.
Tensor concat(const Tensor& a, const Tensor& b);

// Same data, new shape; numel must be preserved.
Tensor reshape(const Tensor& x, Shape shape);

// Sum of all entries -> scalar.
Tensor sum(const Tensor& x);

// Numerically stable softmax along `axis`; every slice sums to 1.
Tensor softmax(const Tensor& x, int axis);

// Elementwise nonlinearity.
Tensor apply_activation(const Tensor& x, Activation kind);

// Cross-correlation of input[C x H x W] with kernels[F x C x kh x kw].
// Same padding pads with zeros symmetrically, extra pixel on the high side;
// output side is ceil(side / stride). Valid padding requires the kernel to
// fit inside the input.
Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, Padding padding);

// Adjoint of conv2d with same padding and the given stride:
// maps input[F x H x W] to [C x stride*H x stride*W] so that
// <conv2d(x, k), y> == <x, conv2d_transpose(y, k)>.
Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, int stride);

// x[F x H x W] + b[F] broadcast over each channel plane.
Tensor channel_bias(const Tensor& x, const Tensor& b);

// Mean of squared elementwise differences -> scalar.
Tensor mse_loss(const Tensor& pred, const Tensor& target);

}  // namespace hypernets
