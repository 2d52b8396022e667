#include "hypernets/ops.hpp"

#include <algorithm>
#include <cmath>

#include "hypernets/errors.hpp"

namespace hypernets {

namespace {

Tape* joint_tape(std::initializer_list<const Tensor*> operands) {
  Tape* tape = nullptr;
  for (const Tensor* t : operands) {
    if (!t->recorded()) continue;
    if (tape && tape != t->tape()) {
      throw ContractError("operands are recorded on different tapes");
    }
    tape = t->tape();
  }
  return tape;
}

int parent_id(const Tensor& t) { return t.recorded() ? t.node() : -1; }

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// ---------------------------------------------------------------------------
// conv geometry shared by conv2d / conv2d_transpose and their gradients

struct ConvGeom {
  int c, h, w;        // input planes
  int f, kh, kw;      // kernel bank
  int stride;
  int out_h, out_w;
  int pad_h, pad_w;   // low-side padding; odd totals put the extra on the high side
};

ConvGeom conv_geom(const Shape& x, const Shape& k, int stride, Padding padding) {
  if (x.size() != 3) throw DimensionError("conv2d: input must be C x H x W, got " + shape_str(x));
  if (k.size() != 4) throw DimensionError("conv2d: kernels must be F x C x kh x kw, got " + shape_str(k));
  if (stride < 1) throw ContractError("conv2d: stride must be >= 1");
  ConvGeom g;
  g.c = x[0];
  g.h = x[1];
  g.w = x[2];
  g.f = k[0];
  g.kh = k[2];
  g.kw = k[3];
  g.stride = stride;
  if (k[1] != g.c) {
    throw DimensionError("conv2d: kernel channels " + shape_str(k) + " do not match input " + shape_str(x));
  }
  if (padding == Padding::Same) {
    g.out_h = (g.h + stride - 1) / stride;
    g.out_w = (g.w + stride - 1) / stride;
    g.pad_h = std::max((g.out_h - 1) * stride + g.kh - g.h, 0) / 2;
    g.pad_w = std::max((g.out_w - 1) * stride + g.kw - g.w, 0) / 2;
  } else {
    if (g.kh > g.h || g.kw > g.w) {
      throw DimensionError("conv2d: kernel " + shape_str(k) + " larger than input " + shape_str(x));
    }
    g.out_h = (g.h - g.kh) / stride + 1;
    g.out_w = (g.w - g.kw) / stride + 1;
    g.pad_h = 0;
    g.pad_w = 0;
  }
  return g;
}

std::vector<double> conv_forward(const double* x, const double* k, const ConvGeom& g) {
  std::vector<double> y(static_cast<std::size_t>(g.f) * g.out_h * g.out_w, 0.0);
  for (int f = 0; f < g.f; ++f) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        double acc = 0.0;
        for (int c = 0; c < g.c; ++c) {
          const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
          const double* kc = k + (static_cast<std::size_t>(f) * g.c + c) * g.kh * g.kw;
          for (int i = 0; i < g.kh; ++i) {
            const int ih = oh * g.stride - g.pad_h + i;
            if (ih < 0 || ih >= g.h) continue;
            for (int j = 0; j < g.kw; ++j) {
              const int iw = ow * g.stride - g.pad_w + j;
              if (iw < 0 || iw >= g.w) continue;
              acc += xc[ih * g.w + iw] * kc[i * g.kw + j];
            }
          }
        }
        y[(static_cast<std::size_t>(f) * g.out_h + oh) * g.out_w + ow] = acc;
      }
    }
  }
  return y;
}

std::vector<double> conv_grad_input(const double* gy, const double* k, const ConvGeom& g) {
  std::vector<double> gx(static_cast<std::size_t>(g.c) * g.h * g.w, 0.0);
  for (int f = 0; f < g.f; ++f) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        const double gv = gy[(static_cast<std::size_t>(f) * g.out_h + oh) * g.out_w + ow];
        if (gv == 0.0) continue;
        for (int c = 0; c < g.c; ++c) {
          double* xc = gx.data() + static_cast<std::size_t>(c) * g.h * g.w;
          const double* kc = k + (static_cast<std::size_t>(f) * g.c + c) * g.kh * g.kw;
          for (int i = 0; i < g.kh; ++i) {
            const int ih = oh * g.stride - g.pad_h + i;
            if (ih < 0 || ih >= g.h) continue;
            for (int j = 0; j < g.kw; ++j) {
              const int iw = ow * g.stride - g.pad_w + j;
              if (iw < 0 || iw >= g.w) continue;
              xc[ih * g.w + iw] += gv * kc[i * g.kw + j];
            }
          }
        }
      }
    }
  }
  return gx;
}

std::vector<double> conv_grad_kernel(const double* gy, const double* x, const ConvGeom& g) {
  std::vector<double> gk(static_cast<std::size_t>(g.f) * g.c * g.kh * g.kw, 0.0);
  for (int f = 0; f < g.f; ++f) {
    for (int oh = 0; oh < g.out_h; ++oh) {
      for (int ow = 0; ow < g.out_w; ++ow) {
        const double gv = gy[(static_cast<std::size_t>(f) * g.out_h + oh) * g.out_w + ow];
        if (gv == 0.0) continue;
        for (int c = 0; c < g.c; ++c) {
          const double* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
          double* kc = gk.data() + (static_cast<std::size_t>(f) * g.c + c) * g.kh * g.kw;
          for (int i = 0; i < g.kh; ++i) {
            const int ih = oh * g.stride - g.pad_h + i;
            if (ih < 0 || ih >= g.h) continue;
            for (int j = 0; j < g.kw; ++j) {
              const int iw = ow * g.stride - g.pad_w + j;
              if (iw < 0 || iw >= g.w) continue;
              kc[i * g.kw + j] += gv * xc[ih * g.w + iw];
            }
          }
        }
      }
    }
  }
  return gk;
}

}  // namespace

const char* activation_name(Activation kind) {
  switch (kind) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "?";
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || (b.ndim() != 2 && b.ndim() != 1)) {
    throw DimensionError("matmul: need [m x k] * [k x n] or [m x k] * [k], got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1);
  const bool vec = b.ndim() == 1;
  const int n = vec ? 1 : b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }

  std::vector<double> y(static_cast<std::size_t>(m) * n, 0.0);
  {
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < m; ++i) {
      double* yr = y.data() + static_cast<std::size_t>(i) * n;
      const double* ar = pa + static_cast<std::size_t>(i) * k;
      for (int p = 0; p < k; ++p) {
        const double av = ar[p];
        if (av == 0.0) continue;
        const double* br = pb + static_cast<std::size_t>(p) * n;
        for (int j = 0; j < n; ++j) yr[j] += av * br[j];
      }
    }
  }
  Tensor out(vec ? Shape{m} : Shape{m, n}, std::move(y));

  Tape* tape = joint_tape({&a, &b});
  if (!tape) return out;
  const int ia = parent_id(a), ib = parent_id(b);
  Tensor av = a.detached(), bv = b.detached();
  return tape->record(
      out, {ia, ib},
      [ia, ib, av, bv, m, k, n](const std::vector<double>& gy, Tape& t) {
        if (auto* ga = t.grad_buffer(ia)) {
          // dA = dZ * B^T
          const double* pb = bv.data();
          for (int i = 0; i < m; ++i) {
            const double* gr = gy.data() + static_cast<std::size_t>(i) * n;
            double* gar = ga->data() + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
              const double* br = pb + static_cast<std::size_t>(p) * n;
              double acc = 0.0;
              for (int j = 0; j < n; ++j) acc += gr[j] * br[j];
              gar[p] += acc;
            }
          }
        }
        if (auto* gb = t.grad_buffer(ib)) {
          // dB = A^T * dZ
          const double* pa = av.data();
          for (int i = 0; i < m; ++i) {
            const double* ar = pa + static_cast<std::size_t>(i) * k;
            const double* gr = gy.data() + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
              const double a_ip = ar[p];
              if (a_ip == 0.0) continue;
              double* gbr = gb->data() + static_cast<std::size_t>(p) * n;
              for (int j = 0; j < n; ++j) gbr[j] += a_ip * gr[j];
            }
          }
        }
      },
      "matmul");
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) * b.at(i);
  Tensor out(a.shape(), std::move(y));

  Tape* tape = joint_tape({&a, &b});
  if (!tape) return out;
  const int ia = parent_id(a), ib = parent_id(b);
  Tensor av = a.detached(), bv = b.detached();
  return tape->record(
      out, {ia, ib},
      [ia, ib, av, bv](const std::vector<double>& gy, Tape& t) {
        if (auto* ga = t.grad_buffer(ia)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i] * bv.at(i);
        }
        if (auto* gb = t.grad_buffer(ib)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i] * av.at(i);
        }
      },
      "hadamard");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> y(a.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.at(i) + b.at(i);
  Tensor out(a.shape(), std::move(y));

  Tape* tape = joint_tape({&a, &b});
  if (!tape) return out;
  const int ia = parent_id(a), ib = parent_id(b);
  return tape->record(
      out, {ia, ib},
      [ia, ib](const std::vector<double>& gy, Tape& t) {
        if (auto* ga = t.grad_buffer(ia)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
        }
        if (auto* gb = t.grad_buffer(ib)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i];
        }
      },
      "add");
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.at(i) * c;
  Tensor out(x.shape(), std::move(y));
  Tape* tape = joint_tape({&x});
  if (!tape) return out;
  const int ix = parent_id(x);
  return tape->record(
      out, {ix},
      [ix, c](const std::vector<double>& gy, Tape& t) {
        if (auto* gx = t.grad_buffer(ix)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * c;
        }
      },
      "scale");
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1) {
    throw DimensionError("concat: expects two vectors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  std::vector<double> y;
  y.reserve(a.size() + b.size());
  y.insert(y.end(), a.values().begin(), a.values().end());
  y.insert(y.end(), b.values().begin(), b.values().end());
  const int n = static_cast<int>(y.size());
  Tensor out(Shape{n}, std::move(y));

  Tape* tape = joint_tape({&a, &b});
  if (!tape) return out;
  const int ia = parent_id(a), ib = parent_id(b);
  const std::size_t na = a.size();
  return tape->record(
      out, {ia, ib},
      [ia, ib, na](const std::vector<double>& gy, Tape& t) {
        if (auto* ga = t.grad_buffer(ia)) {
          for (std::size_t i = 0; i < na; ++i) (*ga)[i] += gy[i];
        }
        if (auto* gb = t.grad_buffer(ib)) {
          for (std::size_t i = na; i < gy.size(); ++i) (*gb)[i - na] += gy[i];
        }
      },
      "concat");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.values()));
  Tape* tape = joint_tape({&x});
  if (!tape) return out;
  const int ix = parent_id(x);
  return tape->record(
      out, {ix},
      [ix](const std::vector<double>& gy, Tape& t) {
        if (auto* gx = t.grad_buffer(ix)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
        }
      },
      "reshape");
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
  Tensor out = Tensor::scalar(acc);
  Tape* tape = joint_tape({&x});
  if (!tape) return out;
  const int ix = parent_id(x);
  const std::size_t n = x.size();
  return tape->record(
      out, {ix},
      [ix, n](const std::vector<double>& gy, Tape& t) {
        if (auto* gx = t.grad_buffer(ix)) {
          for (std::size_t i = 0; i < n; ++i) (*gx)[i] += gy[0];
        }
      },
      "sum");
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis < 0 || axis >= x.ndim()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(x.shape()));
  }
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(x.dim(i));
  for (int i = axis + 1; i < x.ndim(); ++i) inner *= static_cast<std::size_t>(x.dim(i));
  const std::size_t len = static_cast<std::size_t>(x.dim(axis));

  std::vector<double> y(x.size());
  const double* px = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = px[base];
      for (std::size_t l = 1; l < len; ++l) mx = std::max(mx, px[base + l * inner]);
      double denom = 0.0;
      for (std::size_t l = 0; l < len; ++l) {
        const double e = std::exp(px[base + l * inner] - mx);
        y[base + l * inner] = e;
        denom += e;
      }
      for (std::size_t l = 0; l < len; ++l) y[base + l * inner] /= denom;
    }
  }
  Tensor out(x.shape(), std::move(y));

  Tape* tape = joint_tape({&x});
  if (!tape) return out;
  const int ix = parent_id(x);
  Tensor yv = out.detached();
  return tape->record(
      out, {ix},
      [ix, yv, outer, inner, len](const std::vector<double>& gy, Tape& t) {
        auto* gx = t.grad_buffer(ix);
        if (!gx) return;
        // per slice: dx = y * (g - <g, y>)
        const double* py = yv.data();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double dot = 0.0;
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t idx = base + l * inner;
              dot += gy[idx] * py[idx];
            }
            for (std::size_t l = 0; l < len; ++l) {
              const std::size_t idx = base + l * inner;
              (*gx)[idx] += py[idx] * (gy[idx] - dot);
            }
          }
        }
      },
      "softmax");
}

Tensor apply_activation(const Tensor& x, Activation kind) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double v = x.at(i);
    switch (kind) {
      case Activation::Relu: y[i] = v > 0.0 ? v : 0.0; break;
      case Activation::Tanh: y[i] = std::tanh(v); break;
      case Activation::Sigmoid:
        y[i] = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        break;
    }
  }
  Tensor out(x.shape(), std::move(y));

  Tape* tape = joint_tape({&x});
  if (!tape) return out;
  const int ix = parent_id(x);
  Tensor xv = x.detached(), yv = out.detached();
  return tape->record(
      out, {ix},
      [ix, xv, yv, kind](const std::vector<double>& gy, Tape& t) {
        auto* gx = t.grad_buffer(ix);
        if (!gx) return;
        for (std::size_t i = 0; i < gy.size(); ++i) {
          double d = 0.0;
          switch (kind) {
            case Activation::Relu: d = xv.at(i) > 0.0 ? 1.0 : 0.0; break;
            case Activation::Tanh: d = 1.0 - yv.at(i) * yv.at(i); break;
            case Activation::Sigmoid: d = yv.at(i) * (1.0 - yv.at(i)); break;
          }
          (*gx)[i] += gy[i] * d;
        }
      },
      activation_name(kind));
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, int stride, Padding padding) {
  const ConvGeom g = conv_geom(input.shape(), kernels.shape(), stride, padding);
  Tensor out(Shape{g.f, g.out_h, g.out_w}, conv_forward(input.data(), kernels.data(), g));

  Tape* tape = joint_tape({&input, &kernels});
  if (!tape) return out;
  const int ix = parent_id(input), ik = parent_id(kernels);
  Tensor xv = input.detached(), kv = kernels.detached();
  return tape->record(
      out, {ix, ik},
      [ix, ik, xv, kv, g](const std::vector<double>& gy, Tape& t) {
        if (auto* gx = t.grad_buffer(ix)) {
          const std::vector<double> gi = conv_grad_input(gy.data(), kv.data(), g);
          for (std::size_t i = 0; i < gi.size(); ++i) (*gx)[i] += gi[i];
        }
        if (auto* gk = t.grad_buffer(ik)) {
          const std::vector<double> gg = conv_grad_kernel(gy.data(), xv.data(), g);
          for (std::size_t i = 0; i < gg.size(); ++i) (*gk)[i] += gg[i];
        }
      },
      "conv2d");
}

Tensor conv2d_transpose(const Tensor& input, const Tensor& kernels, int stride) {
  if (input.ndim() != 3) {
    throw DimensionError("conv2d_transpose: input must be F x H x W, got " + shape_str(input.shape()));
  }
  if (kernels.ndim() != 4) {
    throw DimensionError("conv2d_transpose: kernels must be F x C x kh x kw, got " +
                         shape_str(kernels.shape()));
  }
  if (kernels.dim(0) != input.dim(0)) {
    throw DimensionError("conv2d_transpose: kernel bank " + shape_str(kernels.shape()) +
                         " does not match input " + shape_str(input.shape()));
  }
  if (stride < 1) throw ContractError("conv2d_transpose: stride must be >= 1");

  // Adjoint of the same-padding conv that maps [C x sH x sW] -> [F x H x W].
  const Shape x_shape{kernels.dim(1), input.dim(1) * stride, input.dim(2) * stride};
  const ConvGeom g = conv_geom(x_shape, kernels.shape(), stride, Padding::Same);
  Tensor out(x_shape, conv_grad_input(input.data(), kernels.data(), g));

  Tape* tape = joint_tape({&input, &kernels});
  if (!tape) return out;
  const int iu = parent_id(input), ik = parent_id(kernels);
  Tensor uv = input.detached(), kv = kernels.detached();
  return tape->record(
      out, {iu, ik},
      [iu, ik, uv, kv, g](const std::vector<double>& gz, Tape& t) {
        if (auto* gu = t.grad_buffer(iu)) {
          const std::vector<double> gi = conv_forward(gz.data(), kv.data(), g);
          for (std::size_t i = 0; i < gi.size(); ++i) (*gu)[i] += gi[i];
        }
        if (auto* gk = t.grad_buffer(ik)) {
          const std::vector<double> gg = conv_grad_kernel(uv.data(), gz.data(), g);
          for (std::size_t i = 0; i < gg.size(); ++i) (*gk)[i] += gg[i];
        }
      },
      "conv2d_transpose");
}

Tensor channel_bias(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 3 || b.ndim() != 1 || b.dim(0) != x.dim(0)) {
    throw DimensionError("channel_bias: need [F x H x W] + [F], got " + shape_str(x.shape()) +
                         " and " + shape_str(b.shape()));
  }
  const std::size_t plane = static_cast<std::size_t>(x.dim(1)) * x.dim(2);
  std::vector<double> y(x.size());
  for (int f = 0; f < x.dim(0); ++f) {
    const double bias = b.at(static_cast<std::size_t>(f));
    for (std::size_t i = 0; i < plane; ++i) {
      y[f * plane + i] = x.at(f * plane + i) + bias;
    }
  }
  Tensor out(x.shape(), std::move(y));

  Tape* tape = joint_tape({&x, &b});
  if (!tape) return out;
  const int ix = parent_id(x), ib = parent_id(b);
  const int channels = x.dim(0);
  return tape->record(
      out, {ix, ib},
      [ix, ib, channels, plane](const std::vector<double>& gy, Tape& t) {
        if (auto* gx = t.grad_buffer(ix)) {
          for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
        }
        if (auto* gb = t.grad_buffer(ib)) {
          for (int f = 0; f < channels; ++f) {
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += gy[f * plane + i];
            (*gb)[static_cast<std::size_t>(f)] += acc;
          }
        }
      },
      "channel_bias");
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mse_loss");
  const std::size_t n = pred.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = pred.at(i) - target.at(i);
    acc += d * d;
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));

  Tape* tape = joint_tape({&pred, &target});
  if (!tape) return out;
  const int ip = parent_id(pred), it = parent_id(target);
  Tensor pv = pred.detached(), tv = target.detached();
  return tape->record(
      out, {ip, it},
      [ip, it, pv, tv, n](const std::vector<double>& gy, Tape& t) {
        const double g = gy[0] * 2.0 / static_cast<double>(n);
        if (auto* gp = t.grad_buffer(ip)) {
          for (std::size_t i = 0; i < n; ++i) (*gp)[i] += g * (pv.at(i) - tv.at(i));
        }
        if (auto* gt = t.grad_buffer(it)) {
          for (std::size_t i = 0; i < n; ++i) (*gt)[i] -= g * (pv.at(i) - tv.at(i));
        }
      },
      "mse_loss");
}

}  // namespace hypernets
