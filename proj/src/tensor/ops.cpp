#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "aeae/autodiff.hpp"

namespace aeae {
namespace {

void require_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("variables from different tapes");
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + shape_to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w;     // input
  std::size_t o, kh, kw;      // kernel
  std::size_t oh, ow;         // output
  std::size_t stride, pad;
};

ConvGeometry conv_geometry(const Tensor& in, const Tensor& k, std::size_t stride,
                           std::size_t pad) {
  require_rank(in, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry g{in.dim(0), in.dim(1), in.dim(2), in.dim(3), k.dim(0), k.dim(2),
                 k.dim(3), 0, 0, stride, pad};
  if (k.dim(1) != g.c) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(k.dim(1)) +
                     " input channels, input has " + std::to_string(g.c));
  }
  if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_to_string(k.shape()) +
                     " larger than padded input " + shape_to_string(in.shape()));
  }
  g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
  g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
  return g;
}

// Output rows/cols [lo, hi) whose receptive tap at offset `tap` falls inside [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t tap, std::size_t extent,
                                                std::size_t out_extent, std::size_t stride,
                                                std::size_t pad) {
  // Need 0 <= o*stride + tap - pad < extent.
  std::size_t lo = 0;
  if (tap < pad) lo = (pad - tap + stride - 1) / stride;
  if (extent + pad <= tap) return {0, 0};
  std::size_t hi = (extent + pad - tap - 1) / stride + 1;
  hi = std::min(hi, out_extent);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

// Visits every (output index, input index, kernel index) triple of a conv.
template <typename F>
void for_each_tap(const ConvGeometry& g, F&& f) {
  for (std::size_t n = 0; n < g.n; ++n) {
    for (std::size_t o = 0; o < g.o; ++o) {
      for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
          auto [r0, r1] = valid_range(ki, g.h, g.oh, g.stride, g.pad);
          for (std::size_t kj = 0; kj < g.kw; ++kj) {
            auto [c0, c1] = valid_range(kj, g.w, g.ow, g.stride, g.pad);
            const std::size_t kidx = ((o * g.c + c) * g.kh + ki) * g.kw + kj;
            for (std::size_t r = r0; r < r1; ++r) {
              const std::size_t ir = r * g.stride + ki - g.pad;
              const std::size_t out_row = ((n * g.o + o) * g.oh + r) * g.ow;
              const std::size_t in_row = ((n * g.c + c) * g.h + ir) * g.w;
              f(out_row, in_row, kidx, c0, c1, kj);
            }
          }
        }
      }
    }
  }
}

}  // namespace

namespace ops {

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
  require_same_tape(input, kernel);
  const Tensor& x = input.value();
  const Tensor& k = kernel.value();
  const ConvGeometry g = conv_geometry(x, k, stride, padding);
  Tensor out(Shape{g.n, g.o, g.oh, g.ow}, 0.0);
  {
    const double* xp = x.data().data();
    const double* kp = k.data().data();
    double* yp = out.data().data();
    for_each_tap(g, [&](std::size_t out_row, std::size_t in_row, std::size_t kidx,
                        std::size_t c0, std::size_t c1, std::size_t kj) {
      const double kv = kp[kidx];
      double* y = yp + out_row;
      const double* xr = xp + in_row;
      for (std::size_t col = c0; col < c1; ++col) {
        y[col] += kv * xr[col * g.stride + kj - g.pad];
      }
    });
  }
  const std::size_t in_id = input.id(), k_id = kernel.id();
  return input.tape().record(
      std::move(out), {in_id, k_id}, [g, in_id, k_id](Tape& tape, std::size_t self) {
        const double* dy = tape.grad_ref(self).data().data();
        if (tape.requires_grad(in_id)) {
          const double* kp = tape.value(k_id).data().data();
          double* dx = tape.accumulate(in_id).data().data();
          for_each_tap(g, [&](std::size_t out_row, std::size_t in_row, std::size_t kidx,
                              std::size_t c0, std::size_t c1, std::size_t kj) {
            const double kv = kp[kidx];
            const double* d = dy + out_row;
            double* xr = dx + in_row;
            for (std::size_t col = c0; col < c1; ++col) {
              xr[col * g.stride + kj - g.pad] += kv * d[col];
            }
          });
        }
        if (tape.requires_grad(k_id)) {
          const double* xp = tape.value(in_id).data().data();
          double* dk = tape.accumulate(k_id).data().data();
          for_each_tap(g, [&](std::size_t out_row, std::size_t in_row, std::size_t kidx,
                              std::size_t c0, std::size_t c1, std::size_t kj) {
            const double* d = dy + out_row;
            const double* xr = xp + in_row;
            double acc = 0.0;
            for (std::size_t col = c0; col < c1; ++col) {
              acc += d[col] * xr[col * g.stride + kj - g.pad];
            }
            dk[kidx] += acc;
          });
        }
      }, "conv2d");
}

Var add_bias(Var input, Var bias) {
  require_same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& b = bias.value();
  if (x.rank() < 2 || b.rank() != 1 || b.dim(0) != x.dim(1)) {
    throw ShapeError("add_bias: bias " + shape_to_string(b.shape()) +
                     " does not match axis 1 of " + shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), inner = x.size() / (n * c);
  Tensor out = x;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j)
      for (std::size_t s = 0; s < inner; ++s) out[(i * c + j) * inner + s] += b[j];
  const std::size_t x_id = input.id(), b_id = bias.id();
  return input.tape().record(
      std::move(out), {x_id, b_id}, [=](Tape& tape, std::size_t self) {
        const Tensor& dy = tape.grad_ref(self);
        if (tape.requires_grad(x_id)) {
          Tensor& dx = tape.accumulate(x_id);
          for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
        if (tape.requires_grad(b_id)) {
          Tensor& db = tape.accumulate(b_id);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
              for (std::size_t s = 0; s < inner; ++s) db[j] += dy[(i * c + j) * inner + s];
        }
      }, "add_bias");
}

Var maxpool2d(Var input, std::size_t window) {
  const Tensor& x = input.value();
  require_rank(x, 4, "maxpool2d input");
  if (window == 0 || x.dim(2) % window != 0 || x.dim(3) % window != 0) {
    throw ShapeError("maxpool2d: spatial dims " + shape_to_string(x.shape()) +
                     " not divisible by window " + std::to_string(window));
  }
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        std::size_t best = (p * h + r * window) * w + c * window;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = (p * h + r * window + i) * w + c * window + j;
            if (x[idx] > x[best]) best = idx;  // strict: first maximum wins ties
          }
        }
        const std::size_t o = (p * oh + r) * ow + c;
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  const std::size_t x_id = input.id();
  return input.tape().record(std::move(out), {x_id},
                             [x_id, argmax = std::move(argmax)](Tape& tape, std::size_t self) {
                               const Tensor& dy = tape.grad_ref(self);
                               Tensor& dx = tape.accumulate(x_id);
                               for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
                             }, "maxpool2d");
}

Var upsample2d(Var input, std::size_t factor) {
  if (factor < 1) throw std::invalid_argument("upsample2d: factor must be >= 1");
  const Tensor& x = input.value();
  require_rank(x, 4, "upsample2d input");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h * factor, ow = w * factor;
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow});
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t c = 0; c < ow; ++c)
        out[(p * oh + r) * ow + c] = x[(p * h + r / factor) * w + c / factor];
  const std::size_t x_id = input.id();
  return input.tape().record(std::move(out), {x_id}, [=](Tape& tape, std::size_t self) {
    const Tensor& dy = tape.grad_ref(self);
    Tensor& dx = tape.accumulate(x_id);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c)
          dx[(p * h + r / factor) * w + c / factor] += dy[(p * oh + r) * ow + c];
  }, "upsample2d");
}

Var dense(Var input, Var weight, Var bias) {
  require_same_tape(input, weight);
  require_same_tape(input, bias);
  const Tensor& x = input.value();
  const Tensor& wt = weight.value();
  const Tensor& b = bias.value();
  require_rank(x, 2, "dense input");
  require_rank(wt, 2, "dense weight");
  const std::size_t n = x.dim(0), in = x.dim(1), out_f = wt.dim(0);
  if (wt.dim(1) != in || b.rank() != 1 || b.dim(0) != out_f) {
    throw ShapeError("dense: input " + shape_to_string(x.shape()) + ", weight " +
                     shape_to_string(wt.shape()) + ", bias " + shape_to_string(b.shape()));
  }
  Tensor out(Shape{n, out_f});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out_f; ++o) {
      double acc = b[o];
      for (std::size_t j = 0; j < in; ++j) acc += wt[o * in + j] * x[i * in + j];
      out[i * out_f + o] = acc;
    }
  }
  const std::size_t x_id = input.id(), w_id = weight.id(), b_id = bias.id();
  return input.tape().record(std::move(out), {x_id, w_id, b_id}, [=](Tape& tape,
                                                                     std::size_t self) {
    const Tensor& dy = tape.grad_ref(self);
    if (tape.requires_grad(x_id)) {
      const Tensor& wv = tape.value(w_id);
      Tensor& dx = tape.accumulate(x_id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_f; ++o)
          for (std::size_t j = 0; j < in; ++j) dx[i * in + j] += wv[o * in + j] * dy[i * out_f + o];
    }
    if (tape.requires_grad(w_id)) {
      const Tensor& xv = tape.value(x_id);
      Tensor& dw = tape.accumulate(w_id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_f; ++o)
          for (std::size_t j = 0; j < in; ++j) dw[o * in + j] += dy[i * out_f + o] * xv[i * in + j];
    }
    if (tape.requires_grad(b_id)) {
      Tensor& db = tape.accumulate(b_id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t o = 0; o < out_f; ++o) db[o] += dy[i * out_f + o];
    }
  }, "dense");
}

namespace {

// Elementwise op whose derivative is a function of the output value.
template <typename Fwd, typename DerivFromOut>
Var unary_by_output(Var x, const char* op, Fwd fwd, DerivFromOut deriv) {
  Tensor out = x.value();
  for (double& v : out.values()) v = fwd(v);
  const std::size_t x_id = x.id();
  return x.tape().record(std::move(out), {x_id}, [x_id, deriv](Tape& tape, std::size_t self) {
    const Tensor& y = tape.value(self);
    const Tensor& dy = tape.grad_ref(self);
    Tensor& dx = tape.accumulate(x_id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * deriv(y[i]);
  }, op);
}

}  // namespace

Var relu(Var x) {
  return unary_by_output(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double y) { return y > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary_by_output(
      x, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary_by_output(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const std::size_t x_id = x.id();
  return x.tape().record(std::move(out), {x_id}, [x_id](Tape& tape, std::size_t self) {
    const Tensor& dy = tape.grad_ref(self);
    Tensor& dx = tape.accumulate(x_id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  }, "reshape");
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const std::size_t a_id = a.id(), b_id = b.id();
  return a.tape().record(std::move(out), {a_id, b_id}, [=](Tape& tape, std::size_t self) {
    const Tensor& dy = tape.grad_ref(self);
    for (std::size_t id : {a_id, b_id}) {
      if (!tape.requires_grad(id)) continue;
      Tensor& d = tape.accumulate(id);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  }, "add");
}

Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var scale(Var x, double factor) {
  Tensor out = x.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t x_id = x.id();
  return x.tape().record(std::move(out), {x_id}, [=](Tape& tape, std::size_t self) {
    const Tensor& dy = tape.grad_ref(self);
    Tensor& dx = tape.accumulate(x_id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
  }, "scale");
}

Var add_scalar(Var x, double offset) {
  Tensor out = x.value();
  for (double& v : out.values()) v += offset;
  const std::size_t x_id = x.id();
  return x.tape().record(std::move(out), {x_id}, [=](Tape& tape, std::size_t self) {
    const Tensor& dy = tape.grad_ref(self);
    Tensor& dx = tape.accumulate(x_id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  }, "add_scalar");
}

Var sum(Var x) {
  double total = 0.0;
  for (double v : x.value().values()) total += v;
  const std::size_t x_id = x.id();
  return x.tape().record(Tensor::scalar(total), {x_id}, [=](Tape& tape, std::size_t self) {
    const double g = tape.grad_ref(self)[0];
    Tensor& dx = tape.accumulate(x_id);
    for (double& v : dx.values()) v += g;
  }, "sum");
}

Var softmax(Var logits) {
  Tensor out = softmax_rows(logits.value());
  const std::size_t x_id = logits.id();
  const std::size_t k = out.shape().back();
  return logits.tape().record(std::move(out), {x_id}, [=](Tape& tape, std::size_t self) {
    const Tensor& y = tape.value(self);
    const Tensor& dy = tape.grad_ref(self);
    Tensor& dx = tape.accumulate(x_id);
    for (std::size_t row = 0; row < y.size() / k; ++row) {
      double dot = 0.0;
      for (std::size_t i = 0; i < k; ++i) dot += y[row * k + i] * dy[row * k + i];
      for (std::size_t i = 0; i < k; ++i)
        dx[row * k + i] += y[row * k + i] * (dy[row * k + i] - dot);
    }
  }, "softmax");
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (z.rank() < 1 || z.rank() > 2) {
    throw ShapeError("cross_entropy: logits must be [k] or [N, k], got " +
                     shape_to_string(z.shape()));
  }
  const std::size_t k = z.shape().back();
  const std::size_t rows = z.size() / k;
  if (labels.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(rows) + " rows but " +
                     std::to_string(labels.size()) + " labels");
  }
  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (labels[r] >= k) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[r]) +
                              " outside " + std::to_string(k) + " classes");
    }
    // log-sum-exp form keeps large margins finite
    const double* row = z.data().data() + r * k;
    const double m = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += std::exp(row[i] - m);
    loss += (m + std::log(s)) - row[labels[r]];
  }
  loss /= static_cast<double>(rows);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  const std::size_t x_id = logits.id();
  return logits.tape().record(
      Tensor::scalar(loss), {x_id},
      [x_id, k, rows, lab = std::move(lab), probs = std::move(probs)](Tape& tape,
                                                                      std::size_t self) {
        const double g = tape.grad_ref(self)[0] / static_cast<double>(rows);
        Tensor& dx = tape.accumulate(x_id);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < k; ++i)
            dx[r * k + i] += g * (probs[r * k + i] - (i == lab[r] ? 1.0 : 0.0));
      }, "cross_entropy");
}

Var cross_entropy(Var logits, std::size_t label) {
  const std::size_t labels[] = {label};
  return cross_entropy(logits, labels);
}

Var mse(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mse");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const double count = static_cast<double>(av.size());
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = av[i] - bv[i];
    total += d * d;
  }
  const std::size_t a_id = a.id(), b_id = b.id();
  return a.tape().record(Tensor::scalar(total / count), {a_id, b_id},
                         [=](Tape& tape, std::size_t self) {
                           const double g = 2.0 * tape.grad_ref(self)[0] / count;
                           const Tensor& x = tape.value(a_id);
                           const Tensor& y = tape.value(b_id);
                           if (tape.requires_grad(a_id)) {
                             Tensor& d = tape.accumulate(a_id);
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (x[i] - y[i]);
                           }
                           if (tape.requires_grad(b_id)) {
                             Tensor& d = tape.accumulate(b_id);
                             for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g * (x[i] - y[i]);
                           }
                         }, "mse");
}

}  // namespace ops

Tensor softmax_rows(const Tensor& logits) {
  if (logits.empty()) throw ShapeError("softmax of empty tensor");
  const std::size_t k = logits.shape().back();
  Tensor out = logits;
  for (std::size_t row = 0; row < out.size() / k; ++row) {
    double* z = out.data().data() + row * k;
    const double m = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      z[i] = std::exp(z[i] - m);
      s += z[i];
    }
    for (std::size_t i = 0; i < k; ++i) z[i] /= s;
  }
  return out;
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step must be positive");
  Tensor grad(x.shape(), 0.0);
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace aeae
