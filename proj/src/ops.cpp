#include "sake/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace sake {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
T log_sum_exp(std::span<const T> logits) {
  const T m = *std::max_element(logits.begin(), logits.end());
  T s = 0;
  for (T z : logits) s += std::exp(z - m);
  return m + std::log(s);
}

template <typename T>
std::vector<T> softmax(std::span<const T> logits) {
  if (logits.empty()) throw ContractViolation("softmax of an empty vector");
  const T m = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T s = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    s += out[i];
  }
  for (T& v : out) v /= s;
  return out;
}

namespace ops {
namespace {

template <typename T>
void require_same_shape(Tape<T>& tape, Var a, Var b, const char* op) {
  if (tape.value(a).shape() != tape.value(b).shape()) {
    throw ContractViolation(std::string(op) + ": shape mismatch " +
                            shape_string(tape.value(a).shape()) + " vs " +
                            shape_string(tape.value(b).shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ContractViolation(std::string(op) + ": expected rank " + std::to_string(rank) +
                            ", got " + shape_string(t.shape()));
  }
}

template <typename T>
void accumulate(Tape<T>& tape, Var target, const Tensor<T>& delta) {
  if (!tape.requires_grad(target)) return;
  Tensor<T>& g = tape.grad_buffer(target);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "add");
  Tensor<T> out = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return tape.record("add", std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const Tensor<T> g = t.grad_buffer(self);
    accumulate(t, a, g);
    accumulate(t, b, g);
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var a, Var b) {
  require_same_shape(tape, a, b, "mul");
  Tensor<T> out = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return tape.record("mul", std::move(out), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var a, T factor) {
  Tensor<T> out = tape.value(a);
  for (T& v : out.values()) v *= factor;
  return tape.record("scale", std::move(out), {a}, [a, factor](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var a) {
  T s = 0;
  for (T v : tape.value(a).values()) s += v;
  return tape.record("sum", Tensor<T>({1}, s), {a}, [a](Tape<T>& t, std::size_t self) {
    const T g = t.grad_buffer(self)[0];
    for (T& v : t.grad_buffer(a).values()) v += g;
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var a) {
  Tensor<T> out = tape.value(a);
  for (T& v : out.values()) v = v > T{0} ? v : T{0};
  return tape.record("relu", std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& x = t.value(a);
    Tensor<T>& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T{0}) ga[i] += g[i];
    }
  });
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var a) {
  Tensor<T> out = tape.value(a);
  for (T& v : out.values()) {
    v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  }
  auto y = std::make_shared<Tensor<T>>(out);
  return tape.record("sigmoid", std::move(out), {a}, [a, y](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*y)[i] * (T{1} - (*y)[i]);
  });
}

template <typename T>
Var softmax_rows(Tape<T>& tape, Var a) {
  const Tensor<T>& x = tape.value(a);
  require_rank(x, 2, "softmax_rows");
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < x.dim(0); ++r) {
    const auto p = softmax<T>(x.row(r));
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  auto y = std::make_shared<Tensor<T>>(out);
  return tape.record("softmax_rows", std::move(out), {a}, [a, y](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& ga = t.grad_buffer(a);
    const std::size_t k = y->dim(1);
    for (std::size_t r = 0; r < y->dim(0); ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * (*y)[r * k + j];
      for (std::size_t j = 0; j < k; ++j) {
        ga[r * k + j] += (*y)[r * k + j] * (g[r * k + j] - dot);
      }
    }
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const Tensor<T>& bv = tape.value(b);
  require_rank(xv, 2, "linear");
  require_rank(wv, 2, "linear");
  const std::size_t n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (wv.dim(1) != in || bv.size() != out_dim) {
    throw ContractViolation("linear: input " + shape_string(xv.shape()) + ", weight " +
                            shape_string(wv.shape()) + ", bias " + shape_string(bv.shape()));
  }
  Tensor<T> out({n, out_dim});
  MatMap<T> y(out.data(), n, out_dim);
  y.noalias() = ConstMatMap<T>(xv.data(), n, in) * ConstMatMap<T>(wv.data(), out_dim, in).transpose();
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < out_dim; ++c) y(r, c) += bv[c];
  }
  return tape.record("linear", std::move(out), {x, w, b}, [x, w, b, n, in, out_dim](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    ConstMatMap<T> gy(g.data(), n, out_dim);
    if (t.requires_grad(x)) {
      MatMap<T> gx(t.grad_buffer(x).data(), n, in);
      gx.noalias() += gy * ConstMatMap<T>(t.value(w).data(), out_dim, in);
    }
    if (t.requires_grad(w)) {
      MatMap<T> gw(t.grad_buffer(w).data(), out_dim, in);
      gw.noalias() += gy.transpose() * ConstMatMap<T>(t.value(x).data(), n, in);
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < out_dim; ++c) gb[c] += gy(r, c);
      }
    }
  });
}

template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, std::size_t stride, std::size_t pad) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  require_rank(xv, 4, "conv2d");
  require_rank(wv, 4, "conv2d");
  const std::size_t n = xv.dim(0), ch = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  const std::size_t kout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != ch || wv.dim(3) != k || tape.value(b).size() != kout) {
    throw ContractViolation("conv2d: input " + shape_string(xv.shape()) + ", kernel " +
                            shape_string(wv.shape()));
  }
  if (stride == 0 || h + 2 * pad < k || wd + 2 * pad < k) {
    throw ContractViolation("conv2d: kernel does not fit input " + shape_string(xv.shape()));
  }
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
  const std::size_t hw = ho * wo, depth = ch * k * k, cols_w = n * hw;

  // im2col: [C*k*k, N*Ho*Wo]
  auto cols = std::make_shared<std::vector<T>>(depth * cols_w, T{0});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < ch; ++c) {
      const T* plane = xv.data() + (s * ch + c) * h * wd;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          T* dst = cols->data() + ((c * k + ky) * k + kx) * cols_w + s * hw;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
              if (ix < 0 || ix >= static_cast<long>(wd)) continue;
              dst[oy * wo + ox] = plane[iy * wd + ix];
            }
          }
        }
      }
    }
  }

  RowMat<T> prod = ConstMatMap<T>(wv.data(), kout, depth) * ConstMatMap<T>(cols->data(), depth, cols_w);
  Tensor<T> out({n, kout, ho, wo});
  const Tensor<T>& bv = tape.value(b);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < kout; ++o) {
      T* dst = out.data() + (s * kout + o) * hw;
      for (std::size_t p = 0; p < hw; ++p) dst[p] = prod(o, s * hw + p) + bv[o];
    }
  }

  return tape.record("conv2d", std::move(out), {x, w, b},
                     [=](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    RowMat<T> gmat(kout, cols_w);
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t o = 0; o < kout; ++o) {
        const T* src = g.data() + (s * kout + o) * hw;
        for (std::size_t p = 0; p < hw; ++p) gmat(o, s * hw + p) = src[p];
      }
    }
    if (t.requires_grad(w)) {
      MatMap<T> gw(t.grad_buffer(w).data(), kout, depth);
      gw.noalias() += gmat * ConstMatMap<T>(cols->data(), depth, cols_w).transpose();
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::size_t o = 0; o < kout; ++o) gb[o] += gmat.row(o).sum();
    }
    if (t.requires_grad(x)) {
      RowMat<T> gcols = ConstMatMap<T>(t.value(w).data(), kout, depth).transpose() * gmat;
      Tensor<T>& gx = t.grad_buffer(x);
      for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t c = 0; c < ch; ++c) {
          T* plane = gx.data() + (s * ch + c) * h * wd;
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const T* src = gcols.data() + ((c * k + ky) * k + kx) * cols_w + s * hw;
              for (std::size_t oy = 0; oy < ho; ++oy) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                if (iy < 0 || iy >= static_cast<long>(h)) continue;
                for (std::size_t ox = 0; ox < wo; ++ox) {
                  const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                  if (ix < 0 || ix >= static_cast<long>(wd)) continue;
                  plane[iy * wd + ix] += src[oy * wo + ox];
                }
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  require_rank(xv, 4, "global_avg_pool");
  const std::size_t n = xv.dim(0), ch = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  Tensor<T> out({n, ch});
  for (std::size_t i = 0; i < n * ch; ++i) {
    T s = 0;
    for (std::size_t p = 0; p < hw; ++p) s += xv[i * hw + p];
    out[i] = s / static_cast<T>(hw);
  }
  return tape.record("global_avg_pool", std::move(out), {x}, [x, n, ch, hw](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < n * ch; ++i) {
      const T d = g[i] / static_cast<T>(hw);
      for (std::size_t p = 0; p < hw; ++p) gx[i * hw + p] += d;
    }
  });
}

template <typename T>
Var flatten(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  const std::size_t n = xv.dim(0);
  Tensor<T> out = xv.reshaped({n, xv.size() / n});
  return tape.record("flatten", std::move(out), {x}, [x](Tape<T>& t, std::size_t self) {
    const Tensor<T> g = t.grad_buffer(self);
    accumulate(t, x, g);
  });
}

template <typename T>
Var concat_cols(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_rank(av, 2, "concat_cols");
  require_rank(bv, 2, "concat_cols");
  if (av.dim(0) != bv.dim(0)) throw ContractViolation("concat_cols: row count mismatch");
  const std::size_t n = av.dim(0), p = av.dim(1), q = bv.dim(1);
  Tensor<T> out({n, p + q});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(bv.data() + r * q, q, out.data() + r * (p + q) + p);
  }
  return tape.record("concat_cols", std::move(out), {a, b}, [a, b, n, p, q](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad_buffer(a);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < p; ++j) ga[r * p + j] += g[r * (p + q) + j];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad_buffer(b);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < q; ++j) gb[r * q + j] += g[r * (p + q) + p + j];
    }
  });
}

template <typename T>
Var channel_scale(Tape<T>& tape, Var x, Var gate) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& gv = tape.value(gate);
  require_rank(xv, 4, "channel_scale");
  require_rank(gv, 2, "channel_scale");
  const std::size_t n = xv.dim(0), ch = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
  if (gv.dim(0) != n || gv.dim(1) != ch) {
    throw ContractViolation("channel_scale: gate " + shape_string(gv.shape()) +
                            " does not match input " + shape_string(xv.shape()));
  }
  Tensor<T> out = xv;
  for (std::size_t i = 0; i < n * ch; ++i) {
    for (std::size_t p = 0; p < hw; ++p) out[i * hw + p] *= gv[i];
  }
  return tape.record("channel_scale", std::move(out), {x, gate},
                     [x, gate, n, ch, hw](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    if (t.requires_grad(x)) {
      const Tensor<T>& gv = t.value(gate);
      Tensor<T>& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < n * ch; ++i)
        for (std::size_t p = 0; p < hw; ++p) gx[i * hw + p] += g[i * hw + p] * gv[i];
    }
    if (t.requires_grad(gate)) {
      const Tensor<T>& xv = t.value(x);
      Tensor<T>& gg = t.grad_buffer(gate);
      for (std::size_t i = 0; i < n * ch; ++i) {
        T s = 0;
        for (std::size_t p = 0; p < hw; ++p) s += g[i * hw + p] * xv[i * hw + p];
        gg[i] += s;
      }
    }
  });
}

template <typename T>
Var select_rows(Tape<T>& tape, Var a, std::span<const std::size_t> rows) {
  const Tensor<T>& av = tape.value(a);
  const std::size_t n = av.dim(0), width = av.size() / n;
  if (rows.empty()) throw ContractViolation("select_rows: empty selection");
  Shape shape = av.shape();
  shape[0] = rows.size();
  Tensor<T> out(shape);
  std::vector<std::size_t> picked(rows.begin(), rows.end());
  for (std::size_t i = 0; i < picked.size(); ++i) {
    if (picked[i] >= n) throw ContractViolation("select_rows: row index out of range");
    std::copy_n(av.data() + picked[i] * width, width, out.data() + i * width);
  }
  return tape.record("select_rows", std::move(out), {a}, [a, picked, width](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& ga = t.grad_buffer(a);
    for (std::size_t i = 0; i < picked.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) ga[picked[i] * width + j] += g[i * width + j];
  });
}

template <typename T>
Var cross_entropy(Tape<T>& tape, Var logits, std::span<const std::size_t> labels) {
  const Tensor<T>& z = tape.value(logits);
  require_rank(z, 2, "cross_entropy");
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) throw ContractViolation("cross_entropy: label count mismatch");
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] >= k) {
      throw ContractViolation("cross_entropy: label " + std::to_string(labels[r]) +
                              " out of range for " + std::to_string(k) + " classes");
    }
    total += log_sum_exp<T>(z.row(r)) - z[r * k + labels[r]];
  }
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return tape.record("cross_entropy", Tensor<T>({1}, total / static_cast<T>(n)), {logits},
                     [logits, y, n, k](Tape<T>& t, std::size_t self) {
    const T g = t.grad_buffer(self)[0] / static_cast<T>(n);
    const Tensor<T>& zv = t.value(logits);
    Tensor<T>& gz = t.grad_buffer(logits);
    for (std::size_t r = 0; r < n; ++r) {
      const auto p = softmax<T>(zv.row(r));
      for (std::size_t j = 0; j < k; ++j) gz[r * k + j] += g * (p[j] - (j == y[r] ? T{1} : T{0}));
    }
  });
}

template <typename T>
Var soft_cross_entropy(Tape<T>& tape, Var logits, const Tensor<T>& targets) {
  const Tensor<T>& z = tape.value(logits);
  require_rank(z, 2, "soft_cross_entropy");
  if (targets.shape() != z.shape()) {
    throw ContractViolation("soft_cross_entropy: targets " + shape_string(targets.shape()) +
                            " vs logits " + shape_string(z.shape()));
  }
  const std::size_t n = z.dim(0), k = z.dim(1);
  const double tol = sizeof(T) >= sizeof(double) ? 1e-9 : 1e-5;
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    double mass = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const T q = targets[r * k + j];
      if (!(q >= T{0})) throw ContractViolation("soft_cross_entropy: negative target mass");
      mass += q;
    }
    if (std::abs(mass - 1.0) > tol) {
      throw ContractViolation("soft_cross_entropy: target row sums to " + std::to_string(mass));
    }
    const T lse = log_sum_exp<T>(z.row(r));
    T row = 0;
    for (std::size_t j = 0; j < k; ++j) row += targets[r * k + j] * (lse - z[r * k + j]);
    total += row;
  }
  auto q = std::make_shared<Tensor<T>>(targets);
  return tape.record("soft_cross_entropy", Tensor<T>({1}, total / static_cast<T>(n)), {logits},
                     [logits, q, n, k](Tape<T>& t, std::size_t self) {
    const T g = t.grad_buffer(self)[0] / static_cast<T>(n);
    const Tensor<T>& zv = t.value(logits);
    Tensor<T>& gz = t.grad_buffer(logits);
    for (std::size_t r = 0; r < n; ++r) {
      const auto p = softmax<T>(zv.row(r));
      T mass = 0;
      for (std::size_t j = 0; j < k; ++j) mass += (*q)[r * k + j];
      for (std::size_t j = 0; j < k; ++j) gz[r * k + j] += g * (p[j] * mass - (*q)[r * k + j]);
    }
  });
}

#define SAKE_INSTANTIATE_OPS(T)                                                         \
  template Var add<T>(Tape<T>&, Var, Var);                                              \
  template Var mul<T>(Tape<T>&, Var, Var);                                              \
  template Var scale<T>(Tape<T>&, Var, T);                                              \
  template Var sum<T>(Tape<T>&, Var);                                                   \
  template Var relu<T>(Tape<T>&, Var);                                                  \
  template Var sigmoid<T>(Tape<T>&, Var);                                               \
  template Var softmax_rows<T>(Tape<T>&, Var);                                          \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                      \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, std::size_t, std::size_t);            \
  template Var global_avg_pool<T>(Tape<T>&, Var);                                       \
  template Var flatten<T>(Tape<T>&, Var);                                               \
  template Var concat_cols<T>(Tape<T>&, Var, Var);                                      \
  template Var channel_scale<T>(Tape<T>&, Var, Var);                                    \
  template Var select_rows<T>(Tape<T>&, Var, std::span<const std::size_t>);             \
  template Var cross_entropy<T>(Tape<T>&, Var, std::span<const std::size_t>);           \
  template Var soft_cross_entropy<T>(Tape<T>&, Var, const Tensor<T>&);

SAKE_INSTANTIATE_OPS(float)
SAKE_INSTANTIATE_OPS(double)
SAKE_INSTANTIATE_OPS(long double)
#undef SAKE_INSTANTIATE_OPS

}  // namespace ops

template std::vector<float> softmax<float>(std::span<const float>);
template std::vector<double> softmax<double>(std::span<const double>);
template float log_sum_exp<float>(std::span<const float>);
template double log_sum_exp<double>(std::span<const double>);
template std::vector<long double> softmax<long double>(std::span<const long double>);
template long double log_sum_exp<long double>(std::span<const long double>);

}  // namespace sake
