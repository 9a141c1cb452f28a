#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "strengthnet/autodiff/tape.hpp"
#include "strengthnet/common/error.hpp"
#include "strengthnet/common/random.hpp"

namespace strengthnet::ad {

template <class T>
using MatrixR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapR = Eigen::Map<MatrixR<T>>;
template <class T>
using ConstMapR = Eigen::Map<const MatrixR<T>>;

namespace detail {

inline void check(bool ok, const char* op, const std::string& what) {
  if (!ok) fail(ErrorCode::kShapeMismatch, std::string(op) + ": " + what);
}

template <class T>
ConstMapR<T> as_matrix(const std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return ConstMapR<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
MapR<T> as_matrix(std::vector<T>& v, std::size_t rows, std::size_t cols) {
  return MapR<T>(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <class T>
void check_mask(std::span<const T> mask, std::size_t steps, const char* op) {
  check(mask.size() == steps, op, "mask length " + std::to_string(mask.size()) + " != " + std::to_string(steps));
  T total = 0;
  for (T m : mask) {
    check(m == T(0) || m == T(1), op, "mask entries must be 0 or 1");
    total += m;
  }
  check(total > T(0), op, "mask hides every step");
}

template <class T>
Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> as_row(const std::vector<T>& v, std::size_t n) {
  return Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(v.data(), static_cast<Eigen::Index>(n));
}

/// out[j] += sum_i m(i, j), accumulated in row order independent of
/// memory alignment.
template <class Derived>
void add_column_sums(const Eigen::MatrixBase<Derived>& m, std::vector<typename Derived::Scalar>& out) {
  using T = typename Derived::Scalar;
  std::vector<T> sums(static_cast<std::size_t>(m.cols()), T(0));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) sums[static_cast<std::size_t>(j)] += m(i, j);
  }
  for (std::size_t j = 0; j < sums.size(); ++j) out[j] += sums[j];
}

}  // namespace detail

// ---- elementwise and structural ops -----------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::check(a.shape() == b.shape(), "add", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  std::vector<T> out(a.value().begin(), a.value().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  auto* na = a.node();
  auto* nb = b.node();
  return a.tape()->record("add", a.shape(), std::move(out), {a, b}, [na, nb](Node<T>* o) {
    return [na, nb, o] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (na->requires_grad) na->grad[i] += o->grad[i];
        if (nb->requires_grad) nb->grad[i] += o->grad[i];
      }
    };
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T factor) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v *= factor;
  auto* na = a.node();
  return a.tape()->record("scale", a.shape(), std::move(out), {a}, [na, factor](Node<T>* o) {
    return [na, o, factor] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) na->grad[i] += factor * o->grad[i];
    };
  });
}

template <class T>
Var<T> sum(const Var<T>& a) {
  T total = 0;
  for (T v : a.value()) total += v;
  auto* na = a.node();
  return a.tape()->record("sum", Shape{1}, std::vector<T>{total}, {a}, [na](Node<T>* o) {
    return [na, o] {
      for (auto& g : na->grad) g += o->grad[0];
    };
  });
}

template <class T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  detail::check(numel(shape) == a.size(), "reshape", shape_string(a.shape()) + " -> " + shape_string(shape));
  auto* na = a.node();
  return a.tape()->record("reshape", std::move(shape), std::vector<T>(a.value().begin(), a.value().end()), {a},
                          [na](Node<T>* o) {
                            return [na, o] {
                              for (std::size_t i = 0; i < o->grad.size(); ++i) na->grad[i] += o->grad[i];
                            };
                          });
}

template <class T>
Var<T> relu(const Var<T>& a) {
  std::vector<T> out(a.value().begin(), a.value().end());
  for (auto& v : out) v = std::max(v, T(0));
  auto* na = a.node();
  return a.tape()->record("relu", a.shape(), std::move(out), {a}, [na](Node<T>* o) {
    return [na, o] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        if (na->value[i] > T(0)) na->grad[i] += o->grad[i];
      }
    };
  });
}

template <class T>
Var<T> sigmoid(const Var<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(a.value()[i]);
  auto* na = a.node();
  return a.tape()->record("sigmoid", a.shape(), std::move(out), {a}, [na](Node<T>* o) {
    return [na, o] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        const T y = o->value[i];
        na->grad[i] += o->grad[i] * y * (T(1) - y);
      }
    };
  });
}

template <class T>
Var<T> tanh(const Var<T>& a) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.value()[i]);
  auto* na = a.node();
  return a.tape()->record("tanh", a.shape(), std::move(out), {a}, [na](Node<T>* o) {
    return [na, o] {
      for (std::size_t i = 0; i < o->grad.size(); ++i) {
        const T y = o->value[i];
        na->grad[i] += o->grad[i] * (T(1) - y * y);
      }
    };
  });
}

/// Softmax over the last axis.
template <class T>
Var<T> softmax(const Var<T>& a) {
  detail::check(!a.shape().empty(), "softmax", "scalar input");
  const std::size_t k = a.shape().back();
  const std::size_t rows = a.size() / k;
  std::vector<T> out(a.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data() + r * k;
    T* y = out.data() + r * k;
    const T peak = *std::max_element(x, x + k);
    T total = 0;
    for (std::size_t j = 0; j < k; ++j) total += (y[j] = std::exp(x[j] - peak));
    for (std::size_t j = 0; j < k; ++j) y[j] /= total;
  }
  auto* na = a.node();
  return a.tape()->record("softmax", a.shape(), std::move(out), {a}, [na, k, rows](Node<T>* o) {
    return [na, o, k, rows] {
      for (std::size_t r = 0; r < rows; ++r) {
        const T* y = o->value.data() + r * k;
        const T* gy = o->grad.data() + r * k;
        T dot = 0;
        for (std::size_t j = 0; j < k; ++j) dot += gy[j] * y[j];
        for (std::size_t j = 0; j < k; ++j) na->grad[r * k + j] += y[j] * (gy[j] - dot);
      }
    };
  });
}

/// Fully connected layer: x [N, in] (or [in]) times W [in, out] plus b [out].
template <class T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  detail::check(w.shape().size() == 2, "dense", "weight must be 2-D");
  const std::size_t din = w.dim(0), dout = w.dim(1);
  detail::check(b.shape() == Shape{dout}, "dense", "bias shape " + shape_string(b.shape()));
  detail::check(!x.shape().empty() && x.shape().back() == din, "dense",
                "input " + shape_string(x.shape()) + " vs weight " + shape_string(w.shape()));
  const std::size_t n = x.size() / din;
  Shape out_shape = x.shape();
  out_shape.back() = dout;

  std::vector<T> out(n * dout);
  auto y = detail::as_matrix(out, n, dout);
  y.noalias() = detail::as_matrix(x.node()->value, n, din) * detail::as_matrix(w.node()->value, din, dout);
  y.rowwise() += detail::as_row(b.node()->value, dout);

  auto *nx = x.node(), *nw = w.node(), *nb = b.node();
  return x.tape()->record("dense", std::move(out_shape), std::move(out), {x, w, b},
                          [nx, nw, nb, n, din, dout](Node<T>* o) {
                            return [nx, nw, nb, o, n, din, dout] {
                              auto gy = detail::as_matrix(o->grad, n, dout);
                              if (nw->requires_grad) {
                                detail::as_matrix(nw->grad, din, dout).noalias() +=
                                    detail::as_matrix(nx->value, n, din).transpose() * gy;
                              }
                              if (nb->requires_grad) {
                                detail::add_column_sums(gy, nb->grad);
                              }
                              if (nx->requires_grad) {
                                detail::as_matrix(nx->grad, n, din).noalias() +=
                                    gy * detail::as_matrix(nw->value, din, dout).transpose();
                              }
                            };
                          });
}

// ---- convolution -------------------------------------------------------------

struct Stride {
  std::size_t time = 1;
  std::size_t freq = 1;
};

/// "Same" output length: ceil(d / s).
inline std::size_t same_output_length(std::size_t d, std::size_t stride) { return (d + stride - 1) / stride; }

/// Leading zero padding for "same" convolution. Any odd remainder goes on the
/// trailing edge.
inline std::size_t same_pad_before(std::size_t d, std::size_t kernel, std::size_t stride) {
  const std::size_t out = same_output_length(d, stride);
  const std::size_t needed = (out - 1) * stride + kernel;
  return needed > d ? (needed - d) / 2 : 0;
}

/// 2-D convolution over a [time, freq, channels] map with kernel
/// [kt, kf, in, out] and bias [out]; "same" padding with zeros.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, Stride stride) {
  detail::check(x.shape().size() == 3, "conv2d", "input must be [T,F,C], got " + shape_string(x.shape()));
  detail::check(w.shape().size() == 4, "conv2d", "kernel must be [kt,kf,in,out]");
  const std::size_t T_in = x.dim(0), F_in = x.dim(1), C_in = x.dim(2);
  const std::size_t KT = w.dim(0), KF = w.dim(1), C_out = w.dim(3);
  detail::check(w.dim(2) == C_in, "conv2d",
                "kernel expects " + std::to_string(w.dim(2)) + " input channels, got " + std::to_string(C_in));
  detail::check(b.shape() == Shape{C_out}, "conv2d", "bias shape " + shape_string(b.shape()));
  detail::check(stride.time >= 1 && stride.freq >= 1, "conv2d", "stride must be positive");

  const std::size_t T_out = same_output_length(T_in, stride.time);
  const std::size_t F_out = same_output_length(F_in, stride.freq);
  const auto pad_t = static_cast<std::ptrdiff_t>(same_pad_before(T_in, KT, stride.time));
  const auto pad_f = static_cast<std::ptrdiff_t>(same_pad_before(F_in, KF, stride.freq));
  const std::size_t K = KT * KF * C_in;
  const std::size_t rows = T_out * F_out;

  // im2col: one row per output position, columns ordered (kt, kf, c_in) to
  // match the kernel layout.
  auto cols = std::make_shared<std::vector<T>>(rows * K, T(0));
  const T* xv = x.node()->value.data();
  for (std::size_t t = 0; t < T_out; ++t) {
    for (std::size_t f = 0; f < F_out; ++f) {
      T* row = cols->data() + (t * F_out + f) * K;
      for (std::size_t kt = 0; kt < KT; ++kt) {
        const auto ti = static_cast<std::ptrdiff_t>(t * stride.time + kt) - pad_t;
        if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T_in)) continue;
        for (std::size_t kf = 0; kf < KF; ++kf) {
          const auto fi = static_cast<std::ptrdiff_t>(f * stride.freq + kf) - pad_f;
          if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(F_in)) continue;
          const T* src = xv + (static_cast<std::size_t>(ti) * F_in + static_cast<std::size_t>(fi)) * C_in;
          std::copy(src, src + C_in, row + (kt * KF + kf) * C_in);
        }
      }
    }
  }

  std::vector<T> out(rows * C_out);
  auto y = detail::as_matrix(out, rows, C_out);
  y.noalias() = detail::as_matrix(*cols, rows, K) * detail::as_matrix(w.node()->value, K, C_out);
  y.rowwise() += detail::as_row(b.node()->value, C_out);

  auto *nx = x.node(), *nw = w.node(), *nb = b.node();
  return x.tape()->record(
      "conv2d", Shape{T_out, F_out, C_out}, std::move(out), {x, w, b},
      [=](Node<T>* o) {
        return [=] {
          auto gy = detail::as_matrix(o->grad, rows, C_out);
          if (nw->requires_grad) {
            detail::as_matrix(nw->grad, K, C_out).noalias() += detail::as_matrix(*cols, rows, K).transpose() * gy;
          }
          if (nb->requires_grad) detail::add_column_sums(gy, nb->grad);
          if (!nx->requires_grad) return;
          MatrixR<T> gcols = gy * detail::as_matrix(nw->value, K, C_out).transpose();
          T* gx = nx->grad.data();
          for (std::size_t t = 0; t < T_out; ++t) {
            for (std::size_t f = 0; f < F_out; ++f) {
              const T* row = gcols.data() + (t * F_out + f) * K;
              for (std::size_t kt = 0; kt < KT; ++kt) {
                const auto ti = static_cast<std::ptrdiff_t>(t * stride.time + kt) - pad_t;
                if (ti < 0 || ti >= static_cast<std::ptrdiff_t>(T_in)) continue;
                for (std::size_t kf = 0; kf < KF; ++kf) {
                  const auto fi = static_cast<std::ptrdiff_t>(f * stride.freq + kf) - pad_f;
                  if (fi < 0 || fi >= static_cast<std::ptrdiff_t>(F_in)) continue;
                  T* dst = gx + (static_cast<std::size_t>(ti) * F_in + static_cast<std::size_t>(fi)) * C_in;
                  const T* src = row + (kt * KF + kf) * C_in;
                  for (std::size_t c = 0; c < C_in; ++c) dst[c] += src[c];
                }
              }
            }
          }
        };
      });
}

/// Zeroes every time step whose mask entry is 0. Input is [T, ...].
template <class T>
Var<T> mask_time(const Var<T>& x, std::span<const T> mask) {
  detail::check(!x.shape().empty() && mask.size() == x.dim(0), "mask_time", "mask length mismatch");
  const std::size_t inner = x.size() / x.dim(0);
  std::vector<T> out(x.value().begin(), x.value().end());
  std::vector<T> m(mask.begin(), mask.end());
  for (std::size_t t = 0; t < m.size(); ++t) {
    if (m[t] == T(0)) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(t * inner), inner, T(0));
  }
  auto* nx = x.node();
  return x.tape()->record("mask_time", x.shape(), std::move(out), {x}, [nx, m = std::move(m), inner](Node<T>* o) {
    return [nx, o, m, inner] {
      for (std::size_t t = 0; t < m.size(); ++t) {
        if (m[t] == T(0)) continue;
        for (std::size_t i = t * inner; i < (t + 1) * inner; ++i) nx->grad[i] += o->grad[i];
      }
    };
  });
}

/// [T, F, C] -> [T, C*F], channel-major within each frame: out[t][c*F + f].
template <class T>
Var<T> flatten_freq_channels(const Var<T>& x) {
  detail::check(x.shape().size() == 3, "flatten_freq_channels", "input must be [T,F,C]");
  const std::size_t T_ = x.dim(0), F = x.dim(1), C = x.dim(2);
  std::vector<T> out(x.size());
  for (std::size_t t = 0; t < T_; ++t)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t c = 0; c < C; ++c) out[t * C * F + c * F + f] = x.value()[(t * F + f) * C + c];
  auto* nx = x.node();
  return x.tape()->record("flatten_freq_channels", Shape{T_, C * F}, std::move(out), {x},
                          [nx, T_, F, C](Node<T>* o) {
                            return [nx, o, T_, F, C] {
                              for (std::size_t t = 0; t < T_; ++t)
                                for (std::size_t f = 0; f < F; ++f)
                                  for (std::size_t c = 0; c < C; ++c)
                                    nx->grad[(t * F + f) * C + c] += o->grad[t * C * F + c * F + f];
                            };
                          });
}

// ---- recurrent -----------------------------------------------------------------

/// Weights of one LSTM direction. Gate blocks along the 4H axis are ordered
/// (input, forget, cell, output).
template <class T>
struct LstmWeights {
  Var<T> input_kernel;      // [in, 4H]
  Var<T> recurrent_kernel;  // [H, 4H]
  Var<T> bias;              // [4H]
};

namespace detail {

template <class T>
struct LstmTrace {
  MatrixR<T> gates;   // activated i, f, g, o per step [T, 4H]
  MatrixR<T> cell;    // c_t
  MatrixR<T> tanh_c;  // tanh(c_t)
  MatrixR<T> h_prev;  // h_{t-1} in processing order
  MatrixR<T> c_prev;
};

template <class T>
LstmTrace<T> lstm_forward(const MatrixR<T>& xproj, const LstmWeights<T>& wts, std::span<const T> mask,
                          bool reverse, std::size_t hidden, T* out, std::size_t out_stride,
                          std::size_t out_offset) {
  const std::size_t steps = static_cast<std::size_t>(xproj.rows());
  const auto H = static_cast<Eigen::Index>(hidden);
  LstmTrace<T> tr;
  tr.gates = MatrixR<T>::Zero(xproj.rows(), 4 * H);
  tr.cell = MatrixR<T>::Zero(xproj.rows(), H);
  tr.tanh_c = MatrixR<T>::Zero(xproj.rows(), H);
  tr.h_prev = MatrixR<T>::Zero(xproj.rows(), H);
  tr.c_prev = MatrixR<T>::Zero(xproj.rows(), H);
  const auto whh = as_matrix(wts.recurrent_kernel.node()->value, hidden, 4 * hidden);
  Eigen::Matrix<T, 1, Eigen::Dynamic> h = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(H);
  Eigen::Matrix<T, 1, Eigen::Dynamic> c = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(H);
  Eigen::Matrix<T, 1, Eigen::Dynamic> z(4 * H);
  for (std::size_t k = 0; k < steps; ++k) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    T* o = out + t * out_stride + out_offset;
    if (mask[t] == T(0)) {
      std::fill_n(o, hidden, T(0));
      continue;
    }
    const auto ti = static_cast<Eigen::Index>(t);
    tr.h_prev.row(ti) = h;
    tr.c_prev.row(ti) = c;
    z.noalias() = xproj.row(ti) + h * whh;
    for (Eigen::Index j = 0; j < H; ++j) {
      const T ig = stable_sigmoid(z[j]);
      const T fg = stable_sigmoid(z[H + j]);
      const T gg = std::tanh(z[2 * H + j]);
      const T og = stable_sigmoid(z[3 * H + j]);
      const T cn = fg * c[j] + ig * gg;
      const T tc = std::tanh(cn);
      tr.gates(ti, j) = ig;
      tr.gates(ti, H + j) = fg;
      tr.gates(ti, 2 * H + j) = gg;
      tr.gates(ti, 3 * H + j) = og;
      tr.cell(ti, j) = cn;
      tr.tanh_c(ti, j) = tc;
      c[j] = cn;
      h[j] = og * tc;
      o[j] = h[j];
    }
  }
  return tr;
}

/// Backpropagation through time for one direction; returns dL/d(xproj).
template <class T>
MatrixR<T> lstm_backward(const LstmTrace<T>& tr, const LstmWeights<T>& wts, std::span<const T> mask,
                         bool reverse, std::size_t hidden, const T* gout, std::size_t out_stride,
                         std::size_t out_offset) {
  const std::size_t steps = static_cast<std::size_t>(tr.gates.rows());
  const auto H = static_cast<Eigen::Index>(hidden);
  const auto whh = as_matrix(wts.recurrent_kernel.node()->value, hidden, 4 * hidden);
  MatrixR<T> dz = MatrixR<T>::Zero(tr.gates.rows(), 4 * H);
  Eigen::Matrix<T, 1, Eigen::Dynamic> dh_next = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(H);
  Eigen::Matrix<T, 1, Eigen::Dynamic> dc_next = Eigen::Matrix<T, 1, Eigen::Dynamic>::Zero(H);
  for (std::size_t k = steps; k-- > 0;) {
    const std::size_t t = reverse ? steps - 1 - k : k;
    if (mask[t] == T(0)) continue;
    const auto ti = static_cast<Eigen::Index>(t);
    const T* go = gout + t * out_stride + out_offset;
    for (Eigen::Index j = 0; j < H; ++j) {
      const T ig = tr.gates(ti, j), fg = tr.gates(ti, H + j), gg = tr.gates(ti, 2 * H + j),
              og = tr.gates(ti, 3 * H + j);
      const T tc = tr.tanh_c(ti, j);
      const T dh = go[j] + dh_next[j];
      const T dc = dc_next[j] + dh * og * (T(1) - tc * tc);
      dz(ti, j) = dc * gg * ig * (T(1) - ig);
      dz(ti, H + j) = dc * tr.c_prev(ti, j) * fg * (T(1) - fg);
      dz(ti, 2 * H + j) = dc * ig * (T(1) - gg * gg);
      dz(ti, 3 * H + j) = dh * tc * og * (T(1) - og);
      dc_next[j] = dc * fg;
    }
    dh_next.noalias() = dz.row(ti) * whh.transpose();
  }
  if (wts.recurrent_kernel.requires_grad()) {
    as_matrix(wts.recurrent_kernel.node()->grad, hidden, 4 * hidden).noalias() += tr.h_prev.transpose() * dz;
  }
  return dz;
}

}  // namespace detail

/// Bidirectional LSTM over x [T, in] -> [T, 2H]; columns [0, H) hold the
/// forward pass and [H, 2H) the backward pass. Masked steps emit zeros and
/// leave the recurrent state untouched, so trailing padding does not leak
/// into either direction.
template <class T>
Var<T> bilstm(const Var<T>& x, const LstmWeights<T>& fwd, const LstmWeights<T>& bwd, std::span<const T> mask) {
  detail::check(x.shape().size() == 2, "bilstm", "input must be [T, in], got " + shape_string(x.shape()));
  const std::size_t steps = x.dim(0), din = x.dim(1);
  const std::size_t hidden = fwd.recurrent_kernel.dim(0);
  for (const auto* wts : {&fwd, &bwd}) {
    detail::check(wts->input_kernel.shape() == Shape{din, 4 * hidden}, "bilstm",
                  "input kernel shape " + shape_string(wts->input_kernel.shape()));
    detail::check(wts->recurrent_kernel.shape() == Shape{hidden, 4 * hidden}, "bilstm",
                  "recurrent kernel shape " + shape_string(wts->recurrent_kernel.shape()));
    detail::check(wts->bias.shape() == Shape{4 * hidden}, "bilstm", "bias shape " + shape_string(wts->bias.shape()));
  }
  detail::check_mask(mask, steps, "bilstm");

  const auto xm = detail::as_matrix(x.node()->value, steps, din);
  std::vector<T> out(steps * 2 * hidden);
  auto trace = [&](const LstmWeights<T>& wts, bool reverse, std::size_t offset) {
    MatrixR<T> xproj = xm * detail::as_matrix(wts.input_kernel.node()->value, din, 4 * hidden);
    xproj.rowwise() += detail::as_row(wts.bias.node()->value, 4 * hidden);
    return detail::lstm_forward(xproj, wts, mask, reverse, hidden, out.data(), 2 * hidden, offset);
  };
  auto fwd_trace = std::make_shared<detail::LstmTrace<T>>(trace(fwd, false, 0));
  auto bwd_trace = std::make_shared<detail::LstmTrace<T>>(trace(bwd, true, hidden));

  std::vector<T> m(mask.begin(), mask.end());
  auto* nx = x.node();
  return x.tape()->record(
      "bilstm", Shape{steps, 2 * hidden}, std::move(out),
      {x, fwd.input_kernel, fwd.recurrent_kernel, fwd.bias, bwd.input_kernel, bwd.recurrent_kernel, bwd.bias},
      [=, m = std::move(m)](Node<T>* o) {
        return [=] {
          auto run = [&](const detail::LstmTrace<T>& tr, const LstmWeights<T>& wts, bool reverse,
                         std::size_t offset) {
            const MatrixR<T> dz =
                detail::lstm_backward(tr, wts, std::span<const T>(m), reverse, hidden, o->grad.data(), 2 * hidden, offset);
            if (wts.input_kernel.requires_grad()) {
              detail::as_matrix(wts.input_kernel.node()->grad, din, 4 * hidden).noalias() +=
                  detail::as_matrix(nx->value, steps, din).transpose() * dz;
            }
            if (wts.bias.requires_grad()) {
              detail::add_column_sums(dz, wts.bias.node()->grad);
            }
            if (nx->requires_grad) {
              detail::as_matrix(nx->grad, steps, din).noalias() +=
                  dz * detail::as_matrix(wts.input_kernel.node()->value, din, 4 * hidden).transpose();
            }
          };
          run(*fwd_trace, fwd, false, 0);
          run(*bwd_trace, bwd, true, hidden);
        };
      });
}

/// Masked mean over the time axis: [T, D] -> [D].
template <class T>
Var<T> avg_pool_time(const Var<T>& x, std::span<const T> mask) {
  detail::check(x.shape().size() == 2, "avg_pool_time", "input must be [T, D]");
  const std::size_t steps = x.dim(0), d = x.dim(1);
  detail::check_mask(mask, steps, "avg_pool_time");
  T count = 0;
  for (T mv : mask) count += mv;
  std::vector<T> out(d, T(0));
  for (std::size_t t = 0; t < steps; ++t) {
    if (mask[t] == T(0)) continue;
    for (std::size_t j = 0; j < d; ++j) out[j] += x.value()[t * d + j];
  }
  for (auto& v : out) v /= count;
  std::vector<T> m(mask.begin(), mask.end());
  auto* nx = x.node();
  return x.tape()->record("avg_pool_time", Shape{d}, std::move(out), {x}, [=, m = std::move(m)](Node<T>* o) {
    return [=] {
      for (std::size_t t = 0; t < steps; ++t) {
        if (m[t] == T(0)) continue;
        for (std::size_t j = 0; j < d; ++j) nx->grad[t * d + j] += o->grad[j] / count;
      }
    };
  });
}

/// Inverted dropout. Identity when not training or rate == 0; otherwise each
/// element survives with probability 1 - rate and is scaled by 1/(1 - rate).
/// The mask depends only on `seed`.
template <class T>
Var<T> dropout(const Var<T>& x, double rate, bool train, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorCode::kInvalidArgument, "dropout rate must be in [0, 1)");
  if (!train || rate == 0.0) return x;
  Rng rng(seed);
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::vector<T> factor(x.size());
  for (auto& f : factor) f = uniform01(rng) < rate ? T(0) : keep_scale;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * factor[i];
  auto* nx = x.node();
  return x.tape()->record("dropout", x.shape(), std::move(out), {x}, [nx, factor = std::move(factor)](Node<T>* o) {
    return [nx, o, factor] {
      for (std::size_t i = 0; i < factor.size(); ++i) nx->grad[i] += o->grad[i] * factor[i];
    };
  });
}

// ---- losses ----------------------------------------------------------------------

/// Masked mean absolute error against a constant target. The subgradient at
/// pred == target is 0. An empty mask means every element counts.
template <class T>
Var<T> mae_loss(const Var<T>& pred, std::span<const T> target, std::span<const T> mask = {}) {
  detail::check(target.size() == pred.size(), "mae_loss", "target size mismatch");
  std::vector<T> m(pred.size(), T(1));
  if (!mask.empty()) {
    detail::check_mask(mask, pred.size(), "mae_loss");
    m.assign(mask.begin(), mask.end());
  }
  T count = 0, total = 0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    count += m[i];
    total += m[i] * std::abs(pred.value()[i] - target[i]);
  }
  std::vector<T> sign(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const T d = pred.value()[i] - target[i];
    sign[i] = m[i] * (d > T(0) ? T(1) : d < T(0) ? T(-1) : T(0)) / count;
  }
  auto* np = pred.node();
  return pred.tape()->record("mae_loss", Shape{1}, std::vector<T>{total / count}, {pred},
                             [np, sign = std::move(sign)](Node<T>* o) {
                               return [np, o, sign] {
                                 for (std::size_t i = 0; i < sign.size(); ++i) np->grad[i] += o->grad[0] * sign[i];
                               };
                             });
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Categorical cross-entropy -sum(y * log p). Probabilities are floored at
/// 1e-7 before the log; floored entries pass no gradient. There is no upper
/// clamp, so a one-hot prediction of the right class costs exactly 0.
template <class T>
Var<T> cross_entropy_loss(const Var<T>& probs, std::span<const T> one_hot) {
  detail::check(one_hot.size() == probs.size(), "cross_entropy_loss", "target size mismatch");
  const T lo = T(kProbabilityClamp);
  T loss = 0;
  std::vector<T> dp(probs.size(), T(0));
  for (std::size_t i = 0; i < dp.size(); ++i) {
    const T p = probs.value()[i];
    if (one_hot[i] == T(0)) continue;
    loss -= one_hot[i] * std::log(std::max(p, lo));
    if (p > lo) dp[i] = -one_hot[i] / p;
  }
  auto* np = probs.node();
  return probs.tape()->record("cross_entropy_loss", Shape{1}, std::vector<T>{loss}, {probs},
                              [np, dp = std::move(dp)](Node<T>* o) {
                                return [np, o, dp] {
                                  for (std::size_t i = 0; i < dp.size(); ++i) np->grad[i] += o->grad[0] * dp[i];
                                };
                              });
}

}  // namespace strengthnet::ad
