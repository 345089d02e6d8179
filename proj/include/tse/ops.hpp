// Copyright 2026 The tse Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Differentiable primitives. Feature maps are [T frames x C channels];
// waveforms enter the graph as [N x 1] columns.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "tse/autograd.hpp"
#include "tse/random.hpp"

namespace tse {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(),
          std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) +
              "x" + std::to_string(a.cols()) + "] vs [" +
              std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + "]");
}

inline void require_row(const Var& row, Eigen::Index cols, const char* op) {
  require(row.rows() == 1 && row.cols() == cols,
          std::string(op) + ": expected a [1x" + std::to_string(cols) +
              "] row, got [" + std::to_string(row.rows()) + "x" +
              std::to_string(row.cols()) + "]");
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
    if (n.input_needs_grad(0)) n.inputs[0]->accumulate(n.grad);
    if (n.input_needs_grad(1)) n.inputs[1]->accumulate(n.grad);
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
    if (n.input_needs_grad(0)) n.inputs[0]->accumulate(n.grad);
    if (n.input_needs_grad(1)) n.inputs[1]->accumulate(-n.grad);
  });
}

// Element-wise product.
inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    if (n.input_needs_grad(0)) {
      n.inputs[0]->accumulate(n.grad.cwiseProduct(n.inputs[1]->value));
    }
    if (n.input_needs_grad(1)) {
      n.inputs[1]->accumulate(n.grad.cwiseProduct(n.inputs[0]->value));
    }
  });
}

inline Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](Node& n) {
    n.inputs[0]->accumulate(n.grad * s);
  });
}

// a + row, row broadcast over frames.
inline Var add_row(const Var& a, const Var& row) {
  detail::require_row(row, a.cols(), "add_row");
  Matrix out = a.value().rowwise() + row.value().row(0);
  return make_op(std::move(out), {a, row}, [](Node& n) {
    if (n.input_needs_grad(0)) n.inputs[0]->accumulate(n.grad);
    if (n.input_needs_grad(1)) n.inputs[1]->accumulate(n.grad.colwise().sum());
  });
}

// a * row, row broadcast over frames.
inline Var mul_row(const Var& a, const Var& row) {
  detail::require_row(row, a.cols(), "mul_row");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  return make_op(std::move(out), {a, row}, [](Node& n) {
    const auto& r = n.inputs[1]->value;
    if (n.input_needs_grad(0)) {
      Matrix g = n.grad.array().rowwise() * r.row(0).array();
      n.inputs[0]->accumulate(g);
    }
    if (n.input_needs_grad(1)) {
      n.inputs[1]->accumulate(
          n.grad.cwiseProduct(n.inputs[0]->value).colwise().sum());
    }
  });
}

inline Var matmul(const Var& a, const Var& b) {
  detail::require(a.cols() == b.rows(),
                  "matmul: inner dimensions " + std::to_string(a.cols()) +
                      " and " + std::to_string(b.rows()) + " differ");
  Matrix out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [](Node& n) {
    if (n.input_needs_grad(0)) {
      n.inputs[0]->accumulate(n.grad * n.inputs[1]->value.transpose());
    }
    if (n.input_needs_grad(1)) {
      n.inputs[1]->accumulate(n.inputs[0]->value.transpose() * n.grad);
    }
  });
}

inline Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return make_op(std::move(out), {a}, [](Node& n) {
    n.inputs[0]->accumulate(n.grad.transpose());
  });
}

inline Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& x = n.inputs[0]->value;
    n.inputs[0]->accumulate(
        (x.array() > 0.0).select(n.grad.array(), 0.0).matrix());
  });
}

inline Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double x) { return detail::sigmoid(x); });
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& y = n.value;
    n.inputs[0]->accumulate(
        (n.grad.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

// x * sigmoid(x).
inline Var swish(const Var& a) {
  Matrix out =
      a.value().unaryExpr([](double x) { return x * detail::sigmoid(x); });
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& x = n.inputs[0]->value;
    Matrix g = x.unaryExpr([](double v) {
      const double s = detail::sigmoid(v);
      return s + v * s * (1.0 - s);
    });
    n.inputs[0]->accumulate(g.cwiseProduct(n.grad));
  });
}

// PReLU with a single learned slope.
inline Var prelu(const Var& a, const Var& slope) {
  detail::require(slope.rows() == 1 && slope.cols() == 1,
                  "prelu: slope must be [1x1]");
  const double alpha = slope.value()(0, 0);
  Matrix out = a.value().unaryExpr(
      [alpha](double x) { return x > 0.0 ? x : alpha * x; });
  return make_op(std::move(out), {a, slope}, [](Node& n) {
    const auto& x = n.inputs[0]->value;
    const double alpha = n.inputs[1]->value(0, 0);
    if (n.input_needs_grad(0)) {
      n.inputs[0]->accumulate(
          (x.array() > 0.0).select(n.grad.array(), alpha * n.grad.array())
              .matrix());
    }
    if (n.input_needs_grad(1)) {
      Matrix g(1, 1);
      g(0, 0) = (x.array() > 0.0).select(0.0, x.array() * n.grad.array()).sum();
      n.inputs[1]->accumulate(g);
    }
  });
}

// Gated linear unit over channels: first half * sigmoid(second half).
inline Var glu(const Var& a) {
  detail::require(a.cols() % 2 == 0, "glu: odd channel count");
  const Eigen::Index h = a.cols() / 2;
  const auto& x = a.value();
  Matrix gate = x.rightCols(h).unaryExpr(
      [](double v) { return detail::sigmoid(v); });
  Matrix out = x.leftCols(h).cwiseProduct(gate);
  return make_op(std::move(out), {a}, [h, gate](Node& n) {
    const auto& x = n.inputs[0]->value;
    Matrix g(x.rows(), x.cols());
    g.leftCols(h) = n.grad.cwiseProduct(gate);
    g.rightCols(h) = (n.grad.array() * x.leftCols(h).array() * gate.array() *
                      (1.0 - gate.array()))
                         .matrix();
    n.inputs[0]->accumulate(g);
  });
}

namespace detail {

// Shared backward for the normalizers: given normalized values xhat and the
// gradient w.r.t. xhat over one normalization group, returns dx.
inline void normalize_backward_group(const Eigen::Ref<const Eigen::ArrayXd>& xhat,
                                     const Eigen::Ref<const Eigen::ArrayXd>& dxhat,
                                     double inv_std,
                                     Eigen::Ref<Eigen::ArrayXd> dx) {
  const double mean_d = dxhat.mean();
  const double mean_dx = (dxhat * xhat).mean();
  dx = inv_std * (dxhat - mean_d - xhat * mean_dx);
}

}  // namespace detail

// Per-frame layer normalization over channels.
inline Var layer_norm(const Var& a, const Var& gamma, const Var& beta,
                      double eps = 1e-5) {
  detail::require_row(gamma, a.cols(), "layer_norm");
  detail::require_row(beta, a.cols(), "layer_norm");
  const auto& x = a.value();
  const Eigen::Index rows = x.rows();
  Matrix xhat(rows, x.cols());
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index t = 0; t < rows; ++t) {
    const double mu = x.row(t).mean();
    const double var = (x.row(t).array() - mu).square().mean();
    inv_std(t) = 1.0 / std::sqrt(var + eps);
    xhat.row(t) = (x.row(t).array() - mu) * inv_std(t);
  }
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  return make_op(std::move(out), {a, gamma, beta},
                 [xhat, inv_std](Node& n) {
    const auto& g = n.grad;
    if (n.input_needs_grad(0)) {
      Matrix dxhat = g.array().rowwise() * n.inputs[1]->value.row(0).array();
      Matrix dx(g.rows(), g.cols());
      Eigen::ArrayXd row_dx(g.cols());
      for (Eigen::Index t = 0; t < g.rows(); ++t) {
        detail::normalize_backward_group(xhat.row(t).transpose().array(),
                                         dxhat.row(t).transpose().array(),
                                         inv_std(t), row_dx);
        dx.row(t) = row_dx.transpose();
      }
      n.inputs[0]->accumulate(dx);
    }
    if (n.input_needs_grad(1)) {
      n.inputs[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
    }
    if (n.input_needs_grad(2)) n.inputs[2]->accumulate(g.colwise().sum());
  });
}

// Global layer normalization: statistics over all frames and channels of the
// utterance, per-channel gain and bias.
inline Var global_layer_norm(const Var& a, const Var& gamma, const Var& beta,
                             double eps = 1e-8) {
  detail::require_row(gamma, a.cols(), "global_layer_norm");
  detail::require_row(beta, a.cols(), "global_layer_norm");
  const auto& x = a.value();
  const double mu = x.mean();
  const double var = (x.array() - mu).square().mean();
  const double inv_std = 1.0 / std::sqrt(var + eps);
  Matrix xhat = (x.array() - mu) * inv_std;
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();
  return make_op(std::move(out), {a, gamma, beta}, [xhat, inv_std](Node& n) {
    const auto& g = n.grad;
    if (n.input_needs_grad(0)) {
      Matrix dxhat = g.array().rowwise() * n.inputs[1]->value.row(0).array();
      Eigen::ArrayXd flat_dx(g.size());
      detail::normalize_backward_group(
          Eigen::Map<const Eigen::ArrayXd>(xhat.data(), xhat.size()),
          Eigen::Map<const Eigen::ArrayXd>(dxhat.data(), dxhat.size()),
          inv_std, flat_dx);
      n.inputs[0]->accumulate(
          Eigen::Map<const Matrix>(flat_dx.data(), g.rows(), g.cols()));
    }
    if (n.input_needs_grad(1)) {
      n.inputs[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
    }
    if (n.input_needs_grad(2)) n.inputs[2]->accumulate(g.colwise().sum());
  });
}

struct BatchNormStats {
  RowVector running_mean;
  RowVector running_var;
  double momentum = 0.1;
};

// Batch normalization over frames. Training mode normalizes with the
// statistics of the given frames and updates the running averages; eval mode
// uses the running averages.
inline Var batch_norm(const Var& a, const Var& gamma, const Var& beta,
                      BatchNormStats& stats, bool training,
                      double eps = 1e-5) {
  detail::require_row(gamma, a.cols(), "batch_norm");
  detail::require_row(beta, a.cols(), "batch_norm");
  const auto& x = a.value();
  const Eigen::Index frames = x.rows();
  if (!training) {
    RowVector inv_std =
        (stats.running_var.array() + eps).rsqrt().matrix();
    RowVector gain = gamma.value().row(0).cwiseProduct(inv_std);
    Matrix out = ((x.rowwise() - stats.running_mean).array().rowwise() *
                  gain.array())
                     .rowwise() +
                 beta.value().row(0).array();
    return make_op(std::move(out), {a, gamma, beta},
                   [inv_std, gain, mean = stats.running_mean](Node& n) {
      const auto& g = n.grad;
      if (n.input_needs_grad(0)) {
        Matrix dx = g.array().rowwise() * gain.array();
        n.inputs[0]->accumulate(dx);
      }
      if (n.input_needs_grad(1)) {
        Matrix xhat = (n.inputs[0]->value.rowwise() - mean).array().rowwise() *
                      inv_std.array();
        n.inputs[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
      }
      if (n.input_needs_grad(2)) n.inputs[2]->accumulate(g.colwise().sum());
    });
  }

  RowVector mu = x.colwise().mean();
  Matrix centered = x.rowwise() - mu;
  RowVector var = centered.array().square().colwise().mean().matrix();
  RowVector inv_std = (var.array() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().rowwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array())
                   .rowwise() +
               beta.value().row(0).array();

  const double m = stats.momentum;
  const double unbias =
      frames > 1 ? static_cast<double>(frames) / static_cast<double>(frames - 1)
                 : 1.0;
  stats.running_mean = (1.0 - m) * stats.running_mean + m * mu;
  stats.running_var = (1.0 - m) * stats.running_var + m * unbias * var;

  return make_op(std::move(out), {a, gamma, beta}, [xhat, inv_std](Node& n) {
    const auto& g = n.grad;
    if (n.input_needs_grad(0)) {
      Matrix dxhat = g.array().rowwise() * n.inputs[1]->value.row(0).array();
      Matrix dx(g.rows(), g.cols());
      Eigen::ArrayXd col_dx(g.rows());
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        detail::normalize_backward_group(xhat.col(c).array(),
                                         dxhat.col(c).array(), inv_std(c),
                                         col_dx);
        dx.col(c) = col_dx.matrix();
      }
      n.inputs[0]->accumulate(dx);
    }
    if (n.input_needs_grad(1)) {
      n.inputs[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
    }
    if (n.input_needs_grad(2)) n.inputs[2]->accumulate(g.colwise().sum());
  });
}

inline Var softmax_rows(const Var& a) {
  const auto& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index t = 0; t < x.rows(); ++t) {
    const double m = x.row(t).maxCoeff();
    out.row(t) = (x.row(t).array() - m).exp().matrix();
    out.row(t) /= out.row(t).sum();
  }
  return make_op(std::move(out), {a}, [](Node& n) {
    const auto& y = n.value;
    Eigen::VectorXd dots = n.grad.cwiseProduct(y).rowwise().sum();
    Matrix dx = y.array() * (n.grad.colwise() - dots).array();
    n.inputs[0]->accumulate(dx);
  });
}

inline Var concat_cols(const Var& a, const Var& b) {
  detail::require(a.rows() == b.rows(), "concat_cols: frame count mismatch");
  Matrix out(a.rows(), a.cols() + b.cols());
  out.leftCols(a.cols()) = a.value();
  out.rightCols(b.cols()) = b.value();
  const Eigen::Index ca = a.cols();
  const Eigen::Index cb = b.cols();
  return make_op(std::move(out), {a, b}, [ca, cb](Node& n) {
    if (n.input_needs_grad(0)) n.inputs[0]->accumulate(n.grad.leftCols(ca));
    if (n.input_needs_grad(1)) n.inputs[1]->accumulate(n.grad.rightCols(cb));
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  Eigen::Index total = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == parts.front().rows(),
                    "concat_cols: frame count mismatch");
    total += p.cols();
  }
  Matrix out(parts.front().rows(), total);
  std::vector<Eigen::Index> widths;
  Eigen::Index offset = 0;
  for (const auto& p : parts) {
    out.middleCols(offset, p.cols()) = p.value();
    widths.push_back(p.cols());
    offset += p.cols();
  }
  return make_op(std::move(out), parts, [widths](Node& n) {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (n.input_needs_grad(i)) {
        n.inputs[i]->accumulate(n.grad.middleCols(off, widths[i]));
      }
      off += widths[i];
    }
  });
}

inline Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  detail::require(start >= 0 && count >= 0 && start + count <= a.cols(),
                  "slice_cols: range out of bounds");
  Matrix out = a.value().middleCols(start, count);
  return make_op(std::move(out), {a}, [start, count](Node& n) {
    Matrix g = Matrix::Zero(n.inputs[0]->value.rows(),
                            n.inputs[0]->value.cols());
    g.middleCols(start, count) = n.grad;
    n.inputs[0]->accumulate(g);
  });
}

// Tiles a [1 x C] row over `frames` rows.
inline Var repeat_rows(const Var& row, Eigen::Index frames) {
  detail::require(row.rows() == 1, "repeat_rows: input must be a single row");
  Matrix out = row.value().replicate(frames, 1);
  return make_op(std::move(out), {row}, [](Node& n) {
    n.inputs[0]->accumulate(n.grad.colwise().sum());
  });
}

inline Var mean_rows(const Var& a) {
  detail::require(a.rows() >= 1, "mean_rows: empty input");
  Matrix out = a.value().colwise().mean();
  return make_op(std::move(out), {a}, [](Node& n) {
    const double inv = 1.0 / static_cast<double>(n.inputs[0]->value.rows());
    n.inputs[0]->accumulate(
        n.grad.replicate(n.inputs[0]->value.rows(), 1) * inv);
  });
}

// Splits an [N x 1] signal into `frames` overlapping windows of `length`
// samples taken every `stride` samples, starting `pad_front` samples before
// the first sample. Out-of-range samples read as zero.
inline Var frame_signal(const Var& signal, Eigen::Index length,
                        Eigen::Index stride, Eigen::Index pad_front,
                        Eigen::Index frames) {
  detail::require(signal.cols() == 1, "frame_signal: expected [N x 1] input");
  const auto& x = signal.value();
  const Eigen::Index n = x.rows();
  Matrix out = Matrix::Zero(frames, length);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index base = t * stride - pad_front;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -base);
    const Eigen::Index hi = std::min<Eigen::Index>(length, n - base);
    for (Eigen::Index j = lo; j < hi; ++j) out(t, j) = x(base + j, 0);
  }
  return make_op(std::move(out), {signal},
                 [length, stride, pad_front, frames](Node& n) {
    const Eigen::Index len = n.inputs[0]->value.rows();
    Matrix g = Matrix::Zero(len, 1);
    for (Eigen::Index t = 0; t < frames; ++t) {
      const Eigen::Index base = t * stride - pad_front;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -base);
      const Eigen::Index hi = std::min<Eigen::Index>(length, len - base);
      for (Eigen::Index j = lo; j < hi; ++j) g(base + j, 0) += n.grad(t, j);
    }
    n.inputs[0]->accumulate(g);
  });
}

// Adjoint of frame_signal: overlap-adds [T x L] frames into an
// [output_length x 1] signal.
inline Var overlap_add(const Var& frames_in, Eigen::Index stride,
                       Eigen::Index pad_front, Eigen::Index output_length) {
  const auto& f = frames_in.value();
  const Eigen::Index frames = f.rows();
  const Eigen::Index length = f.cols();
  Matrix out = Matrix::Zero(output_length, 1);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index base = t * stride - pad_front;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -base);
    const Eigen::Index hi = std::min<Eigen::Index>(length, output_length - base);
    for (Eigen::Index j = lo; j < hi; ++j) out(base + j, 0) += f(t, j);
  }
  return make_op(std::move(out), {frames_in},
                 [stride, pad_front, frames, length, output_length](Node& n) {
    Matrix g = Matrix::Zero(frames, length);
    for (Eigen::Index t = 0; t < frames; ++t) {
      const Eigen::Index base = t * stride - pad_front;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -base);
      const Eigen::Index hi =
          std::min<Eigen::Index>(length, output_length - base);
      for (Eigen::Index j = lo; j < hi; ++j) g(t, j) = n.grad(base + j, 0);
    }
    n.inputs[0]->accumulate(g);
  });
}

// Depthwise convolution over frames with an odd kernel [K x C] and the given
// dilation; zero padding keeps the frame count.
inline Var depthwise_conv(const Var& a, const Var& kernel, int dilation) {
  const Eigen::Index k = kernel.rows();
  detail::require(k % 2 == 1, "depthwise_conv: kernel size must be odd");
  detail::require(kernel.cols() == a.cols(),
                  "depthwise_conv: kernel channel mismatch");
  detail::require(dilation >= 1, "depthwise_conv: dilation must be >= 1");
  const auto& x = a.value();
  const auto& w = kernel.value();
  const Eigen::Index frames = x.rows();
  const Eigen::Index half = (k - 1) / 2;
  Matrix out = Matrix::Zero(frames, x.cols());
  for (Eigen::Index j = 0; j < k; ++j) {
    const Eigen::Index shift = (j - half) * dilation;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(frames, frames - shift);
    if (hi <= lo) continue;
    out.middleRows(lo, hi - lo).array() +=
        x.middleRows(lo + shift, hi - lo).array().rowwise() * w.row(j).array();
  }
  return make_op(std::move(out), {a, kernel}, [half, dilation](Node& n) {
    const auto& x = n.inputs[0]->value;
    const auto& w = n.inputs[1]->value;
    const Eigen::Index frames = x.rows();
    const Eigen::Index k = w.rows();
    Matrix dx = Matrix::Zero(x.rows(), x.cols());
    Matrix dw = Matrix::Zero(w.rows(), w.cols());
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index shift = (j - half) * dilation;
      const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
      const Eigen::Index hi = std::min<Eigen::Index>(frames, frames - shift);
      if (hi <= lo) continue;
      const auto g = n.grad.middleRows(lo, hi - lo);
      dx.middleRows(lo + shift, hi - lo).array() +=
          g.array().rowwise() * w.row(j).array();
      dw.row(j) += g.cwiseProduct(x.middleRows(lo + shift, hi - lo))
                       .colwise()
                       .sum();
    }
    if (n.input_needs_grad(0)) n.inputs[0]->accumulate(dx);
    if (n.input_needs_grad(1)) n.inputs[1]->accumulate(dw);
  });
}

// Max pooling over frames in ceil mode: a trailing partial window is kept, so
// at least one output frame is produced.
inline Var max_pool_rows(const Var& a, Eigen::Index kernel, Eigen::Index stride) {
  detail::require(kernel >= 1 && stride >= 1, "max_pool_rows: bad geometry");
  const auto& x = a.value();
  const Eigen::Index frames = x.rows();
  detail::require(frames >= 1, "max_pool_rows: empty input");
  const Eigen::Index out_frames =
      frames <= kernel ? 1 : (frames - kernel + stride - 1) / stride + 1;
  Matrix out(out_frames, x.cols());
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(out.size()));
  for (Eigen::Index t = 0; t < out_frames; ++t) {
    const Eigen::Index lo = t * stride;
    const Eigen::Index hi = std::min(frames, lo + kernel);
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Eigen::Index best = lo;
      for (Eigen::Index i = lo + 1; i < hi; ++i) {
        if (x(i, c) > x(best, c)) best = i;
      }
      out(t, c) = x(best, c);
      argmax[static_cast<std::size_t>(t * x.cols() + c)] = best;
    }
  }
  return make_op(std::move(out), {a}, [argmax](Node& n) {
    const auto& x = n.inputs[0]->value;
    Matrix g = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index t = 0; t < n.grad.rows(); ++t) {
      for (Eigen::Index c = 0; c < n.grad.cols(); ++c) {
        g(argmax[static_cast<std::size_t>(t * x.cols() + c)], c) +=
            n.grad(t, c);
      }
    }
    n.inputs[0]->accumulate(g);
  });
}

// Inverted dropout. Identity outside training or when rate is zero.
inline Var dropout(const Var& a, double rate, Rng* rng, bool training) {
  if (!training || rate <= 0.0) return a;
  detail::require(rng != nullptr, "dropout: training mode requires an Rng");
  detail::require(rate < 1.0, "dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  Matrix mask(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
  }
  Matrix out = a.value().cwiseProduct(mask);
  return make_op(std::move(out), {a}, [mask](Node& n) {
    n.inputs[0]->accumulate(n.grad.cwiseProduct(mask));
  });
}

// Converts scores indexed by relative offset into query/key scores:
// out(i, j) = in(i, i - j + T - 1) for an input of shape [T x 2T-1] whose
// column m holds relative distance m - (T - 1).
inline Var rel_shift(const Var& a) {
  const Eigen::Index frames = a.rows();
  detail::require(a.cols() == 2 * frames - 1,
                  "rel_shift: expected [T x 2T-1] input");
  const auto& x = a.value();
  Matrix out(frames, frames);
  for (Eigen::Index i = 0; i < frames; ++i) {
    for (Eigen::Index j = 0; j < frames; ++j) {
      out(i, j) = x(i, i - j + frames - 1);
    }
  }
  return make_op(std::move(out), {a}, [frames](Node& n) {
    Matrix g = Matrix::Zero(frames, 2 * frames - 1);
    for (Eigen::Index i = 0; i < frames; ++i) {
      for (Eigen::Index j = 0; j < frames; ++j) {
        g(i, i - j + frames - 1) += n.grad(i, j);
      }
    }
    n.inputs[0]->accumulate(g);
  });
}

// Per-frame L2 normalization.
inline Var l2_normalize_rows(const Var& a, double eps = 1e-12) {
  const auto& x = a.value();
  Eigen::VectorXd norms = (x.rowwise().squaredNorm().array() + eps).sqrt();
  Matrix out = x.array().colwise() / norms.array();
  return make_op(std::move(out), {a}, [norms](Node& n) {
    const auto& y = n.value;
    Eigen::VectorXd dots = n.grad.cwiseProduct(y).rowwise().sum();
    Matrix dx = (n.grad - (y.array().colwise() * dots.array()).matrix())
                    .array()
                    .colwise() /
                norms.array();
    n.inputs[0]->accumulate(dx);
  });
}

// sum(a .* weights) as a [1x1] scalar, weights held constant.
inline Var weighted_sum(const Var& a, const Matrix& weights) {
  detail::require(a.rows() == weights.rows() && a.cols() == weights.cols(),
                  "weighted_sum: shape mismatch");
  Matrix out(1, 1);
  out(0, 0) = a.value().cwiseProduct(weights).sum();
  return make_op(std::move(out), {a}, [weights](Node& n) {
    n.inputs[0]->accumulate(weights * n.grad(0, 0));
  });
}

}  // namespace tse
