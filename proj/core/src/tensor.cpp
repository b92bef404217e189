// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#include "sslasr/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "sslasr/common.hpp"

namespace sslasr::ad {

namespace {

using EMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Map = Eigen::Map<EMat>;
using CMap = Eigen::Map<const EMat>;

void require(bool cond, const std::string& msg) {
  if (!cond) throw DimError(msg);
}

int rows_of(const Tensor& t) {
  return t.shape().size() == 2 ? t.dim(0) : 1;
}
int cols_of(const Tensor& t) {
  return t.shape().size() == 2 ? t.dim(1) : static_cast<int>(t.numel());
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

Tensor make_leaf(std::vector<int> shape, std::vector<double> values,
                 bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  Tensor t(n);
  require(t.numel() == static_cast<int64_t>(n->value.size()),
          "make_leaf: value length does not match shape");
  n->ensure_grad();
  return t;
}

Tensor make_zeros(std::vector<int> shape, bool requires_grad) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return make_leaf(std::move(shape), std::vector<double>(n, 0.0),
                   requires_grad);
}

Tensor Tape::record(std::vector<int> shape, std::vector<double> values,
                    const std::vector<Tensor>& parents,
                    std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  if (grad_) {
    for (const auto& p : parents)
      if (p.requires_grad()) n->requires_grad = true;
    if (n->requires_grad) {
      n->ensure_grad();
      auto node_copy = n;
      n->backward = [node_copy, fn = std::move(backward_fn)]() {
        fn(*node_copy);
      };
      nodes_.push_back(n);
    }
  }
  return Tensor(n);
}

Tensor Tape::custom(std::vector<int> shape, std::vector<double> out_values,
                    const std::vector<Tensor>& parents,
                    std::function<void(Node&)> backward_fn) {
  return record(std::move(shape), std::move(out_values), parents,
                std::move(backward_fn));
}

void Tape::backward(const Tensor& scalar_out) {
  if (!scalar_out.defined() || scalar_out.numel() != 1)
    throw DimError("backward: argument must be a scalar");
  if (!grad_) throw DataError("backward: tape has gradients disabled");
  auto out = scalar_out.node();
  if (!out->requires_grad)
    throw DataError("backward: scalar does not depend on any parameter");
  bool on_tape = false;
  for (const auto& n : nodes_)
    if (n == out) { on_tape = true; break; }
  if (!on_tape) throw DataError("backward: scalar was not produced on this tape");

  out->ensure_grad();
  out->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if ((*it)->backward) (*it)->backward();
}

// ---------------------------------------------------------------------------
// primitives
// ---------------------------------------------------------------------------

Tensor Tape::matmul(const Tensor& a, const Tensor& b, bool transpose_b) {
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul: inputs must be 2-D");
  int M = a.dim(0), K = a.dim(1);
  int N = transpose_b ? b.dim(0) : b.dim(1);
  int Kb = transpose_b ? b.dim(1) : b.dim(0);
  require(K == Kb, "matmul: inner dimensions disagree");

  std::vector<double> out(static_cast<size_t>(M) * N);
  {
    CMap ma(a.values().data(), M, K);
    CMap mb(b.values().data(), b.dim(0), b.dim(1));
    Map mo(out.data(), M, N);
    if (transpose_b)
      mo.noalias() = ma * mb.transpose();
    else
      mo.noalias() = ma * mb;
  }
  auto an = a.node(), bn = b.node();
  return record({M, N}, std::move(out), {a, b},
                [an, bn, M, N, K, transpose_b](Node& o) {
                  CMap g(o.grad.data(), M, N);
                  if (an->requires_grad) {
                    an->ensure_grad();
                    Map ga(an->grad.data(), M, K);
                    CMap mb(bn->value.data(), bn->shape[0], bn->shape[1]);
                    if (transpose_b)
                      ga.noalias() += g * mb;
                    else
                      ga.noalias() += g * mb.transpose();
                  }
                  if (bn->requires_grad) {
                    bn->ensure_grad();
                    Map gb(bn->grad.data(), bn->shape[0], bn->shape[1]);
                    CMap ma(an->value.data(), M, K);
                    if (transpose_b)
                      gb.noalias() += g.transpose() * ma;
                    else
                      gb.noalias() += ma.transpose() * g;
                  }
                });
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  bool broadcast = false;
  if (a.shape() == b.shape()) {
    broadcast = false;
  } else if (a.shape().size() == 2 && b.shape().size() == 2 &&
             b.dim(0) == 1 && b.dim(1) == a.dim(1)) {
    broadcast = true;
  } else {
    throw DimError("add: shapes must match (or b must be a 1 x N row)");
  }
  std::vector<double> out(a.values());
  int R = rows_of(a), C = cols_of(a);
  if (broadcast) {
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c)
        out[static_cast<size_t>(r) * C + c] += b.values()[c];
  } else {
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i];
  }
  auto an = a.node(), bn = b.node();
  return record(a.shape(), std::move(out), {a, b},
                [an, bn, broadcast, R, C](Node& o) {
                  if (an->requires_grad) {
                    an->ensure_grad();
                    for (size_t i = 0; i < o.grad.size(); ++i)
                      an->grad[i] += o.grad[i];
                  }
                  if (bn->requires_grad) {
                    bn->ensure_grad();
                    if (broadcast) {
                      for (int r = 0; r < R; ++r)
                        for (int c = 0; c < C; ++c)
                          bn->grad[c] += o.grad[static_cast<size_t>(r) * C + c];
                    } else {
                      for (size_t i = 0; i < o.grad.size(); ++i)
                        bn->grad[i] += o.grad[i];
                    }
                  }
                });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "mul: shapes must match");
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = a.values()[i] * b.values()[i];
  auto an = a.node(), bn = b.node();
  return record(a.shape(), std::move(out), {a, b}, [an, bn](Node& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i)
        an->grad[i] += o.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < o.grad.size(); ++i)
        bn->grad[i] += o.grad[i] * an->value[i];
    }
  });
}

Tensor Tape::scalar_mul(const Tensor& a, double s) {
  std::vector<double> out(a.values());
  for (auto& v : out) v *= s;
  auto an = a.node();
  return record(a.shape(), std::move(out), {a}, [an, s](Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += s * o.grad[i];
  });
}

Tensor Tape::swish(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double x = a.values()[i];
    out[i] = x * sigmoid(x);
  }
  auto an = a.node();
  return record(a.shape(), std::move(out), {a}, [an](Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i) {
      double x = an->value[i];
      double s = sigmoid(x);
      an->grad[i] += o.grad[i] * (s + x * s * (1.0 - s));
    }
  });
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(0.0, a.values()[i]);
  auto an = a.node();
  return record(a.shape(), std::move(out), {a}, [an](Node& o) {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < o.grad.size(); ++i)
      if (an->value[i] > 0) an->grad[i] += o.grad[i];
  });
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain,
                        const Tensor& bias, double eps) {
  require(x.shape().size() == 2, "layer_norm: input must be 2-D");
  int R = x.dim(0), C = x.dim(1);
  require(gain.numel() == C && bias.numel() == C,
          "layer_norm: gain/bias must be 1 x D");

  std::vector<double> out(static_cast<size_t>(R) * C);
  std::vector<double> mu(R), inv_sigma(R);
  for (int r = 0; r < R; ++r) {
    const double* xr = x.values().data() + static_cast<size_t>(r) * C;
    double m = 0;
    for (int c = 0; c < C; ++c) m += xr[c];
    m /= C;
    double var = 0;
    for (int c = 0; c < C; ++c) var += (xr[c] - m) * (xr[c] - m);
    var /= C;
    mu[r] = m;
    inv_sigma[r] = 1.0 / std::sqrt(var + eps);
    for (int c = 0; c < C; ++c)
      out[static_cast<size_t>(r) * C + c] =
          (xr[c] - m) * inv_sigma[r] * gain.values()[c] + bias.values()[c];
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return record(
      x.shape(), std::move(out), {x, gain, bias},
      [xn, gn, bn, R, C, mu, inv_sigma](Node& o) {
        for (int r = 0; r < R; ++r) {
          const double* xr = xn->value.data() + static_cast<size_t>(r) * C;
          const double* go = o.grad.data() + static_cast<size_t>(r) * C;
          double is = inv_sigma[r], m = mu[r];
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (int c = 0; c < C; ++c)
              gn->grad[c] += go[c] * (xr[c] - m) * is;
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (int c = 0; c < C; ++c) bn->grad[c] += go[c];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            // dxhat = go * gain; dx = is*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
            double mean_dxhat = 0, mean_dxhat_xhat = 0;
            for (int c = 0; c < C; ++c) {
              double dxh = go[c] * gn->value[c];
              double xh = (xr[c] - m) * is;
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xh;
            }
            mean_dxhat /= C;
            mean_dxhat_xhat /= C;
            double* gx = xn->grad.data() + static_cast<size_t>(r) * C;
            for (int c = 0; c < C; ++c) {
              double dxh = go[c] * gn->value[c];
              double xh = (xr[c] - m) * is;
              gx[c] += is * (dxh - mean_dxhat - xh * mean_dxhat_xhat);
            }
          }
        }
      });
}

namespace {

void softmax_rows(const std::vector<double>& in, int R, int C,
                  std::vector<double>* out, bool log_domain) {
  out->resize(in.size());
  for (int r = 0; r < R; ++r) {
    const double* xr = in.data() + static_cast<size_t>(r) * C;
    double* yr = out->data() + static_cast<size_t>(r) * C;
    double mx = xr[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, xr[c]);
    double denom = 0;
    for (int c = 0; c < C; ++c) denom += std::exp(xr[c] - mx);
    if (log_domain) {
      double log_denom = std::log(denom);
      for (int c = 0; c < C; ++c) yr[c] = xr[c] - mx - log_denom;
    } else {
      for (int c = 0; c < C; ++c) yr[c] = std::exp(xr[c] - mx) / denom;
    }
  }
}

}  // namespace

Tensor Tape::softmax(const Tensor& x) {
  require(x.shape().size() == 2, "softmax: input must be 2-D");
  int R = x.dim(0), C = x.dim(1);
  std::vector<double> out;
  softmax_rows(x.values(), R, C, &out, false);
  auto xn = x.node();
  return record(x.shape(), std::move(out), {x}, [xn, R, C](Node& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int r = 0; r < R; ++r) {
      const double* y = o.value.data() + static_cast<size_t>(r) * C;
      const double* go = o.grad.data() + static_cast<size_t>(r) * C;
      double dot = 0;
      for (int c = 0; c < C; ++c) dot += y[c] * go[c];
      double* gx = xn->grad.data() + static_cast<size_t>(r) * C;
      for (int c = 0; c < C; ++c) gx[c] += y[c] * (go[c] - dot);
    }
  });
}

Tensor Tape::log_softmax(const Tensor& x) {
  require(x.shape().size() == 2, "log_softmax: input must be 2-D");
  int R = x.dim(0), C = x.dim(1);
  std::vector<double> out;
  softmax_rows(x.values(), R, C, &out, true);
  auto xn = x.node();
  return record(x.shape(), std::move(out), {x}, [xn, R, C](Node& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (int r = 0; r < R; ++r) {
      const double* y = o.value.data() + static_cast<size_t>(r) * C;
      const double* go = o.grad.data() + static_cast<size_t>(r) * C;
      double gsum = 0;
      for (int c = 0; c < C; ++c) gsum += go[c];
      double* gx = xn->grad.data() + static_cast<size_t>(r) * C;
      for (int c = 0; c < C; ++c) gx[c] += go[c] - std::exp(y[c]) * gsum;
    }
  });
}

Tensor Tape::embedding_lookup(const Tensor& table, std::span<const int> ids) {
  require(table.shape().size() == 2, "embedding_lookup: table must be 2-D");
  int V = table.dim(0), D = table.dim(1);
  int T = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<size_t>(T) * D);
  for (int t = 0; t < T; ++t) {
    int id = ids[t];
    require(id >= 0 && id < V, "embedding_lookup: id out of range");
    std::copy_n(table.values().data() + static_cast<size_t>(id) * D, D,
                out.data() + static_cast<size_t>(t) * D);
  }
  auto tn = table.node();
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return record({T, D}, std::move(out), {table},
                [tn, ids_copy, D](Node& o) {
                  if (!tn->requires_grad) return;
                  tn->ensure_grad();
                  for (size_t t = 0; t < ids_copy.size(); ++t) {
                    double* gt =
                        tn->grad.data() + static_cast<size_t>(ids_copy[t]) * D;
                    const double* go = o.grad.data() + t * D;
                    for (int d = 0; d < D; ++d) gt[d] += go[d];
                  }
                });
}

Tensor Tape::conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                    int kernel, int stride, bool causal_pad) {
  require(x.shape().size() == 2 && w.shape().size() == 2,
          "conv1d: inputs must be 2-D");
  int T = x.dim(0), Din = x.dim(1);
  int Dout = w.dim(0);
  require(w.dim(1) == kernel * Din, "conv1d: weight must be Dout x (K*Din)");
  require(bias.numel() == Dout, "conv1d: bias must be 1 x Dout");
  require(stride >= 1 && kernel >= 1, "conv1d: bad kernel/stride");

  const int pad_total = kernel - 1;
  const int pad_left = causal_pad ? pad_total : pad_total / 2;
  const int T_out = (T - 1) / stride + 1;

  // im2col: T_out x (K*Din), zero padded outside [0, T)
  std::vector<double> col(static_cast<size_t>(T_out) * kernel * Din, 0.0);
  for (int to = 0; to < T_out; ++to) {
    int start = to * stride - pad_left;
    for (int k = 0; k < kernel; ++k) {
      int ti = start + k;
      if (ti < 0 || ti >= T) continue;
      std::copy_n(x.values().data() + static_cast<size_t>(ti) * Din, Din,
                  col.data() + (static_cast<size_t>(to) * kernel + k) * Din);
    }
  }
  std::vector<double> out(static_cast<size_t>(T_out) * Dout);
  {
    CMap mc(col.data(), T_out, kernel * Din);
    CMap mw(w.values().data(), Dout, kernel * Din);
    Map mo(out.data(), T_out, Dout);
    mo.noalias() = mc * mw.transpose();
    for (int t = 0; t < T_out; ++t)
      for (int d = 0; d < Dout; ++d) out[static_cast<size_t>(t) * Dout + d] += bias.values()[d];
  }
  auto xn = x.node(), wn = w.node(), bn = bias.node();
  return record(
      {T_out, Dout}, std::move(out), {x, w, bias},
      [xn, wn, bn, col = std::move(col), T, Din, Dout, kernel, stride,
       pad_left, T_out](Node& o) {
        CMap g(o.grad.data(), T_out, Dout);
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int t = 0; t < T_out; ++t)
            for (int d = 0; d < Dout; ++d)
              bn->grad[d] += o.grad[static_cast<size_t>(t) * Dout + d];
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          Map gw(wn->grad.data(), Dout, kernel * Din);
          CMap mc(col.data(), T_out, kernel * Din);
          gw.noalias() += g.transpose() * mc;
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          // dcol = g * W, then col2im scatter
          EMat dcol = g * CMap(wn->value.data(), Dout, kernel * Din);
          for (int to = 0; to < T_out; ++to) {
            int start = to * stride - pad_left;
            for (int k = 0; k < kernel; ++k) {
              int ti = start + k;
              if (ti < 0 || ti >= T) continue;
              double* gx = xn->grad.data() + static_cast<size_t>(ti) * Din;
              for (int d = 0; d < Din; ++d)
                gx[d] += dcol(to, k * Din + d);
            }
          }
        }
      });
}

Tensor Tape::avg_downsample(const Tensor& x, int factor) {
  require(x.shape().size() == 2, "avg_downsample: input must be 2-D");
  require(factor >= 1, "avg_downsample: factor must be >= 1");
  int T = x.dim(0), D = x.dim(1);
  int T_out = (T + factor - 1) / factor;
  std::vector<double> out(static_cast<size_t>(T_out) * D, 0.0);
  for (int j = 0; j < T_out; ++j) {
    int lo = j * factor, hi = std::min(T, lo + factor);
    for (int t = lo; t < hi; ++t)
      for (int d = 0; d < D; ++d)
        out[static_cast<size_t>(j) * D + d] += x.values()[static_cast<size_t>(t) * D + d];
    for (int d = 0; d < D; ++d)
      out[static_cast<size_t>(j) * D + d] /= (hi - lo);
  }
  auto xn = x.node();
  return record({T_out, D}, std::move(out), {x},
                [xn, T, D, factor, T_out](Node& o) {
                  if (!xn->requires_grad) return;
                  xn->ensure_grad();
                  for (int j = 0; j < T_out; ++j) {
                    int lo = j * factor, hi = std::min(T, lo + factor);
                    double inv = 1.0 / (hi - lo);
                    for (int t = lo; t < hi; ++t)
                      for (int d = 0; d < D; ++d)
                        xn->grad[static_cast<size_t>(t) * D + d] +=
                            o.grad[static_cast<size_t>(j) * D + d] * inv;
                  }
                });
}

Tensor Tape::nearest_upsample(const Tensor& x, int factor) {
  require(x.shape().size() == 2, "nearest_upsample: input must be 2-D");
  require(factor >= 1, "nearest_upsample: factor must be >= 1");
  int T = x.dim(0), D = x.dim(1);
  int T_out = T * factor;
  std::vector<double> out(static_cast<size_t>(T_out) * D);
  for (int j = 0; j < T_out; ++j)
    std::copy_n(x.values().data() + static_cast<size_t>(j / factor) * D, D,
                out.data() + static_cast<size_t>(j) * D);
  auto xn = x.node();
  return record({T_out, D}, std::move(out), {x},
                [xn, D, factor, T_out](Node& o) {
                  if (!xn->requires_grad) return;
                  xn->ensure_grad();
                  for (int j = 0; j < T_out; ++j) {
                    const double* go = o.grad.data() + static_cast<size_t>(j) * D;
                    double* gx =
                        xn->grad.data() + static_cast<size_t>(j / factor) * D;
                    for (int d = 0; d < D; ++d) gx[d] += go[d];
                  }
                });
}

Tensor Tape::concat(const Tensor& a, const Tensor& b, int axis) {
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "concat: inputs must be 2-D");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  int Ra = a.dim(0), Ca = a.dim(1), Rb = b.dim(0), Cb = b.dim(1);
  std::vector<double> out;
  std::vector<int> shape;
  if (axis == 0) {
    require(Ca == Cb, "concat: column counts disagree");
    shape = {Ra + Rb, Ca};
    out.reserve(static_cast<size_t>(Ra + Rb) * Ca);
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
  } else {
    require(Ra == Rb, "concat: row counts disagree");
    shape = {Ra, Ca + Cb};
    out.resize(static_cast<size_t>(Ra) * (Ca + Cb));
    for (int r = 0; r < Ra; ++r) {
      std::copy_n(a.values().data() + static_cast<size_t>(r) * Ca, Ca,
                  out.data() + static_cast<size_t>(r) * (Ca + Cb));
      std::copy_n(b.values().data() + static_cast<size_t>(r) * Cb, Cb,
                  out.data() + static_cast<size_t>(r) * (Ca + Cb) + Ca);
    }
  }
  auto an = a.node(), bn = b.node();
  return record(std::move(shape), std::move(out), {a, b},
                [an, bn, axis, Ra, Ca, Cb](Node& o) {
                  if (axis == 0) {
                    size_t na = an->value.size();
                    if (an->requires_grad) {
                      an->ensure_grad();
                      for (size_t i = 0; i < na; ++i) an->grad[i] += o.grad[i];
                    }
                    if (bn->requires_grad) {
                      bn->ensure_grad();
                      for (size_t i = 0; i < bn->value.size(); ++i)
                        bn->grad[i] += o.grad[na + i];
                    }
                  } else {
                    int C = Ca + Cb;
                    if (an->requires_grad) {
                      an->ensure_grad();
                      for (int r = 0; r < Ra; ++r)
                        for (int c = 0; c < Ca; ++c)
                          an->grad[static_cast<size_t>(r) * Ca + c] +=
                              o.grad[static_cast<size_t>(r) * C + c];
                    }
                    if (bn->requires_grad) {
                      bn->ensure_grad();
                      for (int r = 0; r < Ra; ++r)
                        for (int c = 0; c < Cb; ++c)
                          bn->grad[static_cast<size_t>(r) * Cb + c] +=
                              o.grad[static_cast<size_t>(r) * C + Ca + c];
                    }
                  }
                });
}

Tensor Tape::slice(const Tensor& x, int r0, int r1, int c0, int c1) {
  require(x.shape().size() == 2, "slice: input must be 2-D");
  int R = x.dim(0), C = x.dim(1);
  if (c0 < 0) c0 = 0;
  if (c1 < 0) c1 = C;
  require(0 <= r0 && r0 < r1 && r1 <= R && 0 <= c0 && c0 < c1 && c1 <= C,
          "slice: range out of bounds");
  int Ro = r1 - r0, Co = c1 - c0;
  std::vector<double> out(static_cast<size_t>(Ro) * Co);
  for (int r = 0; r < Ro; ++r)
    std::copy_n(x.values().data() + static_cast<size_t>(r0 + r) * C + c0, Co,
                out.data() + static_cast<size_t>(r) * Co);
  auto xn = x.node();
  return record({Ro, Co}, std::move(out), {x},
                [xn, r0, c0, C, Ro, Co](Node& o) {
                  if (!xn->requires_grad) return;
                  xn->ensure_grad();
                  for (int r = 0; r < Ro; ++r)
                    for (int c = 0; c < Co; ++c)
                      xn->grad[static_cast<size_t>(r0 + r) * C + c0 + c] +=
                          o.grad[static_cast<size_t>(r) * Co + c];
                });
}

Tensor Tape::masked_select(const Tensor& x, std::span<const uint8_t> row_mask) {
  require(x.shape().size() == 2, "masked_select: input must be 2-D");
  int R = x.dim(0), C = x.dim(1);
  require(static_cast<int>(row_mask.size()) == R,
          "masked_select: mask length must equal row count");
  std::vector<int> keep;
  for (int r = 0; r < R; ++r)
    if (row_mask[r]) keep.push_back(r);
  int Ro = static_cast<int>(keep.size());
  std::vector<double> out(static_cast<size_t>(Ro) * C);
  for (int i = 0; i < Ro; ++i)
    std::copy_n(x.values().data() + static_cast<size_t>(keep[i]) * C, C,
                out.data() + static_cast<size_t>(i) * C);
  auto xn = x.node();
  return record({Ro, C}, std::move(out), {x},
                [xn, keep = std::move(keep), C](Node& o) {
                  if (!xn->requires_grad) return;
                  xn->ensure_grad();
                  for (size_t i = 0; i < keep.size(); ++i) {
                    const double* go = o.grad.data() + i * C;
                    double* gx =
                        xn->grad.data() + static_cast<size_t>(keep[i]) * C;
                    for (int c = 0; c < C; ++c) gx[c] += go[c];
                  }
                });
}

Tensor Tape::cross_entropy(const Tensor& logits, std::span<const int> ids) {
  require(logits.shape().size() == 2, "cross_entropy: logits must be 2-D");
  int R = logits.dim(0), C = logits.dim(1);
  require(static_cast<int>(ids.size()) == R,
          "cross_entropy: one class id per row required");
  require(R >= 1, "cross_entropy: need at least one row");
  for (int id : ids)
    require(id >= 0 && id < C, "cross_entropy: class id out of range");

  std::vector<double> probs;
  softmax_rows(logits.values(), R, C, &probs, false);
  double loss = 0;
  for (int r = 0; r < R; ++r) {
    double p = probs[static_cast<size_t>(r) * C + ids[r]];
    loss -= std::log(std::max(p, 1e-300));
  }
  loss /= R;
  auto ln = logits.node();
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return record({1}, {loss}, {logits},
                [ln, ids_copy, probs = std::move(probs), R, C](Node& o) {
                  if (!ln->requires_grad) return;
                  ln->ensure_grad();
                  double g = o.grad[0] / R;
                  for (int r = 0; r < R; ++r) {
                    double* gl = ln->grad.data() + static_cast<size_t>(r) * C;
                    const double* p = probs.data() + static_cast<size_t>(r) * C;
                    for (int c = 0; c < C; ++c) gl[c] += g * p[c];
                    gl[ids_copy[r]] -= g;
                  }
                });
}

Tensor Tape::sum(const Tensor& x) {
  double s = 0;
  for (double v : x.values()) s += v;
  auto xn = x.node();
  return record({1}, {s}, {x}, [xn](Node& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (auto& g : xn->grad) g += o.grad[0];
  });
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double eps) {
  Tensor probe = make_leaf(x.shape(), x.values(), true);
  Tape tape;
  Tensor y = f(tape, probe);
  if (y.numel() != 1) throw DimError("grad_check: f must return a scalar");
  tape.backward(y);
  std::vector<double> analytic = probe.grad();

  Tensor work = make_leaf(x.shape(), x.values(), false);
  double max_rel = 0;
  for (size_t i = 0; i < work.values().size(); ++i) {
    double orig = work.values()[i];
    work.values()[i] = orig + eps;
    Tape tp(false);
    double fp = f(tp, work).scalar();
    work.values()[i] = orig - eps;
    Tape tm(false);
    double fm = f(tm, work).scalar();
    work.values()[i] = orig;
    double numeric = (fp - fm) / (2 * eps);
    double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-8});
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

double grad_check_params(const std::function<Tensor(Tape&)>& f,
                         const std::vector<Tensor>& params, double eps) {
  for (const auto& p : params) const_cast<Tensor&>(p).zero_grad();
  Tape tape;
  Tensor y = f(tape);
  if (y.numel() != 1) throw DimError("grad_check_params: f must return a scalar");
  tape.backward(y);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p.grad());

  double max_rel = 0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (size_t i = 0; i < p.values().size(); ++i) {
      double orig = p.values()[i];
      p.values()[i] = orig + eps;
      Tape tp(false);
      double fp = f(tp).scalar();
      p.values()[i] = orig - eps;
      Tape tm(false);
      double fm = f(tm).scalar();
      p.values()[i] = orig;
      double numeric = (fp - fm) / (2 * eps);
      double a = analytic[pi][i];
      double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
      max_rel = std::max(max_rel, std::fabs(a - numeric) / denom);
    }
  }
  return max_rel;
}

}  // namespace sslasr::ad
