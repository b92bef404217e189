// Copyright 2026 sslasr authors
// Licensed under the Apache License, Version 2.0

#ifndef SSLASR_TENSOR_HPP
#define SSLASR_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sslasr::ad {

/// Storage node shared between tensor handles. Values are doubles; wire
/// formats remain 32-bit (conversion happens at checkpoint boundaries).
struct Node {
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value when requires_grad
  bool requires_grad = false;
  std::function<void()> backward;  // set only for tape-recorded ops

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }
  void ensure_grad() {
    if (requires_grad && grad.size() != value.size())
      grad.assign(value.size(), 0.0);
  }
};

/// Lightweight handle to a Node. Copies share storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[i]; }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }

  double scalar() const { return node_->value[0]; }
  void zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Creates a free leaf (not owned by any tape). Parameters are leaves with
/// requires_grad; their grads accumulate across backward calls until the
/// optimizer clears them.
Tensor make_leaf(std::vector<int> shape, std::vector<double> values,
                 bool requires_grad = false);
Tensor make_zeros(std::vector<int> shape, bool requires_grad = false);

/// Reverse-mode tape. Ops record their backward closures in execution
/// order; backward() replays them in reverse. A tape constructed with
/// grad_enabled = false only computes values (no graph is kept), which is
/// the inference mode.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_; }
  size_t size() const { return nodes_.size(); }

  // --- primitives ------------------------------------------------------
  // a: M x K, b: K x N (or N x K with transpose_b) -> M x N
  Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false);
  // same shape, or b is 1 x N broadcast over rows of a
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
  Tensor scalar_mul(const Tensor& a, double s);
  Tensor swish(const Tensor& a);  // x * sigmoid(x)
  Tensor relu(const Tensor& a);
  // row-wise normalization with per-column gain/bias (each 1 x D)
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps = 1e-5);
  Tensor softmax(const Tensor& x);      // over the last dimension, per row
  Tensor log_softmax(const Tensor& x);
  // table: V x D, ids in [0, V) -> |ids| x D
  Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
  // x: T x Din, w: Dout x (K*Din), bias: 1 x Dout. Total padding is K-1,
  // split symmetrically (odd K) or entirely on the left when causal.
  // T_out = floor((T - 1) / stride) + 1.
  Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                int kernel, int stride, bool causal_pad);
  // over time (rows); T_out = ceil(T / factor), last window may be partial
  Tensor avg_downsample(const Tensor& x, int factor);
  Tensor nearest_upsample(const Tensor& x, int factor);  // T_out = T * factor
  Tensor concat(const Tensor& a, const Tensor& b, int axis);  // 2-D, axis 0/1
  // rows [r0, r1) and cols [c0, c1); negative c0/c1 keep all columns
  Tensor slice(const Tensor& x, int r0, int r1, int c0 = -1, int c1 = -1);
  // keeps rows where mask is nonzero
  Tensor masked_select(const Tensor& x, std::span<const uint8_t> row_mask);
  // mean over rows of -log softmax(row)[id]
  Tensor cross_entropy(const Tensor& logits, std::span<const int> ids);
  Tensor sum(const Tensor& x);  // scalar

  /// Registers a custom op: out_values already computed from parents;
  /// backward_fn runs during the reverse sweep (capture nodes by value).
  Tensor custom(std::vector<int> shape, std::vector<double> out_values,
                const std::vector<Tensor>& parents,
                std::function<void(Node& out)> backward_fn);

  /// Seeds d(scalar)/d(scalar) = 1 and accumulates grads into every
  /// requires_grad ancestor. The argument must be a scalar made by this
  /// tape.
  void backward(const Tensor& scalar_out);

 private:
  friend class TapeOps;
  Tensor record(std::vector<int> shape, std::vector<double> values,
                const std::vector<Tensor>& parents,
                std::function<void(Node&)> backward_fn);

  bool grad_;
  std::vector<std::shared_ptr<Node>> nodes_;
};

/// Central-difference gradient check of f against the analytic grads of x.
/// Returns the max relative error with denominator max(|a|, |n|, 1e-8).
/// f must build its graph on the tape it is given.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-4);

/// Same, over a set of parameters; f is evaluated with the parameters
/// perturbed in place.
double grad_check_params(const std::function<Tensor(Tape&)>& f,
                         const std::vector<Tensor>& params,
                         double eps = 1e-4);

}  // namespace sslasr::ad

#endif  // SSLASR_TENSOR_HPP
