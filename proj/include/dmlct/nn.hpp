#pragma once

#include "dmlct/common.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace dmlct::nn {

/// Dense row-major tensor of doubles. Rank is carried by `shape`; ops check
/// the ranks they support (4D feature maps, 2D matrices, scalars).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) { v.assign(numel(shape), 0.0); }
  Tensor(std::vector<int> s, double fill) : shape(std::move(s)) { v.assign(numel(shape), fill); }

  static std::size_t numel(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) fail("shape", "non-positive dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // 4D accessors (n, c, h, w)
  double& at4(int n, int c, int h, int w) {
    return v[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const double& at4(int n, int c, int h, int w) const {
    return v[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  // 2D accessors (r, c)
  double& at2(int r, int c) { return v[static_cast<std::size_t>(r) * shape[1] + c]; }
  const double& at2(int r, int c) const { return v[static_cast<std::size_t>(r) * shape[1] + c]; }

  double scalar() const {
    if (size() != 1) fail("shape", "tensor is not a scalar");
    return v[0];
  }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

Tensor tensor_from_mat(const Mat& m);          // (1, 1, rows, cols)
Mat mat_from_tensor(const Tensor& t);          // accepts (h, w) or (1, 1, h, w)

/// Value plus accumulated gradient. Parameters are long-lived nodes reused
/// across graphs; intermediates are owned by the graph that created them.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::string name;  // set for parameters

  void ensure_grad() {
    if (grad.shape != value.shape) grad = Tensor(value.shape);
  }
  void zero_grad() {
    if (grad.shape == value.shape)
      std::fill(grad.v.begin(), grad.v.end(), 0.0);
    else
      grad = Tensor(value.shape);
  }
};

using NodeRef = std::shared_ptr<Node>;

NodeRef make_param(std::string name, Tensor value);
NodeRef make_const(Tensor value);

/// Reverse-mode tape. Ops append backward closures during the forward pass;
/// backward() replays them last-to-first. With grad disabled nothing is
/// recorded and forward values are still produced (inference mode).
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  NodeRef track(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_enabled_;
    if (n->requires_grad) n->ensure_grad();
    nodes_.push_back(n);
    return n;
  }

  void record(std::function<void()> backward_fn) {
    if (grad_enabled_) tape_.push_back(std::move(backward_fn));
  }

  void backward(const NodeRef& loss);

  std::size_t tape_size() const { return tape_.size(); }

 private:
  bool grad_enabled_;
  bool backward_done_ = false;
  std::vector<std::function<void()>> tape_;
  std::vector<NodeRef> nodes_;
};

// ---- elementwise / structural ops ----
NodeRef add(Graph& g, NodeRef a, NodeRef b);
NodeRef sub(Graph& g, NodeRef a, NodeRef b);
NodeRef add_scaled(Graph& g, NodeRef a, NodeRef b, double s);  // a + s*b
NodeRef scale(Graph& g, NodeRef a, double s);
NodeRef add_const(Graph& g, NodeRef a, double c);
NodeRef leaky_relu(Graph& g, NodeRef x, double slope = 0.2);
NodeRef exp_of(Graph& g, NodeRef x);
NodeRef square(Graph& g, NodeRef x);
NodeRef concat_channels(Graph& g, const std::vector<NodeRef>& xs);
NodeRef detach(Graph& g, const NodeRef& x);

// ---- conv stack ----
// x: (N, Cin, H, W); w: (Cout, Cin, kh, kw); b: (Cout)
NodeRef conv2d(Graph& g, NodeRef x, NodeRef w, NodeRef b, int stride, int pad);
NodeRef avg_pool2x2(Graph& g, NodeRef x);
// per-channel normalization over H*W per sample; gamma/beta: (C)
NodeRef instance_norm(Graph& g, NodeRef x, NodeRef gamma, NodeRef beta, double eps = 1e-5);

// ---- embedding path ----
// pick K feature vectors out of item `n` of a (N, C, H, W) map -> (K, C)
NodeRef gather_locations(Graph& g, NodeRef x, int n, const std::vector<std::pair<int, int>>& locs);
// x: (K, Cin); w: (Cout, Cin); b: (Cout) -> (K, Cout)
NodeRef linear(Graph& g, NodeRef x, NodeRef w, NodeRef b);
// rows to unit L2 norm; Error("degenerate-embedding") when a norm is < 1e-12
NodeRef l2_normalize_rows(Graph& g, NodeRef x);
// (K, D) x (M, D) -> (K, M) similarity matrix a.b^T
NodeRef matmul_nt(Graph& g, NodeRef a, NodeRef b);

// ---- reductions (scalar results) ----
NodeRef mean_all(Graph& g, NodeRef x);
NodeRef diag_mean(Graph& g, NodeRef m);
// mean over ordered off-diagonal pairs; zero constant for 1x1 input
NodeRef offdiag_mean(Graph& g, NodeRef m);
NodeRef mean_abs_diff(Graph& g, NodeRef a, NodeRef b);

/// Adam with bias correction; state is per-parameter and serializable.
class Adam {
 public:
  Adam(std::vector<NodeRef> params, double beta1, double beta2, double eps = 1e-8);

  void zero_grad();
  void step(double lr);

  const std::vector<NodeRef>& params() const { return params_; }

  struct State {
    std::int64_t t = 0;
    std::vector<Tensor> m, v;
  };
  const State& state() const { return state_; }
  void set_state(State s);

 private:
  std::vector<NodeRef> params_;
  double beta1_, beta2_, eps_;
  State state_;
};

/// fan-in scaled normal init for conv / linear weights
void init_normal_fan_in(Tensor& w, int fan_in, Rng& rng);

}  // namespace dmlct::nn
