#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "traject/params.hpp"
#include "traject/rng.hpp"
#include "traject/tensor.hpp"

namespace traject::diff {

using NodeId = int;

struct TapeOptions {
  bool train = false;                   // enables dropout and batch statistics
  bool update_batchnorm_stats = true;   // only honored when train is true
  bool check_finite = true;
  std::uint64_t seed = 0;               // stream for dropout masks
};

// Eager reverse-mode tape. Every op computes its value immediately and
// records a backward closure; creation order is a topological order, so the
// backward pass is a single reverse sweep visiting each node exactly once.
class Tape {
 public:
  explicit Tape(TapeOptions opts = {});
  Tape(TapeOptions opts, ParamStore* store);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const TapeOptions& options() const { return opts_; }
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // Leaves.
  NodeId constant(Tensor value, std::string name = "");
  NodeId leaf(Tensor value, std::string name = "");  // differentiable input
  NodeId use_param(const std::string& name);         // bound store parameter, cached per name
  const std::map<std::string, NodeId>& bound_params() const { return bound_; }

  // Ops.
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);          // same shape
  NodeId add_rowvec(NodeId a, NodeId v);   // (m x n) + (1 x n)
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);          // elementwise
  NodeId mul_colvec(NodeId a, NodeId v);   // (m x n) * (m x 1), column broadcast
  NodeId div(NodeId a, NodeId b);          // elementwise
  NodeId maximum(NodeId a, NodeId b);      // elementwise; ties route the gradient to a
  NodeId scale(NodeId a, double c);
  NodeId add_const(NodeId a, double c);
  NodeId neg(NodeId a) { return scale(a, -1.0); }
  NodeId exp(NodeId a);
  NodeId log(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId square(NodeId a) { return mul(a, a); }
  NodeId softplus(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId softmax_rows(NodeId a);
  NodeId log_softmax_rows(NodeId a);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId concat_rows(const std::vector<NodeId>& parts);
  NodeId slice_cols(NodeId a, int c0, int c1);  // half-open [c0, c1)
  NodeId slice_rows(NodeId a, int r0, int r1);
  NodeId sum(NodeId a);       // -> 1x1
  NodeId mean(NodeId a);      // -> 1x1
  NodeId row_sum(NodeId a);   // (m x n) -> (m x 1)
  NodeId dropout(NodeId a, double p);  // identity in eval mode
  NodeId batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor* run_mean, Tensor* run_var,
                   double momentum, double eps);

  void backward(NodeId loss);
  bool backward_run() const { return backward_run_; }

  const Tensor& value(NodeId id) const;
  // Gradient of the loss w.r.t. node id; zero tensor if the loss does not
  // depend on it. Valid only after backward().
  Tensor grad(NodeId id) const;
  bool requires_grad(NodeId id) const;

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // lazily allocated during backward
    bool requires_grad = false;
    std::string name;
    std::function<void()> back;
  };

  NodeId push(Tensor value, bool needs_grad, std::string name);
  Node& node(NodeId id);
  const Node& node(NodeId id) const;
  Tensor& ensure_grad(NodeId id);
  bool has_grad(NodeId id) const;
  void check_finite(NodeId id) const;

  TapeOptions opts_;
  ParamStore* store_ = nullptr;
  std::map<std::string, NodeId> bound_;
  std::vector<Node> nodes_;
  Rng rng_;
  bool backward_run_ = false;
};

}  // namespace traject::diff
