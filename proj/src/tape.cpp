#include "traject/tape.hpp"

#include <cmath>

namespace traject::diff {

namespace {

double sigmoid_val(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_val(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

Tape::Tape(TapeOptions opts) : opts_(opts), rng_(derive_seed(opts.seed, "dropout")) {}

Tape::Tape(TapeOptions opts, ParamStore* store) : Tape(opts) { store_ = store; }

NodeId Tape::push(Tensor value, bool needs_grad, std::string name) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs_grad;
  n.name = std::move(name);
  nodes_.push_back(std::move(n));
  const NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
  check_finite(id);
  return id;
}

Tape::Node& Tape::node(NodeId id) {
  require(id >= 0 && id < node_count(), "invalid node id ", id);
  return nodes_[id];
}

const Tape::Node& Tape::node(NodeId id) const {
  require(id >= 0 && id < node_count(), "invalid node id ", id);
  return nodes_[id];
}

void Tape::check_finite(NodeId id) const {
  if (!opts_.check_finite) return;
  const Node& n = nodes_[id];
  if (!n.value.all_finite())
    fail("non-finite value in node #", id, " (", n.name, ")");
}

NodeId Tape::constant(Tensor value, std::string name) {
  return push(std::move(value), false, name.empty() ? "constant" : std::move(name));
}

NodeId Tape::leaf(Tensor value, std::string name) {
  return push(std::move(value), true, name.empty() ? "leaf" : std::move(name));
}

NodeId Tape::use_param(const std::string& name) {
  require(store_ != nullptr, "tape has no parameter store, cannot bind '", name, "'");
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const auto& e = store_->entry(name);
  const NodeId id = push(e.value, e.trainable, name);
  bound_.emplace(name, id);
  return id;
}

const Tensor& Tape::value(NodeId id) const { return node(id).value; }

bool Tape::requires_grad(NodeId id) const { return node(id).requires_grad; }

Tensor Tape::grad(NodeId id) const {
  require(backward_run_, "grad() called before backward()");
  const Node& n = node(id);
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

Tensor& Tape::ensure_grad(NodeId id) {
  Node& n = node(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Tape::has_grad(NodeId id) const { return !node(id).grad.empty(); }

void Tape::backward(NodeId loss) {
  require(!backward_run_, "backward() may run only once per tape");
  const Node& ln = node(loss);
  require(ln.value.rows() == 1 && ln.value.cols() == 1,
          "backward() requires a scalar loss, got ", ln.value.shape_str());
  require(ln.requires_grad, "loss does not depend on any differentiable input");
  ensure_grad(loss)(0, 0) = 1.0;
  backward_run_ = true;
  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.back || n.grad.empty()) continue;
    n.back();
  }
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  Tensor out;
  matmul_nn(out, A, B);
  const bool req = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(out), req, "matmul");
  if (req)
    nodes_[id].back = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      if (nodes_[a].requires_grad) matmul_nt(ensure_grad(a), g, nodes_[b].value, true);
      if (nodes_[b].requires_grad) matmul_tn(ensure_grad(b), nodes_[a].value, g, true);
    };
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "add shape mismatch: ", A.shape_str(), " vs ", B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += B.data()[i];
  const bool req = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(out), req, "add");
  if (req)
    nodes_[id].back = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      for (NodeId in : {a, b}) {
        if (!nodes_[in].requires_grad) continue;
        Tensor& gi = ensure_grad(in);
        for (std::size_t i = 0; i < gi.size(); ++i) gi.data()[i] += g.data()[i];
      }
    };
  return id;
}

NodeId Tape::add_rowvec(NodeId a, NodeId v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  require(V.rows() == 1 && V.cols() == A.cols(),
          "add_rowvec shape mismatch: ", A.shape_str(), " + ", V.shape_str());
  Tensor out = A;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) += V(0, j);
  const bool req = requires_grad(a) || requires_grad(v);
  const NodeId id = push(std::move(out), req, "add_rowvec");
  if (req)
    nodes_[id].back = [this, id, a, v]() {
      const Tensor& g = nodes_[id].grad;
      if (nodes_[a].requires_grad) {
        Tensor& ga = ensure_grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i];
      }
      if (nodes_[v].requires_grad) {
        Tensor& gv = ensure_grad(v);
        for (int i = 0; i < g.rows(); ++i)
          for (int j = 0; j < g.cols(); ++j) gv(0, j) += g(i, j);
      }
    };
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "sub shape mismatch: ", A.shape_str(), " vs ", B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= B.data()[i];
  const bool req = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(out), req, "sub");
  if (req)
    nodes_[id].back = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      if (nodes_[a].requires_grad) {
        Tensor& ga = ensure_grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i];
      }
      if (nodes_[b].requires_grad) {
        Tensor& gb = ensure_grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] -= g.data()[i];
      }
    };
  return id;
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "mul shape mismatch: ", A.shape_str(), " vs ", B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= B.data()[i];
  const bool req = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(out), req, "mul");
  if (req)
    nodes_[id].back = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      if (nodes_[a].requires_grad) {
        Tensor& ga = ensure_grad(a);
        const Tensor& B2 = nodes_[b].value;
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] * B2.data()[i];
      }
      if (nodes_[b].requires_grad) {
        Tensor& gb = ensure_grad(b);
        const Tensor& A2 = nodes_[a].value;
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data()[i] += g.data()[i] * A2.data()[i];
      }
    };
  return id;
}

NodeId Tape::mul_colvec(NodeId a, NodeId v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  require(V.cols() == 1 && V.rows() == A.rows(),
          "mul_colvec shape mismatch: ", A.shape_str(), " * ", V.shape_str());
  Tensor out = A;
  for (int i = 0; i < out.rows(); ++i) {
    const double s = V(i, 0);
    for (int j = 0; j < out.cols(); ++j) out(i, j) *= s;
  }
  const bool req = requires_grad(a) || requires_grad(v);
  const NodeId id = push(std::move(out), req, "mul_colvec");
  if (req)
    nodes_[id].back = [this, id, a, v]() {
      const Tensor& g = nodes_[id].grad;
      if (nodes_[a].requires_grad) {
        Tensor& ga = ensure_grad(a);
        const Tensor& V2 = nodes_[v].value;
        for (int i = 0; i < g.rows(); ++i) {
          const double s = V2(i, 0);
          for (int j = 0; j < g.cols(); ++j) ga(i, j) += g(i, j) * s;
        }
      }
      if (nodes_[v].requires_grad) {
        Tensor& gv = ensure_grad(v);
        const Tensor& A2 = nodes_[a].value;
        for (int i = 0; i < g.rows(); ++i) {
          double acc = 0.0;
          for (int j = 0; j < g.cols(); ++j) acc += g(i, j) * A2(i, j);
          gv(i, 0) += acc;
        }
      }
    };
  return id;
}

NodeId Tape::div(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "div shape mismatch: ", A.shape_str(), " vs ", B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] /= B.data()[i];
  const bool req = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(out), req, "div");
  if (req)
    nodes_[id].back = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& out2 = nodes_[id].value;
      const Tensor& B2 = nodes_[b].value;
      if (nodes_[a].requires_grad) {
        Tensor& ga = ensure_grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] / B2.data()[i];
      }
      if (nodes_[b].requires_grad) {
        Tensor& gb = ensure_grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i)
          gb.data()[i] -= g.data()[i] * out2.data()[i] / B2.data()[i];
      }
    };
  return id;
}

NodeId Tape::maximum(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), "maximum shape mismatch: ", A.shape_str(), " vs ", B.shape_str());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (B.data()[i] > out.data()[i]) out.data()[i] = B.data()[i];
  const bool req = requires_grad(a) || requires_grad(b);
  const NodeId id = push(std::move(out), req, "maximum");
  if (req)
    nodes_[id].back = [this, id, a, b]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& A2 = nodes_[a].value;
      const Tensor& B2 = nodes_[b].value;
      if (nodes_[a].requires_grad) {
        Tensor& ga = ensure_grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i)
          if (A2.data()[i] >= B2.data()[i]) ga.data()[i] += g.data()[i];
      }
      if (nodes_[b].requires_grad) {
        Tensor& gb = ensure_grad(b);
        for (std::size_t i = 0; i < gb.size(); ++i)
          if (B2.data()[i] > A2.data()[i]) gb.data()[i] += g.data()[i];
      }
    };
  return id;
}

NodeId Tape::scale(NodeId a, double c) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= c;
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "scale");
  if (req)
    nodes_[id].back = [this, id, a, c]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] * c;
    };
  return id;
}

NodeId Tape::add_const(NodeId a, double c) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += c;
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "add_const");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i];
    };
  return id;
}

NodeId Tape::exp(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::exp(out.data()[i]);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "exp");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& out2 = nodes_[id].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] * out2.data()[i];
    };
  return id;
}

NodeId Tape::log(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::log(out.data()[i]);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "log");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& A2 = nodes_[a].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] / A2.data()[i];
    };
  return id;
}

NodeId Tape::sqrt(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::sqrt(out.data()[i]);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "sqrt");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& out2 = nodes_[id].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data()[i] += g.data()[i] * 0.5 / out2.data()[i];
    };
  return id;
}

NodeId Tape::softplus(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = softplus_val(out.data()[i]);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "softplus");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& A2 = nodes_[a].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data()[i] += g.data()[i] * sigmoid_val(A2.data()[i]);
    };
  return id;
}

NodeId Tape::sigmoid(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = sigmoid_val(out.data()[i]);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "sigmoid");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& out2 = nodes_[id].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double s = out2.data()[i];
        ga.data()[i] += g.data()[i] * s * (1.0 - s);
      }
    };
  return id;
}

NodeId Tape::tanh(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = std::tanh(out.data()[i]);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "tanh");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& out2 = nodes_[id].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        const double t = out2.data()[i];
        ga.data()[i] += g.data()[i] * (1.0 - t * t);
      }
    };
  return id;
}

NodeId Tape::relu(NodeId a) {
  Tensor out = value(a);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out.data()[i] < 0.0) out.data()[i] = 0.0;
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "relu");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& A2 = nodes_[a].value;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (A2.data()[i] > 0.0) ga.data()[i] += g.data()[i];
    };
  return id;
}

NodeId Tape::softmax_rows(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.rows(), A.cols());
  for (int i = 0; i < A.rows(); ++i) {
    double mx = A(i, 0);
    for (int j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols(); ++j) {
      out(i, j) = std::exp(A(i, j) - mx);
      z += out(i, j);
    }
    for (int j = 0; j < A.cols(); ++j) out(i, j) /= z;
  }
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "softmax_rows");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& s = nodes_[id].value;
      Tensor& ga = ensure_grad(a);
      for (int i = 0; i < g.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < g.cols(); ++j) dot += g(i, j) * s(i, j);
        for (int j = 0; j < g.cols(); ++j) ga(i, j) += s(i, j) * (g(i, j) - dot);
      }
    };
  return id;
}

NodeId Tape::log_softmax_rows(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.rows(), A.cols());
  for (int i = 0; i < A.rows(); ++i) {
    double mx = A(i, 0);
    for (int j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    double z = 0.0;
    for (int j = 0; j < A.cols(); ++j) z += std::exp(A(i, j) - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < A.cols(); ++j) out(i, j) = A(i, j) - lse;
  }
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "log_softmax_rows");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      const Tensor& out2 = nodes_[id].value;
      Tensor& ga = ensure_grad(a);
      for (int i = 0; i < g.rows(); ++i) {
        double gsum = 0.0;
        for (int j = 0; j < g.cols(); ++j) gsum += g(i, j);
        for (int j = 0; j < g.cols(); ++j)
          ga(i, j) += g(i, j) - std::exp(out2(i, j)) * gsum;
      }
    };
  return id;
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat_cols requires at least one part");
  const int m = value(parts[0]).rows();
  int total = 0;
  bool req = false;
  for (NodeId p : parts) {
    require(value(p).rows() == m, "concat_cols row mismatch");
    total += value(p).cols();
    req = req || requires_grad(p);
  }
  Tensor out(m, total);
  int off = 0;
  for (NodeId p : parts) {
    const Tensor& P = value(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < P.cols(); ++j) out(i, off + j) = P(i, j);
    off += P.cols();
  }
  const NodeId id = push(std::move(out), req, "concat_cols");
  if (req)
    nodes_[id].back = [this, id, parts]() {
      const Tensor& g = nodes_[id].grad;
      int off2 = 0;
      for (NodeId p : parts) {
        const int w = nodes_[p].value.cols();
        if (nodes_[p].requires_grad) {
          Tensor& gp = ensure_grad(p);
          for (int i = 0; i < g.rows(); ++i)
            for (int j = 0; j < w; ++j) gp(i, j) += g(i, off2 + j);
        }
        off2 += w;
      }
    };
  return id;
}

NodeId Tape::concat_rows(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat_rows requires at least one part");
  const int n = value(parts[0]).cols();
  int total = 0;
  bool req = false;
  for (NodeId p : parts) {
    require(value(p).cols() == n, "concat_rows column mismatch");
    total += value(p).rows();
    req = req || requires_grad(p);
  }
  Tensor out(total, n);
  int off = 0;
  for (NodeId p : parts) {
    const Tensor& P = value(p);
    for (int i = 0; i < P.rows(); ++i)
      for (int j = 0; j < n; ++j) out(off + i, j) = P(i, j);
    off += P.rows();
  }
  const NodeId id = push(std::move(out), req, "concat_rows");
  if (req)
    nodes_[id].back = [this, id, parts]() {
      const Tensor& g = nodes_[id].grad;
      int off2 = 0;
      for (NodeId p : parts) {
        const int h = nodes_[p].value.rows();
        if (nodes_[p].requires_grad) {
          Tensor& gp = ensure_grad(p);
          for (int i = 0; i < h; ++i)
            for (int j = 0; j < g.cols(); ++j) gp(i, j) += g(off2 + i, j);
        }
        off2 += h;
      }
    };
  return id;
}

NodeId Tape::slice_cols(NodeId a, int c0, int c1) {
  const Tensor& A = value(a);
  require(0 <= c0 && c0 < c1 && c1 <= A.cols(), "slice_cols [", c0, ",", c1, ") out of range for ",
          A.shape_str());
  Tensor out(A.rows(), c1 - c0);
  for (int i = 0; i < A.rows(); ++i)
    for (int j = c0; j < c1; ++j) out(i, j - c0) = A(i, j);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "slice_cols");
  if (req)
    nodes_[id].back = [this, id, a, c0]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = ensure_grad(a);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) ga(i, c0 + j) += g(i, j);
    };
  return id;
}

NodeId Tape::slice_rows(NodeId a, int r0, int r1) {
  const Tensor& A = value(a);
  require(0 <= r0 && r0 < r1 && r1 <= A.rows(), "slice_rows [", r0, ",", r1, ") out of range for ",
          A.shape_str());
  Tensor out(r1 - r0, A.cols());
  for (int i = r0; i < r1; ++i)
    for (int j = 0; j < A.cols(); ++j) out(i - r0, j) = A(i, j);
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "slice_rows");
  if (req)
    nodes_[id].back = [this, id, a, r0]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = ensure_grad(a);
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) ga(r0 + i, j) += g(i, j);
    };
  return id;
}

NodeId Tape::sum(NodeId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.data()[i];
  const bool req = requires_grad(a);
  const NodeId id = push(Tensor::scalar(s), req, "sum");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const double g = nodes_[id].grad(0, 0);
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
    };
  return id;
}

NodeId Tape::mean(NodeId a) {
  const Tensor& A = value(a);
  double s = 0.0;
  for (std::size_t i = 0; i < A.size(); ++i) s += A.data()[i];
  const double inv = 1.0 / static_cast<double>(A.size());
  const bool req = requires_grad(a);
  const NodeId id = push(Tensor::scalar(s * inv), req, "mean");
  if (req)
    nodes_[id].back = [this, id, a, inv]() {
      const double g = nodes_[id].grad(0, 0) * inv;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g;
    };
  return id;
}

NodeId Tape::row_sum(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.rows(), 1);
  for (int i = 0; i < A.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < A.cols(); ++j) s += A(i, j);
    out(i, 0) = s;
  }
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "row_sum");
  if (req)
    nodes_[id].back = [this, id, a]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = ensure_grad(a);
      for (int i = 0; i < ga.rows(); ++i)
        for (int j = 0; j < ga.cols(); ++j) ga(i, j) += g(i, 0);
    };
  return id;
}

NodeId Tape::dropout(NodeId a, double p) {
  require(p >= 0.0 && p < 1.0, "dropout rate must be in [0,1), got ", p);
  if (!opts_.train || p == 0.0) return a;
  const Tensor& A = value(a);
  Tensor mask(A.rows(), A.cols());
  const double keep = 1.0 - p;
  const double scl = 1.0 / keep;
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.data()[i] = rng_.uniform() < keep ? scl : 0.0;
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
  const bool req = requires_grad(a);
  const NodeId id = push(std::move(out), req, "dropout");
  if (req)
    nodes_[id].back = [this, id, a, mask = std::move(mask)]() {
      const Tensor& g = nodes_[id].grad;
      Tensor& ga = ensure_grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] += g.data()[i] * mask.data()[i];
    };
  return id;
}

NodeId Tape::batchnorm(NodeId x, NodeId gamma, NodeId beta, Tensor* run_mean, Tensor* run_var,
                       double momentum, double eps) {
  const Tensor& X = value(x);
  const Tensor& G = value(gamma);
  const Tensor& B = value(beta);
  const int n = X.cols();
  require(G.rows() == 1 && G.cols() == n && B.rows() == 1 && B.cols() == n,
          "batchnorm parameter shape mismatch for input ", X.shape_str());
  require(run_mean != nullptr && run_var != nullptr, "batchnorm requires running statistic buffers");
  require(run_mean->cols() == n && run_var->cols() == n, "batchnorm buffer shape mismatch");

  const int m = X.rows();
  Tensor xhat(m, n);
  Tensor inv_std(1, n);
  if (opts_.train) {
    Tensor mu(1, n), var(1, n);
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) s += X(i, j);
      mu(0, j) = s / m;
    }
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < m; ++i) {
        const double d = X(i, j) - mu(0, j);
        s += d * d;
      }
      var(0, j) = s / m;
    }
    for (int j = 0; j < n; ++j) inv_std(0, j) = 1.0 / std::sqrt(var(0, j) + eps);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) xhat(i, j) = (X(i, j) - mu(0, j)) * inv_std(0, j);
    if (opts_.update_batchnorm_stats) {
      const double unbias = m > 1 ? static_cast<double>(m) / (m - 1) : 1.0;
      for (int j = 0; j < n; ++j) {
        (*run_mean)(0, j) = (1.0 - momentum) * (*run_mean)(0, j) + momentum * mu(0, j);
        (*run_var)(0, j) = (1.0 - momentum) * (*run_var)(0, j) + momentum * var(0, j) * unbias;
      }
    }
  } else {
    for (int j = 0; j < n; ++j) inv_std(0, j) = 1.0 / std::sqrt((*run_var)(0, j) + eps);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) xhat(i, j) = (X(i, j) - (*run_mean)(0, j)) * inv_std(0, j);
  }

  Tensor out(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = G(0, j) * xhat(i, j) + B(0, j);

  const bool req = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  const bool train_stats = opts_.train;
  const NodeId id = push(std::move(out), req, "batchnorm");
  if (req)
    nodes_[id].back = [this, id, x, gamma, beta, xhat = std::move(xhat),
                       inv_std = std::move(inv_std), train_stats]() {
      const Tensor& g = nodes_[id].grad;
      const int m2 = g.rows(), n2 = g.cols();
      const Tensor& G2 = nodes_[gamma].value;
      if (nodes_[beta].requires_grad) {
        Tensor& gb = ensure_grad(beta);
        for (int j = 0; j < n2; ++j) {
          double s = 0.0;
          for (int i = 0; i < m2; ++i) s += g(i, j);
          gb(0, j) += s;
        }
      }
      if (nodes_[gamma].requires_grad) {
        Tensor& gg = ensure_grad(gamma);
        for (int j = 0; j < n2; ++j) {
          double s = 0.0;
          for (int i = 0; i < m2; ++i) s += g(i, j) * xhat(i, j);
          gg(0, j) += s;
        }
      }
      if (nodes_[x].requires_grad) {
        Tensor& gx = ensure_grad(x);
        if (train_stats) {
          for (int j = 0; j < n2; ++j) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (int i = 0; i < m2; ++i) {
              const double d = g(i, j) * G2(0, j);
              sum_d += d;
              sum_dx += d * xhat(i, j);
            }
            const double c = inv_std(0, j) / m2;
            for (int i = 0; i < m2; ++i) {
              const double d = g(i, j) * G2(0, j);
              gx(i, j) += c * (m2 * d - sum_d - xhat(i, j) * sum_dx);
            }
          }
        } else {
          for (int j = 0; j < n2; ++j) {
            const double c = G2(0, j) * inv_std(0, j);
            for (int i = 0; i < m2; ++i) gx(i, j) += g(i, j) * c;
          }
        }
      }
    };
  return id;
}

}  // namespace traject::diff
