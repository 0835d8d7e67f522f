#include "traject/nn.hpp"

#include <cmath>

#include "traject/rng.hpp"

namespace traject::nn {

Tensor init_matrix(int rows, int cols, Init kind, std::uint64_t seed, const std::string& name) {
  Tensor t(rows, cols);
  if (kind == Init::zero) return t;
  Rng rng(derive_seed(seed, "init", hash_str(name)));
  const double bound = std::sqrt(3.0 / rows);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

void ensure_param(ParamStore& store, const std::string& name, int rows, int cols, Init kind,
                  std::uint64_t seed) {
  if (!store.has(name)) store.create(name, init_matrix(rows, cols, kind, seed, name));
}

Dense::Dense(ParamStore& store, std::string prefix, int in, int out, std::uint64_t seed,
             Init w_init)
    : prefix_(std::move(prefix)), in_(in), out_(out) {
  ensure_param(store, prefix_ + ".W", in, out, w_init, seed);
  ensure_param(store, prefix_ + ".b", 1, out, Init::zero, seed);
}

NodeId Dense::forward(Tape& tape, NodeId x) const {
  const NodeId w = tape.use_param(prefix_ + ".W");
  const NodeId b = tape.use_param(prefix_ + ".b");
  return tape.add_rowvec(tape.matmul(x, w), b);
}

BatchNorm::BatchNorm(ParamStore& store, std::string prefix, int dim, double momentum, double eps)
    : store_(&store), prefix_(std::move(prefix)), dim_(dim), momentum_(momentum), eps_(eps) {
  if (!store.has(prefix_ + ".gamma")) {
    store.create(prefix_ + ".gamma", Tensor(1, dim, 1.0));
    store.create(prefix_ + ".beta", Tensor(1, dim));
    store.buffer(prefix_ + ".run_mean", Tensor(1, dim));
    store.buffer(prefix_ + ".run_var", Tensor(1, dim, 1.0));
  }
}

NodeId BatchNorm::forward(Tape& tape, NodeId x) const {
  const NodeId gamma = tape.use_param(prefix_ + ".gamma");
  const NodeId beta = tape.use_param(prefix_ + ".beta");
  Tensor& rm = store_->value(prefix_ + ".run_mean");
  Tensor& rv = store_->value(prefix_ + ".run_var");
  return tape.batchnorm(x, gamma, beta, &rm, &rv, momentum_, eps_);
}

MlpStack::MlpStack(ParamStore& store, std::string prefix, int in, const std::vector<int>& hidden,
                   bool batchnorm, double dropout, std::uint64_t seed)
    : use_bn_(batchnorm), dropout_(dropout), out_(in) {
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const std::string layer = cat(prefix, ".l", i);
    dense_.emplace_back(store, layer, out_, hidden[i], seed);
    if (use_bn_) bn_.emplace_back(store, layer + ".bn", hidden[i]);
    out_ = hidden[i];
  }
}

NodeId MlpStack::forward(Tape& tape, NodeId x) const {
  NodeId h = x;
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    h = dense_[i].forward(tape, h);
    if (use_bn_) h = bn_[i].forward(tape, h);
    h = tape.relu(h);
    if (dropout_ > 0.0) h = tape.dropout(h, dropout_);
  }
  return h;
}

Lstm::Lstm(ParamStore& store, std::string prefix, int in, int hidden, std::uint64_t seed)
    : prefix_(std::move(prefix)), in_(in), hidden_(hidden) {
  ensure_param(store, prefix_ + ".W_ih", in, 4 * hidden, Init::fan_in_uniform, seed);
  ensure_param(store, prefix_ + ".W_hh", hidden, 4 * hidden, Init::fan_in_uniform, seed);
  if (!store.has(prefix_ + ".b")) {
    Tensor b(1, 4 * hidden);
    for (int j = hidden; j < 2 * hidden; ++j) b(0, j) = 1.0;  // forget gate block
    store.create(prefix_ + ".b", std::move(b));
  }
}

std::vector<NodeId> Lstm::forward(Tape& tape, const std::vector<NodeId>& steps) const {
  require(!steps.empty(), "lstm requires at least one step");
  const NodeId w_ih = tape.use_param(prefix_ + ".W_ih");
  const NodeId w_hh = tape.use_param(prefix_ + ".W_hh");
  const NodeId b = tape.use_param(prefix_ + ".b");
  const int batch = tape.value(steps[0]).rows();
  NodeId h = tape.constant(Tensor(batch, hidden_), "lstm_h0");
  NodeId c = tape.constant(Tensor(batch, hidden_), "lstm_c0");
  std::vector<NodeId> out;
  out.reserve(steps.size());
  for (NodeId x : steps) {
    require(tape.value(x).rows() == batch && tape.value(x).cols() == in_,
            "lstm step shape mismatch: got ", tape.value(x).shape_str());
    NodeId gates = tape.add_rowvec(tape.add(tape.matmul(x, w_ih), tape.matmul(h, w_hh)), b);
    const NodeId i_g = tape.sigmoid(tape.slice_cols(gates, 0, hidden_));
    const NodeId f_g = tape.sigmoid(tape.slice_cols(gates, hidden_, 2 * hidden_));
    const NodeId g_g = tape.tanh(tape.slice_cols(gates, 2 * hidden_, 3 * hidden_));
    const NodeId o_g = tape.sigmoid(tape.slice_cols(gates, 3 * hidden_, 4 * hidden_));
    c = tape.add(tape.mul(f_g, c), tape.mul(i_g, g_g));
    h = tape.mul(o_g, tape.tanh(c));
    out.push_back(h);
  }
  return out;
}

}  // namespace traject::nn
