#pragma once

#include <string>
#include <vector>

#include "traject/optim.hpp"
#include "traject/tape.hpp"

namespace traject::nn {

using diff::NodeId;
using diff::ParamStore;
using diff::Tape;

enum class Init { fan_in_uniform, zero };

// Parameter creation is idempotent per name and seeded from (seed, name), so
// layer construction order never changes initial values.
Tensor init_matrix(int rows, int cols, Init kind, std::uint64_t seed, const std::string& name);
void ensure_param(ParamStore& store, const std::string& name, int rows, int cols, Init kind,
                  std::uint64_t seed);

class Dense {
 public:
  Dense() = default;
  Dense(ParamStore& store, std::string prefix, int in, int out, std::uint64_t seed,
        Init w_init = Init::fan_in_uniform);
  NodeId forward(Tape& tape, NodeId x) const;
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

 private:
  std::string prefix_;
  int in_ = 0, out_ = 0;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParamStore& store, std::string prefix, int dim, double momentum = 0.1,
            double eps = 1e-5);
  NodeId forward(Tape& tape, NodeId x) const;

 private:
  ParamStore* store_ = nullptr;
  std::string prefix_;
  int dim_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
};

// Dense -> [batchnorm] -> relu -> [dropout], repeated; a plain affine head
// can be appended by the owner.
class MlpStack {
 public:
  MlpStack() = default;
  MlpStack(ParamStore& store, std::string prefix, int in, const std::vector<int>& hidden,
           bool batchnorm, double dropout, std::uint64_t seed);
  NodeId forward(Tape& tape, NodeId x) const;
  int out_dim() const { return out_; }

 private:
  std::vector<Dense> dense_;
  std::vector<BatchNorm> bn_;
  bool use_bn_ = false;
  double dropout_ = 0.0;
  int out_ = 0;
};

// Single-layer LSTM unrolled over a sequence of (batch x in) steps. The
// forget-gate bias starts at 1.
class Lstm {
 public:
  Lstm() = default;
  Lstm(ParamStore& store, std::string prefix, int in, int hidden, std::uint64_t seed);
  // Returns the hidden state after each step: T tensors of shape (batch x hidden).
  std::vector<NodeId> forward(Tape& tape, const std::vector<NodeId>& steps) const;
  int hidden_dim() const { return hidden_; }

 private:
  std::string prefix_;
  int in_ = 0, hidden_ = 0;
};

}  // namespace traject::nn
