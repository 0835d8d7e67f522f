#pragma once

#include <functional>
#include <vector>

#include "traject/gradcheck.hpp"
#include "traject/rng.hpp"
#include "traject/tape.hpp"

namespace testutil {

using traject::derive_seed;
using traject::Rng;
using traject::Tensor;
using traject::diff::NodeId;
using traject::diff::Tape;
using traject::diff::TapeOptions;

inline Tensor randt(int rows, int cols, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(rows, cols);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

using OpFn = std::function<NodeId(Tape&, const std::vector<NodeId>&)>;

// Max relative error between tape gradients and central finite differences,
// taken over every element of every input. The builder must produce a scalar.
inline double op_max_rel_err(const OpFn& fn, std::vector<Tensor> inputs, double h = 1e-5,
                             TapeOptions opts = {}) {
  opts.update_batchnorm_stats = false;
  const auto eval = [&]() {
    Tape tape(opts);
    std::vector<NodeId> ids;
    ids.reserve(inputs.size());
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t));
    return tape.value(fn(tape, ids)).item();
  };

  Tape tape(opts);
  std::vector<NodeId> ids;
  for (const Tensor& t : inputs) ids.push_back(tape.leaf(t));
  const NodeId loss = fn(tape, ids);
  tape.backward(loss);
  std::vector<Tensor> grads;
  for (NodeId id : ids) grads.push_back(tape.grad(id));

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double orig = inputs[k].data()[i];
      inputs[k].data()[i] = orig + h;
      const double up = eval();
      inputs[k].data()[i] = orig - h;
      const double down = eval();
      inputs[k].data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double err = traject::diff::relative_error(grads[k].data()[i], numeric);
      if (err > worst) worst = err;
    }
  }
  return worst;
}

// Deterministic weight pattern used to turn matrix outputs into a scalar in a
// way that breaks symmetry between elements.
inline Tensor probe_weights(int rows, int cols) {
  Tensor w(rows, cols);
  for (std::size_t i = 0; i < w.size(); ++i)
    w.data()[i] = 0.3 + 0.1 * static_cast<double>((7 * i) % 13);
  return w;
}

inline NodeId weighted_sum(Tape& tape, NodeId x) {
  const Tensor& v = tape.value(x);
  return tape.sum(tape.mul(x, tape.constant(probe_weights(v.rows(), v.cols()))));
}

}  // namespace testutil
