#pragma once

#include <map>
#include <string>
#include <vector>

#include "traject/tensor.hpp"

namespace traject::diff {

// Named persistent tensors: trainable parameters plus non-trainable buffers
// (e.g. normalization running statistics). Iteration order is the sorted name
// order, which keeps optimizer sweeps and checkpoints deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    bool trainable = true;
    Tensor adam_m;  // allocated on first optimizer step
    Tensor adam_v;
  };

  Tensor& create(const std::string& name, Tensor init, bool trainable = true);
  Tensor& buffer(const std::string& name, Tensor init) { return create(name, std::move(init), false); }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  Entry& entry(const std::string& name);
  const Entry& entry(const std::string& name) const;
  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }

  std::vector<std::string> names() const;
  std::vector<std::string> trainable_names() const;
  std::size_t scalar_count(bool trainable_only = true) const;

  long long step() const { return step_; }
  void set_step(long long s) { step_ = s; }
  void bump_step() { ++step_; }

  ParamStore clone() const { return *this; }

 private:
  std::map<std::string, Entry> entries_;
  long long step_ = 0;
};

}  // namespace traject::diff
