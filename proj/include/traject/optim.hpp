#pragma once

#include <map>
#include <string>

#include "traject/params.hpp"
#include "traject/tape.hpp"

namespace traject::diff {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update over the given gradients. Parameters without a gradient
// entry are treated as having zero gradient. Non-finite gradients are an
// error; parameters stay untouched when one is found.
void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, const AdamConfig& cfg);

// Pulls gradients of all bound parameters off a tape after backward().
std::map<std::string, Tensor> collect_grads(const Tape& tape);

// Lossless JSON checkpoint: values, optimizer state, buffers, step counter,
// plus caller-provided metadata echoed back on load.
void save_checkpoint(const ParamStore& store, const std::string& path, const std::string& meta_json);
std::string load_checkpoint(ParamStore& store, const std::string& path);  // returns metadata

std::string checkpoint_to_json(const ParamStore& store, const std::string& meta_json);
std::string checkpoint_from_json(ParamStore& store, const std::string& text);

}  // namespace traject::diff
