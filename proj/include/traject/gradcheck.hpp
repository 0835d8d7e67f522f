#pragma once

#include <functional>
#include <string>
#include <vector>

#include "traject/optim.hpp"

namespace traject::diff {

struct GradCheckConfig {
  double h = 1e-4;              // central-difference step, must be in (0, 1e-2]
  int max_elems_per_param = 0;  // 0 = check every element
  TapeOptions tape_opts;        // applied identically to every evaluation
};

struct GradCheckEntry {
  std::string param;
  int index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  GradCheckEntry worst;
  double max_rel_err = 0.0;
  std::vector<GradCheckEntry> failing(double tol) const;
};

// Compares tape gradients of a scalar loss against central finite differences
// over every trainable parameter element. The loss builder must be pure given
// identical tape options; this harness never mutates running statistics.
// Reporting only: parameters are restored and nothing is asserted here.
GradCheckReport finite_diff_check(ParamStore& store,
                                  const std::function<NodeId(Tape&)>& build_loss,
                                  const GradCheckConfig& cfg = {});

double relative_error(double a, double b);

}  // namespace traject::diff
