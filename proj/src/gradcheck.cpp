#include "traject/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace traject::diff {

double relative_error(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

std::vector<GradCheckEntry> GradCheckReport::failing(double tol) const {
  std::vector<GradCheckEntry> out;
  for (const auto& e : entries)
    if (e.rel_err > tol) out.push_back(e);
  return out;
}

GradCheckReport finite_diff_check(ParamStore& store,
                                  const std::function<NodeId(Tape&)>& build_loss,
                                  const GradCheckConfig& cfg) {
  require(cfg.h > 0.0 && cfg.h <= 1e-2, "finite-difference step must lie in (0, 1e-2], got ",
          cfg.h);
  TapeOptions opts = cfg.tape_opts;
  opts.update_batchnorm_stats = false;

  const auto eval_loss = [&]() {
    Tape tape(opts, &store);
    const NodeId loss = build_loss(tape);
    return tape.value(loss).item();
  };

  Tape tape(opts, &store);
  const NodeId loss = build_loss(tape);
  tape.backward(loss);
  const auto grads = collect_grads(tape);

  GradCheckReport report;
  for (const std::string& name : store.trainable_names()) {
    auto& e = store.entry(name);
    const auto git = grads.find(name);
    const int total = static_cast<int>(e.value.size());
    int stride = 1;
    if (cfg.max_elems_per_param > 0 && total > cfg.max_elems_per_param)
      stride = (total + cfg.max_elems_per_param - 1) / cfg.max_elems_per_param;
    for (int i = 0; i < total; i += stride) {
      const double orig = e.value.data()[i];
      e.value.data()[i] = orig + cfg.h;
      const double up = eval_loss();
      e.value.data()[i] = orig - cfg.h;
      const double down = eval_loss();
      e.value.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * cfg.h);
      const double analytic = git == grads.end() ? 0.0 : git->second.data()[i];
      GradCheckEntry entry{name, i, analytic, numeric, relative_error(analytic, numeric)};
      if (entry.rel_err > report.max_rel_err) {
        report.max_rel_err = entry.rel_err;
        report.worst = entry;
      }
      report.entries.push_back(std::move(entry));
    }
  }
  return report;
}

}  // namespace traject::diff
