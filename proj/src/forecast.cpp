#include "traject/forecast.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "traject/tape.hpp"

namespace traject::fc {

namespace {

using diff::NodeId;
using diff::Tape;

// Interpolated quantile of an ascending sample (type 7).
double quantile_sorted(const std::vector<double>& v, double p) {
  const double pos = p * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[lo + 1] - v[lo]);
}

struct Posterior {
  Tensor mu, sigma;  // flat steps x latent
};

Posterior posterior_values(const model::SscModel& m, diff::ParamStore& store,
                           const feat::Batch& batch) {
  Tape tape({}, &store);
  const model::GaussSeq q = m.encode(tape, batch);
  return {tape.value(q.mu), tape.value(q.sigma)};
}

Tensor draw_latent(const Posterior& q, std::uint64_t seed, int s) {
  Tensor z = q.mu;
  Rng rng(derive_seed(seed, "z", static_cast<std::uint64_t>(s)));
  for (std::size_t i = 0; i < z.size(); ++i) z.data()[i] += q.sigma.data()[i] * rng.normal();
  return z;
}

void check_single_row(const feat::Batch& batch, const feat::ModelLayout& lay) {
  batch.validate(lay);
  require(batch.batch == 1, "predictive sampling expects a single-row batch");
}

}  // namespace

void ForecastConfig::validate() const {
  require(n_latent >= 1 && n_obs >= 1, "sample counts must be >= 1");
  if (quantile_ci)
    require(static_cast<long long>(n_latent) * static_cast<long long>(n_obs) >= 1000,
            "quantile intervals need at least 1000 draws");
}

PredictiveX predict_x_batch(const model::SscModel& m, diff::ParamStore& store,
                            const feat::Batch& batch, const feat::FeatureStats& stats,
                            const ForecastConfig& cfg) {
  cfg.validate();
  const feat::ModelLayout& lay = m.layout();
  check_single_row(batch, lay);
  const int steps = batch.n_steps - 1;
  const int nc = lay.n_cont();
  const int nc1 = std::max(nc, 1);
  const int S = cfg.zero_noise ? 1 : cfg.n_latent;
  const int U = cfg.zero_noise ? 1 : cfg.n_obs;
  const bool retain = (cfg.quantile_ci || cfg.keep_paths) && nc > 0;

  const Posterior q = posterior_values(m, store, batch);

  Tensor sum_mu(steps, nc1), sum_mu2(steps, nc1), sum_var(steps, nc1);
  std::vector<Tensor> cat_acc;
  for (const feat::CatSlot& slot : lay.cat) cat_acc.emplace_back(steps, slot.classes);
  Tensor paths;
  if (retain) paths = Tensor(S * U, nc * steps);

  // One tape per latent draw keeps memory flat in n_latent.
  for (int s = 0; s < S; ++s) {
    const Tensor z = cfg.zero_noise ? q.mu : draw_latent(q, cfg.seed, s);
    Tape tape({}, &store);
    const NodeId zc = tape.constant(z, "z");
    const NodeId ctx = tape.constant(batch.ctx, "ctx");
    const model::XDist xd = m.decode(tape, zc, ctx);
    if (nc > 0) {
      const Tensor& mu = tape.value(xd.cont_mu);
      const Tensor& sg = tape.value(xd.cont_sigma);
      for (std::size_t i = 0; i < mu.size(); ++i) {
        sum_mu.data()[i] += mu.data()[i];
        sum_mu2.data()[i] += mu.data()[i] * mu.data()[i];
        sum_var.data()[i] += sg.data()[i] * sg.data()[i];
      }
      if (retain) {
        for (int u = 0; u < U; ++u) {
          Rng rng(derive_seed(derive_seed(cfg.seed, "x", static_cast<std::uint64_t>(s)), "u",
                              static_cast<std::uint64_t>(u)));
          const int row = s * U + u;
          for (int t = 0; t < steps; ++t)
            for (int j = 0; j < nc; ++j) {
              const double noise = cfg.zero_noise ? 0.0 : rng.normal();
              const int var = lay.cont[j];
              paths(row, j * steps + t) =
                  (mu(t, j) + sg(t, j) * noise) * stats.sd[var] + stats.mean[var];
            }
        }
      }
    }
    for (int i = 0; i < lay.n_cat(); ++i) {
      const Tensor& pr = tape.value(tape.softmax_rows(xd.cat_logits[i]));
      for (std::size_t e = 0; e < pr.size(); ++e) cat_acc[i].data()[e] += pr.data()[e];
    }
  }

  PredictiveX out;
  out.k = batch.k.at(0);
  out.steps = steps;
  out.mean = Tensor(nc1, steps);
  out.sd = Tensor(nc1, steps);
  out.lo95 = Tensor(nc1, steps);
  out.hi95 = Tensor(nc1, steps);
  out.var_between = Tensor(nc1, steps);
  out.var_within = Tensor(nc1, steps);
  const double inv_s = 1.0 / S;
  for (int t = 0; t < steps; ++t)
    for (int j = 0; j < nc; ++j) {
      const int var = lay.cont[j];
      const double mean_std = sum_mu(t, j) * inv_s;
      const double between = std::max(0.0, sum_mu2(t, j) * inv_s - mean_std * mean_std);
      const double within = cfg.zero_noise ? 0.0 : sum_var(t, j) * inv_s;
      const double scale = stats.sd[var];
      const double mean = mean_std * scale + stats.mean[var];
      const double sd = std::sqrt(between + within) * std::abs(scale);
      out.mean(j, t) = mean;
      out.sd(j, t) = sd;
      out.var_between(j, t) = between * scale * scale;
      out.var_within(j, t) = within * scale * scale;
      out.lo95(j, t) = mean - 1.96 * sd;
      out.hi95(j, t) = mean + 1.96 * sd;
    }

  if (cfg.quantile_ci && nc > 0) {
    std::vector<double> col(static_cast<std::size_t>(S) * U);
    for (int j = 0; j < nc; ++j)
      for (int t = 0; t < steps; ++t) {
        for (int r = 0; r < S * U; ++r) col[r] = paths(r, j * steps + t);
        std::sort(col.begin(), col.end());
        // Enforce lo <= mean <= hi even on skewed samples.
        out.lo95(j, t) = std::min(quantile_sorted(col, 0.025), out.mean(j, t));
        out.hi95(j, t) = std::max(quantile_sorted(col, 0.975), out.mean(j, t));
      }
  }

  for (int i = 0; i < lay.n_cat(); ++i) {
    Tensor pr = cat_acc[i];
    for (int t = 0; t < steps; ++t) {
      double row = 0.0;
      for (int c = 0; c < pr.cols(); ++c) row += pr(t, c);
      for (int c = 0; c < pr.cols(); ++c) pr(t, c) /= row;
    }
    out.cat_prob.push_back(std::move(pr));
  }

  if (cfg.keep_paths) out.paths = std::move(paths);
  return out;
}

PredictiveY predict_y_batch(const model::SscModel& m, diff::ParamStore& store,
                            const feat::Batch& batch, const ForecastConfig& cfg) {
  cfg.validate();
  const feat::ModelLayout& lay = m.layout();
  check_single_row(batch, lay);
  const int steps = batch.n_steps - 1;
  const int S = cfg.zero_noise ? 1 : cfg.n_latent;

  const Posterior q = posterior_values(m, store, batch);

  PredictiveY out;
  out.k = batch.k.at(0);
  out.steps = steps;
  for (int g = 0; g < lay.n_labels(); ++g) out.prob.emplace_back(steps, lay.label_classes[g]);

  for (int s = 0; s < S; ++s) {
    const Tensor z = cfg.zero_noise ? q.mu : draw_latent(q, cfg.seed, s);
    Tape tape({}, &store);
    const NodeId zc = tape.constant(z, "z");
    const NodeId ctx = tape.constant(batch.ctx, "ctx");
    const std::vector<NodeId> heads = m.guide(tape, zc, ctx);
    for (int g = 0; g < lay.n_labels(); ++g) {
      const Tensor& pr = tape.value(tape.softmax_rows(heads[g]));
      for (std::size_t e = 0; e < pr.size(); ++e) out.prob[g].data()[e] += pr.data()[e];
    }
  }
  for (Tensor& pr : out.prob)
    for (int t = 0; t < steps; ++t) {
      double row = 0.0;
      for (int c = 0; c < pr.cols(); ++c) row += pr(t, c);
      for (int c = 0; c < pr.cols(); ++c) pr(t, c) /= row;
    }
  return out;
}

PredictiveX predict_x(const model::SscModel& m, diff::ParamStore& store,
                      const cohort::Cohort& cohort, const feat::FeatureStats& stats, int patient,
                      int k, const ForecastConfig& cfg, const feat::FeaturizeOptions& opts) {
  const feat::Batch b = feat::make_batch(cohort, stats, m.layout(), {{patient, k}}, opts);
  return predict_x_batch(m, store, b, stats, cfg);
}

PredictiveY predict_y(const model::SscModel& m, diff::ParamStore& store,
                      const cohort::Cohort& cohort, const feat::FeatureStats& stats, int patient,
                      int k, const ForecastConfig& cfg, const feat::FeaturizeOptions& opts) {
  const feat::Batch b = feat::make_batch(cohort, stats, m.layout(), {{patient, k}}, opts);
  return predict_y_batch(m, store, b, cfg);
}

Tensor latent_mean_trajectory(const model::SscModel& m, diff::ParamStore& store,
                              const cohort::Cohort& cohort, const feat::FeatureStats& stats,
                              int patient, const feat::FeaturizeOptions& opts) {
  require(patient >= 0 && patient < cohort.size(), "patient index ", patient, " out of range");
  const int last = cohort.patients[patient].n_visits() - 1;
  const feat::Batch b = feat::make_batch(cohort, stats, m.layout(), {{patient, last}}, opts);
  const Posterior q = posterior_values(m, store, b);
  Tensor out(m.layout().latent_dim, q.mu.rows());
  for (int t = 0; t < q.mu.rows(); ++t)
    for (int l = 0; l < q.mu.cols(); ++l) out(l, t) = q.mu(t, l);
  return out;
}

}  // namespace traject::fc
