#pragma once

#include <cstdint>
#include <vector>

#include "traject/cohort.hpp"
#include "traject/featurize.hpp"
#include "traject/model.hpp"

namespace traject::fc {

// Two-stage sampling sizes: n_latent posterior draws, n_obs observation draws
// per latent draw. zero_noise collapses both stages to their means.
struct ForecastConfig {
  int n_latent = 50;
  int n_obs = 20;
  bool zero_noise = false;
  bool quantile_ci = false;  // empirical 2.5/97.5 interval, needs >= 1000 draws
  bool keep_paths = false;
  std::uint64_t seed = 1;

  void validate() const;
};

// Predictive distribution over the modeled visits 1..steps of one patient.
// Column t of every matrix refers to visit t+1; continuous statistics are in
// original units. cont slot j is the j-th continuous variable of the layout.
struct PredictiveX {
  int k = 0;
  int steps = 0;
  Tensor mean, sd, lo95, hi95;    // n_cont x steps
  Tensor var_between, var_within; // n_cont x steps, squared units
  std::vector<Tensor> cat_prob;   // per categorical slot: steps x classes
  Tensor paths;                   // draws x (n_cont*steps), column j*steps + t
};

struct PredictiveY {
  int k = 0;
  int steps = 0;
  std::vector<Tensor> prob;  // per label: steps x classes
};

// Batch-level entry points take a single-row batch; the cohort-level wrappers
// assemble it from a record. Pure functions of the frozen parameters.
PredictiveX predict_x_batch(const model::SscModel& m, diff::ParamStore& store,
                            const feat::Batch& batch, const feat::FeatureStats& stats,
                            const ForecastConfig& cfg);
PredictiveY predict_y_batch(const model::SscModel& m, diff::ParamStore& store,
                            const feat::Batch& batch, const ForecastConfig& cfg);

PredictiveX predict_x(const model::SscModel& m, diff::ParamStore& store,
                      const cohort::Cohort& cohort, const feat::FeatureStats& stats, int patient,
                      int k, const ForecastConfig& cfg, const feat::FeaturizeOptions& opts = {});
PredictiveY predict_y(const model::SscModel& m, diff::ParamStore& store,
                      const cohort::Cohort& cohort, const feat::FeatureStats& stats, int patient,
                      int k, const ForecastConfig& cfg, const feat::FeaturizeOptions& opts = {});

// Per-visit posterior means under full conditioning, latent_dim x steps.
// Reads only x, masks and context; labels never enter the encoder.
Tensor latent_mean_trajectory(const model::SscModel& m, diff::ParamStore& store,
                              const cohort::Cohort& cohort, const feat::FeatureStats& stats,
                              int patient, const feat::FeaturizeOptions& opts = {});

}  // namespace traject::fc
