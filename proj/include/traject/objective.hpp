#pragma once

#include <cstdint>
#include <vector>

#include "traject/model.hpp"

namespace traject::obj {

using diff::NodeId;
using diff::Tape;

struct LossWeights {
  double w_x = 1.0;    // observation likelihood weight (0 disables the decoder)
  double alpha = 0.2;  // label guidance weight
  double beta = 0.01;  // divergence weight
  int n_samples = 1;   // reparameterized draws averaged per loss
  bool deterministic = false;  // use the posterior mean instead of drawing

  void validate() const;
};

// Raw per-term sums over the batch rows, before weighting; total applies the
// weights. All values are finite or the loss construction throws.
struct LossTerms {
  double nll_x = 0.0;
  double ce_x = 0.0;
  double ce_y = 0.0;
  double kl = 0.0;
  double total = 0.0;

  LossTerms& operator+=(const LossTerms& o);
  LossTerms scaled(double f) const;
};

struct ElboResult {
  NodeId total = -1;  // weighted loss summed over rows, differentiable
  LossTerms sums;
};

// Negative lower bound over a batch: masked Gaussian + categorical likelihood
// terms, weighted label cross-entropy, weighted analytic divergence from the
// context prior. Terms whose weight is zero are never built, so ablations
// share this exact code path. Noise is keyed per (patient, k) row, making the
// value independent of how rows are grouped into batches.
ElboResult elbo_loss(Tape& tape, const model::SscModel& m, const feat::Batch& batch,
                     const LossWeights& w, std::uint64_t noise_seed);

// Same loss with caller-chosen noise: eps[s] is one N x latent_dim draw per
// sample. Lets tests evaluate the loss at fixed quadrature abscissae.
ElboResult elbo_loss(Tape& tape, const model::SscModel& m, const feat::Batch& batch,
                     const LossWeights& w, const std::vector<Tensor>& eps);

// Sum of per-prefix losses for one patient, one row per k in k_set, evaluated
// without dropout or statistics updates.
LossTerms patient_loss(const model::SscModel& m, diff::ParamStore& store,
                       const cohort::Cohort& cohort, const feat::FeatureStats& stats,
                       int patient, const std::vector<int>& k_set, const LossWeights& w,
                       std::uint64_t noise_seed, const feat::FeaturizeOptions& opts = {});

// All conditioning prefixes for a patient with n visits.
std::vector<int> full_k_set(int n_visits);
// Fixed prefixes used for validation and evaluation: first visit, midpoint,
// and the full history.
std::vector<int> val_k_set(int n_visits);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 32;  // patients per update within one visit-count bucket
  int max_epochs = 200;
  int patience = 15;
  double val_fraction = 0.2;
  int k_subsample = 3;  // per-epoch prefix draws per patient, plus the full history
  std::uint64_t seed = 1;
  bool use_medications = false;

  void validate() const;
};

struct EpochStats {
  int epoch = 0;
  LossTerms train;  // mean per row
  LossTerms val;
};

// Carried state when training continues from a checkpoint.
struct TrainInit {
  diff::ParamStore store;
  int start_epoch = 0;
  double best_val = 0.0;
  bool has_best = false;
};

struct TrainResult {
  diff::ParamStore params;  // best-validation snapshot
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val = 0.0;
  bool diverged = false;
  int epochs_run = 0;  // absolute epoch counter after this call
  std::vector<int> train_ids, val_ids;
  feat::FeatureStats stats;
};

// Minibatch training with early stopping on validation loss. The validation
// objective uses fixed prefixes and epoch-independent noise so epochs are
// compared on an identical function. Non-finite losses abort with the best
// snapshot kept and the diverged flag set.
TrainResult train(const cohort::Cohort& cohort, const model::ModelConfig& mcfg,
                  const TrainConfig& tcfg, const LossWeights& w,
                  const std::vector<int>* train_ids = nullptr,
                  const std::vector<int>* val_ids = nullptr, const TrainInit* init = nullptr);

struct GridCandidate {
  model::ModelConfig model;
  LossWeights weights;
};

struct GridCvResult {
  int best_index = 0;
  std::vector<std::vector<int>> folds;           // validation patients per fold
  std::vector<std::vector<double>> fold_losses;  // [candidate][fold] best val loss
  std::vector<double> mean_loss;                 // per candidate
};

// Patient-level cross-validation over a candidate grid; ties keep the first
// candidate in grid order.
GridCvResult grid_cv(const cohort::Cohort& cohort, const std::vector<GridCandidate>& grid,
                     const TrainConfig& tcfg, int folds = 5);

}  // namespace traject::obj
