#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "traject/cohort.hpp"
#include "traject/tensor.hpp"

namespace traject::feat {

// Input/output geometry shared by the model networks. Decoupled from the
// disease-specific variable table so tiny test configurations can be built
// directly.
struct CatSlot {
  int var = 0;  // index into the variable axis of x
  int classes = 2;
};

struct ModelLayout {
  int n_vars = 0;                             // rows of x
  std::vector<int> cont;                      // variable indices with Gaussian likelihood
  std::vector<CatSlot> cat;                   // variable indices with categorical likelihood
  std::vector<int> label_classes;             // per label head
  std::vector<std::pair<int, int>> label_block;  // per label: (offset, len) in z
  int context_dim = 0;
  int latent_dim = 0;

  int n_cont() const { return static_cast<int>(cont.size()); }
  int n_cat() const { return static_cast<int>(cat.size()); }
  int n_labels() const { return static_cast<int>(label_classes.size()); }
  int x_enc_dim() const { return 2 * n_vars; }  // value channel + observed bit per variable
  int enc_in_dim() const { return x_enc_dim() + context_dim; }
  int cat_logit_dim() const;
  void validate() const;
};

// One training/evaluation unit: rows are (patient, prefix-end) pairs sharing
// the same visit count. The first visit only conditions the encoder; latent,
// reconstruction, and label targets cover visits 1..n_steps-1, laid out
// step-major: flat index (t-1)*batch + row.
struct Batch {
  int n_steps = 0;    // visits fed to the encoder
  int batch = 0;      // rows
  std::vector<int> patient;  // per row, cohort index (tests may leave empty)
  std::vector<int> k;        // per row, last visible visit index

  std::vector<Tensor> enc_in;       // n_steps tensors, batch x enc_in_dim
  Tensor ctx;                       // N x context_dim, N = (n_steps-1)*batch
  Tensor cont_target;               // N x n_cont, standardized values, 0 when unobserved
  Tensor cont_mask;                 // N x n_cont
  std::vector<Tensor> cat_target;   // per cat slot: N x classes one-hot, zero row when unobserved
  std::vector<Tensor> label_target; // per label: N x classes one-hot, zero row when unobserved

  int flat_rows() const { return (n_steps - 1) * batch; }
  void validate(const ModelLayout& layout) const;
};

// Standardization statistics fitted on the training split only.
struct FeatureStats {
  std::vector<double> mean;  // per variable; 0 for categorical
  std::vector<double> sd;    // per variable; 1 for categorical
  double tau_mean = 0.0, tau_sd = 1.0;
  double dt_mean = 0.0, dt_sd = 1.0;
  double height_mean = 0.0, height_sd = 1.0;
  double weight_mean = 0.0, weight_sd = 1.0;
};

struct FeaturizeOptions {
  bool use_medications = false;  // when false the medication channels are zero
};

// Disease-specific geometry for the default variable table: every categorical
// variable becomes one categorical slot, every label one head, and each
// organ's labels share one 7-wide latent block.
ModelLayout ssc_layout(int latent_per_organ = 7);

int ssc_context_dim();

FeatureStats compute_stats(const cohort::Cohort& cohort, const std::vector<int>& patient_ids);

// Value-channel encoding for one variable: standardized for continuous slots,
// class index scaled to [0,1] for categorical slots.
double encode_value(const cohort::VariableTable& vars, const FeatureStats& stats, int var, double value);

// Context row for one visit: standardized (years since first visit, gap since
// previous visit), statics, medication channels.
std::vector<double> context_row(const cohort::PatientRecord& p, const FeatureStats& stats, int t,
                                const FeaturizeOptions& opts);

// Assembles one batch from rows with a common visit count. Values under a
// false mask and visits after each row's k never reach the encoding.
Batch make_batch(const cohort::Cohort& cohort, const FeatureStats& stats, const ModelLayout& layout,
                 const std::vector<std::pair<int, int>>& rows, const FeaturizeOptions& opts);

}  // namespace traject::feat
