#pragma once

#include <cstdint>
#include <vector>

#include "traject/featurize.hpp"
#include "traject/nn.hpp"

namespace traject::model {

using diff::NodeId;
using diff::ParamStore;
using diff::Tape;

struct ModelConfig {
  feat::ModelLayout layout;
  int lstm_hidden = 100;
  std::vector<int> encoder_fc = {100, 100};
  std::vector<int> decoder_fc = {100};
  std::vector<int> guidance_fc = {40};
  std::vector<int> prior_fc = {50};
  double dropout = 0.1;
  bool batchnorm = true;
  double latent_sigma_floor = 1e-3;   // added after softplus on latent scales
  double obs_sigma_floor = 1e-2;      // added after softplus on observation scales
  bool guidance_use_context = false;  // label heads read only their latent block by default
  std::uint64_t init_seed = 1;

  void validate() const;
};

// Diagonal Gaussian over the flat modeled steps; both nodes are N x latent_dim
// with N = (n_steps - 1) * batch, step-major.
struct GaussSeq {
  NodeId mu = -1;
  NodeId sigma = -1;
};

// Observation distribution per flat step. cont_mu/cont_sigma stay -1 when the
// layout has no continuous variables.
struct XDist {
  NodeId cont_mu = -1;
  NodeId cont_sigma = -1;
  std::vector<NodeId> cat_logits;  // per categorical slot, N x classes
};

// Sequential latent-variable model over visit sequences: a recurrent posterior
// over one latent per modeled visit, a per-visit context-conditioned latent
// prior, a per-visit observation decoder, and per-label heads that each read
// one latent block. All distribution output heads start at zero weights, so an
// untrained model emits mu = 0 and sigma = softplus(0) + floor everywhere.
class SscModel {
 public:
  SscModel(ParamStore& store, ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  const feat::ModelLayout& layout() const { return cfg_.layout; }

  // Posterior q(z_1..z_{n-1} | visible visits, context). Visibility is already
  // baked into batch.enc_in, so steps past each row's prefix contribute only
  // their context.
  GaussSeq encode(Tape& tape, const feat::Batch& batch) const;

  // Latent prior p(z_t | c_t) from context rows (N x context_dim).
  GaussSeq prior(Tape& tape, NodeId ctx) const;

  // Observation model p(x_t | z_t, c_t).
  XDist decode(Tape& tape, NodeId z, NodeId ctx) const;

  // Per-label logits. Label g sees only its own latent block (plus context
  // when configured), so latents outside the block cannot move its output.
  std::vector<NodeId> guide(Tape& tape, NodeId z, NodeId ctx) const;

  // Reparameterized draw z = mu + sigma * eps; eps is N x latent_dim.
  NodeId sample(Tape& tape, const GaussSeq& q, const Tensor& eps) const;

 private:
  ModelConfig cfg_;
  nn::Lstm enc_lstm_;
  nn::MlpStack enc_mlp_;
  nn::Dense enc_mu_, enc_sigma_;
  nn::MlpStack prior_mlp_;
  nn::Dense prior_mu_, prior_sigma_;
  nn::MlpStack dec_mean_mlp_, dec_var_mlp_;
  nn::Dense dec_cont_mu_, dec_cont_sigma_;
  std::vector<nn::Dense> dec_cat_;
  std::vector<nn::MlpStack> guid_mlp_;
  std::vector<nn::Dense> guid_head_;
};

// Closed-form KL(q || p) for diagonal Gaussians, summed over every entry of
// the N x latent_dim grid; returns a 1x1 node.
NodeId kl_diag(Tape& tape, const GaussSeq& q, const GaussSeq& p);

// Default configuration bound to the disease variable table.
ModelConfig ssc_model_config();

}  // namespace traject::model
