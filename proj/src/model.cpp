#include "traject/model.hpp"

#include <utility>

#include "traject/common.hpp"

namespace traject::model {

void ModelConfig::validate() const {
  layout.validate();
  require(layout.latent_dim >= 1, "latent_dim must be positive");
  require(layout.context_dim >= 1, "context_dim must be positive");
  require(lstm_hidden >= 1, "lstm_hidden must be positive");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0, 1)");
  require(latent_sigma_floor > 0.0 && obs_sigma_floor > 0.0, "sigma floors must be positive");
}

SscModel::SscModel(ParamStore& store, ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const feat::ModelLayout& lay = cfg_.layout;
  const std::uint64_t seed = cfg_.init_seed;

  enc_lstm_ = nn::Lstm(store, "enc.lstm", lay.enc_in_dim(), cfg_.lstm_hidden, seed);
  enc_mlp_ = nn::MlpStack(store, "enc.mlp", cfg_.lstm_hidden, cfg_.encoder_fc, cfg_.batchnorm,
                          cfg_.dropout, seed);
  enc_mu_ = nn::Dense(store, "enc.mu", enc_mlp_.out_dim(), lay.latent_dim, seed, nn::Init::zero);
  enc_sigma_ =
      nn::Dense(store, "enc.sigma", enc_mlp_.out_dim(), lay.latent_dim, seed, nn::Init::zero);

  prior_mlp_ = nn::MlpStack(store, "prior.mlp", lay.context_dim, cfg_.prior_fc, cfg_.batchnorm,
                            cfg_.dropout, seed);
  prior_mu_ =
      nn::Dense(store, "prior.mu", prior_mlp_.out_dim(), lay.latent_dim, seed, nn::Init::zero);
  prior_sigma_ =
      nn::Dense(store, "prior.sigma", prior_mlp_.out_dim(), lay.latent_dim, seed, nn::Init::zero);

  const int dec_in = lay.latent_dim + lay.context_dim;
  dec_mean_mlp_ =
      nn::MlpStack(store, "dec.mean", dec_in, cfg_.decoder_fc, cfg_.batchnorm, cfg_.dropout, seed);
  if (lay.n_cont() > 0) {
    dec_var_mlp_ =
        nn::MlpStack(store, "dec.var", dec_in, cfg_.decoder_fc, cfg_.batchnorm, cfg_.dropout, seed);
    dec_cont_mu_ =
        nn::Dense(store, "dec.cont_mu", dec_mean_mlp_.out_dim(), lay.n_cont(), seed, nn::Init::zero);
    dec_cont_sigma_ = nn::Dense(store, "dec.cont_sigma", dec_var_mlp_.out_dim(), lay.n_cont(), seed,
                                nn::Init::zero);
  }
  dec_cat_.reserve(lay.cat.size());
  for (std::size_t i = 0; i < lay.cat.size(); ++i)
    dec_cat_.emplace_back(store, cat("dec.cat", i), dec_mean_mlp_.out_dim(), lay.cat[i].classes,
                          seed, nn::Init::zero);

  guid_mlp_.reserve(lay.n_labels());
  guid_head_.reserve(lay.n_labels());
  for (int g = 0; g < lay.n_labels(); ++g) {
    const int block_len = lay.label_block[g].second;
    const int in = block_len + (cfg_.guidance_use_context ? lay.context_dim : 0);
    guid_mlp_.emplace_back(store, cat("guid", g, ".mlp"), in, cfg_.guidance_fc, cfg_.batchnorm,
                           cfg_.dropout, seed);
    guid_head_.emplace_back(store, cat("guid", g, ".out"), guid_mlp_.back().out_dim(),
                            lay.label_classes[g], seed, nn::Init::zero);
  }
}

GaussSeq SscModel::encode(Tape& tape, const feat::Batch& batch) const {
  require(batch.n_steps >= 2, "need at least one modeled step, got n_steps=", batch.n_steps);
  require(static_cast<int>(batch.enc_in.size()) == batch.n_steps, "enc_in/n_steps mismatch");
  std::vector<NodeId> steps;
  steps.reserve(batch.enc_in.size());
  for (const Tensor& s : batch.enc_in) steps.push_back(tape.constant(s, "enc_in"));
  const std::vector<NodeId> h = enc_lstm_.forward(tape, steps);
  // The hidden state after consuming visit t parameterizes z_t; the first
  // visit only conditions the recurrence. Stacking steps 1..n-1 yields the
  // step-major flat layout.
  NodeId stack;
  if (batch.n_steps == 2) {
    stack = h[1];
  } else {
    std::vector<NodeId> modeled(h.begin() + 1, h.end());
    stack = tape.concat_rows(modeled);
  }
  const NodeId f = enc_mlp_.forward(tape, stack);
  GaussSeq q;
  q.mu = enc_mu_.forward(tape, f);
  q.sigma = tape.add_const(tape.softplus(enc_sigma_.forward(tape, f)), cfg_.latent_sigma_floor);
  return q;
}

GaussSeq SscModel::prior(Tape& tape, NodeId ctx) const {
  const NodeId f = prior_mlp_.forward(tape, ctx);
  GaussSeq p;
  p.mu = prior_mu_.forward(tape, f);
  p.sigma = tape.add_const(tape.softplus(prior_sigma_.forward(tape, f)), cfg_.latent_sigma_floor);
  return p;
}

XDist SscModel::decode(Tape& tape, NodeId z, NodeId ctx) const {
  const NodeId in = tape.concat_cols({z, ctx});
  XDist out;
  const NodeId fm = dec_mean_mlp_.forward(tape, in);
  if (cfg_.layout.n_cont() > 0) {
    out.cont_mu = dec_cont_mu_.forward(tape, fm);
    const NodeId fv = dec_var_mlp_.forward(tape, in);
    out.cont_sigma =
        tape.add_const(tape.softplus(dec_cont_sigma_.forward(tape, fv)), cfg_.obs_sigma_floor);
  }
  out.cat_logits.reserve(dec_cat_.size());
  for (const nn::Dense& head : dec_cat_) out.cat_logits.push_back(head.forward(tape, fm));
  return out;
}

std::vector<NodeId> SscModel::guide(Tape& tape, NodeId z, NodeId ctx) const {
  std::vector<NodeId> out;
  out.reserve(guid_head_.size());
  for (int g = 0; g < cfg_.layout.n_labels(); ++g) {
    const auto [off, len] = cfg_.layout.label_block[g];
    const NodeId block = tape.slice_cols(z, off, off + len);
    const NodeId in =
        cfg_.guidance_use_context ? tape.concat_cols({block, ctx}) : block;
    const NodeId f = guid_mlp_[g].forward(tape, in);
    out.push_back(guid_head_[g].forward(tape, f));
  }
  return out;
}

NodeId SscModel::sample(Tape& tape, const GaussSeq& q, const Tensor& eps) const {
  const Tensor& mu = tape.value(q.mu);
  require(eps.rows() == mu.rows() && eps.cols() == mu.cols(), "eps shape mismatch: got ",
          eps.shape_str(), " want ", mu.shape_str());
  const NodeId e = tape.constant(eps, "eps");
  return tape.add(q.mu, tape.mul(q.sigma, e));
}

NodeId kl_diag(Tape& tape, const GaussSeq& q, const GaussSeq& p) {
  const NodeId var_ratio = tape.div(tape.square(q.sigma), tape.square(p.sigma));
  const NodeId mean_diff = tape.sub(p.mu, q.mu);
  const NodeId mean_term = tape.div(tape.square(mean_diff), tape.square(p.sigma));
  const NodeId log_term = tape.scale(tape.sub(tape.log(p.sigma), tape.log(q.sigma)), 2.0);
  const NodeId per_entry =
      tape.add(tape.add(var_ratio, mean_term), tape.add_const(log_term, -1.0));
  return tape.scale(tape.sum(per_entry), 0.5);
}

ModelConfig ssc_model_config() {
  ModelConfig cfg;
  cfg.layout = feat::ssc_layout();
  return cfg;
}

}  // namespace traject::model
