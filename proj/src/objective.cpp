#include "traject/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <utility>

#include "traject/optim.hpp"

namespace traject::obj {

namespace {

constexpr double kHalfLog2Pi = 0.9189385332046727;

// Noise is keyed by (patient, k) so a row's draw does not depend on batch
// composition; hand-built batches without ids fall back to the row index.
Tensor row_noise(const feat::Batch& b, int latent_dim, std::uint64_t seed, int sample) {
  Tensor eps(b.flat_rows(), latent_dim);
  for (int r = 0; r < b.batch; ++r) {
    const std::uint64_t p =
        b.patient.empty() ? static_cast<std::uint64_t>(r) : static_cast<std::uint64_t>(b.patient[r]);
    const std::uint64_t k = b.k.empty() ? 0 : static_cast<std::uint64_t>(b.k[r]);
    Rng rng(derive_seed(derive_seed(seed, "row", p, k), "s", static_cast<std::uint64_t>(sample)));
    for (int t = 0; t + 1 < b.n_steps; ++t)
      for (int l = 0; l < latent_dim; ++l) eps(t * b.batch + r, l) = rng.normal();
  }
  return eps;
}

template <class F>
auto attributed(const char* term, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    fail("loss term ", term, " failed: ", e.what());
  }
}

double finite_term(const char* term, const Tape& tape, NodeId id) {
  const double v = tape.value(id).item();
  require(std::isfinite(v), "loss term ", term, " is non-finite");
  return v;
}

}  // namespace

void LossWeights::validate() const {
  require(w_x >= 0.0 && alpha >= 0.0 && beta >= 0.0, "loss weights must be nonnegative");
  require(n_samples >= 1, "n_samples must be >= 1");
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  nll_x += o.nll_x;
  ce_x += o.ce_x;
  ce_y += o.ce_y;
  kl += o.kl;
  total += o.total;
  return *this;
}

LossTerms LossTerms::scaled(double f) const {
  return {nll_x * f, ce_x * f, ce_y * f, kl * f, total * f};
}

ElboResult elbo_loss(Tape& tape, const model::SscModel& m, const feat::Batch& batch,
                     const LossWeights& w, std::uint64_t noise_seed) {
  w.validate();
  std::vector<Tensor> eps;
  if (!w.deterministic && (w.w_x > 0.0 || w.alpha > 0.0))
    for (int s = 0; s < w.n_samples; ++s)
      eps.push_back(row_noise(batch, m.layout().latent_dim, noise_seed, s));
  return elbo_loss(tape, m, batch, w, eps);
}

ElboResult elbo_loss(Tape& tape, const model::SscModel& m, const feat::Batch& batch,
                     const LossWeights& w, const std::vector<Tensor>& eps) {
  w.validate();
  batch.validate(m.layout());
  const feat::ModelLayout& lay = m.layout();
  const bool need_z = w.w_x > 0.0 || w.alpha > 0.0;
  const int samples = w.deterministic || !need_z ? 1 : static_cast<int>(eps.size());
  if (need_z && !w.deterministic)
    require(!eps.empty(), "stochastic loss needs at least one noise draw");

  const model::GaussSeq q = attributed("posterior", [&] { return m.encode(tape, batch); });
  const NodeId ctx = tape.constant(batch.ctx, "ctx");

  NodeId nll_acc = -1, ce_x_acc = -1, ce_y_acc = -1;
  auto accumulate = [&tape](NodeId& acc, NodeId v) { acc = acc < 0 ? v : tape.add(acc, v); };

  for (int s = 0; s < samples; ++s) {
    NodeId z = -1;
    if (need_z) z = w.deterministic ? q.mu : m.sample(tape, q, eps[s]);

    if (w.w_x > 0.0) {
      attributed("NLL_x/CE_x", [&] {
        const model::XDist x = m.decode(tape, z, ctx);
        if (lay.n_cont() > 0) {
          const NodeId target = tape.constant(batch.cont_target, "x_target");
          const NodeId mask = tape.constant(batch.cont_mask, "x_mask");
          const NodeId zsc = tape.div(tape.sub(target, x.cont_mu), x.cont_sigma);
          const NodeId per = tape.add_const(
              tape.add(tape.scale(tape.square(zsc), 0.5), tape.log(x.cont_sigma)), kHalfLog2Pi);
          accumulate(nll_acc, tape.sum(tape.mul(per, mask)));
        }
        for (int i = 0; i < lay.n_cat(); ++i) {
          const NodeId target = tape.constant(batch.cat_target[i], "cat_target");
          const NodeId lp = tape.log_softmax_rows(x.cat_logits[i]);
          accumulate(ce_x_acc, tape.neg(tape.sum(tape.mul(target, lp))));
        }
        return 0;
      });
    }
    if (w.alpha > 0.0) {
      attributed("CE_y", [&] {
        const std::vector<NodeId> heads = m.guide(tape, z, ctx);
        for (int g = 0; g < lay.n_labels(); ++g) {
          const NodeId target = tape.constant(batch.label_target[g], "y_target");
          const NodeId lp = tape.log_softmax_rows(heads[g]);
          accumulate(ce_y_acc, tape.neg(tape.sum(tape.mul(target, lp))));
        }
        return 0;
      });
    }
  }

  NodeId kl_node = -1;
  if (w.beta > 0.0) {
    kl_node = attributed("KL", [&] {
      const model::GaussSeq p = m.prior(tape, ctx);
      return model::kl_diag(tape, q, p);
    });
  }

  const double inv_s = 1.0 / samples;
  ElboResult out;
  NodeId total = -1;
  auto add_term = [&](const char* name, NodeId acc, double avg, double weight, double& slot) {
    if (acc < 0) return;
    const NodeId mean = avg != 1.0 ? tape.scale(acc, avg) : acc;
    slot = finite_term(name, tape, mean);
    if (weight > 0.0) {
      const NodeId weighted = weight != 1.0 ? tape.scale(mean, weight) : mean;
      total = total < 0 ? weighted : tape.add(total, weighted);
    }
  };
  add_term("NLL_x", nll_acc, inv_s, w.w_x, out.sums.nll_x);
  add_term("CE_x", ce_x_acc, inv_s, w.w_x, out.sums.ce_x);
  add_term("CE_y", ce_y_acc, inv_s, w.alpha, out.sums.ce_y);
  add_term("KL", kl_node, 1.0, w.beta, out.sums.kl);

  if (total < 0) total = tape.constant(Tensor(1, 1, 0.0), "zero_loss");
  out.total = total;
  out.sums.total = finite_term("total", tape, total);
  return out;
}

LossTerms patient_loss(const model::SscModel& m, diff::ParamStore& store,
                       const cohort::Cohort& cohort, const feat::FeatureStats& stats, int patient,
                       const std::vector<int>& k_set, const LossWeights& w,
                       std::uint64_t noise_seed, const feat::FeaturizeOptions& opts) {
  require(!k_set.empty(), "k_set must be non-empty");
  std::vector<std::pair<int, int>> rows;
  rows.reserve(k_set.size());
  for (int k : k_set) rows.emplace_back(patient, k);
  const feat::Batch b = feat::make_batch(cohort, stats, m.layout(), rows, opts);
  Tape tape({}, &store);
  return elbo_loss(tape, m, b, w, noise_seed).sums;
}

std::vector<int> full_k_set(int n_visits) {
  require(n_visits >= 2, "need at least two visits");
  std::vector<int> ks(n_visits);
  std::iota(ks.begin(), ks.end(), 0);
  return ks;
}

std::vector<int> val_k_set(int n_visits) {
  require(n_visits >= 2, "need at least two visits");
  const int last = n_visits - 1;
  std::vector<int> ks = {0, (last + 1) / 2, last};
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  return ks;
}

void TrainConfig::validate() const {
  require(lr > 0.0, "learning rate must be positive");
  require(batch_size >= 1, "batch size must be >= 1");
  require(max_epochs >= 1, "max_epochs must be >= 1");
  require(patience >= 1, "patience must be >= 1");
  require(val_fraction > 0.0 && val_fraction < 1.0, "val_fraction must be in (0, 1)");
  require(k_subsample >= 1, "k_subsample must be >= 1");
}

namespace {

std::vector<int> epoch_k_set(int n_visits, int k_subsample, std::uint64_t seed) {
  const int last = n_visits - 1;
  std::vector<int> all(n_visits);
  std::iota(all.begin(), all.end(), 0);
  if (n_visits <= k_subsample + 1) return all;
  Rng rng(seed);
  rng.shuffle(all);
  std::vector<int> ks(all.begin(), all.begin() + k_subsample);
  if (std::find(ks.begin(), ks.end(), last) == ks.end()) ks.push_back(last);
  std::sort(ks.begin(), ks.end());
  return ks;
}

}  // namespace

TrainResult train(const cohort::Cohort& cohort, const model::ModelConfig& mcfg,
                  const TrainConfig& tcfg, const LossWeights& w, const std::vector<int>* train_set,
                  const std::vector<int>* val_set, const TrainInit* init) {
  tcfg.validate();
  w.validate();
  const int n = cohort.size();
  require(n >= 2, "training needs at least two patients");

  TrainResult res;
  if (train_set != nullptr || val_set != nullptr) {
    require(train_set != nullptr && val_set != nullptr, "provide both splits or neither");
    res.train_ids = *train_set;
    res.val_ids = *val_set;
  } else {
    std::vector<int> ids(n);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng(derive_seed(tcfg.seed, "split"));
    rng.shuffle(ids);
    int n_val = static_cast<int>(std::lround(tcfg.val_fraction * n));
    n_val = std::max(1, std::min(n_val, n - 1));
    res.val_ids.assign(ids.begin(), ids.begin() + n_val);
    res.train_ids.assign(ids.begin() + n_val, ids.end());
  }
  require(!res.train_ids.empty() && !res.val_ids.empty(), "both splits need patients");
  std::sort(res.train_ids.begin(), res.train_ids.end());
  std::sort(res.val_ids.begin(), res.val_ids.end());
  res.stats = feat::compute_stats(cohort, res.train_ids);
  const feat::FeaturizeOptions fopts{tcfg.use_medications};

  diff::ParamStore store;
  if (init != nullptr) store = init->store;
  const model::SscModel m(store, mcfg);

  std::map<int, std::vector<int>> buckets;
  for (int pid : res.train_ids) buckets[cohort.patients.at(pid).n_visits()].push_back(pid);

  double best_val = init != nullptr && init->has_best ? init->best_val
                                                      : std::numeric_limits<double>::infinity();
  diff::ParamStore best = store;
  int best_epoch = init != nullptr ? init->start_epoch : 0;
  int stale = 0;
  const int start = init != nullptr ? init->start_epoch : 0;
  res.epochs_run = start;

  for (int epoch = start + 1; epoch <= start + tcfg.max_epochs; ++epoch) {
    LossTerms train_sum;
    double train_rows = 0.0;
    int batch_counter = 0;
    bool ok = true;
    try {
      for (const auto& [nv, pats] : buckets) {
        std::vector<int> order = pats;
        Rng shuffle_rng(derive_seed(tcfg.seed, "shuffle", epoch, nv));
        shuffle_rng.shuffle(order);
        for (std::size_t at = 0; at < order.size(); at += tcfg.batch_size) {
          const std::size_t end = std::min(order.size(), at + tcfg.batch_size);
          std::vector<std::pair<int, int>> rows;
          for (std::size_t i = at; i < end; ++i)
            for (int k :
                 epoch_k_set(nv, tcfg.k_subsample, derive_seed(tcfg.seed, "ksub", epoch, order[i])))
              rows.emplace_back(order[i], k);
          const feat::Batch b = feat::make_batch(cohort, res.stats, mcfg.layout, rows, fopts);
          diff::TapeOptions topts;
          topts.train = true;
          topts.seed = derive_seed(tcfg.seed, "dropout", epoch, batch_counter);
          Tape tape(topts, &store);
          const ElboResult r = elbo_loss(tape, m, b, w, derive_seed(tcfg.seed, "noise", epoch));
          tape.backward(tape.scale(r.total, 1.0 / static_cast<double>(rows.size())));
          diff::AdamConfig acfg;
          acfg.lr = tcfg.lr;
          diff::adam_step(store, diff::collect_grads(tape), acfg);
          train_sum += r.sums;
          train_rows += static_cast<double>(rows.size());
          ++batch_counter;
        }
      }
    } catch (const std::exception&) {
      ok = false;
    }

    LossTerms val_sum;
    double val_rows = 0.0;
    if (ok) {
      try {
        for (int pid : res.val_ids) {
          const std::vector<int> ks = val_k_set(cohort.patients.at(pid).n_visits());
          val_sum += patient_loss(m, store, cohort, res.stats, pid, ks, w,
                                  derive_seed(tcfg.seed, "valnoise"), fopts);
          val_rows += static_cast<double>(ks.size());
        }
      } catch (const std::exception&) {
        ok = false;
      }
    }
    if (!ok) {
      res.diverged = true;
      break;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train = train_sum.scaled(1.0 / train_rows);
    stats.val = val_sum.scaled(1.0 / val_rows);
    res.history.push_back(stats);
    res.epochs_run = epoch;

    if (stats.val.total < best_val) {
      best_val = stats.val.total;
      best = store;
      best_epoch = epoch;
      stale = 0;
    } else if (++stale >= tcfg.patience) {
      break;
    }
  }

  res.params = std::move(best);
  res.best_val = best_val;
  res.best_epoch = best_epoch;
  return res;
}

GridCvResult grid_cv(const cohort::Cohort& cohort, const std::vector<GridCandidate>& grid,
                     const TrainConfig& tcfg, int folds) {
  require(!grid.empty(), "grid must be non-empty");
  require(folds >= 2, "need at least two folds");
  const int n = cohort.size();
  require(n / folds >= 2, "every fold needs at least two patients");

  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng(derive_seed(tcfg.seed, "fold"));
  rng.shuffle(ids);
  std::vector<std::vector<int>> fold_ids(folds);
  for (int i = 0; i < n; ++i) fold_ids[i % folds].push_back(ids[i]);

  GridCvResult res;
  res.folds = fold_ids;
  res.fold_losses.assign(grid.size(), std::vector<double>(folds, 0.0));
  res.mean_loss.assign(grid.size(), 0.0);
  for (std::size_t c = 0; c < grid.size(); ++c) {
    for (int f = 0; f < folds; ++f) {
      std::vector<int> train_ids;
      for (int g = 0; g < folds; ++g)
        if (g != f) train_ids.insert(train_ids.end(), fold_ids[g].begin(), fold_ids[g].end());
      const TrainResult r =
          train(cohort, grid[c].model, tcfg, grid[c].weights, &train_ids, &fold_ids[f], nullptr);
      res.fold_losses[c][f] = r.best_val;
      res.mean_loss[c] += r.best_val / folds;
    }
    if (res.mean_loss[c] < res.mean_loss[res.best_index]) res.best_index = static_cast<int>(c);
  }
  return res;
}

}  // namespace traject::obj
