#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "traject/cohort.hpp"
#include "traject/featurize.hpp"
#include "traject/gradcheck.hpp"
#include "traject/model.hpp"
#include "traject/objective.hpp"
#include "testutil.hpp"

using namespace traject;
using diff::NodeId;
using diff::Tape;
using testutil::randt;

namespace {

feat::ModelLayout tiny_layout() {
  feat::ModelLayout lay;
  lay.n_vars = 3;
  lay.cont = {0, 1};
  lay.cat = {{2, 3}};
  lay.label_classes = {2, 4};
  lay.label_block = {{0, 1}, {1, 1}};
  lay.context_dim = 2;
  lay.latent_dim = 2;
  return lay;
}

model::ModelConfig tiny_config() {
  model::ModelConfig cfg;
  cfg.layout = tiny_layout();
  cfg.lstm_hidden = 6;
  cfg.encoder_fc = {5, 5};
  cfg.decoder_fc = {5};
  cfg.guidance_fc = {4};
  cfg.prior_fc = {4};
  cfg.init_seed = 3;
  return cfg;
}

model::ModelConfig small_disease_config(int lstm, int fc, std::uint64_t seed) {
  model::ModelConfig cfg;
  cfg.layout = feat::ssc_layout();
  cfg.lstm_hidden = lstm;
  cfg.encoder_fc = {fc};
  cfg.decoder_fc = {fc};
  cfg.guidance_fc = {fc / 2};
  cfg.prior_fc = {fc / 2};
  cfg.init_seed = seed;
  return cfg;
}

feat::Batch rand_batch(const feat::ModelLayout& lay, int n_steps, int batch, Rng& rng) {
  feat::Batch b;
  b.n_steps = n_steps;
  b.batch = batch;
  b.k = std::vector<int>(batch, n_steps - 1);
  const int n = b.flat_rows();
  for (int t = 0; t < n_steps; ++t) b.enc_in.push_back(randt(batch, lay.enc_in_dim(), rng));
  b.ctx = randt(n, lay.context_dim, rng);
  b.cont_target = randt(n, std::max(lay.n_cont(), 1), rng);
  b.cont_mask = Tensor(n, std::max(lay.n_cont(), 1));
  for (std::size_t i = 0; i < b.cont_mask.size(); ++i)
    b.cont_mask.data()[i] = rng.bernoulli(0.8) ? 1.0 : 0.0;
  for (const feat::CatSlot& s : lay.cat) {
    Tensor t(n, s.classes);
    for (int r = 0; r < n; ++r)
      if (rng.bernoulli(0.8)) t(r, rng.uniform_int(s.classes)) = 1.0;
    b.cat_target.push_back(std::move(t));
  }
  for (int c : lay.label_classes) {
    Tensor t(n, c);
    for (int r = 0; r < n; ++r)
      if (rng.bernoulli(0.7)) t(r, rng.uniform_int(c)) = 1.0;
    b.label_target.push_back(std::move(t));
  }
  b.validate(lay);
  return b;
}

void randomize(diff::ParamStore& store, Rng& rng, double scale = 0.4) {
  for (const std::string& name : store.names()) {
    diff::ParamStore::Entry& e = store.entry(name);
    if (!e.trainable) continue;
    for (std::size_t i = 0; i < e.value.size(); ++i) e.value.data()[i] = rng.normal() * scale;
  }
}

double log_norm_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return -0.5 * z * z - std::log(sigma) - 0.9189385332046727;
}

void check_terms_close(const obj::LossTerms& a, const obj::LossTerms& b, double eps) {
  CHECK(a.nll_x == doctest::Approx(b.nll_x).epsilon(eps));
  CHECK(a.ce_x == doctest::Approx(b.ce_x).epsilon(eps));
  CHECK(a.ce_y == doctest::Approx(b.ce_y).epsilon(eps));
  CHECK(a.kl == doctest::Approx(b.kl).epsilon(eps));
  CHECK(a.total == doctest::Approx(b.total).epsilon(eps));
}

bool stores_equal(const diff::ParamStore& a, const diff::ParamStore& b) {
  const std::vector<std::string> names = a.names();
  if (names != b.names()) return false;
  for (const std::string& n : names) {
    const Tensor& ta = a.value(n);
    const Tensor& tb = b.value(n);
    if (!ta.same_shape(tb)) return false;
    for (std::size_t i = 0; i < ta.size(); ++i)
      if (ta.data()[i] != tb.data()[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("weight and schedule validation") {
  obj::LossWeights w;
  w.validate();
  w.alpha = -0.1;
  CHECK_THROWS(w.validate());
  w = {};
  w.n_samples = 0;
  CHECK_THROWS(w.validate());
  obj::TrainConfig tc;
  tc.validate();
  tc.lr = 0.0;
  CHECK_THROWS(tc.validate());
  tc = {};
  tc.val_fraction = 1.0;
  CHECK_THROWS(tc.validate());
  tc = {};
  tc.patience = 0;
  CHECK_THROWS(tc.validate());
}

TEST_CASE("prefix sets cover the intended grid") {
  CHECK(obj::full_k_set(5) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(obj::full_k_set(2) == std::vector<int>{0, 1});
  CHECK(obj::val_k_set(9) == std::vector<int>{0, 4, 8});
  CHECK(obj::val_k_set(3) == std::vector<int>{0, 1, 2});
  CHECK(obj::val_k_set(2) == std::vector<int>{0, 1});
  CHECK_THROWS(obj::full_k_set(1));
  CHECK_THROWS(obj::val_k_set(1));
}

TEST_CASE("unobserved data with zero extra weights gives an exact zero loss") {
  Rng rng(21);
  const model::ModelConfig cfg = tiny_config();
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  randomize(store, rng);
  feat::Batch b = rand_batch(cfg.layout, 4, 2, rng);
  b.cont_mask = Tensor(b.flat_rows(), 2);
  for (Tensor& t : b.cat_target) t = Tensor(t.rows(), t.cols());
  obj::LossWeights w;
  w.alpha = 0.0;
  w.beta = 0.0;
  Tape tape({}, &store);
  const obj::ElboResult r = obj::elbo_loss(tape, m, b, w, 7);
  CHECK(r.sums.nll_x == 0.0);
  CHECK(r.sums.ce_x == 0.0);
  CHECK(r.sums.ce_y == 0.0);
  CHECK(r.sums.kl == 0.0);
  CHECK(r.sums.total == 0.0);
}

TEST_CASE("deterministic weights ignore the noise stream") {
  Rng rng(23);
  const model::ModelConfig cfg = tiny_config();
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  randomize(store, rng);
  const feat::Batch b = rand_batch(cfg.layout, 4, 2, rng);
  obj::LossWeights w;
  w.deterministic = true;
  Tape t1({}, &store), t2({}, &store), t3({}, &store);
  const double a = obj::elbo_loss(t1, m, b, w, 1).sums.total;
  const double c = obj::elbo_loss(t2, m, b, w, 2).sums.total;
  w.n_samples = 3;
  const double d = obj::elbo_loss(t3, m, b, w, 9).sums.total;
  CHECK(a == c);
  CHECK(a == d);
}

TEST_CASE("stochastic bound never exceeds the quadrature evidence") {
  model::ModelConfig cfg;
  cfg.layout.n_vars = 1;
  cfg.layout.cont = {0};
  cfg.layout.context_dim = 1;
  cfg.layout.latent_dim = 1;
  cfg.lstm_hidden = 4;
  cfg.encoder_fc = {4};
  cfg.decoder_fc = {};  // affine mean keeps log p(x|z) quadratic in z
  cfg.prior_fc = {3};
  cfg.dropout = 0.0;
  cfg.init_seed = 5;

  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    diff::ParamStore store;
    const model::SscModel m(store, cfg);
    for (const std::string& name : store.names()) {
      if (name == "dec.cont_sigma.W" || name == "dec.cont_sigma.b") continue;  // constant sigma_x
      diff::ParamStore::Entry& e = store.entry(name);
      if (!e.trainable) continue;
      for (std::size_t i = 0; i < e.value.size(); ++i) e.value.data()[i] = rng.normal() * 0.6;
    }

    feat::Batch b;
    b.n_steps = 2;
    b.batch = 1;
    b.k = {1};
    b.enc_in = {randt(1, cfg.layout.enc_in_dim(), rng), randt(1, cfg.layout.enc_in_dim(), rng)};
    b.ctx = randt(1, 1, rng);
    b.cont_target = randt(1, 1, rng);
    b.cont_mask = Tensor(1, 1, 1.0);
    b.validate(cfg.layout);

    obj::LossWeights w;
    w.alpha = 0.0;
    w.beta = 1.0;
    // A symmetric two-point draw averages a quadratic integrand exactly, so
    // the estimate equals the analytic expectation and the bound is strict.
    const std::vector<Tensor> eps = {Tensor(1, 1, 1.0), Tensor(1, 1, -1.0)};
    Tape tape({}, &store);
    const obj::ElboResult r = obj::elbo_loss(tape, m, b, w, eps);

    Tape probe({}, &store);
    const model::GaussSeq p = m.prior(probe, probe.constant(b.ctx, "ctx"));
    const double mu_p = probe.value(p.mu).item();
    const double sig_p = probe.value(p.sigma).item();
    const Tensor& W = store.value("dec.cont_mu.W");
    const Tensor& bias = store.value("dec.cont_mu.b");
    const double sig_d = std::log(2.0) + cfg.obs_sigma_floor;
    const double c = b.ctx(0, 0);
    const double x = b.cont_target(0, 0);

    const int n = 2000;
    const double lo = -10.0, hi = 10.0;
    const double step = (hi - lo) / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double z = lo + step * i;
      const double mu_d = W(0, 0) * z + W(1, 0) * c + bias(0, 0);
      const double f = std::exp(log_norm_pdf(x, mu_d, sig_d) + log_norm_pdf(z, mu_p, sig_p));
      acc += (i == 0 || i == n) ? 0.5 * f : f;
    }
    const double log_ev = std::log(acc * step);
    CHECK(-r.sums.total <= log_ev + 1e-6);
  }
}

TEST_CASE("doubling the sample count halves the estimator variance") {
  Rng rng(41);
  const model::ModelConfig cfg = tiny_config();
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  randomize(store, rng);
  const feat::Batch b = rand_batch(cfg.layout, 4, 3, rng);
  obj::LossWeights w1, w2;
  w2.n_samples = 2;
  std::vector<double> v1, v2;
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t seed = derive_seed(900, "reseed", static_cast<std::uint64_t>(i));
    Tape t1({}, &store), t2({}, &store);
    v1.push_back(obj::elbo_loss(t1, m, b, w1, seed).sums.total);
    v2.push_back(obj::elbo_loss(t2, m, b, w2, seed).sums.total);
  }
  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var_of = [&](const std::vector<double>& v) {
    const double mu = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size() - 1);
  };
  const double m1 = mean_of(v1), m2 = mean_of(v2);
  const double var1 = var_of(v1), var2 = var_of(v2);
  REQUIRE(var1 > 0.0);
  CHECK(std::abs(m1 - m2) < 4.0 * std::sqrt((var1 + var2) / 200.0));
  CHECK(var2 / var1 > 0.3);
  CHECK(var2 / var1 < 0.7);
}

TEST_CASE("prefix losses add across the prefix set") {
  cohort::SynthConfig sc;
  sc.n_patients = 6;
  sc.min_visits = 5;
  sc.max_visits = 7;
  sc.seed = 13;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const std::vector<int> ids = {0, 1, 2, 3, 4, 5};
  const feat::FeatureStats st = feat::compute_stats(c, ids);
  const model::ModelConfig cfg = small_disease_config(12, 12, 7);
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  Rng rng(3);
  randomize(store, rng, 0.2);

  obj::LossWeights w;
  const std::uint64_t noise = 555;
  const int pid = 0;
  const int n_visits = c.patients[pid].n_visits();

  const obj::LossTerms full =
      obj::patient_loss(m, store, c, st, pid, obj::full_k_set(n_visits), w, noise);
  obj::LossTerms acc;
  for (int k = 0; k < n_visits; ++k)
    acc += obj::patient_loss(m, store, c, st, pid, {k}, w, noise);
  check_terms_close(full, acc, 1e-10);

  // The largest prefix is the pure reconstruction term.
  const int last = n_visits - 1;
  Tape tape({}, &store);
  const feat::Batch bT = feat::make_batch(c, st, cfg.layout, {{pid, last}}, {});
  const obj::ElboResult direct = obj::elbo_loss(tape, m, bT, w, noise);
  const obj::LossTerms single = obj::patient_loss(m, store, c, st, pid, {last}, w, noise);
  CHECK(single.total == direct.sums.total);
  CHECK(single.nll_x == direct.sums.nll_x);
}

TEST_CASE("noise draws follow rows, not batch composition") {
  cohort::SynthConfig sc;
  sc.n_patients = 4;
  sc.min_visits = 6;
  sc.max_visits = 6;
  sc.seed = 29;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const feat::FeatureStats st = feat::compute_stats(c, {0, 1, 2, 3});
  const model::ModelConfig cfg = small_disease_config(10, 10, 9);
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  Rng rng(5);
  randomize(store, rng, 0.2);

  obj::LossWeights w;
  const std::uint64_t noise = 808;
  Tape tj({}, &store), ta({}, &store), tb({}, &store);
  const feat::Batch joint = feat::make_batch(c, st, cfg.layout, {{0, 5}, {1, 3}}, {});
  const feat::Batch only_a = feat::make_batch(c, st, cfg.layout, {{0, 5}}, {});
  const feat::Batch only_b = feat::make_batch(c, st, cfg.layout, {{1, 3}}, {});
  const obj::LossTerms sj = obj::elbo_loss(tj, m, joint, w, noise).sums;
  obj::LossTerms ss = obj::elbo_loss(ta, m, only_a, w, noise).sums;
  ss += obj::elbo_loss(tb, m, only_b, w, noise).sums;
  check_terms_close(sj, ss, 1e-10);
}

TEST_CASE("random prefix subsets estimate the full objective without bias") {
  cohort::SynthConfig sc;
  sc.n_patients = 3;
  sc.min_visits = 8;
  sc.max_visits = 8;
  sc.seed = 37;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const feat::FeatureStats st = feat::compute_stats(c, {0, 1, 2});
  const model::ModelConfig cfg = small_disease_config(10, 10, 15);
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  Rng rng(7);
  randomize(store, rng, 0.2);

  obj::LossWeights w;
  const std::uint64_t noise = 606;
  const int pid = 1;
  const int n_prefix = c.patients[pid].n_visits();  // 8 prefixes, k in 0..7
  std::vector<double> per_k;
  double full = 0.0;
  for (int k = 0; k < n_prefix; ++k) {
    per_k.push_back(obj::patient_loss(m, store, c, st, pid, {k}, w, noise).total);
    full += per_k.back();
  }

  Rng pick(99);
  const int draws = 500, subset = 3;
  std::vector<double> sums;
  std::vector<int> ks(n_prefix);
  for (int i = 0; i < draws; ++i) {
    std::iota(ks.begin(), ks.end(), 0);
    pick.shuffle(ks);
    double s = 0.0;
    for (int j = 0; j < subset; ++j) s += per_k[ks[j]];
    sums.push_back(s);
  }
  double mean = 0.0;
  for (double s : sums) mean += s;
  mean /= draws;
  double var = 0.0;
  for (double s : sums) var += (s - mean) * (s - mean);
  var /= draws - 1;
  const double expect = full * subset / n_prefix;
  const double se = std::sqrt(var / draws);
  CHECK(std::abs(mean - expect) <= 3.0 * se + 1e-12);
}

TEST_CASE("sentinel values under false masks cannot reach the loss") {
  cohort::SynthConfig sc;
  sc.n_patients = 5;
  sc.min_visits = 5;
  sc.max_visits = 6;
  sc.seed = 43;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const std::vector<int> ids = {0, 1, 2, 3, 4};
  const feat::FeatureStats st = feat::compute_stats(c, ids);
  const model::ModelConfig cfg = small_disease_config(10, 10, 21);
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  Rng rng(11);
  randomize(store, rng, 0.2);

  obj::LossWeights w;
  std::vector<obj::LossTerms> base;
  for (int pid : ids)
    base.push_back(obj::patient_loss(m, store, c, st, pid,
                                     obj::full_k_set(c.patients[pid].n_visits()), w, 303));

  cohort::Cohort mutated = c;
  const cohort::VariableTable& vars = cohort::ssc_variables();
  for (cohort::PatientRecord& p : mutated.patients) {
    for (int d = 0; d < vars.size(); ++d)
      for (int t = 0; t < p.n_visits(); ++t)
        if (!p.x_observed(d, t)) p.x(d, t) = vars.spec(d).kind == cohort::VarKind::continuous ? 4.75e4 : 1.0;
    for (int g = 0; g < static_cast<int>(cohort::label_layout().size()); ++g)
      for (int t = 0; t < p.n_visits(); ++t)
        if (!p.y_observed(g, t)) p.y(g, t) = 2;
  }

  for (int pid : ids) {
    const obj::LossTerms after = obj::patient_loss(
        m, store, mutated, st, pid, obj::full_k_set(mutated.patients[pid].n_visits()), w, 303);
    CHECK(after.nll_x == base[pid].nll_x);
    CHECK(after.ce_x == base[pid].ce_x);
    CHECK(after.ce_y == base[pid].ce_y);
    CHECK(after.kl == base[pid].kl);
    CHECK(after.total == base[pid].total);
  }
}

TEST_CASE("gradients survive a finite difference audit") {
  model::ModelConfig cfg = tiny_config();
  cfg.dropout = 0.0;  // finite differences need a deterministic graph
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  Rng rng(17);
  randomize(store, rng, 0.3);
  const feat::Batch b = rand_batch(cfg.layout, 4, 2, rng);
  obj::LossWeights w;
  w.n_samples = 2;
  diff::GradCheckConfig gc;
  gc.tape_opts.train = true;
  gc.tape_opts.update_batchnorm_stats = false;
  const diff::GradCheckReport rep = diff::finite_diff_check(
      store, [&](Tape& t) { return obj::elbo_loss(t, m, b, w, 77).total; }, gc);
  CHECK(rep.max_rel_err < 1e-3);
  CHECK(rep.failing(1e-3).empty());
}

TEST_CASE("a poisoned parameter is reported with its loss term") {
  Rng rng(19);
  const model::ModelConfig cfg = tiny_config();
  diff::ParamStore store;
  const model::SscModel m(store, cfg);
  randomize(store, rng, 0.3);
  const feat::Batch b = rand_batch(cfg.layout, 3, 2, rng);
  const obj::LossWeights w;

  auto expect_term = [&](const std::string& param, const char* term) {
    diff::ParamStore::Entry& e = store.entry(param);
    const Tensor saved = e.value;
    e.value.data()[0] = std::numeric_limits<double>::quiet_NaN();
    bool threw = false;
    try {
      Tape tape({}, &store);
      obj::elbo_loss(tape, m, b, w, 5);
    } catch (const std::exception& ex) {
      threw = true;
      CHECK(std::string(ex.what()).find(term) != std::string::npos);
    }
    CHECK(threw);
    e.value = saved;
  };
  expect_term("enc.mu.W", "posterior");
  expect_term("dec.cont_mu.b", "NLL_x/CE_x");
  expect_term("guid0.out.b", "CE_y");
  expect_term("prior.mu.b", "KL");
}

TEST_CASE("training on synthetic patients improves validation loss") {
  cohort::SynthConfig sc;
  sc.n_patients = 200;
  sc.seed = 4;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig mcfg = small_disease_config(32, 32, 11);
  obj::TrainConfig tc;
  tc.max_epochs = 12;
  tc.patience = 12;
  tc.seed = 2;
  const obj::LossWeights w;
  const obj::TrainResult r = obj::train(c, mcfg, tc, w);

  REQUIRE(!r.history.empty());
  CHECK(!r.diverged);
  CHECK(r.epochs_run == static_cast<int>(r.history.size()));
  const double first = r.history.front().val.total;
  REQUIRE(first > 0.0);
  CHECK(r.best_val < first);
  CHECK((first - r.best_val) / std::abs(first) > 0.10);
  CHECK(r.history[r.best_epoch - 1].val.total == r.best_val);

  std::set<int> seen(r.train_ids.begin(), r.train_ids.end());
  seen.insert(r.val_ids.begin(), r.val_ids.end());
  CHECK(static_cast<int>(seen.size()) == c.size());
  CHECK(static_cast<int>(r.train_ids.size() + r.val_ids.size()) == c.size());
  CHECK(static_cast<int>(r.val_ids.size()) == 40);

  // The returned parameters are the best snapshot, not the last epoch.
  diff::ParamStore ps = r.params;
  const model::SscModel mb(ps, mcfg);
  double tot = 0.0, rows = 0.0;
  for (int pid : r.val_ids) {
    const std::vector<int> ks = obj::val_k_set(c.patients[pid].n_visits());
    tot += obj::patient_loss(mb, ps, c, r.stats, pid, ks, w, derive_seed(tc.seed, "valnoise")).total;
    rows += static_cast<double>(ks.size());
  }
  CHECK(tot / rows == doctest::Approx(r.best_val).epsilon(1e-9));
}

TEST_CASE("label emphasis trades reconstruction for label fit") {
  cohort::SynthConfig sc;
  sc.n_patients = 100;
  sc.min_visits = 5;
  sc.max_visits = 8;
  sc.seed = 6;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig mcfg = small_disease_config(14, 14, 13);
  obj::TrainConfig tc;
  tc.max_epochs = 20;
  tc.patience = 20;
  tc.seed = 3;
  obj::LossWeights wa, wb;
  wb.alpha = 100.0;
  const obj::TrainResult ra = obj::train(c, mcfg, tc, wa);
  const obj::TrainResult rb = obj::train(c, mcfg, tc, wb);
  REQUIRE(!ra.history.empty());
  REQUIRE(!rb.history.empty());
  // Compare converged states, both runs complete the full budget.
  const obj::EpochStats& ea = ra.history.back();
  const obj::EpochStats& eb = rb.history.back();
  CHECK(eb.val.ce_y < ea.val.ce_y);
  CHECK(eb.val.nll_x > ea.val.nll_x);
}

TEST_CASE("equal seeds reproduce the history bit for bit") {
  cohort::SynthConfig sc;
  sc.n_patients = 30;
  sc.min_visits = 5;
  sc.max_visits = 6;
  sc.seed = 8;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig mcfg = small_disease_config(10, 10, 17);
  obj::TrainConfig tc;
  tc.max_epochs = 3;
  tc.patience = 3;
  tc.seed = 9;
  const obj::LossWeights w;
  const obj::TrainResult r1 = obj::train(c, mcfg, tc, w);
  const obj::TrainResult r2 = obj::train(c, mcfg, tc, w);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train.total == r2.history[i].train.total);
    CHECK(r1.history[i].train.nll_x == r2.history[i].train.nll_x);
    CHECK(r1.history[i].val.total == r2.history[i].val.total);
    CHECK(r1.history[i].val.ce_y == r2.history[i].val.ce_y);
    CHECK(r1.history[i].val.kl == r2.history[i].val.kl);
  }
  CHECK(r1.best_epoch == r2.best_epoch);
  CHECK(r1.best_val == r2.best_val);
  CHECK(r1.train_ids == r2.train_ids);
  CHECK(r1.val_ids == r2.val_ids);
  CHECK(stores_equal(r1.params, r2.params));

  obj::TrainConfig other = tc;
  other.seed = 10;
  const obj::TrainResult r3 = obj::train(c, mcfg, other, w);
  CHECK(r3.history.front().val.total != r1.history.front().val.total);
}

TEST_CASE("a diverging run aborts and keeps the last good parameters") {
  cohort::SynthConfig sc;
  sc.n_patients = 8;
  sc.min_visits = 5;
  sc.max_visits = 5;
  sc.seed = 15;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig mcfg = small_disease_config(8, 8, 19);
  obj::TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 2;
  tc.batch_size = 2;
  tc.seed = 5;
  const obj::LossWeights w;
  const obj::TrainResult good = obj::train(c, mcfg, tc, w);
  REQUIRE(!good.diverged);
  REQUIRE(!good.history.empty());

  obj::TrainInit init;
  init.store = good.params;
  init.start_epoch = good.epochs_run;
  init.best_val = good.best_val;
  init.has_best = true;
  obj::TrainConfig blowup = tc;
  blowup.max_epochs = 5;
  // One Adam step lands every parameter near +-lr, the next forward overflows.
  blowup.lr = 1e200;
  const obj::TrainResult r =
      obj::train(c, mcfg, blowup, w, &good.train_ids, &good.val_ids, &init);
  CHECK(r.diverged);
  CHECK(r.history.empty());
  CHECK(r.epochs_run == good.epochs_run);
  CHECK(r.best_epoch == good.epochs_run);
  CHECK(r.best_val == good.best_val);
  CHECK(stores_equal(r.params, good.params));
}

TEST_CASE("resuming continues the epoch counter and keeps improving") {
  cohort::SynthConfig sc;
  sc.n_patients = 24;
  sc.min_visits = 5;
  sc.max_visits = 6;
  sc.seed = 25;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig mcfg = small_disease_config(10, 10, 23);
  obj::TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 5;
  tc.seed = 12;
  const obj::LossWeights w;
  const obj::TrainResult first = obj::train(c, mcfg, tc, w);
  REQUIRE(first.epochs_run == 2);

  obj::TrainInit init;
  init.store = first.params;
  init.start_epoch = first.epochs_run;
  init.best_val = first.best_val;
  init.has_best = true;
  const obj::TrainResult second =
      obj::train(c, mcfg, tc, w, &first.train_ids, &first.val_ids, &init);
  REQUIRE(!second.history.empty());
  CHECK(second.history.front().epoch == 3);
  CHECK(second.epochs_run == 4);
  CHECK(second.best_val <= first.best_val);
}

TEST_CASE("cross validation prefers the stronger decoder") {
  cohort::SynthConfig sc;
  sc.n_patients = 36;
  sc.min_visits = 5;
  sc.max_visits = 6;
  sc.seed = 19;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig base = small_disease_config(16, 16, 2);
  model::ModelConfig weak = base;
  weak.decoder_fc = {1};
  obj::TrainConfig tc;
  tc.max_epochs = 6;
  tc.patience = 6;
  tc.seed = 8;
  const obj::LossWeights w;
  const std::vector<obj::GridCandidate> grid = {{base, w}, {weak, w}};
  const obj::GridCvResult res = obj::grid_cv(c, grid, tc, 2);

  CHECK(res.best_index == 0);
  REQUIRE(res.mean_loss.size() == 2);
  CHECK(res.mean_loss[0] < res.mean_loss[1]);
  REQUIRE(res.fold_losses.size() == 2);
  REQUIRE(res.fold_losses[0].size() == 2);
  CHECK(res.mean_loss[0] ==
        doctest::Approx((res.fold_losses[0][0] + res.fold_losses[0][1]) / 2.0).epsilon(1e-12));

  // Folds partition the cohort at patient level.
  std::vector<int> all;
  for (const std::vector<int>& f : res.folds) all.insert(all.end(), f.begin(), f.end());
  std::sort(all.begin(), all.end());
  std::vector<int> want(c.size());
  std::iota(want.begin(), want.end(), 0);
  CHECK(all == want);
}

TEST_CASE("cross validation rejects degenerate setups") {
  cohort::SynthConfig sc;
  sc.n_patients = 5;
  sc.min_visits = 5;
  sc.max_visits = 5;
  sc.seed = 33;
  const cohort::Cohort c = cohort::generate_cohort(sc);
  const model::ModelConfig mcfg = small_disease_config(8, 8, 3);
  obj::TrainConfig tc;
  tc.max_epochs = 1;
  tc.seed = 1;
  const obj::LossWeights w;
  const std::vector<obj::GridCandidate> grid = {{mcfg, w}};
  CHECK_THROWS(obj::grid_cv(c, {}, tc, 2));
  CHECK_THROWS(obj::grid_cv(c, grid, tc, 1));
  CHECK_THROWS(obj::grid_cv(c, grid, tc, 3));  // a 5-patient cohort cannot fill 3 folds

  const obj::GridCvResult res = obj::grid_cv(c, grid, tc, 2);
  CHECK(res.best_index == 0);
  REQUIRE(res.mean_loss.size() == 1);
  CHECK(std::isfinite(res.mean_loss[0]));
}
