#include <algorithm>
#include <cmath>

#include "traject/featurize.hpp"

namespace traject::feat {

int ModelLayout::cat_logit_dim() const {
  int n = 0;
  for (const CatSlot& s : cat) n += s.classes;
  return n;
}

void ModelLayout::validate() const {
  require(n_vars >= 1, "layout needs at least one variable");
  require(latent_dim >= 1, "layout needs a positive latent dimension");
  require(context_dim >= 1, "layout needs a positive context dimension");
  std::vector<bool> used(n_vars, false);
  for (int v : cont) {
    require(v >= 0 && v < n_vars && !used[v], "continuous slot ", v, " out of range or duplicated");
    used[v] = true;
  }
  for (const CatSlot& s : cat) {
    require(s.var >= 0 && s.var < n_vars && !used[s.var], "categorical slot ", s.var,
            " out of range or duplicated");
    require(s.classes >= 2, "categorical slot ", s.var, " needs >= 2 classes");
    used[s.var] = true;
  }
  require(static_cast<int>(cont.size() + cat.size()) == n_vars,
          "every variable needs exactly one likelihood slot");
  require(label_block.size() == label_classes.size(),
          "label blocks and label classes must align");
  for (std::size_t g = 0; g < label_block.size(); ++g) {
    const auto [off, len] = label_block[g];
    require(label_classes[g] >= 2, "label ", g, " needs >= 2 classes");
    require(off >= 0 && len >= 1 && off + len <= latent_dim, "label ", g,
            " latent block out of range");
  }
}

void Batch::validate(const ModelLayout& layout) const {
  require(n_steps >= 2, "a batch needs at least two visits");
  require(batch >= 1, "a batch needs at least one row");
  require(static_cast<int>(enc_in.size()) == n_steps, "encoder inputs must cover every visit");
  const int N = flat_rows();
  for (const Tensor& s : enc_in)
    require(s.rows() == batch && s.cols() == layout.enc_in_dim(), "encoder input shape mismatch");
  require(ctx.rows() == N && ctx.cols() == layout.context_dim, "context shape mismatch");
  require(cont_target.rows() == N && cont_target.cols() == std::max(layout.n_cont(), 1),
          "continuous target shape mismatch");
  require(cont_mask.same_shape(cont_target), "continuous mask shape mismatch");
  require(static_cast<int>(cat_target.size()) == layout.n_cat(), "categorical target count");
  for (int i = 0; i < layout.n_cat(); ++i)
    require(cat_target[i].rows() == N && cat_target[i].cols() == layout.cat[i].classes,
            "categorical target ", i, " shape mismatch");
  require(static_cast<int>(label_target.size()) == layout.n_labels(), "label target count");
  for (int g = 0; g < layout.n_labels(); ++g)
    require(label_target[g].rows() == N && label_target[g].cols() == layout.label_classes[g],
            "label target ", g, " shape mismatch");
  for (std::size_t r = 0; r < this->k.size(); ++r)
    require(this->k[r] >= 0 && this->k[r] < n_steps, "row ", r, " prefix end out of range");
}

int ssc_context_dim() { return 2 + 5 + cohort::kMedCount; }

ModelLayout ssc_layout(int latent_per_organ) {
  require(latent_per_organ >= 1, "latent_per_organ must be positive");
  const cohort::VariableTable& vars = cohort::ssc_variables();
  ModelLayout layout;
  layout.n_vars = vars.size();
  layout.cont = vars.continuous_indices();
  for (int v : vars.categorical_indices())
    layout.cat.push_back({v, static_cast<int>(vars.spec(v).categories.size())});
  layout.context_dim = ssc_context_dim();
  layout.latent_dim = 3 * latent_per_organ;
  for (const cohort::LabelId& id : cohort::label_layout()) {
    layout.label_classes.push_back(cohort::label_classes(id));
    const int organ = static_cast<int>(id.organ);
    layout.label_block.push_back({organ * latent_per_organ, latent_per_organ});
  }
  layout.validate();
  return layout;
}

FeatureStats compute_stats(const cohort::Cohort& cohort, const std::vector<int>& patient_ids) {
  const cohort::VariableTable& vars = cohort::ssc_variables();
  const int n = vars.size();
  FeatureStats st;
  st.mean.assign(n, 0.0);
  st.sd.assign(n, 1.0);

  const auto finish = [](double sum, double sumsq, long long cnt, double& mean, double& sd) {
    if (cnt == 0) return;
    mean = sum / static_cast<double>(cnt);
    const double var = sumsq / static_cast<double>(cnt) - mean * mean;
    sd = std::max(std::sqrt(std::max(var, 0.0)), 1e-6);
  };

  std::vector<double> sum(n, 0.0), sumsq(n, 0.0);
  std::vector<long long> cnt(n, 0);
  double tau_s = 0, tau_q = 0, dt_s = 0, dt_q = 0, h_s = 0, h_q = 0, w_s = 0, w_q = 0;
  long long tau_n = 0, dt_n = 0, stat_n = 0;
  for (int id : patient_ids) {
    require(id >= 0 && id < cohort.size(), "patient index ", id, " out of range");
    const cohort::PatientRecord& p = cohort.patients[id];
    for (int t = 0; t < p.n_visits(); ++t) {
      for (int d : vars.continuous_indices())
        if (p.x_observed(d, t)) {
          sum[d] += p.x(d, t);
          sumsq[d] += p.x(d, t) * p.x(d, t);
          ++cnt[d];
        }
      tau_s += p.tau[t];
      tau_q += p.tau[t] * p.tau[t];
      ++tau_n;
      if (t > 0) {
        const double dt = p.tau[t] - p.tau[t - 1];
        dt_s += dt;
        dt_q += dt * dt;
        ++dt_n;
      }
    }
    h_s += p.statics.height_cm;
    h_q += p.statics.height_cm * p.statics.height_cm;
    w_s += p.statics.base_weight;
    w_q += p.statics.base_weight * p.statics.base_weight;
    ++stat_n;
  }
  for (int d : vars.continuous_indices()) finish(sum[d], sumsq[d], cnt[d], st.mean[d], st.sd[d]);
  finish(tau_s, tau_q, tau_n, st.tau_mean, st.tau_sd);
  finish(dt_s, dt_q, dt_n, st.dt_mean, st.dt_sd);
  finish(h_s, h_q, stat_n, st.height_mean, st.height_sd);
  finish(w_s, w_q, stat_n, st.weight_mean, st.weight_sd);
  return st;
}

double encode_value(const cohort::VariableTable& vars, const FeatureStats& stats, int var, double value) {
  const cohort::VariableSpec& spec = vars.spec(var);
  if (spec.kind == cohort::VarKind::continuous) return (value - stats.mean[var]) / stats.sd[var];
  const int classes = static_cast<int>(spec.categories.size());
  return classes > 1 ? value / static_cast<double>(classes - 1) : 0.0;
}

std::vector<double> context_row(const cohort::PatientRecord& p, const FeatureStats& stats, int t,
                                const FeaturizeOptions& opts) {
  std::vector<double> row;
  row.reserve(ssc_context_dim());
  row.push_back((p.tau[t] - stats.tau_mean) / stats.tau_sd);
  const double dt = t > 0 ? p.tau[t] - p.tau[t - 1] : 0.0;
  row.push_back((dt - stats.dt_mean) / stats.dt_sd);
  row.push_back(static_cast<double>(p.statics.sex));
  row.push_back(static_cast<double>(p.statics.subtype_diffuse));
  row.push_back(p.statics.birth_year_offset);
  row.push_back((p.statics.height_cm - stats.height_mean) / stats.height_sd);
  row.push_back((p.statics.base_weight - stats.weight_mean) / stats.weight_sd);
  for (int m = 0; m < cohort::kMedCount; ++m)
    row.push_back(opts.use_medications ? p.meds(m, t) : 0.0);
  return row;
}

Batch make_batch(const cohort::Cohort& cohort, const FeatureStats& stats, const ModelLayout& layout,
                 const std::vector<std::pair<int, int>>& rows, const FeaturizeOptions& opts) {
  require(!rows.empty(), "a batch needs at least one row");
  const cohort::VariableTable& vars = cohort::ssc_variables();
  require(layout.n_vars == vars.size(), "layout does not match the variable table");

  Batch b;
  b.batch = static_cast<int>(rows.size());
  b.n_steps = cohort.patients.at(rows[0].first).n_visits();
  for (const auto& [pid, k] : rows) {
    const cohort::PatientRecord& p = cohort.patients.at(pid);
    require(p.n_visits() == b.n_steps, "batch rows must share one visit count");
    require(k >= 0 && k < b.n_steps, "prefix end ", k, " out of range for patient ", p.id);
    b.patient.push_back(pid);
    b.k.push_back(k);
  }

  const int N = b.flat_rows();
  b.enc_in.assign(b.n_steps, Tensor(b.batch, layout.enc_in_dim()));
  b.ctx = Tensor(N, layout.context_dim);
  b.cont_target = Tensor(N, std::max(layout.n_cont(), 1));
  b.cont_mask = Tensor(N, std::max(layout.n_cont(), 1));
  for (const CatSlot& s : layout.cat) b.cat_target.push_back(Tensor(N, s.classes));
  for (int c : layout.label_classes) b.label_target.push_back(Tensor(N, c));

  for (int r = 0; r < b.batch; ++r) {
    const cohort::PatientRecord& p = cohort.patients[b.patient[r]];
    const int k = b.k[r];
    for (int t = 0; t < b.n_steps; ++t) {
      Tensor& step = b.enc_in[t];
      if (t <= k) {
        for (int d = 0; d < layout.n_vars; ++d)
          if (p.x_observed(d, t)) {
            step(r, 2 * d) = encode_value(vars, stats, d, p.x(d, t));
            step(r, 2 * d + 1) = 1.0;
          }
      }
      const std::vector<double> ctx = context_row(p, stats, t, opts);
      for (int c = 0; c < layout.context_dim; ++c) step(r, layout.x_enc_dim() + c) = ctx[c];
      if (t == 0) continue;
      const int flat = (t - 1) * b.batch + r;
      for (int c = 0; c < layout.context_dim; ++c) b.ctx(flat, c) = ctx[c];
      for (int i = 0; i < layout.n_cont(); ++i) {
        const int d = layout.cont[i];
        if (p.x_observed(d, t)) {
          b.cont_target(flat, i) = (p.x(d, t) - stats.mean[d]) / stats.sd[d];
          b.cont_mask(flat, i) = 1.0;
        }
      }
      for (int i = 0; i < layout.n_cat(); ++i) {
        const int d = layout.cat[i].var;
        if (p.x_observed(d, t)) {
          const int cls = static_cast<int>(p.x(d, t));
          require(cls >= 0 && cls < layout.cat[i].classes, "class index out of range for variable ",
                  vars.spec(d).name);
          b.cat_target[i](flat, cls) = 1.0;
        }
      }
      for (int g = 0; g < layout.n_labels(); ++g) {
        if (!p.y_observed(g, t)) continue;
        int cls = static_cast<int>(p.y(g, t));
        if (cohort::label_layout()[g].kind == cohort::LabelKind::stage) cls -= 1;
        require(cls >= 0 && cls < layout.label_classes[g], "label class out of range for label ",
                g);
        b.label_target[g](flat, cls) = 1.0;
      }
    }
  }
  b.validate(layout);
  return b;
}

}  // namespace traject::feat
