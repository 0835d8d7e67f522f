#include <algorithm>
#include <cmath>

#include "traject/cohort.hpp"
#include "traject/rng.hpp"

namespace traject::cohort {

bool operator==(const PatientStatics& a, const PatientStatics& b) {
  return a.sex == b.sex && a.subtype_diffuse == b.subtype_diffuse &&
         a.birth_year_offset == b.birth_year_offset && a.height_cm == b.height_cm &&
         a.base_weight == b.base_weight;
}

std::vector<RegimeSpec> default_regimes() {
  std::vector<RegimeSpec> r(3);
  r[0].name = "mild";
  r[0].weight = 0.40;
  r[0].sev_start_mean = {0.5, 0.4, 0.5};
  r[0].sev_start_sd = {0.30, 0.30, 0.30};
  r[0].drift_mean = {0.05, 0.04, 0.05};
  r[0].drift_sd = {0.04, 0.04, 0.04};
  r[0].p_male = 0.10;
  r[0].p_diffuse = 0.25;
  r[1].name = "moderate";
  r[1].weight = 0.35;
  r[1].sev_start_mean = {1.7, 1.4, 1.6};
  r[1].sev_start_sd = {0.32, 0.32, 0.32};
  r[1].drift_mean = {0.18, 0.14, 0.16};
  r[1].drift_sd = {0.06, 0.06, 0.06};
  r[1].p_male = 0.13;
  r[1].p_diffuse = 0.33;
  r[2].name = "severe";
  r[2].weight = 0.25;
  r[2].sev_start_mean = {2.9, 2.6, 2.8};
  r[2].sev_start_sd = {0.35, 0.35, 0.35};
  r[2].drift_mean = {0.32, 0.28, 0.30};
  r[2].drift_sd = {0.08, 0.08, 0.08};
  r[2].p_male = 0.22;
  r[2].p_diffuse = 0.48;
  return r;
}

void SynthConfig::validate() const {
  require(n_patients >= 1, "n_patients must be >= 1, got ", n_patients);
  require(min_visits >= 5 && max_visits <= 15 && min_visits <= max_visits,
          "visit counts must satisfy 5 <= min <= max <= 15, got [", min_visits, ", ", max_visits,
          "]");
  require(missing_rate >= 0.0 && missing_rate <= 1.0, "missing_rate must lie in [0,1]");
  for (const auto& [name, rate] : missing_rate_overrides) {
    ssc_variables().index_of(name);
    require(rate >= 0.0 && rate <= 1.0, "missing rate for '", name, "' must lie in [0,1]");
  }
  require(noise_scale >= 0.0, "noise_scale must be nonnegative");
  require(rw_sd >= 0.0, "rw_sd must be nonnegative");
  require(!regimes.empty(), "at least one regime required");
  double total = 0.0;
  for (const RegimeSpec& r : regimes) {
    require(r.weight > 0.0, "regime weights must be positive");
    require(r.p_male >= 0.0 && r.p_male <= 1.0 && r.p_diffuse >= 0.0 && r.p_diffuse <= 1.0,
            "regime prevalence rates must lie in [0,1]");
    total += r.weight;
  }
  require(total > 0.0, "regime weights must sum to a positive value");
}

namespace {

double clip(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double sev_clip(double s) { return clip(s, 0.0, 4.0); }

struct Setter {
  ValueRow& row;
  const VariableTable& vars;
  void cont(const std::string& name, double v) {
    const int i = vars.index_of(name);
    const VariableSpec& spec = vars.spec(i);
    row.values[i] = clip(v, spec.min, spec.max);
    row.observed[i] = true;
  }
  void cat(const std::string& name, int c) {
    const int i = vars.index_of(name);
    row.values[i] = static_cast<double>(c);
    row.observed[i] = true;
  }
  void flag(const std::string& name, double unif, double p) { cat(name, unif < p ? 1 : 0); }
};

}  // namespace

ValueRow visit_values(const OrganSeverity& sev, const PatientStatics& st, const VisitDraws& draws,
                      double noise_scale) {
  const VariableTable& vars = ssc_variables();
  const int n = vars.size();
  require(static_cast<int>(draws.normal.size()) == n && static_cast<int>(draws.unif.size()) == n,
          "visit draws must hold one slot per variable");
  ValueRow row;
  row.values.assign(n, 0.0);
  row.observed.assign(n, false);
  Setter s{row, vars};

  const auto eps = [&](const std::string& name) {
    return noise_scale * draws.normal[vars.index_of(name)];
  };
  const auto u = [&](const std::string& name) { return draws.unif[vars.index_of(name)]; };

  const double sl = sev.lung, sh = sev.heart, sj = sev.joints, sm = sev.mean();

  // Lung.
  s.cont("fvc", 103.0 - 13.0 * sl + 4.5 * eps("fvc"));
  s.cont("dlco", 98.0 - 12.0 * sl + 6.0 * eps("dlco"));
  s.cont("pap_sys", 17.0 + 7.0 * sl + 3.5 * eps("pap_sys"));
  s.cont("walk_6min", 540.0 - 75.0 * sl + 35.0 * eps("walk_6min"));
  s.flag("ild_on_hrct", u("ild_on_hrct"), sigm(2.2 * (sl - 1.55)));
  if (row.values[vars.index_of("ild_on_hrct")] == 1.0)
    s.cont("ild_extent", 3.0 + 8.0 * sl + 5.0 * eps("ild_extent"));
  const double dysp_score = 0.85 * sl + 0.55 * sh + 0.9 * (u("dyspnea") - 0.5);
  s.cat("dyspnea", (dysp_score > 1.1) + (dysp_score > 2.1) + (dysp_score > 3.0));
  s.flag("lung_transplant", u("lung_transplant"), sigm(3.0 * (sl - 3.7)));
  s.flag("ground_glass", u("ground_glass"), sigm(1.8 * (sl - 1.7)));
  s.flag("honeycombing", u("honeycombing"), sigm(1.8 * (sl - 2.4)));
  s.flag("reticular_pattern", u("reticular_pattern"), sigm(1.8 * (sl - 2.0)));
  s.flag("traction_bronchiectasis", u("traction_bronchiectasis"), sigm(1.8 * (sl - 2.6)));

  // Heart.
  s.cont("lvef", 64.0 - 6.0 * sh + 3.5 * eps("lvef"));
  s.cont("bnp", std::exp(2.5 + 0.8 * sh + 0.4 * eps("bnp")));
  s.cont("nt_probnp", std::exp(3.4 + 0.9 * sh + 0.45 * eps("nt_probnp")));
  s.flag("worsening_cardiopulmonary", u("worsening_cardiopulmonary"), sigm(1.6 * (sh - 2.3)));
  s.flag("diastolic_dysfunction", u("diastolic_dysfunction"), sigm(1.5 * (sh - 1.8)));
  s.flag("ventricular_arrhythmias", u("ventricular_arrhythmias"), sigm(1.7 * (sh - 2.6)));
  s.flag("pericardial_effusion", u("pericardial_effusion"), sigm(1.7 * (sh - 2.2)));
  s.flag("conduction_blocks", u("conduction_blocks"), sigm(1.6 * (sh - 2.4)));
  s.flag("atrial_arrhythmias", u("atrial_arrhythmias"), sigm(1.5 * (sh - 2.1)));
  s.flag("palpitations", u("palpitations"), sigm(1.3 * (sh - 1.6)));

  // Joints.
  const double das28 = clip(1.1 + 1.1 * sj + 0.4 * eps("das28"), 0.2, 9.5);
  s.cont("das28", das28);
  s.cont("das28_crp", 0.92 * das28 + 0.3 * eps("das28_crp"));
  s.cont("swollen_joints", 2.2 * sj + 1.2 * eps("swollen_joints"));
  s.flag("joint_synovitis", u("joint_synovitis"), sigm(2.0 * (sj - 1.1)));
  s.flag("tendon_friction_rubs", u("tendon_friction_rubs"), sigm(1.8 * (sj - 1.9)));
  s.flag("polyarthritis", u("polyarthritis"), sigm(1.7 * (sj - 1.5)));

  // Shared.
  s.cont("crp", std::exp(0.9 + 0.55 * sm + 0.5 * eps("crp")));
  s.cont("esr", 9.0 + 10.0 * sm + 5.0 * eps("esr"));
  s.cont("hemoglobin", 14.3 - 0.6 * sm + 0.8 * eps("hemoglobin"));
  s.cont("weight", st.base_weight - 1.5 * sm + 1.0 * eps("weight"));
  s.cont("skin_score", 2.5 + 5.5 * (sm + 1.2 * st.subtype_diffuse) / 2.0 + 2.5 * eps("skin_score"));
  s.flag("raynaud", u("raynaud"), sigm(1.1 * (sm - 0.3)));

  return row;
}

Cohort generate_cohort(const SynthConfig& config) {
  config.validate();
  const VariableTable& vars = ssc_variables();
  const int n_vars = vars.size();

  double weight_total = 0.0;
  for (const RegimeSpec& r : config.regimes) weight_total += r.weight;

  Cohort cohort;
  cohort.config = config;
  cohort.patients.reserve(config.n_patients);

  // Pass 1: latent paths and pre-missingness values.
  std::vector<std::vector<ValueRow>> rows_per_patient(config.n_patients);
  for (int i = 0; i < config.n_patients; ++i) {
    Rng rng(derive_seed(config.seed, "patient", static_cast<std::uint64_t>(i)));
    PatientRecord p;
    p.id = cat("p", i < 10 ? "000" : i < 100 ? "00" : i < 1000 ? "0" : "", i);

    double pick = rng.uniform() * weight_total;
    int regime = 0;
    for (int r = 0; r < static_cast<int>(config.regimes.size()); ++r) {
      pick -= config.regimes[r].weight;
      if (pick <= 0.0) {
        regime = r;
        break;
      }
    }
    p.regime = regime;
    const RegimeSpec& reg = config.regimes[regime];

    p.statics.sex = rng.bernoulli(reg.p_male) ? 1 : 0;
    p.statics.subtype_diffuse = rng.bernoulli(reg.p_diffuse) ? 1 : 0;
    p.statics.birth_year_offset = rng.normal();
    p.statics.height_cm = 164.0 + 12.0 * p.statics.sex + 7.0 * rng.normal();
    p.statics.base_weight = 68.0 + 8.0 * p.statics.sex + 10.0 * rng.normal();

    const int T = config.min_visits + rng.uniform_int(config.max_visits - config.min_visits + 1);
    p.tau.resize(T);
    p.tau[0] = 0.0;
    for (int t = 1; t < T; ++t) p.tau[t] = p.tau[t - 1] + rng.uniform(0.3, 1.4);

    std::array<double, 3> drift{};
    std::array<double, 3> sev{};
    for (int o = 0; o < 3; ++o) {
      drift[o] = reg.drift_mean[o] + reg.drift_sd[o] * rng.normal();
      sev[o] = sev_clip(reg.sev_start_mean[o] + reg.sev_start_sd[o] * rng.normal());
      p.severity[o].push_back(sev[o]);
    }
    for (int t = 1; t < T; ++t) {
      const double dt = p.tau[t] - p.tau[t - 1];
      for (int o = 0; o < 3; ++o) {
        sev[o] = sev_clip(sev[o] + drift[o] * dt + config.rw_sd * std::sqrt(dt) * rng.normal());
        p.severity[o].push_back(sev[o]);
      }
    }

    p.meds = Tensor(kMedCount, T);
    auto& rows = rows_per_patient[i];
    for (int t = 0; t < T; ++t) {
      VisitDraws draws;
      draws.normal.resize(n_vars);
      draws.unif.resize(n_vars);
      for (int d = 0; d < n_vars; ++d) draws.normal[d] = rng.normal();
      for (int d = 0; d < n_vars; ++d) draws.unif[d] = rng.uniform();
      const OrganSeverity os{p.severity[0][t], p.severity[1][t], p.severity[2][t]};
      rows.push_back(visit_values(os, p.statics, draws, config.noise_scale));

      const double sl = os.lung, sj = os.joints, sm = os.mean();
      const std::array<double, kMedCount> med_p{
          sigm(1.4 * (sj - 1.2)),  sigm(1.4 * (sl - 1.5)),  sigm(1.6 * (sl - 2.5)),
          sigm(1.6 * (std::max(sl, sj) - 2.8)),             sigm(1.5 * (sj - 2.5)),
          sigm(1.3 * (sm - 1.3)),  sigm(1.2 * (sm - 0.5)),  sigm(1.5 * (sl - 2.2)),
          sigm(1.5 * (sl - 2.4)),  sigm(1.6 * (sl - 2.3)),  0.45,
      };
      for (int m = 0; m < kMedCount; ++m) p.meds(m, t) = rng.uniform() < med_p[m] ? 1.0 : 0.0;
    }
    cohort.patients.push_back(std::move(p));
  }

  // Cohort means over pre-missingness observed values (continuous only).
  cohort.cohort_means.assign(n_vars, 0.0);
  std::vector<long long> counts(n_vars, 0);
  for (const auto& rows : rows_per_patient)
    for (const ValueRow& row : rows)
      for (int d : vars.continuous_indices())
        if (row.observed[d]) {
          cohort.cohort_means[d] += row.values[d];
          ++counts[d];
        }
  for (int d : vars.continuous_indices())
    if (counts[d] > 0) cohort.cohort_means[d] /= static_cast<double>(counts[d]);

  // Pass 2: missingness injection, label derivation, sentinel fill.
  for (int i = 0; i < config.n_patients; ++i) {
    PatientRecord& p = cohort.patients[i];
    const int T = p.n_visits();
    Rng miss_rng(derive_seed(config.seed, "missing", static_cast<std::uint64_t>(i)));
    p.x = Tensor(n_vars, T);
    p.mask_x = Tensor(n_vars, T);
    p.y = Tensor(kLabelCount, T);
    p.mask_y = Tensor(kLabelCount, T);
    for (int t = 0; t < T; ++t) {
      ValueRow row = rows_per_patient[i][t];
      const LabelRow truth = derive_labels(row);
      for (int d = 0; d < n_vars; ++d) {
        double rate = config.missing_rate;
        const auto it = config.missing_rate_overrides.find(vars.spec(d).name);
        if (it != config.missing_rate_overrides.end()) rate = it->second;
        if (miss_rng.uniform() < rate) row.observed[d] = false;
      }
      const LabelRow derived = derive_labels(row);
      for (int d = 0; d < n_vars; ++d) {
        p.mask_x(d, t) = row.observed[d] ? 1.0 : 0.0;
        if (row.observed[d])
          p.x(d, t) = row.values[d];
        else
          p.x(d, t) = vars.spec(d).kind == VarKind::continuous ? cohort.cohort_means[d] : -1.0;
      }
      for (int g = 0; g < kLabelCount; ++g) {
        p.mask_y(g, t) = derived[g].observed ? 1.0 : 0.0;
        p.y(g, t) = derived[g].observed ? static_cast<double>(derived[g].value) : -1.0;
        if (derived[g].observed)
          require(truth[g].observed && truth[g].value == derived[g].value,
                  "label derivation inconsistency for patient ", p.id, " label ", g, " visit ", t);
      }
    }
  }
  return cohort;
}

}  // namespace traject::cohort
