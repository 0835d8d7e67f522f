#include "traject/variables.hpp"

#include <algorithm>
#include <cmath>

namespace traject::cohort {

std::string organ_name(Organ o) {
  switch (o) {
    case Organ::lung: return "lung";
    case Organ::heart: return "heart";
    case Organ::joints: return "joints";
    case Organ::shared: return "shared";
  }
  fail("invalid organ value");
}

Organ organ_from_name(const std::string& s) {
  if (s == "lung") return Organ::lung;
  if (s == "heart") return Organ::heart;
  if (s == "joints") return Organ::joints;
  if (s == "shared") return Organ::shared;
  fail("unknown organ '", s, "'");
}

VariableTable::VariableTable(std::vector<VariableSpec> specs) : specs_(std::move(specs)) {
  for (int i = 0; i < size(); ++i) {
    const VariableSpec& v = specs_[i];
    require(!v.name.empty(), "variable #", i, " has an empty name");
    for (int j = 0; j < i; ++j)
      require(specs_[j].name != v.name, "duplicate variable name '", v.name, "'");
    if (v.kind == VarKind::continuous) {
      require(std::isfinite(v.min) && std::isfinite(v.max) && v.min < v.max,
              "variable '", v.name, "' needs a finite min < max range");
      cont_idx_.push_back(i);
    } else {
      require(v.n_categories() >= 2, "variable '", v.name, "' needs at least 2 categories");
      cat_idx_.push_back(i);
    }
  }
}

const VariableSpec& VariableTable::spec(int idx) const {
  require(idx >= 0 && idx < size(), "variable index ", idx, " out of range");
  return specs_[idx];
}

int VariableTable::index_of(const std::string& name) const {
  const auto idx = find(name);
  require(idx.has_value(), "unknown variable '", name, "'");
  return *idx;
}

std::optional<int> VariableTable::find(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (specs_[i].name == name) return i;
  return std::nullopt;
}

void VariableTable::validate_value(int idx, double value) const {
  const VariableSpec& v = spec(idx);
  if (v.kind == VarKind::continuous) {
    require(std::isfinite(value) && value >= v.min && value <= v.max, "value ", value,
            " out of range [", v.min, ", ", v.max, "] for '", v.name, "'");
  } else {
    const int c = static_cast<int>(value);
    require(static_cast<double>(c) == value && c >= 0 && c < v.n_categories(),
            "invalid category ", value, " for '", v.name, "'");
  }
}

namespace {

VariableSpec cont(std::string name, Organ organ, double min, double max, std::string unit) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VarKind::continuous;
  v.organ = organ;
  v.min = min;
  v.max = max;
  v.unit = std::move(unit);
  return v;
}

VariableSpec cat(std::string name, Organ organ, std::vector<std::string> categories) {
  VariableSpec v;
  v.name = std::move(name);
  v.kind = VarKind::categorical;
  v.organ = organ;
  v.categories = std::move(categories);
  return v;
}

VariableSpec yes_no(std::string name, Organ organ) { return cat(std::move(name), organ, {"no", "yes"}); }

}  // namespace

const VariableTable& ssc_variables() {
  static const VariableTable table{{
      // Lung.
      cont("fvc", Organ::lung, 10.0, 160.0, "% predicted"),
      cont("ild_extent", Organ::lung, 0.0, 100.0, "%"),
      cont("dlco", Organ::lung, 10.0, 160.0, "% predicted"),
      cont("pap_sys", Organ::lung, 5.0, 140.0, "mmHg"),
      cont("walk_6min", Organ::lung, 0.0, 900.0, "m"),
      yes_no("ild_on_hrct", Organ::lung),
      cat("dyspnea", Organ::lung, {"stage1", "stage2", "stage3", "stage4"}),
      yes_no("lung_transplant", Organ::lung),
      yes_no("ground_glass", Organ::lung),
      yes_no("honeycombing", Organ::lung),
      yes_no("reticular_pattern", Organ::lung),
      yes_no("traction_bronchiectasis", Organ::lung),
      // Heart.
      cont("lvef", Organ::heart, 5.0, 90.0, "%"),
      cont("bnp", Organ::heart, 0.0, 6000.0, "pg/mL"),
      cont("nt_probnp", Organ::heart, 0.0, 30000.0, "pg/mL"),
      yes_no("worsening_cardiopulmonary", Organ::heart),
      yes_no("diastolic_dysfunction", Organ::heart),
      yes_no("ventricular_arrhythmias", Organ::heart),
      yes_no("pericardial_effusion", Organ::heart),
      yes_no("conduction_blocks", Organ::heart),
      yes_no("atrial_arrhythmias", Organ::heart),
      yes_no("palpitations", Organ::heart),
      // Joints.
      cont("das28", Organ::joints, 0.0, 10.0, "score"),
      cont("das28_crp", Organ::joints, 0.0, 10.0, "score"),
      cont("swollen_joints", Organ::joints, 0.0, 30.0, "count"),
      yes_no("joint_synovitis", Organ::joints),
      yes_no("tendon_friction_rubs", Organ::joints),
      yes_no("polyarthritis", Organ::joints),
      // Shared.
      cont("crp", Organ::shared, 0.0, 300.0, "mg/L"),
      cont("esr", Organ::shared, 0.0, 150.0, "mm/h"),
      cont("hemoglobin", Organ::shared, 4.0, 20.0, "g/dL"),
      cont("weight", Organ::shared, 30.0, 160.0, "kg"),
      cont("skin_score", Organ::shared, 0.0, 51.0, "score"),
      yes_no("raynaud", Organ::shared),
  }};
  return table;
}

const std::vector<std::string>& medication_names() {
  static const std::vector<std::string> names{
      "med_methotrexate",   "med_mycophenolate", "med_cyclophosphamide", "med_rituximab",
      "med_tocilizumab",    "med_corticosteroid", "med_calcium_blocker",  "med_endothelin_antagonist",
      "med_pde5_inhibitor", "med_antifibrotic",   "med_ppi",
  };
  return names;
}

}  // namespace traject::cohort
