#include "traject/labels.hpp"

namespace traject::cohort {

std::string label_name(LabelId id) {
  const std::string organ = id.organ == Organ::joints ? "arthritis" : organ_name(id.organ);
  return organ + (id.kind == LabelKind::involvement ? "_involvement" : "_stage");
}

LabelId label_from_name(const std::string& s) {
  for (LabelId id : label_layout())
    if (label_name(id) == s) return id;
  fail("unknown label '", s, "'");
}

const std::array<LabelId, kLabelCount>& label_layout() {
  static const std::array<LabelId, kLabelCount> layout{{
      {Organ::lung, LabelKind::involvement},
      {Organ::lung, LabelKind::stage},
      {Organ::heart, LabelKind::involvement},
      {Organ::heart, LabelKind::stage},
      {Organ::joints, LabelKind::involvement},
      {Organ::joints, LabelKind::stage},
  }};
  return layout;
}

int label_row(LabelId id) {
  const auto& layout = label_layout();
  for (int i = 0; i < kLabelCount; ++i)
    if (layout[i] == id) return i;
  fail("label not in layout");
}

int label_classes(LabelId id) { return id.kind == LabelKind::involvement ? 2 : 4; }

Tri eval_predicate(const Predicate& p, const ValueRow& row, const VariableTable& vars) {
  const int idx = vars.index_of(p.var);
  require(idx < static_cast<int>(row.values.size()) && row.values.size() == row.observed.size(),
          "value row size does not match variable table");
  if (!row.observed[idx]) return Tri::unknown;
  const double v = row.values[idx];
  bool hit = false;
  switch (p.cmp) {
    case Predicate::Cmp::lt: hit = v < p.threshold; break;
    case Predicate::Cmp::le: hit = v <= p.threshold; break;
    case Predicate::Cmp::gt: hit = v > p.threshold; break;
    case Predicate::Cmp::ge: hit = v >= p.threshold; break;
    case Predicate::Cmp::eq_cat: hit = static_cast<int>(v) == p.category; break;
  }
  return hit ? Tri::yes : Tri::no;
}

Tri eval_clause(const Clause& c, const ValueRow& row, const VariableTable& vars) {
  require(!c.all_of.empty(), "empty clause");
  bool any_unknown = false;
  for (const Predicate& p : c.all_of) {
    const Tri r = eval_predicate(p, row, vars);
    if (r == Tri::no) return Tri::no;
    if (r == Tri::unknown) any_unknown = true;
  }
  return any_unknown ? Tri::unknown : Tri::yes;
}

namespace {

// Disjunction over clauses.
Tri eval_any(const std::vector<Clause>& clauses, const ValueRow& row, const VariableTable& vars) {
  bool any_unknown = false;
  for (const Clause& c : clauses) {
    const Tri r = eval_clause(c, row, vars);
    if (r == Tri::yes) return Tri::yes;
    if (r == Tri::unknown) any_unknown = true;
  }
  return any_unknown ? Tri::unknown : Tri::no;
}

Predicate pred(std::string var, Predicate::Cmp cmp, double threshold) {
  Predicate p;
  p.var = std::move(var);
  p.cmp = cmp;
  p.threshold = threshold;
  return p;
}

Predicate is_cat(std::string var, int category) {
  Predicate p;
  p.var = std::move(var);
  p.cmp = Predicate::Cmp::eq_cat;
  p.category = category;
  return p;
}

Predicate is_yes(std::string var) { return is_cat(std::move(var), 1); }

// Dyspnea categories are stages 1..4 stored as indices 0..3.
Predicate dyspnea_stage(int stage) { return is_cat("dyspnea", stage - 1); }

Clause one(Predicate p) { return Clause{{std::move(p)}}; }
Clause both(Predicate a, Predicate b) { return Clause{{std::move(a), std::move(b)}}; }

}  // namespace

const LabelRules& ssc_label_rules() {
  using Cmp = Predicate::Cmp;
  static const LabelRules rules = [] {
    LabelRules r;

    InvolvementRule lung_inv;
    lung_inv.organ = Organ::lung;
    lung_inv.any_of = {one(is_yes("ild_on_hrct")), one(pred("fvc", Cmp::lt, 70.0))};
    r.involvement.push_back(std::move(lung_inv));

    StageRule lung_stage;
    lung_stage.organ = Organ::lung;
    lung_stage.stage_any_of[0] = {one(pred("fvc", Cmp::gt, 80.0)), one(dyspnea_stage(2))};
    // The extent clauses only apply when interstitial disease is present;
    // without the presence conjunct an extent-free patient could never reach
    // a decidable stage below 3.
    lung_stage.stage_any_of[1] = {both(is_yes("ild_on_hrct"), pred("ild_extent", Cmp::lt, 20.0)),
                                  both(pred("fvc", Cmp::gt, 70.0), pred("fvc", Cmp::le, 80.0)),
                                  one(dyspnea_stage(3))};
    lung_stage.stage_any_of[2] = {both(is_yes("ild_on_hrct"), pred("ild_extent", Cmp::gt, 20.0)),
                                  both(pred("fvc", Cmp::ge, 50.0), pred("fvc", Cmp::le, 70.0)),
                                  one(dyspnea_stage(4))};
    lung_stage.stage_any_of[3] = {one(pred("fvc", Cmp::lt, 50.0)), one(is_yes("lung_transplant")),
                                  one(dyspnea_stage(4))};
    r.stage.push_back(std::move(lung_stage));

    InvolvementRule heart_inv;
    heart_inv.organ = Organ::heart;
    heart_inv.any_of = {one(pred("lvef", Cmp::lt, 45.0)),
                        one(is_yes("worsening_cardiopulmonary")),
                        one(is_yes("diastolic_dysfunction")),
                        one(is_yes("ventricular_arrhythmias")),
                        one(is_yes("pericardial_effusion")),
                        one(is_yes("conduction_blocks")),
                        one(pred("bnp", Cmp::gt, 35.0)),
                        one(pred("nt_probnp", Cmp::gt, 125.0))};
    r.involvement.push_back(std::move(heart_inv));

    StageRule heart_stage;
    heart_stage.organ = Organ::heart;
    for (int s = 1; s <= 4; ++s) heart_stage.stage_any_of[s - 1] = {one(dyspnea_stage(s))};
    r.stage.push_back(std::move(heart_stage));

    InvolvementRule joints_inv;
    joints_inv.organ = Organ::joints;
    joints_inv.any_of = {one(is_yes("joint_synovitis")), one(is_yes("tendon_friction_rubs"))};
    r.involvement.push_back(std::move(joints_inv));

    StageRule joints_stage;
    joints_stage.organ = Organ::joints;
    joints_stage.stage_any_of[0] = {one(pred("das28", Cmp::lt, 2.7))};
    joints_stage.stage_any_of[1] = {both(pred("das28", Cmp::ge, 2.7), pred("das28", Cmp::le, 3.2))};
    joints_stage.stage_any_of[2] = {both(pred("das28", Cmp::gt, 3.2), pred("das28", Cmp::le, 5.1))};
    joints_stage.stage_any_of[3] = {one(pred("das28", Cmp::gt, 5.1))};
    r.stage.push_back(std::move(joints_stage));

    validate_rules(r, ssc_variables());
    return r;
  }();
  return rules;
}

void validate_rules(const LabelRules& rules, const VariableTable& vars) {
  const auto check_clauses = [&](const std::vector<Clause>& clauses) {
    for (const Clause& c : clauses) {
      require(!c.all_of.empty(), "empty clause in rule set");
      for (const Predicate& p : c.all_of) {
        const VariableSpec& v = vars.spec(p.var);
        if (p.cmp == Predicate::Cmp::eq_cat) {
          require(v.kind == VarKind::categorical, "category predicate on continuous '", v.name, "'");
          require(p.category >= 0 && p.category < v.n_categories(), "category ", p.category,
                  " out of range for '", v.name, "'");
        } else {
          require(v.kind == VarKind::continuous, "threshold predicate on categorical '", v.name, "'");
        }
      }
    }
  };
  for (const auto& rule : rules.involvement) check_clauses(rule.any_of);
  for (const auto& rule : rules.stage)
    for (const auto& clauses : rule.stage_any_of) check_clauses(clauses);
}

LabelRow derive_labels(const ValueRow& row, const VariableTable& vars, const LabelRules& rules) {
  LabelRow out{};
  for (const InvolvementRule& rule : rules.involvement) {
    const Tri r = eval_any(rule.any_of, row, vars);
    LabelValue& lv = out[label_row({rule.organ, LabelKind::involvement})];
    if (r != Tri::unknown) {
      lv.observed = true;
      lv.value = r == Tri::yes ? 1 : 0;
    }
  }
  for (const StageRule& rule : rules.stage) {
    LabelValue& lv = out[label_row({rule.organ, LabelKind::stage})];
    int highest_fired = 0;
    bool blocked = false;  // an undecided clause above the highest fired stage
    for (int s = 4; s >= 1; --s) {
      const Tri r = eval_any(rule.stage_any_of[s - 1], row, vars);
      if (r == Tri::yes) {
        highest_fired = s;
        break;
      }
      if (r == Tri::unknown) {
        blocked = true;
        break;
      }
    }
    if (highest_fired > 0 && !blocked) {
      lv.observed = true;
      lv.value = highest_fired;
    }
  }
  return out;
}

LabelRow derive_labels(const ValueRow& row) {
  return derive_labels(row, ssc_variables(), ssc_label_rules());
}

}  // namespace traject::cohort
