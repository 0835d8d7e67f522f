#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "traject/variables.hpp"

namespace traject::cohort {

enum class LabelKind { involvement, stage };

struct LabelId {
  Organ organ = Organ::lung;
  LabelKind kind = LabelKind::involvement;
  bool operator==(const LabelId&) const = default;
};

std::string label_name(LabelId id);          // e.g. "lung_involvement"
LabelId label_from_name(const std::string&);

// The fixed label layout: 3 organs x {involvement, stage}, 6 rows.
inline constexpr int kLabelCount = 6;
const std::array<LabelId, kLabelCount>& label_layout();
int label_row(LabelId id);
int label_classes(LabelId id);  // 2 for involvement, 4 for stage

// Three-valued result of evaluating a predicate or rule on a partially
// observed row: satisfied, violated, or undecidable from observed inputs.
enum class Tri { yes, no, unknown };

struct Predicate {
  enum class Cmp { lt, le, gt, ge, eq_cat };
  std::string var;
  Cmp cmp = Cmp::lt;
  double threshold = 0.0;  // continuous comparisons
  int category = 0;        // eq_cat
};

// Conjunction of predicates; rules combine clauses as a disjunction.
struct Clause {
  std::vector<Predicate> all_of;
};

struct InvolvementRule {
  Organ organ = Organ::lung;
  std::vector<Clause> any_of;
};

struct StageRule {
  Organ organ = Organ::lung;
  std::array<std::vector<Clause>, 4> stage_any_of;  // index s-1 holds stage s clauses
};

struct LabelRules {
  std::vector<InvolvementRule> involvement;
  std::vector<StageRule> stage;
};

// The organ-label rule set (involvement and 4-stage severity for lung, heart,
// joints). Every referenced variable is validated against the table.
const LabelRules& ssc_label_rules();
void validate_rules(const LabelRules& rules, const VariableTable& vars);

// One visit row: per-variable value plus observed flag.
struct ValueRow {
  std::vector<double> values;
  std::vector<bool> observed;
};

struct LabelValue {
  bool observed = false;
  int value = 0;  // involvement: 0/1; stage: 1..4
};

using LabelRow = std::array<LabelValue, kLabelCount>;

// Applies the rule set to one row.
//
// Involvement: yes if any clause is satisfied on observed inputs; no if every
// clause is decidably violated; otherwise missing. Stage: the highest stage
// with a satisfied clause, reported as observed only when every clause of a
// strictly higher stage is decidably violated, so that an observed stage can
// never be contradicted by revealing hidden inputs.
LabelRow derive_labels(const ValueRow& row, const VariableTable& vars, const LabelRules& rules);
LabelRow derive_labels(const ValueRow& row);  // default table and rules

Tri eval_predicate(const Predicate& p, const ValueRow& row, const VariableTable& vars);
Tri eval_clause(const Clause& c, const ValueRow& row, const VariableTable& vars);

}  // namespace traject::cohort
