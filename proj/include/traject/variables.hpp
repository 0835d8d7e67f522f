#pragma once

#include <optional>
#include <string>
#include <vector>

#include "traject/common.hpp"

namespace traject::cohort {

enum class Organ { lung, heart, joints, shared };
enum class VarKind { continuous, categorical };

std::string organ_name(Organ o);
Organ organ_from_name(const std::string& s);

struct VariableSpec {
  std::string name;
  VarKind kind = VarKind::continuous;
  Organ organ = Organ::shared;
  double min = 0.0, max = 0.0;          // continuous only
  std::vector<std::string> categories;  // categorical only
  std::string unit;

  int n_categories() const { return static_cast<int>(categories.size()); }
};

class VariableTable {
 public:
  explicit VariableTable(std::vector<VariableSpec> specs);

  int size() const { return static_cast<int>(specs_.size()); }
  const VariableSpec& spec(int idx) const;
  const VariableSpec& spec(const std::string& name) const { return spec(index_of(name)); }
  int index_of(const std::string& name) const;  // error on unknown name
  std::optional<int> find(const std::string& name) const;

  const std::vector<int>& continuous_indices() const { return cont_idx_; }
  const std::vector<int>& categorical_indices() const { return cat_idx_; }
  const std::vector<VariableSpec>& specs() const { return specs_; }

  // Validates a value for variable idx: range for continuous, category index
  // for categorical.
  void validate_value(int idx, double value) const;

 private:
  std::vector<VariableSpec> specs_;
  std::vector<int> cont_idx_, cat_idx_;
};

// The default clinical variable table (34 variables) for the synthetic
// scleroderma-like cohort.
const VariableTable& ssc_variables();

// Medication channel names (11 binary channels, inert covariates).
const std::vector<std::string>& medication_names();

}  // namespace traject::cohort
