#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "traject/labels.hpp"
#include "traject/tensor.hpp"
#include "traject/variables.hpp"

namespace traject::cohort {

inline constexpr int kMedCount = 11;
inline constexpr const char* kGeneratorVersion = "0.1.0";

struct PatientStatics {
  int sex = 0;  // 0 female, 1 male
  int subtype_diffuse = 0;
  double birth_year_offset = 0.0;  // standardized age proxy
  double height_cm = 0.0;
  double base_weight = 70.0;
};

// One patient trajectory. Matrices are laid out rows x visits; masks hold
// 0/1. Value slots under a false mask carry sentinels (continuous: cohort
// mean, categorical and labels: -1) and must never be read.
struct PatientRecord {
  std::string id;
  std::vector<double> tau;  // years since first visit, tau[0] == 0, strictly increasing
  PatientStatics statics;
  Tensor x;       // D x T
  Tensor mask_x;  // D x T
  Tensor y;       // 6 x T, involvement 0/1 or stage 1..4
  Tensor mask_y;  // 6 x T
  Tensor meds;    // 11 x T, binary, always observed
  int regime = 0;
  std::array<std::vector<double>, 3> severity;  // generator truth per organ (lung, heart, joints)

  int n_visits() const { return static_cast<int>(tau.size()); }
  bool x_observed(int d, int t) const { return mask_x(d, t) != 0.0; }
  bool y_observed(int g, int t) const { return mask_y(g, t) != 0.0; }
  bool operator==(const PatientRecord&) const = default;
};

bool operator==(const PatientStatics&, const PatientStatics&);

struct RegimeSpec {
  std::string name;
  double weight = 1.0;
  std::array<double, 3> sev_start_mean{};  // lung, heart, joints
  std::array<double, 3> sev_start_sd{};
  std::array<double, 3> drift_mean{};  // per year
  std::array<double, 3> drift_sd{};
  double p_male = 0.12;
  double p_diffuse = 0.3;
};

std::vector<RegimeSpec> default_regimes();

struct SynthConfig {
  int n_patients = 500;
  int min_visits = 5;
  int max_visits = 15;
  std::uint64_t seed = 1;
  double missing_rate = 0.2;
  std::map<std::string, double> missing_rate_overrides;
  double noise_scale = 1.0;
  double rw_sd = 0.18;  // severity random-walk sd per sqrt(year)
  std::vector<RegimeSpec> regimes = default_regimes();

  void validate() const;
};

struct Cohort {
  SynthConfig config;
  std::vector<double> cohort_means;  // per variable index; continuous only, 0 elsewhere
  std::vector<PatientRecord> patients;

  int size() const { return static_cast<int>(patients.size()); }
};

struct OrganSeverity {
  double lung = 0.0, heart = 0.0, joints = 0.0;
  double mean() const { return (lung + heart + joints) / 3.0; }
};

struct VisitDraws {
  std::vector<double> normal;   // one slot per variable (continuous use)
  std::vector<double> unif;     // one slot per variable (categorical use)
};

// Maps latent organ severities to one visit's variable values. Monotone per
// organ: raising one organ's severity, with draws fixed, never lowers any of
// that organ's derived stages. ild_extent is structurally missing when
// ild_on_hrct is "no".
ValueRow visit_values(const OrganSeverity& sev, const PatientStatics& st, const VisitDraws& draws,
                      double noise_scale);

Cohort generate_cohort(const SynthConfig& config);

void write_cohort(const Cohort& cohort, const std::string& path);
Cohort read_cohort(const std::string& path);
std::string cohort_to_jsonl(const Cohort& cohort);
Cohort cohort_from_jsonl(const std::string& text);

}  // namespace traject::cohort
