#include <fstream>
#include <sstream>

#include "json.hpp"
#include "traject/cohort.hpp"

namespace traject::cohort {

namespace {

using json = nlohmann::ordered_json;

json tensor_rows(const Tensor& t) {
  json rows = json::array();
  for (int r = 0; r < t.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < t.cols(); ++c) row.push_back(t(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor tensor_from_rows(const json& rows, int expect_rows, int expect_cols,
                        const std::string& what) {
  require(rows.is_array() && static_cast<int>(rows.size()) == expect_rows, what, " must have ",
          expect_rows, " rows");
  Tensor t(expect_rows, expect_cols);
  for (int r = 0; r < expect_rows; ++r) {
    const json& row = rows[r];
    require(row.is_array() && static_cast<int>(row.size()) == expect_cols, what, " row ", r,
            " must have ", expect_cols, " entries");
    for (int c = 0; c < expect_cols; ++c) t(r, c) = row[c].get<double>();
  }
  return t;
}

json config_json(const SynthConfig& c) {
  json regimes = json::array();
  for (const RegimeSpec& r : c.regimes) {
    regimes.push_back({{"name", r.name},
                       {"weight", r.weight},
                       {"sev_start_mean", r.sev_start_mean},
                       {"sev_start_sd", r.sev_start_sd},
                       {"drift_mean", r.drift_mean},
                       {"drift_sd", r.drift_sd},
                       {"p_male", r.p_male},
                       {"p_diffuse", r.p_diffuse}});
  }
  return {{"n_patients", c.n_patients},
          {"min_visits", c.min_visits},
          {"max_visits", c.max_visits},
          {"seed", c.seed},
          {"missing_rate", c.missing_rate},
          {"missing_rate_overrides", c.missing_rate_overrides},
          {"noise_scale", c.noise_scale},
          {"rw_sd", c.rw_sd},
          {"regimes", std::move(regimes)}};
}

SynthConfig config_from_json(const json& j) {
  SynthConfig c;
  c.n_patients = j.at("n_patients").get<int>();
  c.min_visits = j.at("min_visits").get<int>();
  c.max_visits = j.at("max_visits").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.missing_rate = j.at("missing_rate").get<double>();
  c.missing_rate_overrides = j.at("missing_rate_overrides").get<std::map<std::string, double>>();
  c.noise_scale = j.at("noise_scale").get<double>();
  c.rw_sd = j.at("rw_sd").get<double>();
  c.regimes.clear();
  for (const json& rj : j.at("regimes")) {
    RegimeSpec r;
    r.name = rj.at("name").get<std::string>();
    r.weight = rj.at("weight").get<double>();
    r.sev_start_mean = rj.at("sev_start_mean").get<std::array<double, 3>>();
    r.sev_start_sd = rj.at("sev_start_sd").get<std::array<double, 3>>();
    r.drift_mean = rj.at("drift_mean").get<std::array<double, 3>>();
    r.drift_sd = rj.at("drift_sd").get<std::array<double, 3>>();
    r.p_male = rj.at("p_male").get<double>();
    r.p_diffuse = rj.at("p_diffuse").get<double>();
    c.regimes.push_back(std::move(r));
  }
  return c;
}

}  // namespace

std::string cohort_to_jsonl(const Cohort& cohort) {
  const VariableTable& vars = ssc_variables();
  json var_names = json::array();
  for (const VariableSpec& s : vars.specs()) var_names.push_back(s.name);
  json label_names = json::array();
  for (const LabelId& id : label_layout()) label_names.push_back(label_name(id));

  json header = {{"format", "traject-cohort-v1"},
                 {"generator_version", kGeneratorVersion},
                 {"seed", cohort.config.seed},
                 {"config", config_json(cohort.config)},
                 {"variables", std::move(var_names)},
                 {"labels", std::move(label_names)},
                 {"medications", medication_names()},
                 {"cohort_means", cohort.cohort_means}};

  std::ostringstream out;
  out << header.dump() << "\n";
  for (const PatientRecord& p : cohort.patients) {
    json pj = {{"id", p.id},
               {"regime", p.regime},
               {"sex", p.statics.sex},
               {"subtype_diffuse", p.statics.subtype_diffuse},
               {"birth_year_offset", p.statics.birth_year_offset},
               {"height_cm", p.statics.height_cm},
               {"base_weight", p.statics.base_weight},
               {"tau", p.tau},
               {"x", tensor_rows(p.x)},
               {"mask_x", tensor_rows(p.mask_x)},
               {"y", tensor_rows(p.y)},
               {"mask_y", tensor_rows(p.mask_y)},
               {"meds", tensor_rows(p.meds)},
               {"severity", p.severity}};
    out << pj.dump() << "\n";
  }
  return out.str();
}

Cohort cohort_from_jsonl(const std::string& text) {
  const VariableTable& vars = ssc_variables();
  std::istringstream in(text);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "cohort stream is empty");

  json header;
  try {
    header = json::parse(line);
  } catch (const std::exception& e) {
    fail("cohort header is not valid JSON: ", e.what());
  }
  require(header.value("format", "") == "traject-cohort-v1",
          "unsupported cohort format '", header.value("format", "<missing>"), "'");

  const json& names = header.at("variables");
  require(static_cast<int>(names.size()) == vars.size(), "cohort header lists ", names.size(),
          " variables, expected ", vars.size());
  for (int d = 0; d < vars.size(); ++d)
    require(names[d].get<std::string>() == vars.spec(d).name, "cohort variable ", d, " is '",
            names[d].get<std::string>(), "', expected '", vars.spec(d).name, "'");
  const json& labels = header.at("labels");
  require(static_cast<int>(labels.size()) == kLabelCount, "cohort header must list ", kLabelCount,
          " labels");
  for (int g = 0; g < kLabelCount; ++g)
    require(labels[g].get<std::string>() == label_name(label_layout()[g]), "cohort label ", g,
            " is '", labels[g].get<std::string>(), "', expected '",
            label_name(label_layout()[g]), "'");
  const auto meds = medication_names();
  const json& med_names = header.at("medications");
  require(static_cast<int>(med_names.size()) == kMedCount, "cohort header must list ", kMedCount,
          " medications");
  for (int m = 0; m < kMedCount; ++m)
    require(med_names[m].get<std::string>() == meds[m], "cohort medication ", m, " is '",
            med_names[m].get<std::string>(), "', expected '", meds[m], "'");

  Cohort cohort;
  cohort.config = config_from_json(header.at("config"));
  cohort.cohort_means = header.at("cohort_means").get<std::vector<double>>();
  require(static_cast<int>(cohort.cohort_means.size()) == vars.size(),
          "cohort_means must hold one entry per variable");

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json pj;
    try {
      pj = json::parse(line);
    } catch (const std::exception& e) {
      fail("cohort line ", line_no, " is not valid JSON: ", e.what());
    }
    PatientRecord p;
    p.id = pj.at("id").get<std::string>();
    p.regime = pj.at("regime").get<int>();
    p.statics.sex = pj.at("sex").get<int>();
    p.statics.subtype_diffuse = pj.at("subtype_diffuse").get<int>();
    p.statics.birth_year_offset = pj.at("birth_year_offset").get<double>();
    p.statics.height_cm = pj.at("height_cm").get<double>();
    p.statics.base_weight = pj.at("base_weight").get<double>();
    p.tau = pj.at("tau").get<std::vector<double>>();
    const int T = static_cast<int>(p.tau.size());
    require(T >= 5 && T <= 15, "patient ", p.id, " has ", T, " visits, expected 5..15");
    require(p.tau[0] == 0.0, "patient ", p.id, " first visit time must be 0");
    for (int t = 1; t < T; ++t)
      require(p.tau[t] > p.tau[t - 1], "patient ", p.id, " visit times must strictly increase");
    p.x = tensor_from_rows(pj.at("x"), vars.size(), T, cat("patient ", p.id, " x"));
    p.mask_x = tensor_from_rows(pj.at("mask_x"), vars.size(), T, cat("patient ", p.id, " mask_x"));
    p.y = tensor_from_rows(pj.at("y"), kLabelCount, T, cat("patient ", p.id, " y"));
    p.mask_y = tensor_from_rows(pj.at("mask_y"), kLabelCount, T, cat("patient ", p.id, " mask_y"));
    p.meds = tensor_from_rows(pj.at("meds"), kMedCount, T, cat("patient ", p.id, " meds"));
    p.severity = pj.at("severity").get<std::array<std::vector<double>, 3>>();
    for (const auto& s : p.severity)
      require(static_cast<int>(s.size()) == T, "patient ", p.id,
              " severity paths must match visit count");
    cohort.patients.push_back(std::move(p));
  }
  require(cohort.size() == cohort.config.n_patients, "cohort holds ", cohort.size(),
          " patients but config says ", cohort.config.n_patients);
  return cohort;
}

void write_cohort(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot open '", path, "' for writing");
  out << cohort_to_jsonl(cohort);
  require(out.good(), "write to '", path, "' failed");
}

Cohort read_cohort(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open '", path, "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return cohort_from_jsonl(buf.str());
}

}  // namespace traject::cohort
