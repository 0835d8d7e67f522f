#include "traject/optim.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace traject::diff {

Tensor& ParamStore::create(const std::string& name, Tensor init, bool trainable) {
  require(!name.empty(), "parameter name must not be empty");
  require(!has(name), "parameter '", name, "' already exists");
  Entry e;
  e.value = std::move(init);
  e.trainable = trainable;
  return entries_.emplace(name, std::move(e)).first->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  require(it != entries_.end(), "unknown parameter '", name, "'");
  return it->second;
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = entries_.find(name);
  require(it != entries_.end(), "unknown parameter '", name, "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::vector<std::string> ParamStore::trainable_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (v.trainable) out.push_back(k);
  return out;
}

std::size_t ParamStore::scalar_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [k, v] : entries_)
    if (!trainable_only || v.trainable) n += v.value.size();
  return n;
}

void adam_step(ParamStore& store, const std::map<std::string, Tensor>& grads, const AdamConfig& cfg) {
  require(cfg.lr > 0.0, "adam lr must be positive");
  for (const auto& [name, g] : grads) {
    const auto& e = store.entry(name);
    require(e.trainable, "gradient supplied for non-trainable parameter '", name, "'");
    require(g.same_shape(e.value), "gradient shape ", g.shape_str(), " does not match parameter '",
            name, "' of shape ", e.value.shape_str());
    require(g.all_finite(), "non-finite gradient for parameter '", name, "'");
  }
  store.bump_step();
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const std::string& name : store.trainable_names()) {
    auto& e = store.entry(name);
    if (e.adam_m.empty()) {
      e.adam_m = Tensor(e.value.rows(), e.value.cols());
      e.adam_v = Tensor(e.value.rows(), e.value.cols());
    }
    const auto git = grads.find(name);
    const Tensor* g = git == grads.end() ? nullptr : &git->second;
    double* w = e.value.data();
    double* m = e.adam_m.data();
    double* v = e.adam_v.data();
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double gi = g ? g->data()[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

std::map<std::string, Tensor> collect_grads(const Tape& tape) {
  require(tape.backward_run(), "collect_grads requires a completed backward pass");
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : tape.bound_params())
    if (tape.requires_grad(id)) out.emplace(name, tape.grad(id));
  return out;
}

namespace {

nlohmann::ordered_json tensor_to_json(const Tensor& t) {
  nlohmann::ordered_json j;
  j["shape"] = {t.rows(), t.cols()};
  j["data"] = std::vector<double>(t.data(), t.data() + t.size());
  return j;
}

Tensor tensor_from_json(const nlohmann::json& j) {
  const int r = j.at("shape").at(0).get<int>();
  const int c = j.at("shape").at(1).get<int>();
  const auto v = j.at("data").get<std::vector<double>>();
  require(static_cast<std::size_t>(r) * c == v.size(), "checkpoint tensor size mismatch");
  Tensor t(r, c);
  for (std::size_t i = 0; i < v.size(); ++i) t.data()[i] = v[i];
  return t;
}

}  // namespace

std::string checkpoint_to_json(const ParamStore& store, const std::string& meta_json) {
  nlohmann::ordered_json j;
  j["format"] = "traject-checkpoint-v1";
  j["step"] = store.step();
  j["meta"] = meta_json.empty() ? nlohmann::ordered_json(nlohmann::json::object())
                                : nlohmann::ordered_json(nlohmann::json::parse(meta_json));
  auto& params = j["params"];
  params = nlohmann::ordered_json::object();
  for (const std::string& name : store.names()) {
    const auto& e = store.entry(name);
    auto& p = params[name];
    p = tensor_to_json(e.value);
    p["trainable"] = e.trainable;
    if (!e.adam_m.empty()) {
      p["adam_m"] = tensor_to_json(e.adam_m)["data"];
      p["adam_v"] = tensor_to_json(e.adam_v)["data"];
    }
  }
  return j.dump();
}

std::string checkpoint_from_json(ParamStore& store, const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    fail("checkpoint parse error: ", e.what());
  }
  require(j.value("format", "") == std::string("traject-checkpoint-v1"),
          "unrecognized checkpoint format");
  ParamStore fresh;
  fresh.set_step(j.at("step").get<long long>());
  for (const auto& [name, p] : j.at("params").items())
    fresh.create(name, tensor_from_json(p), p.at("trainable").get<bool>());
  // Second pass for optimizer state, after entries exist.
  for (const auto& [name, p] : j.at("params").items()) {
    if (!p.contains("adam_m")) continue;
    auto& e = fresh.entry(name);
    const auto m = p.at("adam_m").get<std::vector<double>>();
    const auto v = p.at("adam_v").get<std::vector<double>>();
    require(m.size() == e.value.size() && v.size() == e.value.size(),
            "checkpoint optimizer state size mismatch for '", name, "'");
    e.adam_m = Tensor(e.value.rows(), e.value.cols());
    e.adam_v = Tensor(e.value.rows(), e.value.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
      e.adam_m.data()[i] = m[i];
      e.adam_v.data()[i] = v[i];
    }
  }
  store = std::move(fresh);
  return j.at("meta").dump();
}

void save_checkpoint(const ParamStore& store, const std::string& path, const std::string& meta_json) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), "cannot open '", path, "' for writing");
  f << checkpoint_to_json(store, meta_json) << "\n";
  require(f.good(), "write failed for '", path, "'");
}

std::string load_checkpoint(ParamStore& store, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open checkpoint '", path, "'");
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return checkpoint_from_json(store, text);
}

}  // namespace traject::diff
