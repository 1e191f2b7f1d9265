#include "hydroformer/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hydroformer/errors.hpp"

namespace hydro {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos == v.size() && n >= 0) return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos == v.size() && std::isfinite(d)) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + v + "'");
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

std::vector<std::size_t> parse_leads(const std::string& text) {
  std::vector<std::size_t> leads;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    const auto lead = to_size("eval.leads", item);
    if (lead == 0) throw ConfigError("eval.leads: lead times start at 1");
    leads.push_back(lead);
  }
  if (leads.empty()) throw ConfigError("eval.leads: at least one lead time is required");
  return leads;
}

const std::set<std::string>& RunConfig::known_keys() {
  static const std::set<std::string> keys = {
      "model.preset",          "model.d_model",          "model.n_heads",        "model.n_encoder_layers",
      "model.n_decoder_layers", "model.d_ffn",           "model.attention_mode", "model.k_sparse",
      "model.output_head",     "model.activation",       "model.layer_norm_eps", "train.batch_size",
      "train.learning_rate",   "train.max_epochs",       "train.patience",       "train.min_delta",
      "train.seed",            "train.shuffle",          "data.path",            "data.lookback",
      "data.horizon",          "data.train_fraction",    "data.val_fraction",    "data.test_fraction",
      "eval.leads",            "eval.r2_mode",           "shap.estimator",       "shap.permutations",
      "shap.exact_cap",        "shap.allow_large_exact", "shap.lead",            "shap.sample",
      "output.dir",
  };
  return keys;
}

ModelConfig RunConfig::resolved_model() const {
  ModelConfig m = model;
  m.lookback = lookback;
  m.horizon = horizon;
  m.validate();
  return m;
}

void RunConfig::validate() const {
  resolved_model();
  train.validate();
  const double sum = fractions.train + fractions.val + fractions.test;
  if (fractions.train <= 0 || fractions.val <= 0 || fractions.test <= 0 || std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError("data.*_fraction must be positive and sum to 1 (got " + fmt(sum) + ")");
  }
  for (auto lead : leads) {
    if (lead > horizon) {
      throw ConfigError("eval.leads: lead " + std::to_string(lead) + " exceeds data.horizon " +
                        std::to_string(horizon));
    }
  }
  if (shap.lead < 1 || shap.lead > horizon) throw ConfigError("shap.lead must lie in [1, data.horizon]");
  if (shap.permutations < 2) throw ConfigError("shap.permutations must be at least 2");
  if (shap.sample == 0) throw ConfigError("shap.sample must be positive");
}

std::map<std::string, std::string> RunConfig::to_kv() const {
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : model.to_kv()) {
    if (known_keys().count(k)) kv[k] = v;
  }
  kv["model.preset"] = model_preset;
  for (auto& [k, v] : train.to_kv()) kv[k] = v;
  kv["data.path"] = data_path;
  kv["data.lookback"] = std::to_string(lookback);
  kv["data.horizon"] = std::to_string(horizon);
  kv["data.train_fraction"] = fmt(fractions.train);
  kv["data.val_fraction"] = fmt(fractions.val);
  kv["data.test_fraction"] = fmt(fractions.test);
  std::string leads_text;
  for (auto lead : leads) leads_text += (leads_text.empty() ? "" : ",") + std::to_string(lead);
  kv["eval.leads"] = leads_text;
  kv["eval.r2_mode"] = metrics::to_string(r2_mode);
  kv["shap.estimator"] = shap::to_string(shap.estimator);
  kv["shap.permutations"] = std::to_string(shap.permutations);
  kv["shap.exact_cap"] = std::to_string(shap.exact_cap);
  kv["shap.allow_large_exact"] = shap.allow_large_exact ? "true" : "false";
  kv["shap.lead"] = std::to_string(shap.lead);
  kv["shap.sample"] = std::to_string(shap.sample);
  kv["output.dir"] = out_dir;
  return kv;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : to_kv()) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::from_kv(const std::map<std::string, std::string>& kv, RunConfig c) {
  std::string unknown;
  for (const auto& [k, v] : kv) {
    if (!known_keys().count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  }
  if (!unknown.empty()) throw ConfigError("unknown config key(s): " + unknown);

  if (auto it = kv.find("model.preset"); it != kv.end()) {
    if (it->second == "paper") {
      c.model = ModelConfig{};
    } else if (it->second == "desk") {
      c.model = ModelConfig::desk();
    } else {
      throw ConfigError("model.preset: expected paper or desk, got '" + it->second + "'");
    }
    c.model_preset = it->second;
  }
  ModelConfig base = c.model;
  base.lookback = c.lookback;
  base.horizon = c.horizon;
  c.model = ModelConfig::from_kv(kv, base);
  c.train = training::TrainConfig::from_kv(kv, c.train);

  for (const auto& [k, v] : kv) {
    if (k == "data.path") c.data_path = v;
    else if (k == "data.lookback") c.lookback = to_size(k, v);
    else if (k == "data.horizon") c.horizon = to_size(k, v);
    else if (k == "data.train_fraction") c.fractions.train = to_double(k, v);
    else if (k == "data.val_fraction") c.fractions.val = to_double(k, v);
    else if (k == "data.test_fraction") c.fractions.test = to_double(k, v);
    else if (k == "eval.leads") c.leads = parse_leads(v);
    else if (k == "eval.r2_mode") c.r2_mode = metrics::parse_r2_mode(v);
    else if (k == "shap.estimator") {
      if (v == "exact") c.shap.estimator = shap::Estimator::exact;
      else if (v == "sampled") c.shap.estimator = shap::Estimator::sampled;
      else throw ConfigError("shap.estimator: expected exact or sampled, got '" + v + "'");
    }
    else if (k == "shap.permutations") c.shap.permutations = to_size(k, v);
    else if (k == "shap.exact_cap") c.shap.exact_cap = to_size(k, v);
    else if (k == "shap.allow_large_exact") c.shap.allow_large_exact = to_bool(k, v);
    else if (k == "shap.lead") c.shap.lead = to_size(k, v);
    else if (k == "shap.sample") c.shap.sample = to_size(k, v);
    else if (k == "output.dir") c.out_dir = v;
  }
  c.model.lookback = c.lookback;
  c.model.horizon = c.horizon;
  c.validate();
  return c;
}

RunConfig RunConfig::parse(const std::string& text) { return from_kv(parse_kv_text(text), RunConfig{}); }

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

}  // namespace hydro
