#include "automiseg/search_space.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "automiseg/errors.hpp"

namespace automiseg {

ParamSpec ParamSpec::Float(std::string name, double lo, double hi) {
  if (!(lo < hi)) throw InvalidArgument("float param " + name + " needs lo < hi");
  return {std::move(name), ParamKind::kFloat, lo, hi, {}};
}

ParamSpec ParamSpec::Integer(std::string name, std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw InvalidArgument("integer param " + name + " needs lo <= hi");
  return {std::move(name), ParamKind::kInteger, static_cast<double>(lo), static_cast<double>(hi),
          {}};
}

ParamSpec ParamSpec::Categorical(std::string name, std::vector<std::string> choices) {
  if (choices.empty()) throw InvalidArgument("categorical param " + name + " has no choices");
  return {std::move(name), ParamKind::kCategorical, 0.0,
          static_cast<double>(choices.size() - 1), std::move(choices)};
}

SearchSpace::SearchSpace(std::vector<ParamSpec> params) : params_(std::move(params)) {
  std::set<std::string> seen;
  for (const auto& p : params_) {
    if (!seen.insert(p.name).second) throw InvalidArgument("duplicate parameter " + p.name);
  }
}

const ParamSpec& SearchSpace::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidArgument("unknown parameter " + name);
}

bool SearchSpace::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

double Configuration::get_double(const std::string& name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw InvalidConfig(name, "missing");
  return std::visit([](auto v) { return static_cast<double>(v); }, it->second);
}

std::int64_t Configuration::get_int(const std::string& name) const {
  const auto it = values_.find(name);
  if (it == values_.end()) throw InvalidConfig(name, "missing");
  if (const auto* i = std::get_if<std::int64_t>(&it->second)) return *i;
  throw InvalidConfig(name, "expected an integer value");
}

void validate(const SearchSpace& space, const Configuration& config) {
  for (const auto& p : space.params()) {
    const auto it = config.values().find(p.name);
    if (it == config.values().end()) throw InvalidConfig(p.name, "missing");
    const ParamValue& v = it->second;
    if (p.kind == ParamKind::kFloat) {
      const double* d = std::get_if<double>(&v);
      if (!d) throw InvalidConfig(p.name, "expected a float value");
      if (!std::isfinite(*d) || *d < p.lo || *d > p.hi) {
        throw InvalidConfig(p.name, "value out of bounds");
      }
    } else {
      const std::int64_t* i = std::get_if<std::int64_t>(&v);
      if (!i) throw InvalidConfig(p.name, "expected an integer value");
      if (static_cast<double>(*i) < p.lo || static_cast<double>(*i) > p.hi) {
        throw InvalidConfig(p.name, "value out of bounds");
      }
    }
  }
  for (const auto& [name, value] : config.values()) {
    if (!space.contains(name)) throw InvalidConfig(name, "not part of the search space");
  }
}

const std::vector<std::string>& transform_param_names() {
  static const std::vector<std::string> names{
      "hsv_hue_shift", "hsv_sat_shift", "hsv_val_shift", "r_shift",      "g_shift",
      "b_shift",       "clahe_clip",    "clahe_grid",    "edge_strength"};
  return names;
}

SearchSpace default_space(std::size_t n_sentences) {
  if (n_sentences < 1) throw InvalidArgument("at least one grounding sentence is required");
  std::vector<ParamSpec> params;
  for (const std::string prefix : {kGroundingPrefix, kSegmentationPrefix}) {
    params.push_back(ParamSpec::Integer(prefix + "hsv_hue_shift", 0, 20));
    params.push_back(ParamSpec::Integer(prefix + "hsv_sat_shift", 0, 30));
    params.push_back(ParamSpec::Integer(prefix + "hsv_val_shift", 0, 30));
    params.push_back(ParamSpec::Integer(prefix + "r_shift", 0, 20));
    params.push_back(ParamSpec::Integer(prefix + "g_shift", 0, 20));
    params.push_back(ParamSpec::Integer(prefix + "b_shift", 0, 20));
    params.push_back(ParamSpec::Float(prefix + "clahe_clip", 0.0, 4.0));
    params.push_back(ParamSpec::Integer(prefix + "clahe_grid", 1, 4));
    params.push_back(ParamSpec::Float(prefix + "edge_strength", 0.0, 1.0));
  }
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_sentences; ++i) ids.push_back(std::to_string(i));
  params.push_back(ParamSpec::Categorical(kPromptIdParam, std::move(ids)));
  params.push_back(ParamSpec::Integer(kBoostPointsParam, 0, 5));
  return SearchSpace(std::move(params));
}

Configuration sample_uniform(const SearchSpace& space, std::mt19937_64& rng) {
  Configuration config;
  for (const auto& p : space.params()) {
    switch (p.kind) {
      case ParamKind::kFloat:
        config.set(p.name, std::uniform_real_distribution<double>(p.lo, p.hi)(rng));
        break;
      case ParamKind::kInteger:
      case ParamKind::kCategorical:
        config.set(p.name, std::uniform_int_distribution<std::int64_t>(
                               static_cast<std::int64_t>(p.lo), static_cast<std::int64_t>(p.hi))(rng));
        break;
    }
  }
  return config;
}

Configuration base_config(const SearchSpace& space) {
  Configuration config;
  for (const auto& p : space.params()) {
    if (p.kind == ParamKind::kFloat) {
      config.set(p.name, std::clamp(0.0, p.lo, p.hi));
    } else {
      config.set(p.name, static_cast<std::int64_t>(p.lo));
    }
  }
  return config;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

nlohmann::json config_to_json(const SearchSpace& space, const Configuration& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : space.params()) {
    const auto it = config.values().find(p.name);
    if (it == config.values().end()) throw InvalidConfig(p.name, "missing");
    std::visit([&](auto v) { j[p.name] = v; }, it->second);
  }
  return j;
}

Configuration config_from_json(const SearchSpace& space, const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidConfig("<root>", "configuration must be a JSON object");
  Configuration config;
  for (const auto& [name, value] : j.items()) {
    if (!space.contains(name)) throw InvalidConfig(name, "not part of the search space");
    const auto& p = space.at(name);
    if (p.kind == ParamKind::kFloat) {
      if (!value.is_number()) throw InvalidConfig(name, "expected a number");
      config.set(name, value.get<double>());
    } else {
      if (!value.is_number_integer()) throw InvalidConfig(name, "expected an integer");
      config.set(name, value.get<std::int64_t>());
    }
  }
  validate(space, config);
  return config;
}

nlohmann::json trial_to_json(const SearchSpace& space, const Trial& trial) {
  return {{"id", trial.id},
          {"config", config_to_json(space, trial.config)},
          {"objective", trial.objective},
          {"per_sample_scores", trial.per_sample_scores}};
}

Trial trial_from_json(const SearchSpace& space, const nlohmann::json& j) {
  Trial t;
  t.id = j.at("id").get<std::int64_t>();
  t.config = config_from_json(space, j.at("config"));
  t.objective = j.at("objective").get<double>();
  t.per_sample_scores = j.value("per_sample_scores", std::vector<double>{});
  t.wall_time = j.value("wall_time", 0.0);
  return t;
}

void write_trial_log(const std::filesystem::path& path, const SearchSpace& space,
                     const std::vector<Trial>& trials) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& t : trials) out << trial_to_json(space, t).dump() << '\n';
}

std::vector<Trial> read_trial_log(const std::filesystem::path& path, const SearchSpace& space) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Trial> trials;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    trials.push_back(trial_from_json(space, nlohmann::json::parse(line)));
  }
  return trials;
}

}  // namespace automiseg
