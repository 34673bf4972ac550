#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

namespace automiseg {

enum class ParamKind { kFloat, kInteger, kCategorical };

/// One dimension of the search space. Numeric kinds use [lo, hi]; categoricals
/// use `choices` and store the selected index.
struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::kFloat;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::string> choices;

  static ParamSpec Float(std::string name, double lo, double hi);
  static ParamSpec Integer(std::string name, std::int64_t lo, std::int64_t hi);
  static ParamSpec Categorical(std::string name, std::vector<std::string> choices);

  std::size_t n_choices() const noexcept { return choices.size(); }
};

/// Float values are doubles; integers and categorical indices are int64.
using ParamValue = std::variant<double, std::int64_t>;

class SearchSpace {
 public:
  SearchSpace() = default;
  explicit SearchSpace(std::vector<ParamSpec> params);

  const std::vector<ParamSpec>& params() const noexcept { return params_; }
  std::size_t size() const noexcept { return params_.size(); }
  bool empty() const noexcept { return params_.empty(); }

  const ParamSpec& at(const std::string& name) const;
  bool contains(const std::string& name) const;

 private:
  std::vector<ParamSpec> params_;
};

/// A complete assignment of values to the parameters of a space.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::map<std::string, ParamValue> values)
      : values_(std::move(values)) {}

  const std::map<std::string, ParamValue>& values() const noexcept { return values_; }

  void set(const std::string& name, ParamValue value) { values_[name] = value; }
  bool has(const std::string& name) const { return values_.contains(name); }

  double get_double(const std::string& name) const;
  std::int64_t get_int(const std::string& name) const;

  bool operator==(const Configuration&) const = default;

 private:
  std::map<std::string, ParamValue> values_;
};

/// Throws InvalidConfig naming the first offending parameter.
void validate(const SearchSpace& space, const Configuration& config);

/// The LTA space: two transform blocks (grd_, seg_), grd_prompt_id and bst_k_points.
SearchSpace default_space(std::size_t n_sentences);

inline constexpr const char* kGroundingPrefix = "grd_";
inline constexpr const char* kSegmentationPrefix = "seg_";
inline constexpr const char* kPromptIdParam = "grd_prompt_id";
inline constexpr const char* kBoostPointsParam = "bst_k_points";

/// Names of the per-block transform parameters, without prefix.
const std::vector<std::string>& transform_param_names();

Configuration sample_uniform(const SearchSpace& space, std::mt19937_64& rng);

/// Every transform is a no-op, prompt id 0, prompt boosting disabled.
Configuration base_config(const SearchSpace& space);

/// Observation record of the optimizer.
struct Trial {
  std::int64_t id = 0;
  Configuration config;
  double objective = 0.0;
  std::vector<double> per_sample_scores;
  double wall_time = 0.0;
};

double mean_of(const std::vector<double>& values);

// JSON: configurations are flat name -> value objects.
nlohmann::json config_to_json(const SearchSpace& space, const Configuration& config);
Configuration config_from_json(const SearchSpace& space, const nlohmann::json& j);

/// Trial-log lines omit wall_time so that identical runs produce identical logs.
nlohmann::json trial_to_json(const SearchSpace& space, const Trial& trial);
Trial trial_from_json(const SearchSpace& space, const nlohmann::json& j);

void write_trial_log(const std::filesystem::path& path, const SearchSpace& space,
                     const std::vector<Trial>& trials);
std::vector<Trial> read_trial_log(const std::filesystem::path& path, const SearchSpace& space);

}  // namespace automiseg
