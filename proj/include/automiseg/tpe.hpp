#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "automiseg/search_space.hpp"

namespace automiseg {

struct TpeSettings {
  std::size_t n_startup = 10;
  double gamma = 0.25;
  std::size_t n_candidates = 24;
  std::uint64_t seed = 0;
  double bandwidth_floor_fraction = 0.01;
  double categorical_prior_weight = 1.0;
  /// Adds a pseudo-observation at the middle of each numeric range to both
  /// estimators and floors the bandwidth at range / min(100, 1 + n). Without
  /// it the good-set estimator collapses onto early winners.
  bool prior_smoothing = true;

  void validate() const;
};

/// Univariate Parzen estimator over a numeric parameter, truncated to the
/// parameter bounds. Integer parameters live on [lo - 0.5, hi + 0.5] and
/// their density is the mass of the rounding cell.
class NumericParzen {
 public:
  NumericParzen(const ParamSpec& spec, std::vector<double> observations,
                double bandwidth_floor_fraction, bool prior_smoothing = false);

  double sample(std::mt19937_64& rng) const;
  double log_density(double value) const;

  double bandwidth() const noexcept { return bandwidth_; }

 private:
  double mixture_cdf(double x) const;
  double mixture_pdf(double x) const;

  bool integer_;
  double lo_;
  double hi_;
  std::vector<double> centers_;
  std::vector<double> kernel_mass_;
  double bandwidth_;
};

/// Smoothed frequency distribution: p(choice) proportional to count + prior.
class CategoricalParzen {
 public:
  CategoricalParzen(std::size_t n_choices, const std::vector<std::int64_t>& observations,
                    double prior_weight);

  std::int64_t sample(std::mt19937_64& rng) const;
  double probability(std::int64_t choice) const;

 private:
  std::vector<double> probs_;
};

/// Tree-structured Parzen estimator with an ask/tell interface. Maximizes.
///
/// Suggestions are a pure function of (settings, observed history): the
/// random stream for each call is derived from the seed and the history
/// length, so a run reconstructed from a trial log continues identically.
class TpeOptimizer {
 public:
  TpeOptimizer(SearchSpace space, TpeSettings settings);

  Configuration suggest() const;
  void observe(Trial trial);

  /// Highest objective, ties broken by the lowest id.
  const Trial& best() const;

  const std::vector<Trial>& history() const noexcept { return history_; }
  const SearchSpace& space() const noexcept { return space_; }
  const TpeSettings& settings() const noexcept { return settings_; }

  std::int64_t next_trial_id() const noexcept {
    return history_.empty() ? 1 : history_.back().id + 1;
  }

  /// ceil(gamma * n), at least one.
  std::size_t good_set_size() const noexcept;

  /// Rebuilds optimizer state from a JSON-lines trial log.
  static TpeOptimizer replay(SearchSpace space, TpeSettings settings,
                             const std::filesystem::path& trial_log);

 private:
  SearchSpace space_;
  TpeSettings settings_;
  std::vector<Trial> history_;
};

}  // namespace automiseg
