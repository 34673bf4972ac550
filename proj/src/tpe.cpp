#include "automiseg/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "automiseg/errors.hpp"

namespace automiseg {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kTinyDensity = 1e-300;

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }
double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

std::mt19937_64 rng_for(std::uint64_t seed, std::size_t history_size) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(history_size), 0x7e5u};
  return std::mt19937_64(seq);
}

}  // namespace

void TpeSettings::validate() const {
  if (n_startup < 1) throw InvalidArgument("n_startup must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in (0, 1)");
  if (n_candidates < 1) throw InvalidArgument("n_candidates must be >= 1");
  if (!(bandwidth_floor_fraction > 0.0)) {
    throw InvalidArgument("bandwidth_floor_fraction must be positive");
  }
  if (!(categorical_prior_weight >= 0.0)) {
    throw InvalidArgument("categorical_prior_weight must be non-negative");
  }
}

NumericParzen::NumericParzen(const ParamSpec& spec, std::vector<double> observations,
                             double bandwidth_floor_fraction, bool prior_smoothing)
    : integer_(spec.kind == ParamKind::kInteger),
      lo_(integer_ ? spec.lo - 0.5 : spec.lo),
      hi_(integer_ ? spec.hi + 0.5 : spec.hi),
      centers_(std::move(observations)) {
  const double range = hi_ - lo_;
  if (prior_smoothing) centers_.push_back((spec.lo + spec.hi) / 2.0);
  const auto n = static_cast<double>(centers_.size());
  double scott = 0.0;
  if (centers_.size() >= 2) {
    const double mean = std::accumulate(centers_.begin(), centers_.end(), 0.0) / n;
    double ss = 0.0;
    for (double c : centers_) ss += (c - mean) * (c - mean);
    scott = std::sqrt(ss / (n - 1.0)) * std::pow(n, -0.2);
  }
  bandwidth_ = std::max(scott, bandwidth_floor_fraction * range);
  if (prior_smoothing) bandwidth_ = std::max(bandwidth_, range / std::min(100.0, 1.0 + n));
  kernel_mass_.reserve(centers_.size());
  for (double c : centers_) {
    const double mass = normal_cdf((hi_ - c) / bandwidth_) - normal_cdf((lo_ - c) / bandwidth_);
    kernel_mass_.push_back(std::max(mass, kTinyDensity));
  }
}

double NumericParzen::mixture_pdf(double x) const {
  if (centers_.empty()) return 1.0 / (hi_ - lo_);
  double acc = 0.0;
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    acc += normal_pdf((x - centers_[i]) / bandwidth_) / (bandwidth_ * kernel_mass_[i]);
  }
  return acc / static_cast<double>(centers_.size());
}

double NumericParzen::mixture_cdf(double x) const {
  x = std::clamp(x, lo_, hi_);
  if (centers_.empty()) return (x - lo_) / (hi_ - lo_);
  double acc = 0.0;
  for (std::size_t i = 0; i < centers_.size(); ++i) {
    const double c = centers_[i];
    acc += (normal_cdf((x - c) / bandwidth_) - normal_cdf((lo_ - c) / bandwidth_)) / kernel_mass_[i];
  }
  return acc / static_cast<double>(centers_.size());
}

double NumericParzen::log_density(double value) const {
  double d;
  if (integer_) {
    const double v = std::round(value);
    d = mixture_cdf(v + 0.5) - mixture_cdf(v - 0.5);
  } else {
    d = mixture_pdf(value);
  }
  return std::log(std::max(d, kTinyDensity));
}

double NumericParzen::sample(std::mt19937_64& rng) const {
  double x;
  if (centers_.empty()) {
    x = std::uniform_real_distribution<double>(lo_, hi_)(rng);
  } else {
    const auto pick = std::uniform_int_distribution<std::size_t>(0, centers_.size() - 1)(rng);
    std::normal_distribution<double> kernel(centers_[pick], bandwidth_);
    x = kernel(rng);
    for (int attempt = 0; attempt < 256 && (x < lo_ || x > hi_); ++attempt) x = kernel(rng);
    x = std::clamp(x, lo_, hi_);
  }
  if (integer_) return std::clamp(std::round(x), lo_ + 0.5, hi_ - 0.5);
  return x;
}

CategoricalParzen::CategoricalParzen(std::size_t n_choices,
                                     const std::vector<std::int64_t>& observations,
                                     double prior_weight)
    : probs_(n_choices, prior_weight) {
  for (auto o : observations) {
    if (o >= 0 && static_cast<std::size_t>(o) < n_choices) probs_[static_cast<std::size_t>(o)] += 1.0;
  }
  double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
  if (total <= 0.0) {
    std::fill(probs_.begin(), probs_.end(), 1.0);
    total = static_cast<double>(n_choices);
  }
  for (auto& p : probs_) p /= total;
}

std::int64_t CategoricalParzen::sample(std::mt19937_64& rng) const {
  std::discrete_distribution<std::int64_t> dist(probs_.begin(), probs_.end());
  return dist(rng);
}

double CategoricalParzen::probability(std::int64_t choice) const {
  if (choice < 0 || static_cast<std::size_t>(choice) >= probs_.size()) return 0.0;
  return probs_[static_cast<std::size_t>(choice)];
}

TpeOptimizer::TpeOptimizer(SearchSpace space, TpeSettings settings)
    : space_(std::move(space)), settings_(settings) {
  settings_.validate();
}

std::size_t TpeOptimizer::good_set_size() const noexcept {
  const auto n = static_cast<double>(history_.size());
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(settings_.gamma * n - 1e-12)));
}

Configuration TpeOptimizer::suggest() const {
  if (space_.empty()) throw EmptySpace("search space has no parameters");
  auto rng = rng_for(settings_.seed, history_.size());
  if (history_.size() < settings_.n_startup) return sample_uniform(space_, rng);

  std::vector<std::size_t> order(history_.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (history_[a].objective != history_[b].objective) {
      return history_[a].objective > history_[b].objective;
    }
    return history_[a].id < history_[b].id;
  });
  const std::size_t n_good = good_set_size();

  struct Estimators {
    std::optional<NumericParzen> l_num, g_num;
    std::optional<CategoricalParzen> l_cat, g_cat;
  };
  std::vector<Estimators> est(space_.size());
  for (std::size_t k = 0; k < space_.size(); ++k) {
    const auto& p = space_.params()[k];
    if (p.kind == ParamKind::kCategorical) {
      std::vector<std::int64_t> good, bad;
      for (std::size_t r = 0; r < order.size(); ++r) {
        (r < n_good ? good : bad).push_back(history_[order[r]].config.get_int(p.name));
      }
      est[k].l_cat.emplace(p.n_choices(), good, settings_.categorical_prior_weight);
      est[k].g_cat.emplace(p.n_choices(), bad, settings_.categorical_prior_weight);
    } else {
      std::vector<double> good, bad;
      for (std::size_t r = 0; r < order.size(); ++r) {
        (r < n_good ? good : bad).push_back(history_[order[r]].config.get_double(p.name));
      }
      est[k].l_num.emplace(p, std::move(good), settings_.bandwidth_floor_fraction,
                           settings_.prior_smoothing);
      est[k].g_num.emplace(p, std::move(bad), settings_.bandwidth_floor_fraction,
                           settings_.prior_smoothing);
    }
  }

  Configuration best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < settings_.n_candidates; ++c) {
    Configuration candidate;
    double score = 0.0;
    for (std::size_t k = 0; k < space_.size(); ++k) {
      const auto& p = space_.params()[k];
      if (p.kind == ParamKind::kCategorical) {
        const auto v = est[k].l_cat->sample(rng);
        score += std::log(std::max(est[k].l_cat->probability(v), kTinyDensity)) -
                 std::log(std::max(est[k].g_cat->probability(v), kTinyDensity));
        candidate.set(p.name, v);
      } else {
        const double v = est[k].l_num->sample(rng);
        score += est[k].l_num->log_density(v) - est[k].g_num->log_density(v);
        if (p.kind == ParamKind::kInteger) {
          candidate.set(p.name, static_cast<std::int64_t>(v));
        } else {
          candidate.set(p.name, v);
        }
      }
    }
    if (score > best_score) {
      best_score = score;
      best = std::move(candidate);
    }
  }
  return best;
}

void TpeOptimizer::observe(Trial trial) {
  validate(space_, trial.config);
  if (!std::isfinite(trial.objective)) {
    throw NonFiniteObjective("trial " + std::to_string(trial.id) + " has a non-finite objective");
  }
  if (!history_.empty() && trial.id <= history_.back().id) {
    throw InvalidArgument("trial ids must be strictly increasing");
  }
  history_.push_back(std::move(trial));
}

const Trial& TpeOptimizer::best() const {
  if (history_.empty()) throw NoTrials("no trials observed");
  const Trial* best = &history_.front();
  for (const auto& t : history_) {
    if (t.objective > best->objective) best = &t;
  }
  return *best;
}

TpeOptimizer TpeOptimizer::replay(SearchSpace space, TpeSettings settings,
                                  const std::filesystem::path& trial_log) {
  auto trials = read_trial_log(trial_log, space);
  TpeOptimizer opt(std::move(space), settings);
  for (auto& t : trials) opt.observe(std::move(t));
  return opt;
}

}  // namespace automiseg
