#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "automiseg/backends.hpp"
#include "automiseg/search_space.hpp"
#include "automiseg/tpe.hpp"
#include "automiseg/validator.hpp"

namespace automiseg {

enum class AdaptationMode { kBatch, kPerSample };

AdaptationMode parse_mode(const std::string& text);
std::string to_string(AdaptationMode mode);

struct AdaptationSettings {
  std::size_t n_trials = 100;
  std::size_t subset_size = 100;
  std::uint64_t subset_seed = 0;
  AdaptationMode mode = AdaptationMode::kBatch;
  std::size_t workers = 1;
  TpeSettings tpe;

  void validate() const;
};

enum class SampleStatus { kOk, kGroundingFailed, kBackendError };

std::string to_string(SampleStatus status);
SampleStatus parse_status(const std::string& text);

struct SampleResult {
  std::string sample_id;
  std::optional<BinaryMask> mask;  // present iff status == kOk
  std::optional<BBox> bbox;
  std::vector<Point2D> points;
  ValidationScore score;
  SampleStatus status = SampleStatus::kOk;
  std::string error;
};

struct Sample {
  std::string id;
  ImageRgb8 image;
};

/// Ground -> boost -> segment -> validate under one configuration.
/// Grounding and segmentation see their own transformed inputs; the validator
/// sees the untransformed image.
SampleResult segment_one(const ImageRgb8& image, const TaskDefinition& task,
                         const Configuration& config, const Backends& backends,
                         std::string sample_id = {});

/// segment_one over every sample, order preserved, on up to `workers` threads.
std::vector<SampleResult> run_dataset(const std::vector<Sample>& dataset,
                                      const TaskDefinition& task, const Configuration& config,
                                      const Backends& backends, std::size_t workers = 1);

/// Per-sample configurations, for the per-sample mode.
std::vector<SampleResult> run_dataset(const std::vector<Sample>& dataset,
                                      const TaskDefinition& task,
                                      const std::vector<Configuration>& configs,
                                      const Backends& backends, std::size_t workers = 1);

struct AdaptationResult {
  Configuration best_config;
  std::vector<Trial> trials;
  std::vector<std::size_t> subset;  // indexes into the input samples
  /// Per-sample mode only: best configuration for each sample, input order.
  std::vector<Configuration> per_sample_configs;
  /// Per-sample mode only: trial log of each sample's optimization.
  std::vector<std::vector<Trial>> per_sample_trials;
};

/// Seeded draw of min(subset_size, n) distinct indexes, returned in ascending order.
std::vector<std::size_t> draw_subset(std::size_t n, std::size_t subset_size, std::uint64_t seed);

/// Called after every observed trial (batch mode).
using TrialCallback = std::function<void(const Trial&)>;

/// Test-time adaptation: TPE over the configuration space maximizing mean s_val
/// over a seeded subset. Failed samples contribute 0.
AdaptationResult adapt(const std::vector<Sample>& samples, const TaskDefinition& task,
                       const AdaptationSettings& settings, const Backends& backends,
                       const TrialCallback& on_trial = {});

/// Mean s_val over sample results, failures as 0.
double objective_of(const std::vector<SampleResult>& results);

}  // namespace automiseg
