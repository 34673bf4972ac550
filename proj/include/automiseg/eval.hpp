#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "automiseg/mock_backends.hpp"
#include "automiseg/pipeline.hpp"

namespace automiseg {

/// 2|A n B| / (|A| + |B|); 1.0 when both masks are empty.
double dice(const BinaryMask& a, const BinaryMask& b);

/// Pearson correlation; nullopt for fewer than 3 pairs or zero variance.
std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
};

/// Dataset directory: images/<id>.png and optional masks/<id>.png.
struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> samples;
};

DatasetManifest scan_dataset(const std::filesystem::path& root);
std::vector<Sample> load_samples(const DatasetManifest& manifest);
/// Ground-truth masks by id; throws MissingTruth if any sample has none.
std::map<std::string, BinaryMask> load_truths(const DatasetManifest& manifest);

/// Parameters of the synthetic phantom generator.
struct SyntheticSpec {
  int size = 128;
  double background_mean = 120.0;
  double background_sd = 8.0;
  double target_mean = 140.0;
  double target_sd = 5.0;
  double min_axis = 12.0;
  double max_axis = 30.0;
};

struct SyntheticSample {
  std::string id;
  ImageRgb8 image;
  BinaryMask truth;
};

struct SyntheticBenchmark {
  std::vector<SyntheticSample> samples;
  MockWorldSpec world;
  TaskDefinition task;
};

/// Mock world and task matched to the phantom generator.
MockWorldSpec synthetic_world();
TaskDefinition synthetic_task();

/// In-memory benchmark: low-contrast target ellipse on textured background
/// plus one or two distractor ellipses in non-target bands. Fully seeded.
SyntheticBenchmark generate_synthetic_benchmark(std::size_t n, std::uint64_t seed,
                                                const MockWorldSpec& world = synthetic_world(),
                                                const SyntheticSpec& spec = {});

/// Writes images/, masks/, task.json (+ assets) and mock_world.json under out_dir.
DatasetManifest write_benchmark(const SyntheticBenchmark& bench, const std::filesystem::path& out_dir);

struct SampleEval {
  std::string id;
  double dice = 0.0;
  double s_val = 0.0;
  SampleStatus status = SampleStatus::kOk;
};

struct EvalReport {
  std::vector<SampleEval> per_sample;
  double mean_dice = 0.0;       // over ok samples
  double mean_s_val = 0.0;      // over ok samples
  double mean_dice_all = 0.0;   // failures count as Dice 0
  std::optional<double> mean_dice_excluding;  // samples not in the adaptation subset
  std::optional<double> pearson_r;            // s_val vs Dice over ok samples
  double failure_rate = 0.0;
  Configuration config;
};

EvalReport evaluate(const std::vector<SampleResult>& results,
                    const std::map<std::string, BinaryMask>& truths, const Configuration& config,
                    const std::vector<std::string>& excluded_ids = {});

nlohmann::json report_to_json(const SearchSpace& space, const EvalReport& report);

/// Scatter of normalized s_val vs Dice, best-so-far curve and per-trial trace (SVG + CSV).
std::vector<std::filesystem::path> emit_plots(const EvalReport& report,
                                              const std::vector<Trial>& trials,
                                              const std::filesystem::path& out_dir);

/// Which transform block gets which configuration in an ablation run.
/// Prompt parameters always keep their optimal values.
enum class BlockSetting { kOptimal, kBase, kRandom };

struct AblationRegime {
  BlockSetting grounding = BlockSetting::kOptimal;
  BlockSetting segmentation = BlockSetting::kOptimal;
};

/// Parses "optimal-optimal", "optimal-base", "optimal-random", "base-optimal", "random-optimal".
AblationRegime parse_regime(const std::string& text);
std::string to_string(const AblationRegime& regime);

Configuration ablation_config(const SearchSpace& space, const Configuration& optimal,
                              const AblationRegime& regime, std::uint64_t seed);

// Per-sample results manifest: JSON lines with mask file paths relative to the results dir.
void write_results(const std::filesystem::path& out_dir, const std::vector<SampleResult>& results);
std::vector<SampleResult> read_results(const std::filesystem::path& results_dir);

}  // namespace automiseg
