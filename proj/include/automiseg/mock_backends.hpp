#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "automiseg/backends.hpp"

namespace automiseg {

using IntensityBand = std::array<int, 2>;  // inclusive [lo, hi] on the luma scale

/// Parameters of the closed mock world. All mocks work on integer Rec.601 luma.
struct MockWorldSpec {
  int threshold = 200;
  std::string target_label = "target";
  IntensityBand target_band{125, 155};
  std::map<std::string, IntensityBand> class_bands;
  int feature_window = 8;
  double logit_scale = 1.0;

  void validate() const;
};

nlohmann::json mock_world_to_json(const MockWorldSpec& spec);
MockWorldSpec mock_world_from_json(const nlohmann::json& j);
MockWorldSpec load_mock_world(const std::filesystem::path& path);

/// Largest 4-connected component with luma >= threshold; its tight box.
class MockGrounding final : public GroundingBackend {
 public:
  explicit MockGrounding(MockWorldSpec spec) : spec_(std::move(spec)) {}
  BBox ground(const ImageRgb8& image, const std::string& sentence) const override;

 private:
  MockWorldSpec spec_;
};

/// Otsu threshold of the box interior; keeps the foreground components that
/// contain the box center or any point prompt (largest component if none do).
class MockSegmentation final : public SegmentationBackend {
 public:
  BinaryMask segment(const ImageRgb8& image, const BBox& box,
                     const std::vector<Point2D>& points) const override;
};

/// Per window: mean R, mean G, mean B, mean |dx|, mean |dy|, luma std.
class MockFeatures final : public FeatureBackend {
 public:
  static constexpr int kDim = 6;
  explicit MockFeatures(int window = 8);
  FeatureMap features(const ImageRgb8& image) const override;

 private:
  int window_;
};

/// Band-fraction scorer: a label's raw score is the fraction of non-black
/// pixels whose luma lies in the label's band.
class MockScoring final : public ScoringBackend {
 public:
  explicit MockScoring(MockWorldSpec spec) : spec_(std::move(spec)) {}
  std::vector<double> classify(const ImageRgb8& image,
                               const std::vector<std::string>& labels) const override;
  std::vector<double> match_texts(const ImageRgb8& image,
                                  const std::vector<std::string>& texts) const override;

  double band_fraction(const ImageRgb8& image, const std::string& label) const;

 private:
  MockWorldSpec spec_;
};

Backends make_mock_backends(const MockWorldSpec& spec);

/// Otsu level over a 256-bin histogram; nullopt when all mass sits in one bin.
std::optional<int> otsu_threshold(const std::array<std::uint64_t, 256>& hist);

}  // namespace automiseg
