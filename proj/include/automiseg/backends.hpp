#pragma once

#include <memory>
#include <string>
#include <vector>

#include "automiseg/core_types.hpp"
#include "automiseg/prompt_boost.hpp"

namespace automiseg {

// Black-box model interfaces. Implementations must tolerate concurrent calls.

class GroundingBackend {
 public:
  virtual ~GroundingBackend() = default;
  /// Throws NoDetection when the model finds no region.
  virtual BBox ground(const ImageRgb8& image, const std::string& sentence) const = 0;
};

class SegmentationBackend {
 public:
  virtual ~SegmentationBackend() = default;
  virtual BinaryMask segment(const ImageRgb8& image, const BBox& box,
                             const std::vector<Point2D>& points) const = 0;
};

class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual FeatureMap features(const ImageRgb8& image) const = 0;
};

class ScoringBackend {
 public:
  virtual ~ScoringBackend() = default;
  /// Zero-shot class probabilities, one per label, summing to 1.
  virtual std::vector<double> classify(const ImageRgb8& image,
                                       const std::vector<std::string>& labels) const = 0;
  /// Image-text similarities in [0, 1], one per text.
  virtual std::vector<double> match_texts(const ImageRgb8& image,
                                          const std::vector<std::string>& texts) const = 0;
};

struct Backends {
  std::shared_ptr<const GroundingBackend> grounding;
  std::shared_ptr<const SegmentationBackend> segmentation;
  std::shared_ptr<const FeatureBackend> features;
  std::shared_ptr<const ScoringBackend> scoring;
};

}  // namespace automiseg
