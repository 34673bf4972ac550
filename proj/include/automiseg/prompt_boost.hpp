#pragma once

#include <cstdint>
#include <vector>

#include "automiseg/core_types.hpp"

namespace automiseg {

class FeatureBackend;

/// Dense feature grid of height_cells x width_cells vectors of length dim,
/// aligned with an image of image_width x image_height pixels.
class FeatureMap {
 public:
  FeatureMap(int height_cells, int width_cells, int dim, std::vector<float> data,
             int image_width, int image_height);

  int height_cells() const noexcept { return height_cells_; }
  int width_cells() const noexcept { return width_cells_; }
  int dim() const noexcept { return dim_; }
  int image_width() const noexcept { return image_width_; }
  int image_height() const noexcept { return image_height_; }

  const std::vector<float>& data() const noexcept { return data_; }
  const float* cell(int row, int col) const noexcept {
    return data_.data() + (static_cast<std::size_t>(row) * width_cells_ + col) * dim_;
  }

  /// Pixel coordinates of a cell center, inverse of the feature_at mapping.
  Point2D cell_center(int row, int col) const noexcept;

  bool operator==(const FeatureMap&) const = default;

 private:
  int height_cells_;
  int width_cells_;
  int dim_;
  std::vector<float> data_;
  int image_width_;
  int image_height_;
};

/// Geometric center of the box.
Point2D anchor_point(const BBox& box) noexcept;

/// Bilinear interpolation of the feature grid at a pixel location.
std::vector<double> feature_at(const FeatureMap& fm, const Point2D& p);

struct ScoredPoint {
  Point2D point;
  double similarity = 0.0;
  int cell_index = 0;  // row-major
};

/// Cell centers inside the box (the anchor's cell excluded) ranked by cosine
/// similarity to the anchor feature; ties keep row-major order.
std::vector<ScoredPoint> topk_similar(const FeatureMap& fm, const std::vector<double>& anchor_feat,
                                      const BBox& box, std::size_t k);

struct KMeansResult {
  std::vector<Point2D> centroids;  // sorted by (y, x)
  std::vector<int> assignment;     // per input point, indexes centroids
  std::vector<double> wcss_trace;  // within-cluster sum of squares after each assignment step
};

/// Lloyd's algorithm with k-means++ seeding.
KMeansResult kmeans(const std::vector<Point2D>& points, std::size_t n, std::uint64_t seed);

/// Centroids only; returns the points themselves when there are at most n.
std::vector<Point2D> kmeans_centroids(const std::vector<Point2D>& points, std::size_t n,
                                      std::uint64_t seed);

inline constexpr std::size_t kBoostCandidatePool = 10;
inline constexpr std::size_t kMaxBoostPoints = 5;

/// Supplementary positive point prompts for a box. n_points = 0 disables boosting.
std::vector<Point2D> boost(const ImageRgb8& image_for_features, const BBox& box,
                           std::size_t n_points, const FeatureBackend& feature_backend,
                           std::uint64_t seed = 0);

}  // namespace automiseg
