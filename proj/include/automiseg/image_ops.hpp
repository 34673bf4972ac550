#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "automiseg/core_types.hpp"
#include "automiseg/search_space.hpp"

namespace automiseg {

/// One transform block of the adaptor configuration. Default-constructed
/// params are the identity chain.
struct TransformParams {
  int hsv_hue_shift = 0;
  int hsv_sat_shift = 0;
  int hsv_val_shift = 0;
  int r_shift = 0;
  int g_shift = 0;
  int b_shift = 0;
  double clahe_clip = 0.0;
  int clahe_grid = 1;
  double edge_strength = 0.0;

  /// Throws InvalidArgument when any field leaves its search range.
  void validate() const;

  bool operator==(const TransformParams&) const = default;
};

/// Reads the block with the given prefix ("grd_" or "seg_") out of a configuration.
TransformParams transform_params_from(const Configuration& config, const std::string& prefix);

/// Hue is given in half-degree units (rotation = 2 * hue degrees); saturation
/// and value offsets are added on the 0..255 scale and clamped.
ImageRgb8 hsv_shift(const ImageRgb8& img, int hue, int sat, int val);

ImageRgb8 rgb_shift(const ImageRgb8& img, int r, int g, int b);

/// Contrast-limited adaptive histogram equalization of the luma channel.
/// clip <= 1e-9 disables the operator.
ImageRgb8 clahe(const ImageRgb8& img, double clip, int grid);

/// out = in + strength * (in - blur(in)), gaussian sigma 2, radius 5, replicated edges.
ImageRgb8 unsharp_mask(const ImageRgb8& img, double strength);

/// hsv_shift -> rgb_shift -> clahe -> unsharp_mask.
ImageRgb8 apply_transform_chain(const ImageRgb8& img, const TransformParams& p);

namespace detail {

struct Hsv {
  double h = 0.0;  // [0, 360)
  double s = 0.0;  // [0, 255]
  double v = 0.0;  // [0, 255]
};

Hsv rgb_to_hsv(double r, double g, double b) noexcept;
std::array<double, 3> hsv_to_rgb(const Hsv& hsv) noexcept;

inline constexpr double kUnsharpSigma = 2.0;
inline constexpr int kUnsharpRadius = 5;
inline constexpr double kClaheDisabledBelow = 1e-9;

/// Normalized 1D gaussian taps, length 2 * radius + 1.
std::vector<double> gaussian_kernel(double sigma, int radius);

/// Integer tile boundaries along one axis: grid + 1 monotone offsets.
std::vector<int> tile_edges(int extent, int grid);

/// Histogram after clipping at clip * pixels / 256 and uniform redistribution of the excess.
std::array<double, 256> clip_histogram(const std::array<std::uint32_t, 256>& hist,
                                       double clip, std::size_t pixels);

}  // namespace detail

}  // namespace automiseg
