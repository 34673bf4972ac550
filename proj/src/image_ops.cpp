#include "automiseg/image_ops.hpp"

#include <algorithm>
#include <cmath>

#include "automiseg/errors.hpp"

namespace automiseg {

namespace {

std::uint8_t clamp_round(double v) noexcept {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void require_range(const char* name, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi)) {
    throw InvalidArgument(std::string(name) + " = " + std::to_string(v) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

void TransformParams::validate() const {
  require_range("hsv_hue_shift", hsv_hue_shift, 0, 20);
  require_range("hsv_sat_shift", hsv_sat_shift, 0, 30);
  require_range("hsv_val_shift", hsv_val_shift, 0, 30);
  require_range("r_shift", r_shift, 0, 20);
  require_range("g_shift", g_shift, 0, 20);
  require_range("b_shift", b_shift, 0, 20);
  require_range("clahe_clip", clahe_clip, 0.0, 4.0);
  require_range("clahe_grid", clahe_grid, 1, 4);
  require_range("edge_strength", edge_strength, 0.0, 1.0);
}

TransformParams transform_params_from(const Configuration& config, const std::string& prefix) {
  TransformParams p;
  auto i = [&](const char* name) { return static_cast<int>(config.get_int(prefix + name)); };
  p.hsv_hue_shift = i("hsv_hue_shift");
  p.hsv_sat_shift = i("hsv_sat_shift");
  p.hsv_val_shift = i("hsv_val_shift");
  p.r_shift = i("r_shift");
  p.g_shift = i("g_shift");
  p.b_shift = i("b_shift");
  p.clahe_clip = config.get_double(prefix + "clahe_clip");
  p.clahe_grid = i("clahe_grid");
  p.edge_strength = config.get_double(prefix + "edge_strength");
  return p;
}

namespace detail {

Hsv rgb_to_hsv(double r, double g, double b) noexcept {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? 255.0 * delta / mx : 0.0;
  if (delta <= 0.0) return out;
  double h;
  if (mx == r) {
    h = 60.0 * std::fmod((g - b) / delta, 6.0);
  } else if (mx == g) {
    h = 60.0 * ((b - r) / delta + 2.0);
  } else {
    h = 60.0 * ((r - g) / delta + 4.0);
  }
  if (h < 0.0) h += 360.0;
  out.h = h >= 360.0 ? h - 360.0 : h;
  return out;
}

std::array<double, 3> hsv_to_rgb(const Hsv& hsv) noexcept {
  const double c = hsv.v * hsv.s / 255.0;
  const double hp = hsv.h / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  const double m = hsv.v - c;
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp) % 6) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  return {r + m, g + m, b + m};
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += k[i + radius];
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::vector<int> tile_edges(int extent, int grid) {
  const int g = std::min(grid, extent);
  std::vector<int> edges(static_cast<std::size_t>(g) + 1);
  for (int i = 0; i <= g; ++i) edges[i] = static_cast<int>(static_cast<long>(i) * extent / g);
  return edges;
}

std::array<double, 256> clip_histogram(const std::array<std::uint32_t, 256>& hist, double clip,
                                       std::size_t pixels) {
  const double limit = clip * static_cast<double>(pixels) / 256.0;
  double excess = 0.0;
  std::array<double, 256> out{};
  for (int v = 0; v < 256; ++v) {
    const double h = hist[v];
    if (h > limit) {
      excess += h - limit;
      out[v] = limit;
    } else {
      out[v] = h;
    }
  }
  const double share = excess / 256.0;
  for (auto& v : out) v += share;
  return out;
}

}  // namespace detail

ImageRgb8 hsv_shift(const ImageRgb8& img, int hue, int sat, int val) {
  if (hue == 0 && sat == 0 && val == 0) return img;
  const auto src = img.data();
  std::vector<std::uint8_t> out(src.size());
  const double rotation = 2.0 * hue;
  for (std::size_t i = 0; i < src.size(); i += 3) {
    auto hsv = detail::rgb_to_hsv(src[i], src[i + 1], src[i + 2]);
    hsv.h = std::fmod(hsv.h + rotation, 360.0);
    hsv.s = std::clamp(hsv.s + sat, 0.0, 255.0);
    hsv.v = std::clamp(hsv.v + val, 0.0, 255.0);
    const auto rgb = detail::hsv_to_rgb(hsv);
    out[i] = clamp_round(rgb[0]);
    out[i + 1] = clamp_round(rgb[1]);
    out[i + 2] = clamp_round(rgb[2]);
  }
  return ImageRgb8(img.width(), img.height(), std::move(out));
}

ImageRgb8 rgb_shift(const ImageRgb8& img, int r, int g, int b) {
  if (r == 0 && g == 0 && b == 0) return img;
  const int shift[3] = {r, g, b};
  const auto src = img.data();
  std::vector<std::uint8_t> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::clamp(src[i] + shift[i % 3], 0, 255));
  }
  return ImageRgb8(img.width(), img.height(), std::move(out));
}

namespace {

/// Neighbouring tiles and the weight of the upper one for a pixel coordinate.
struct AxisBlend {
  int lo = 0;
  int hi = 0;
  double w = 0.0;
};

std::vector<AxisBlend> axis_blends(const std::vector<int>& edges, int extent) {
  const int tiles = static_cast<int>(edges.size()) - 1;
  std::vector<double> centers(static_cast<std::size_t>(tiles));
  for (int t = 0; t < tiles; ++t) centers[t] = (edges[t] + edges[t + 1] - 1) / 2.0;
  std::vector<AxisBlend> out(static_cast<std::size_t>(extent));
  int t = 0;
  for (int p = 0; p < extent; ++p) {
    if (p <= centers.front()) {
      out[p] = {0, 0, 0.0};
    } else if (p >= centers.back()) {
      out[p] = {tiles - 1, tiles - 1, 0.0};
    } else {
      while (centers[t + 1] <= p) ++t;
      out[p] = {t, t + 1, (p - centers[t]) / (centers[t + 1] - centers[t])};
    }
  }
  return out;
}

}  // namespace

ImageRgb8 clahe(const ImageRgb8& img, double clip, int grid) {
  if (clip <= detail::kClaheDisabledBelow) return img;
  if (grid < 1) throw InvalidArgument("clahe grid must be >= 1");
  const int w = img.width();
  const int h = img.height();
  const auto src = img.data();

  std::vector<std::uint8_t> luma(img.pixel_count());
  for (std::size_t i = 0; i < luma.size(); ++i) {
    luma[i] = rgb_to_luma(src[3 * i], src[3 * i + 1], src[3 * i + 2]);
  }

  const auto xedges = detail::tile_edges(w, grid);
  const auto yedges = detail::tile_edges(h, grid);
  const int tx = static_cast<int>(xedges.size()) - 1;
  const int ty = static_cast<int>(yedges.size()) - 1;

  std::vector<std::array<double, 256>> luts(static_cast<std::size_t>(tx * ty));
  for (int j = 0; j < ty; ++j) {
    for (int i = 0; i < tx; ++i) {
      std::array<std::uint32_t, 256> hist{};
      for (int y = yedges[j]; y < yedges[j + 1]; ++y) {
        for (int x = xedges[i]; x < xedges[i + 1]; ++x) ++hist[luma[static_cast<std::size_t>(y) * w + x]];
      }
      const std::size_t n = static_cast<std::size_t>(yedges[j + 1] - yedges[j]) *
                            static_cast<std::size_t>(xedges[i + 1] - xedges[i]);
      const auto clipped = detail::clip_histogram(hist, clip, n);
      auto& lut = luts[static_cast<std::size_t>(j) * tx + i];
      double cdf = 0.0;
      for (int v = 0; v < 256; ++v) {
        cdf += clipped[v];
        lut[v] = 255.0 * cdf / static_cast<double>(n);
      }
    }
  }

  const auto bx = axis_blends(xedges, w);
  const auto by = axis_blends(yedges, h);
  std::vector<std::uint8_t> out(src.size());
  for (int y = 0; y < h; ++y) {
    const auto& ry = by[y];
    for (int x = 0; x < w; ++x) {
      const auto& rx = bx[x];
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      const int v = luma[idx];
      const double top = (1.0 - rx.w) * luts[ry.lo * tx + rx.lo][v] + rx.w * luts[ry.lo * tx + rx.hi][v];
      const double bottom = (1.0 - rx.w) * luts[ry.hi * tx + rx.lo][v] + rx.w * luts[ry.hi * tx + rx.hi][v];
      const double mapped = (1.0 - ry.w) * top + ry.w * bottom;
      const double delta = mapped - v;
      for (int c = 0; c < 3; ++c) out[3 * idx + c] = clamp_round(src[3 * idx + c] + delta);
    }
  }
  return ImageRgb8(w, h, std::move(out));
}

ImageRgb8 unsharp_mask(const ImageRgb8& img, double strength) {
  if (strength == 0.0) return img;
  const int w = img.width();
  const int h = img.height();
  const int r = detail::kUnsharpRadius;
  const auto kernel = detail::gaussian_kernel(detail::kUnsharpSigma, r);
  const auto src = img.data();

  std::vector<double> horiz(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int k = -r; k <= r; ++k) {
          const int xx = std::clamp(x + k, 0, w - 1);
          acc += kernel[k + r] * src[(static_cast<std::size_t>(y) * w + xx) * 3 + c];
        }
        horiz[(static_cast<std::size_t>(y) * w + x) * 3 + c] = acc;
      }
    }
  }
  std::vector<std::uint8_t> out(src.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double blur = 0.0;
        for (int k = -r; k <= r; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          blur += kernel[k + r] * horiz[(static_cast<std::size_t>(yy) * w + x) * 3 + c];
        }
        const std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3 + c;
        out[i] = clamp_round(src[i] + strength * (src[i] - blur));
      }
    }
  }
  return ImageRgb8(w, h, std::move(out));
}

ImageRgb8 apply_transform_chain(const ImageRgb8& img, const TransformParams& p) {
  p.validate();
  ImageRgb8 out = hsv_shift(img, p.hsv_hue_shift, p.hsv_sat_shift, p.hsv_val_shift);
  out = rgb_shift(out, p.r_shift, p.g_shift, p.b_shift);
  out = clahe(out, p.clahe_clip, p.clahe_grid);
  return unsharp_mask(out, p.edge_strength);
}

}  // namespace automiseg
