#include "automiseg/core_types.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "automiseg/errors.hpp"

namespace automiseg {

namespace {

std::size_t checked_area(int width, int height) {
  if (width < 1 || height < 1) {
    throw InvalidArgument("raster dimensions must be positive, got " + std::to_string(width) +
                          "x" + std::to_string(height));
  }
  return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
}

}  // namespace

std::uint8_t rgb_to_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept {
  return static_cast<std::uint8_t>((299u * r + 587u * g + 114u * b + 500u) / 1000u);
}

ImageRgb8::ImageRgb8(int width, int height)
    : width_(width), height_(height), data_(checked_area(width, height) * kChannels, 0) {}

ImageRgb8::ImageRgb8(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  if (data_.size() != checked_area(width, height) * kChannels) {
    throw InvalidArgument("image data length " + std::to_string(data_.size()) +
                          " does not match " + std::to_string(width) + "x" +
                          std::to_string(height) + "x3");
  }
}

std::uint8_t ImageRgb8::luma(int x, int y) const noexcept {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * kChannels;
  return rgb_to_luma(data_[i], data_[i + 1], data_[i + 2]);
}

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height), bits_(checked_area(width, height), 0) {}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (bits_.size() != checked_area(width, height)) {
    throw InvalidArgument("mask data length does not match dimensions");
  }
  if (std::any_of(bits_.begin(), bits_.end(), [](std::uint8_t v) { return v > 1; })) {
    throw InvalidArgument("mask values must be 0 or 1");
  }
}

std::size_t BinaryMask::count() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

void check_bbox(const BBox& box, int image_width, int image_height) {
  if (!box.valid_within(image_width, image_height)) {
    throw InvalidArgument("bbox (" + std::to_string(box.x_min) + "," + std::to_string(box.y_min) +
                          "," + std::to_string(box.x_max) + "," + std::to_string(box.y_max) +
                          ") invalid for " + std::to_string(image_width) + "x" +
                          std::to_string(image_height) + " image");
  }
}

std::optional<BBox> bbox_of(const BinaryMask& mask) {
  int x0 = std::numeric_limits<int>::max(), y0 = x0;
  int x1 = -1, y1 = -1;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  return BBox{x0, y0, x1 + 1, y1 + 1};
}

}  // namespace automiseg
