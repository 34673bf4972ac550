#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace automiseg {

/// Dense 8-bit RGB raster, row-major, channels interleaved.
class ImageRgb8 {
 public:
  static constexpr int kChannels = 3;

  ImageRgb8(int width, int height);
  ImageRgb8(int width, int height, std::vector<std::uint8_t> data);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  std::span<const std::uint8_t> data() const noexcept { return data_; }
  const std::vector<std::uint8_t>& bytes() const noexcept { return data_; }

  std::uint8_t at(int x, int y, int c) const noexcept {
    return data_[(static_cast<std::size_t>(y) * width_ + x) * kChannels + c];
  }

  /// Integer Rec.601 luma, exact for gray pixels.
  std::uint8_t luma(int x, int y) const noexcept;

  bool operator==(const ImageRgb8&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

std::uint8_t rgb_to_luma(std::uint8_t r, std::uint8_t g, std::uint8_t b) noexcept;

/// Binary raster, 1 = target foreground.
class BinaryMask {
 public:
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }

  std::span<const std::uint8_t> data() const noexcept { return bits_; }

  bool at(int x, int y) const noexcept {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool v) noexcept {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::size_t count() const noexcept;
  bool empty() const noexcept { return count() == 0; }

  bool operator==(const BinaryMask&) const = default;

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> bits_;
};

/// Continuous pixel coordinates.
struct Point2D {
  double x = 0.0;
  double y = 0.0;

  bool operator==(const Point2D&) const = default;
};

/// Axis-aligned box; max edges are exclusive so width() = x_max - x_min.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const noexcept { return x_max - x_min; }
  int height() const noexcept { return y_max - y_min; }
  std::size_t area() const noexcept {
    return static_cast<std::size_t>(width()) * static_cast<std::size_t>(height());
  }

  bool valid_within(int image_width, int image_height) const noexcept {
    return 0 <= x_min && x_min < x_max && x_max <= image_width && 0 <= y_min &&
           y_min < y_max && y_max <= image_height;
  }

  /// Half-open containment test.
  bool contains(const Point2D& p) const noexcept {
    return p.x >= x_min && p.x < x_max && p.y >= y_min && p.y < y_max;
  }

  bool operator==(const BBox&) const = default;
};

/// Throws InvalidArgument unless the box satisfies its ordering invariants.
void check_bbox(const BBox& box, int image_width, int image_height);

/// Tight bounding box of all foreground pixels; nullopt for an empty mask.
std::optional<BBox> bbox_of(const BinaryMask& mask);

/// Target/whole description plus the text assets that drive grounding and validation.
struct TaskDefinition {
  std::string target;
  std::string whole;
  std::vector<std::string> grounding_sentences;
  std::vector<std::string> contrastive_classes;
  std::vector<std::string> descriptors;

  /// Enforces the invariants (non-empty sentences, exactly one "background" class, ...).
  void validate() const;
};

inline constexpr const char* kBackgroundClass = "background";

/// Loads the JSON task descriptor and the line-oriented text assets it points at.
/// The background class is appended when the class file does not already list it.
TaskDefinition load_task(const std::filesystem::path& path);

/// Writes a task descriptor plus its three asset files next to it.
void save_task(const std::filesystem::path& path, const TaskDefinition& task);

/// Splits a text asset into entries: one per non-blank line, trimmed.
std::vector<std::string> parse_lines(const std::string& text);

/// Class lists may be one comma-separated line or one class per line.
std::vector<std::string> parse_classes(const std::string& text);

}  // namespace automiseg
