#include "automiseg/png_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "automiseg/errors.hpp"

namespace automiseg {

namespace fs = std::filesystem;

namespace {

struct ReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes.size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, cur->bytes.data() + cur->offset, length);
  cur->offset += length;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

void on_error(png_structp png, png_const_charp msg) {
  auto* message = static_cast<std::string*>(png_get_error_ptr(png));
  if (message) *message = msg;
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

/// Decoded samples, channels in {1, 3}, 8 or 16 bit.
struct RawRaster {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> rows;  // tightly packed, 16-bit big endian
};

RawRaster decode_raw(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw DecodeError("not a PNG stream");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, on_error, on_warning);
  if (!png) throw DecodeError("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw DecodeError("png_create_info_struct failed");
  }
  ReadCursor cursor{bytes, 0};
  RawRaster raw;
  std::vector<png_bytep> row_ptrs;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw DecodeError("PNG decode failed: " + message);
  }
  png_set_read_fn(png, &cursor, read_from_memory);
  png_read_info(png, info);

  const auto color = png_get_color_type(png, info);
  const auto depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.rows.resize(rowbytes * static_cast<std::size_t>(raw.height));
  row_ptrs.resize(static_cast<std::size_t>(raw.height));
  for (int y = 0; y < raw.height; ++y) row_ptrs[y] = raw.rows.data() + rowbytes * y;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (raw.channels != 1 && raw.channels != 3) {
    throw DecodeError("unsupported channel count " + std::to_string(raw.channels));
  }
  if (raw.bit_depth != 8 && raw.bit_depth != 16) {
    throw DecodeError("unsupported bit depth " + std::to_string(raw.bit_depth));
  }
  return raw;
}

/// Samples of a raw raster rescaled to 8 bits, channel layout unchanged.
std::vector<std::uint8_t> to_8bit(const RawRaster& raw) {
  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  std::vector<std::uint8_t> out(n);
  if (raw.bit_depth == 8) {
    std::copy_n(raw.rows.begin(), n, out.begin());
    return out;
  }
  std::vector<std::uint16_t> wide(n);
  for (std::size_t i = 0; i < n; ++i) {
    wide[i] = static_cast<std::uint16_t>((raw.rows[2 * i] << 8) | raw.rows[2 * i + 1]);
  }
  const std::uint16_t peak = n ? *std::max_element(wide.begin(), wide.end()) : 0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = peak == 0 ? 0
                       : static_cast<std::uint8_t>(std::lround(255.0 * wide[i] / peak));
  }
  return out;
}

std::vector<std::uint8_t> encode_raw(int width, int height, int color_type, int bit_depth,
                                     std::span<const std::uint8_t> rows, std::size_t rowbytes) {
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, on_error, on_warning);
  if (!png) throw IoError("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("PNG encode failed: " + message);
  }
  png_set_write_fn(png, &out, write_to_vector, flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    row_ptrs[y] = const_cast<png_bytep>(rows.data() + rowbytes * y);
  }
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace

ImageRgb8 decode_png(std::span<const std::uint8_t> bytes) {
  const RawRaster raw = decode_raw(bytes);
  auto samples = to_8bit(raw);
  if (raw.channels == 3) return ImageRgb8(raw.width, raw.height, std::move(samples));
  std::vector<std::uint8_t> rgb(samples.size() * 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    rgb[3 * i] = rgb[3 * i + 1] = rgb[3 * i + 2] = samples[i];
  }
  return ImageRgb8(raw.width, raw.height, std::move(rgb));
}

std::vector<std::uint8_t> encode_png(const ImageRgb8& image) {
  return encode_raw(image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, image.data(),
                    static_cast<std::size_t>(image.width()) * 3);
}

BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes) {
  const RawRaster raw = decode_raw(bytes);
  const auto samples = to_8bit(raw);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(raw.width) * raw.height);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    bool on = false;
    for (int c = 0; c < raw.channels; ++c) on = on || samples[i * raw.channels + c] != 0;
    bits[i] = on ? 1 : 0;
  }
  return BinaryMask(raw.width, raw.height, std::move(bits));
}

std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) {
  std::vector<std::uint8_t> gray(mask.size());
  std::transform(mask.data().begin(), mask.data().end(), gray.begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v ? 255 : 0); });
  return encode_raw(mask.width(), mask.height(), PNG_COLOR_TYPE_GRAY, 8, gray,
                    static_cast<std::size_t>(mask.width()));
}

std::vector<std::uint8_t> encode_gray16_png(int width, int height,
                                            std::span<const std::uint16_t> samples) {
  if (samples.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("sample count does not match dimensions");
  }
  std::vector<std::uint8_t> be(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    be[2 * i] = static_cast<std::uint8_t>(samples[i] >> 8);
    be[2 * i + 1] = static_cast<std::uint8_t>(samples[i] & 0xff);
  }
  return encode_raw(width, height, PNG_COLOR_TYPE_GRAY, 16, be,
                    static_cast<std::size_t>(width) * 2);
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

ImageRgb8 load_image(const fs::path& path) { return decode_png(read_file_bytes(path)); }

void save_image(const fs::path& path, const ImageRgb8& image) {
  write_file_bytes(path, encode_png(image));
}

BinaryMask load_mask(const fs::path& path) { return decode_mask_png(read_file_bytes(path)); }

void save_mask(const fs::path& path, const BinaryMask& mask) {
  write_file_bytes(path, encode_mask_png(mask));
}

}  // namespace automiseg
