#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "automiseg/core_types.hpp"

namespace automiseg {

// PNG codec. Grayscale inputs are replicated to three channels, alpha is
// dropped and 16-bit samples are rescaled to 8 bits by the image maximum.

ImageRgb8 decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const ImageRgb8& image);

ImageRgb8 load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const ImageRgb8& image);

/// Masks are stored as 8-bit grayscale, 0 or 255. Any non-zero sample decodes to 1.
BinaryMask decode_mask_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask);

BinaryMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// Raw 16-bit grayscale encoder, used by the ingestion tests.
std::vector<std::uint8_t> encode_gray16_png(int width, int height,
                                            std::span<const std::uint16_t> samples);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace automiseg
