#pragma once

#include "automiseg/backends.hpp"
#include "automiseg/core_types.hpp"

namespace automiseg {

/// Label-free quality estimate of a mask: s_val = s_zc + s_mt.
struct ValidationScore {
  double s_zc = 0.0;  // zero-shot probability of the target label
  double s_mt = 0.0;  // mean image-text similarity over descriptors
  double s_val = 0.0;

  static ValidationScore compose(double s_zc, double s_mt) { return {s_zc, s_mt, s_zc + s_mt}; }
  static ValidationScore floor() { return {}; }

  bool operator==(const ValidationScore&) const = default;
};

/// Keeps the target region, paints everything else black.
ImageRgb8 masked_image(const ImageRgb8& image, const BinaryMask& mask);

double zero_shot_score(const ImageRgb8& image, const BinaryMask& mask, const TaskDefinition& task,
                       const ScoringBackend& scorer);

double match_score(const ImageRgb8& image, const BinaryMask& mask, const TaskDefinition& task,
                   const ScoringBackend& scorer);

ValidationScore validate(const ImageRgb8& image, const BinaryMask& mask,
                         const TaskDefinition& task, const ScoringBackend& scorer);

}  // namespace automiseg
