#include "automiseg/validator.hpp"

#include "automiseg/errors.hpp"
#include "automiseg/search_space.hpp"

namespace automiseg {

ImageRgb8 masked_image(const ImageRgb8& image, const BinaryMask& mask) {
  if (image.width() != mask.width() || image.height() != mask.height()) {
    throw DimensionMismatch("mask dimensions do not match the image");
  }
  std::vector<std::uint8_t> out(image.bytes());
  const auto bits = mask.data();
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == 0) out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = 0;
  }
  return ImageRgb8(image.width(), image.height(), std::move(out));
}

double zero_shot_score(const ImageRgb8& image, const BinaryMask& mask, const TaskDefinition& task,
                       const ScoringBackend& scorer) {
  task.validate();
  std::vector<std::string> labels{task.target};
  labels.insert(labels.end(), task.contrastive_classes.begin(), task.contrastive_classes.end());
  const auto probs = scorer.classify(masked_image(image, mask), labels);
  if (probs.size() != labels.size()) {
    throw ProtocolError("classify returned " + std::to_string(probs.size()) + " probabilities for " +
                        std::to_string(labels.size()) + " labels");
  }
  return probs.front();
}

double match_score(const ImageRgb8& image, const BinaryMask& mask, const TaskDefinition& task,
                   const ScoringBackend& scorer) {
  if (task.descriptors.empty()) throw MissingAsset("task has no descriptors");
  const auto sims = scorer.match_texts(masked_image(image, mask), task.descriptors);
  if (sims.size() != task.descriptors.size()) {
    throw ProtocolError("match returned a score count different from the text count");
  }
  return mean_of(sims);
}

ValidationScore validate(const ImageRgb8& image, const BinaryMask& mask, const TaskDefinition& task,
                         const ScoringBackend& scorer) {
  return ValidationScore::compose(zero_shot_score(image, mask, task, scorer),
                                  match_score(image, mask, task, scorer));
}

}  // namespace automiseg
