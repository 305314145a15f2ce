#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "usamkit/image.hpp"
#include "usamkit/mask.hpp"

namespace usamkit {

enum class AugKind {
  Identity,
  VerticalFlip,
  JpegQ10,
  JpegQ30,
  GaussianBlurK5,
  GaussianNoise,
};

inline constexpr int kNumAugs = 6;
inline constexpr int kNumHeads = 3;
inline constexpr int kNumModels = 4;

struct Augmentation {
  AugKind kind = AugKind::Identity;
  double blur_sigma = 1.0;    // GaussianBlurK5; kernel size fixed at 5
  double noise_sigma = 25.5;  // GaussianNoise, u8 units (10% of range)
};

// Identity, VerticalFlip, JpegQ10, JpegQ30, GaussianBlurK5, GaussianNoise.
std::array<Augmentation, kNumAugs> standard_augmentations();
const char* aug_name(AugKind kind);
AugKind aug_from_name(std::string_view name);

// All points are foreground clicks; (row, col) coordinates.
struct PointPrompt {
  std::vector<std::pair<int, int>> points;
};

enum class ModelId { L = 0, BPlus = 1, S = 2, T = 3 };
const char* model_name(ModelId id);
ModelId model_from_name(std::string_view name);

struct SampleConfig {
  int aug_index = 0;     // into standard_augmentations()
  int prompt_index = 0;  // 0..n_prompts-1; -1 marks the refined all-point prompt
  ModelId model = ModelId::L;
  int head = 0;  // 0..2

  bool operator==(const SampleConfig&) const = default;
};

// Refined-prompt records are stored under prompt_index -1.
inline constexpr int kRefinedPromptIndex = -1;

// Seed only matters for GaussianNoise; other kinds are seed-free.
ImageU8 apply_augmentation(const ImageU8& img, const Augmentation& aug,
                           uint64_t seed);

// Foreground pixel nearest the foreground centroid; ties by smallest
// (row, col).
PointPrompt centroid_prompt(const BinaryMask& gt);

enum class PromptMode { FarthestPoint, UniformRandom };

// FarthestPoint: deterministic; first point = centroid_prompt, each next
// point maximizes min squared distance to the chosen set, ties keep the
// lexicographically smallest candidate. Seed is used only by UniformRandom
// (k distinct foreground pixels, uniformly).
PointPrompt sample_prompt_points(const BinaryMask& gt, int k, uint64_t seed,
                                 PromptMode mode = PromptMode::FarthestPoint);

// Cartesian product, aug-major then prompt, model, head;
// length = 6 * n_prompts * 4 * 3.
std::vector<SampleConfig> enumerate_configs(int n_prompts);

}  // namespace usamkit
