#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace usamkit {

struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;  // row-major, 0 or 1

  BinaryMask() = default;
  BinaryMask(int h, int w, uint8_t fill = 0)
      : height(h), width(w), data(size_t(h) * size_t(w), fill) {}

  uint8_t at(int r, int c) const { return data[size_t(r) * width + c]; }
  uint8_t& at(int r, int c) { return data[size_t(r) * width + c]; }
  size_t size() const { return data.size(); }
  size_t area() const;

  bool operator==(const BinaryMask&) const = default;
};

struct ProbMask {
  int height = 0;
  int width = 0;
  std::vector<double> data;  // row-major, each in [0,1]

  ProbMask() = default;
  ProbMask(int h, int w, double fill = 0.0)
      : height(h), width(w), data(size_t(h) * size_t(w), fill) {}

  double at(int r, int c) const { return data[size_t(r) * width + c]; }
  double& at(int r, int c) { return data[size_t(r) * width + c]; }
  size_t size() const { return data.size(); }
};

enum class MethodTag {
  PredictiveEntropy,   // H_Y
  EpistemicEntropy,    // H_Theta
  PromptEntropy,       // H_XP
  TaskEntropy,         // H_A
  MeanMaskEntropy,     // H_Std baseline
  InverseSamScore,
  UsamUncertainty,     // 1 - predicted IoU
  DeltaModel,
  DeltaPrompt,
  DeltaTask,
  DeltaModelDirect,
  DeltaPromptDirect,
  DeltaTaskDirect,
};

const char* method_name(MethodTag tag);

struct UncScore {
  double value = 0.0;
  MethodTag method = MethodTag::PredictiveEntropy;
};

// Validates finiteness and the per-family range ([0,1] for entropies and
// inverse-IoU scores, [-1,1] for deltas).
UncScore make_score(MethodTag tag, double value);

// Log arguments are clamped to [kProbClamp, 1-kProbClamp]; exact 0/1 inputs
// short-circuit to 0 before the clamp applies.
inline constexpr double kProbClamp = 1e-7;

double binary_entropy(double p);
UncScore weighted_mask_entropy(const ProbMask& y);
UncScore mean_mask_entropy(const ProbMask& y, const BinaryMask& m);
double iou(const BinaryMask& a, const BinaryMask& b);
BinaryMask threshold(const ProbMask& y, double t = 0.5);

}  // namespace usamkit
