#include "usamkit/mask.hpp"

#include <cmath>
#include <cstdio>

#include "usamkit/error.hpp"
#include "usamkit/kernels.hpp"

namespace usamkit {

size_t BinaryMask::area() const {
  size_t n = 0;
  for (uint8_t v : data) n += v;
  return n;
}

const char* method_name(MethodTag tag) {
  switch (tag) {
    case MethodTag::PredictiveEntropy: return "h_y";
    case MethodTag::EpistemicEntropy: return "h_theta";
    case MethodTag::PromptEntropy: return "h_xp";
    case MethodTag::TaskEntropy: return "h_a";
    case MethodTag::MeanMaskEntropy: return "h_std";
    case MethodTag::InverseSamScore: return "inv_sam_score";
    case MethodTag::UsamUncertainty: return "usam";
    case MethodTag::DeltaModel: return "delta_model";
    case MethodTag::DeltaPrompt: return "delta_prompt";
    case MethodTag::DeltaTask: return "delta_task";
    case MethodTag::DeltaModelDirect: return "dstar_model";
    case MethodTag::DeltaPromptDirect: return "dstar_prompt";
    case MethodTag::DeltaTaskDirect: return "dstar_task";
  }
  fail("method_name: unknown tag");
}

static bool is_delta_tag(MethodTag tag) {
  switch (tag) {
    case MethodTag::DeltaModel:
    case MethodTag::DeltaPrompt:
    case MethodTag::DeltaTask:
    case MethodTag::DeltaModelDirect:
    case MethodTag::DeltaPromptDirect:
    case MethodTag::DeltaTaskDirect:
      return true;
    default:
      return false;
  }
}

UncScore make_score(MethodTag tag, double value) {
  if (!std::isfinite(value))
    fail(std::string("make_score: non-finite value for ") + method_name(tag));
  const double lo = is_delta_tag(tag) ? -1.0 : 0.0;
  if (value < lo || value > 1.0) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "make_score: %s value %.17g outside [%g,1]",
                  method_name(tag), value, lo);
    fail(buf);
  }
  return UncScore{value, tag};
}

double binary_entropy(double p) {
  if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "binary_entropy: p=%.17g outside [0,1]", p);
    fail(buf);
  }
  if (p == 0.0 || p == 1.0) return 0.0;
  const double pc = p < kProbClamp ? kProbClamp
                    : p > 1.0 - kProbClamp ? 1.0 - kProbClamp
                                           : p;
  return -(p * std::log2(pc) + (1.0 - p) * std::log2(1.0 - pc));
}

UncScore weighted_mask_entropy(const ProbMask& y) {
  return make_score(MethodTag::PredictiveEntropy,
                    serial::weighted_mask_entropy(y.data));
}

UncScore mean_mask_entropy(const ProbMask& y, const BinaryMask& m) {
  if (y.height != m.height || y.width != m.width)
    fail("mean_mask_entropy: shape mismatch");
  return make_score(MethodTag::MeanMaskEntropy,
                    serial::mean_fg_entropy(y.data, m.data));
}

double iou(const BinaryMask& a, const BinaryMask& b) {
  if (a.height != b.height || a.width != b.width)
    fail("iou: shape mismatch");
  size_t inter = 0, uni = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    inter += a.data[i] & b.data[i];
    uni += a.data[i] | b.data[i];
  }
  if (uni == 0) return 1.0;
  return double(inter) / double(uni);
}

BinaryMask threshold(const ProbMask& y, double t) {
  if (!(t > 0.0 && t < 1.0)) fail("threshold: t must lie in (0,1)");
  BinaryMask m(y.height, y.width);
  for (size_t i = 0; i < y.data.size(); ++i) m.data[i] = y.data[i] > t ? 1 : 0;
  return m;
}

}  // namespace usamkit
