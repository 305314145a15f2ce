#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "usamkit/backend.hpp"
#include "usamkit/mlp.hpp"
#include "usamkit/records.hpp"

namespace usamkit {

// The nine estimator heads. The first six predict IoU directly; the direct
// delta heads predict affinely remapped gaps ((delta + 1) / 2).
enum class UsamHead {
  ModelL = 0,
  ModelBPlus = 1,
  ModelS = 2,
  ModelT = 3,
  RefinedPrompt = 4,  // IoU under the all-point refined prompt
  SamSelected = 5,    // IoU of the argmax-SamScore head
  DeltaModel = 6,
  DeltaPrompt = 7,
  DeltaTask = 8,
};
inline constexpr int kNumUsamHeads = 9;

const char* usam_head_name(UsamHead head);
UsamHead usam_head_from_name(std::string_view name);

enum class DeltaKind { Model, Prompt, Task };

struct TrainingExample {
  std::string sample_id;
  std::vector<double> tokens;  // kTokenDim, from the source model's forward
  ModelId source = ModelId::L;
  // Best-head IoU against GT per model at the single (centroid) prompt.
  std::array<double, kNumModels> iou_model{};
  // Best-head IoU of the source model at the refined prompt.
  double iou_refined = 0.0;
  // IoU of the argmax-SamScore head of the source model, single prompt.
  double iou_sam_selected = 0.0;
};

// One example per (sample, token-source-model). Requires identity records
// for all models at the centroid and refined prompts.
std::vector<TrainingExample> build_training_set(
    std::span<const SampleSet> samples);

struct UsamHeads {
  int hidden_dim = 512;
  TrainConfig config;
  std::array<Mlp, kNumUsamHeads> heads;
  std::array<bool, kNumUsamHeads> trained{};

  const Mlp& head(UsamHead h) const;  // throws if untrained
};

// Trains all nine heads on the shared example list. Target construction:
// per-model heads regress iou_model[m]; RefinedPrompt regresses iou_refined;
// SamSelected regresses iou_sam_selected; delta heads regress
// (gap + 1) / 2. Targets are clamped to [1e-4, 1-1e-4].
UsamHeads train_heads(std::span<const TrainingExample> examples,
                      const TrainConfig& cfg, int hidden_dim = 512);

// Predicted IoU of one per-model head.
double predicted_iou(const UsamHeads& heads, std::span<const double> tokens,
                     ModelId model);

// 1 - predicted IoU of the source model's head.
UncScore predictive_uncertainty(const UsamHeads& heads,
                                std::span<const double> tokens,
                                ModelId source_model);

// Composed gaps: differences of IoU-head outputs.
double delta_model(const UsamHeads& heads, std::span<const double> tokens);
double delta_prompt(const UsamHeads& heads, std::span<const double> tokens,
                    ModelId source_model);
double delta_task(const UsamHeads& heads, std::span<const double> tokens,
                  ModelId source_model);

// Direct head output mapped back to the signed gap: 2 * out - 1.
double direct_delta(const UsamHeads& heads, DeltaKind kind,
                    std::span<const double> tokens);

enum class TokenZeroing { None, MaskToken, IouToken };
const char* zeroing_name(TokenZeroing z);

// Zeroes dims [0,256) (MaskToken) or [256,512) (IouToken) in place.
void zero_tokens(std::vector<TrainingExample>& examples, TokenZeroing z);

using HeadsTrainFn = std::function<UsamHeads(
    std::span<const TrainingExample>, const TrainConfig&)>;

// Applies the zeroing to a copy of the dataset and retrains through the
// supplied trainer. Curve evaluation of the result lives in eval.hpp
// (token_ablation_report) to keep this module below eval in the dependency
// order.
UsamHeads token_ablation(const HeadsTrainFn& train_fn,
                         std::span<const TrainingExample> dataset,
                         TokenZeroing zero, const TrainConfig& cfg);

// Head bundle: one checkpoint per head + manifest.json (head name -> file,
// token layout version, training config, seeds).
void save_heads(const UsamHeads& heads, const std::string& dir);
UsamHeads load_heads(const std::string& dir);

}  // namespace usamkit
