#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "usamkit/image.hpp"
#include "usamkit/mask.hpp"
#include "usamkit/records.hpp"
#include "usamkit/sampling.hpp"

namespace usamkit {

inline constexpr int kTokenDim = 512;
inline constexpr int kMaskTokenDim = 256;  // dims [0,256); IoU token [256,512)
inline constexpr int kTokenLayoutVersion = 1;

struct ForwardOutput {
  std::array<ProbMask, kNumHeads> masks;
  std::array<double, kNumHeads> sam_scores{};
  std::vector<double> tokens;  // kTokenDim, mask token ++ IoU token
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ForwardOutput forward(const ImageU8& img, const PointPrompt& prompt,
                                ModelId model) const = 0;
};

struct SyntheticWorld {
  uint64_t seed = 1;
  int height = 40;
  int width = 40;
  // Boundary-corruption strength per model, indexed by ModelId (L, B+, S, T).
  std::array<double, kNumModels> model_noise = {0.7, 1.0, 1.4, 1.9};
  double prompt_gain = 0.8;   // error reduction per extra prompt point
  double ambiguity = 0.35;    // probability the three heads target different granularities
  double score_noise = 0.06;  // sigma of SamScore estimation error

  // Enforces size >= 16x16, strengths >= 0 and T >= S >= B+ >= L.
  void validate() const;
};

// Granularity hierarchy one sample exposes. On unambiguous samples all three
// coincide with the object.
struct SceneGeometry {
  BinaryMask part;
  BinaryMask object;
  BinaryMask group;
  bool ambiguous = false;
};

struct SyntheticSample {
  ImageU8 image;
  BinaryMask gt;  // the object granularity
  SceneGeometry scene;
  uint64_t scene_ref = 0;
};

SyntheticSample synthesize_sample(const SyntheticWorld& world,
                                  uint64_t scene_ref);

// clamp01(true_iou + N(0, sigma)), deterministic per seed.
double synthetic_sam_score(double true_iou, double sigma, uint64_t seed);

class SyntheticBackend : public Backend {
 public:
  explicit SyntheticBackend(const SyntheticWorld& world);
  ForwardOutput forward(const ImageU8& img, const PointPrompt& prompt,
                        ModelId model) const override;
  const SyntheticWorld& world() const { return world_; }

 private:
  SyntheticWorld world_;
  // Fixed random feature->token projections, one per token half.
  std::vector<double> proj_mask_;
  std::vector<double> proj_iou_;
};

// Tokens the pipeline would store for `config` on this sample: reconstructs
// the augmented image and the prompt grid, then forwards. The nuisance-noise
// realization therefore varies with every config coordinate.
std::vector<double> synthetic_tokens(
    const SyntheticWorld& world, const SyntheticSample& sample,
    const SampleConfig& config, int n_prompts = 8,
    PromptMode mode = PromptMode::FarthestPoint);

// Runs the sampling pipeline for one scene: synthesize, prompt, augment,
// forward every grid cell, warp flip-frame masks back. Record order is the
// enumerate_configs order with refined-prompt records appended (model-major,
// then head).
SampleSet generate_sample_set(const SyntheticWorld& world, uint64_t scene_ref,
                              const std::string& image_id, int n_prompts,
                              GridKind grid,
                              PromptMode mode = PromptMode::FarthestPoint);

}  // namespace usamkit
