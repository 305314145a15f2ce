#pragma once

#include <array>

#include "usamkit/mask.hpp"
#include "usamkit/records.hpp"

namespace usamkit {

struct TaskProbs {
  std::array<double, kNumHeads> probs{};
};

// probs_i = score_i / sum(scores); all-zero scores -> uniform. Negative
// scores are an error.
TaskProbs task_probs(const std::array<double, kNumHeads>& scores);

// argmax over heads of iou(threshold(mask), gt); ties -> lowest index.
int best_head(const BinaryMask& gt,
              const std::array<const ProbMask*, kNumHeads>& masks);

// Mixture over the full (aug x prompt x model) grid, each cell's heads
// weighted by task_probs(cell scores) / n_cells; entropy of the mixture.
UncScore predictive_entropy(const SampleSet& s);

// Mixture of best-head masks across models (identity augmentation, fixed
// prompt), uniform weights; entropy.
UncScore epistemic_entropy(const SampleSet& s, int prompt_index,
                           const BinaryMask& gt);

// Mixture of best-head masks across single-point prompts (identity
// augmentation, fixed model), uniform weights; entropy.
UncScore prompt_entropy(const SampleSet& s, ModelId model,
                        const BinaryMask& gt);

// Mixture of the three head masks of one cell weighted by task_probs of its
// SamScores; entropy. Needs no ground truth.
UncScore task_entropy(const SampleSet& s, int prompt_index, ModelId model);

}  // namespace usamkit
