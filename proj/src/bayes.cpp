#include "usamkit/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "usamkit/error.hpp"
#include "usamkit/kernels.hpp"
#include "usamkit/sampling.hpp"

namespace usamkit {

TaskProbs task_probs(const std::array<double, kNumHeads>& scores) {
  double sum = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0)) fail("task_probs: negative SamScore");
    sum += s;
  }
  TaskProbs tp;
  if (sum == 0.0) {
    tp.probs.fill(1.0 / kNumHeads);
  } else {
    for (int i = 0; i < kNumHeads; ++i) tp.probs[i] = scores[i] / sum;
  }
  return tp;
}

int best_head(const BinaryMask& gt,
              const std::array<const ProbMask*, kNumHeads>& masks) {
  int best = 0;
  double best_iou = -1.0;
  for (int h = 0; h < kNumHeads; ++h) {
    if (masks[h] == nullptr) fail("best_head: missing mask proposal");
    const double v = iou(threshold(*masks[h]), gt);
    if (v > best_iou) {
      best_iou = v;
      best = h;
    }
  }
  return best;
}

namespace {

using CellKey = std::tuple<int, int, int>;  // (aug, prompt, model)

struct Cell {
  std::array<const SampleRecord*, kNumHeads> heads{};  // null when absent
  int n_present = 0;
};

std::string cell_str(int a, int p, int m) {
  return "(aug " + std::to_string(a) + ", prompt " + std::to_string(p) +
         ", model " + model_name(ModelId(m)) + ")";
}

// Groups records into (aug, prompt, model) cells and validates shapes
// against the set's ground truth.
std::map<CellKey, Cell> index_cells(const SampleSet& s) {
  std::map<CellKey, Cell> cells;
  for (const SampleRecord& rec : s.records) {
    const SampleConfig& c = rec.config;
    if (c.head < 0 || c.head >= kNumHeads)
      fail("SampleSet: record head index out of range");
    if (rec.mask.height != s.gt.height || rec.mask.width != s.gt.width)
      fail("SampleSet: record mask shape differs from the ground truth");
    Cell& cell = cells[{c.aug_index, c.prompt_index, int(c.model)}];
    if (cell.heads[c.head] != nullptr)
      fail("SampleSet: duplicate record for " +
           cell_str(c.aug_index, c.prompt_index, int(c.model)) + " head " +
           std::to_string(c.head));
    cell.heads[c.head] = &rec;
    ++cell.n_present;
  }
  return cells;
}

// Task probabilities over the heads present in a cell; on full grids this is
// exactly task_probs of the three SamScores.
std::array<double, kNumHeads> cell_task_probs(const Cell& cell) {
  double sum = 0.0;
  for (int h = 0; h < kNumHeads; ++h)
    if (cell.heads[h] != nullptr) {
      const double s = cell.heads[h]->sam_score;
      if (!(s >= 0.0)) fail("task_probs: negative SamScore");
      sum += s;
    }
  std::array<double, kNumHeads> probs{};
  for (int h = 0; h < kNumHeads; ++h) {
    if (cell.heads[h] == nullptr) continue;
    probs[h] = sum == 0.0 ? 1.0 / cell.n_present
                          : cell.heads[h]->sam_score / sum;
  }
  return probs;
}

int cell_best_head(const Cell& cell, const BinaryMask& gt) {
  int best = -1;
  double best_iou = -1.0;
  for (int h = 0; h < kNumHeads; ++h) {
    if (cell.heads[h] == nullptr) continue;
    const double v = iou(threshold(cell.heads[h]->mask), gt);
    if (v > best_iou) {
      best_iou = v;
      best = h;
    }
  }
  return best;
}

UncScore mixture_entropy(MethodTag tag,
                         const std::vector<const ProbMask*>& masks,
                         const std::vector<double>& weights, int height,
                         int width) {
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9)
    fail("mixture weights sum to " + std::to_string(wsum) + ", expected 1");
  std::vector<double> acc(size_t(height) * size_t(width), 0.0);
  for (size_t i = 0; i < masks.size(); ++i)
    serial::axpy(acc, masks[i]->data, weights[i]);
  return make_score(tag, serial::weighted_mask_entropy(acc));
}

void check_prompt_index(const SampleSet& s, int prompt_index) {
  if (prompt_index != kRefinedPromptIndex &&
      (prompt_index < 0 || prompt_index >= s.n_prompts))
    fail("prompt_index " + std::to_string(prompt_index) +
         " out of range for a set with " + std::to_string(s.n_prompts) +
         " prompts");
}

}  // namespace

UncScore predictive_entropy(const SampleSet& s) {
  if (s.records.empty()) fail("predictive_entropy: empty SampleSet");
  const auto cells = index_cells(s);

  std::vector<const ProbMask*> masks;
  std::vector<double> weights;
  size_t n_cells = 0;
  if (s.degenerate) {
    for (const auto& [key, cell] : cells)
      if (std::get<1>(key) != kRefinedPromptIndex) ++n_cells;
  } else {
    if (s.n_prompts < 1) fail("predictive_entropy: set declares no prompts");
    std::vector<std::string> missing;
    for (int a = 0; a < kNumAugs; ++a)
      for (int p = 0; p < s.n_prompts; ++p)
        for (int m = 0; m < kNumModels; ++m) {
          const auto it = cells.find({a, p, m});
          if (it == cells.end() || it->second.n_present != kNumHeads) {
            if (missing.size() < 8) missing.push_back(cell_str(a, p, m));
          }
        }
    if (!missing.empty()) {
      std::string msg = "predictive_entropy: grid incomplete, missing";
      for (const std::string& m : missing) msg += " " + m;
      fail(msg);
    }
    n_cells = size_t(kNumAugs) * size_t(s.n_prompts) * size_t(kNumModels);
  }
  if (n_cells == 0)
    fail("predictive_entropy: no grid cells to mix");

  for (const auto& [key, cell] : cells) {
    if (std::get<1>(key) == kRefinedPromptIndex) continue;  // correction, not X_P
    const auto probs = cell_task_probs(cell);
    for (int h = 0; h < kNumHeads; ++h) {
      if (cell.heads[h] == nullptr) continue;
      masks.push_back(&cell.heads[h]->mask);
      weights.push_back(probs[h] / double(n_cells));
    }
  }
  return mixture_entropy(MethodTag::PredictiveEntropy, masks, weights,
                         s.gt.height, s.gt.width);
}

UncScore epistemic_entropy(const SampleSet& s, int prompt_index,
                           const BinaryMask& gt) {
  check_prompt_index(s, prompt_index);
  const auto cells = index_cells(s);

  std::vector<const ProbMask*> masks;
  for (int m = 0; m < kNumModels; ++m) {
    const auto it = cells.find({0, prompt_index, m});
    if (it == cells.end() ||
        (!s.degenerate && it->second.n_present != kNumHeads)) {
      if (s.degenerate && it == cells.end()) continue;
      if (it == cells.end())
        fail("epistemic_entropy: missing identity-augmentation cell " +
             cell_str(0, prompt_index, m));
      fail("epistemic_entropy: incomplete heads in cell " +
           cell_str(0, prompt_index, m));
    }
    const int h = cell_best_head(it->second, gt);
    masks.push_back(&it->second.heads[h]->mask);
  }
  if (masks.empty())
    fail("epistemic_entropy: no model records at prompt " +
         std::to_string(prompt_index));
  const std::vector<double> weights(masks.size(), 1.0 / double(masks.size()));
  return mixture_entropy(MethodTag::EpistemicEntropy, masks, weights,
                         gt.height, gt.width);
}

UncScore prompt_entropy(const SampleSet& s, ModelId model,
                        const BinaryMask& gt) {
  const auto cells = index_cells(s);

  std::vector<const ProbMask*> masks;
  if (s.degenerate) {
    for (const auto& [key, cell] : cells) {
      const auto [a, p, m] = key;
      if (a != 0 || m != int(model) || p == kRefinedPromptIndex) continue;
      const int h = cell_best_head(cell, gt);
      masks.push_back(&cell.heads[h]->mask);
    }
    if (masks.empty())
      fail("prompt_entropy: no identity-augmentation prompts for model " +
           std::string(model_name(model)));
  } else {
    if (s.n_prompts < 1) fail("prompt_entropy: set declares no prompts");
    for (int p = 0; p < s.n_prompts; ++p) {
      const auto it = cells.find({0, p, int(model)});
      if (it == cells.end() || it->second.n_present != kNumHeads)
        fail("prompt_entropy: missing identity-augmentation cell " +
             cell_str(0, p, int(model)));
      const int h = cell_best_head(it->second, gt);
      masks.push_back(&it->second.heads[h]->mask);
    }
  }
  const std::vector<double> weights(masks.size(), 1.0 / double(masks.size()));
  return mixture_entropy(MethodTag::PromptEntropy, masks, weights, gt.height,
                         gt.width);
}

UncScore task_entropy(const SampleSet& s, int prompt_index, ModelId model) {
  check_prompt_index(s, prompt_index);
  const auto cells = index_cells(s);
  const auto it = cells.find({0, prompt_index, int(model)});
  if (it == cells.end())
    fail("task_entropy: missing identity-augmentation cell " +
         cell_str(0, prompt_index, int(model)));
  if (it->second.n_present != kNumHeads)
    fail("task_entropy: cell " + cell_str(0, prompt_index, int(model)) +
         " lacks one of the three head proposals");

  std::array<double, kNumHeads> scores{};
  for (int h = 0; h < kNumHeads; ++h)
    scores[h] = it->second.heads[h]->sam_score;
  const TaskProbs tp = task_probs(scores);

  std::vector<const ProbMask*> masks;
  std::vector<double> weights;
  for (int h = 0; h < kNumHeads; ++h) {
    masks.push_back(&it->second.heads[h]->mask);
    weights.push_back(tp.probs[h]);
  }
  return mixture_entropy(MethodTag::TaskEntropy, masks, weights, s.gt.height,
                         s.gt.width);
}

}  // namespace usamkit
