#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "usamkit/bayes.hpp"
#include "usamkit/records.hpp"
#include "usamkit/usam.hpp"

namespace usamkit {

struct ScoredSample {
  std::string sample_id;
  double base_iou = 0.0;       // mIoU contribution before correction
  double corrected_iou = 0.0;  // after the scenario's refinement
  double unc = 0.0;            // uncertainty used for ranking
};

struct CorrectionCurve {
  std::vector<double> ratios;  // k/n for k = 0..n
  std::vector<double> mious;   // mean IoU after correcting the top-k
  double auc = 0.0;
  double oracle_auc = 0.0;
  double worst_auc = 0.0;
  double rel_auc = 0.0;
};

// Sorts by unc descending (ties by sample_id ascending), corrects prefixes,
// integrates with the trapezoid rule over ratio k/n. Oracle and worst
// envelopes use descending / ascending (corrected - base) orderings.
// rel_auc = (auc - worst) / (oracle - worst), defined as 1.0 when the
// envelopes coincide. Throws for n < 2.
CorrectionCurve correction_curve(std::vector<ScoredSample> samples);

// Sample Pearson r; throws on length mismatch, empty input, or zero
// variance.
double pearson(std::span<const double> xs, std::span<const double> ys);

struct CorrelationMatrix {
  std::vector<std::string> names;
  // Row-major n x n; zero-variance cells are NaN ("undefined" markers).
  std::vector<double> values;

  int n() const { return int(names.size()); }
  double at(int i, int j) const { return values[size_t(i) * names.size() + j]; }
};

// Symmetric, unit diagonal. Columns must share one length.
CorrelationMatrix correlation_matrix(
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& columns);

struct BenchReport {
  int mask_edge = 0;
  int repeats = 0;
  double usam_infer_ms = 0.0;    // one 512-vector head inference
  double mask_entropy_ms = 0.0;  // mean_mask_entropy on mask_edge^2
  double single_forward_ms = 0.0;  // one synthetic-backend forward
  double mc_loop_ms = 0.0;       // simulated |T|=5 re-inference loop
};

// Median wall times over `repeats` runs (repeats >= 10).
BenchReport bench_uq_overhead(int mask_edge, int repeats);

// Correction scenarios mirroring the four intervention protocols.
enum class Scenario { ModelSwap, PromptRefine, TaskSupervise, GtCorrect };
const char* scenario_name(Scenario s);
Scenario scenario_from_name(std::string_view name);
// ModelSwap and GtCorrect have fixed targets (Large / ground truth); the
// base model defaults to T except GtCorrect's L.
ModelId default_base_model(Scenario s);

struct MethodCurve {
  std::string method;
  CorrectionCurve curve;
};

struct ScenarioReport {
  Scenario scenario = Scenario::ModelSwap;
  ModelId base_model = ModelId::T;
  std::vector<MethodCurve> methods;  // includes "oracle" and "worst" rows
};

// Builds per-method ScoredSample lists for one scenario from full or train
// grids and scores every applicable UQ method. Entropy methods that need
// the full grid are skipped on train grids. heads may be null (skips USAM
// methods).
ScenarioReport evaluate_scenario(std::span<const SampleSet> sets,
                                 const UsamHeads* heads, Scenario scenario,
                                 ModelId base_model, int prompt_index = 0);

// Direct-delta rel-AUC per scenario computed straight from TrainingExamples
// (their IoU fields already carry base/corrected for all three scenarios).
struct DeltaRelAuc {
  double model = 0.0;
  double prompt = 0.0;
  double task = 0.0;
};
DeltaRelAuc direct_delta_rel_auc(const UsamHeads& heads,
                                 std::span<const TrainingExample> test);

struct AblationRow {
  TokenZeroing zeroing = TokenZeroing::None;
  DeltaRelAuc rel_auc;
};

// Retrains per zeroing via usam::token_ablation and scores the direct-delta
// heads on the held-out examples.
std::vector<AblationRow> token_ablation_report(
    std::span<const TrainingExample> train,
    std::span<const TrainingExample> test, const TrainConfig& cfg,
    int hidden_dim = 512);

}  // namespace usamkit
