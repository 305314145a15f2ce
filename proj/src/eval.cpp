#include "usamkit/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "usamkit/error.hpp"
#include "usamkit/rng.hpp"

namespace usamkit {

namespace {

// Prefix-correction mIoU sequence under the given visit order, integrated
// with the trapezoid rule over ratio k/n.
double order_auc(const std::vector<ScoredSample>& samples,
                 const std::vector<size_t>& order,
                 std::vector<double>* mious_out) {
  const size_t n = samples.size();
  double mean = 0.0;
  for (const ScoredSample& s : samples) mean += s.base_iou / double(n);
  std::vector<double> mious(n + 1);
  mious[0] = mean;
  for (size_t k = 0; k < n; ++k) {
    const ScoredSample& s = samples[order[k]];
    mean += (s.corrected_iou - s.base_iou) / double(n);
    mious[k + 1] = mean;
  }
  double auc = 0.0;
  for (size_t k = 1; k <= n; ++k)
    auc += (mious[k - 1] + mious[k]) / 2.0 / double(n);
  if (mious_out) *mious_out = std::move(mious);
  return auc;
}

std::vector<size_t> sorted_order(
    const std::vector<ScoredSample>& samples,
    const std::function<double(const ScoredSample&)>& key) {
  std::vector<size_t> order(samples.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double ka = key(samples[a]);
    const double kb = key(samples[b]);
    if (ka != kb) return ka > kb;
    return samples[a].sample_id < samples[b].sample_id;
  });
  return order;
}

struct CellRecords {
  const SampleRecord* heads[kNumHeads] = {nullptr, nullptr, nullptr};

  bool complete() const { return heads[0] && heads[1] && heads[2]; }
  const SampleRecord& selected() const {
    int sel = 0;
    for (int h = 1; h < kNumHeads; ++h)
      if (heads[h]->sam_score > heads[sel]->sam_score) sel = h;
    return *heads[sel];
  }
  double best_iou(const BinaryMask& gt) const {
    double best = 0.0;
    for (const SampleRecord* r : heads)
      best = std::max(best, iou(threshold(r->mask), gt));
    return best;
  }
};

double timed_median_ms(int repeats, const std::function<void()>& fn) {
  std::vector<double> ms(static_cast<size_t>(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    ms[size_t(r)] =
        std::chrono::duration<double, std::milli>(t1 - t0).count();
  }
  std::sort(ms.begin(), ms.end());
  return ms[ms.size() / 2];
}

}  // namespace

CorrectionCurve correction_curve(std::vector<ScoredSample> samples) {
  const size_t n = samples.size();
  if (n < 2)
    throw Error("correction curve needs at least 2 samples, got " +
                std::to_string(n));
  std::unordered_set<std::string> ids;
  for (const ScoredSample& s : samples) {
    if (!std::isfinite(s.base_iou) || !std::isfinite(s.corrected_iou) ||
        !std::isfinite(s.unc))
      throw Error("sample '" + s.sample_id + "' has non-finite fields");
    if (!ids.insert(s.sample_id).second)
      throw Error("duplicate sample id '" + s.sample_id + "'");
  }

  CorrectionCurve out;
  out.ratios.resize(n + 1);
  for (size_t k = 0; k <= n; ++k) out.ratios[k] = double(k) / double(n);

  const auto by_unc =
      sorted_order(samples, [](const ScoredSample& s) { return s.unc; });
  out.auc = order_auc(samples, by_unc, &out.mious);

  const auto gain = [](const ScoredSample& s) {
    return s.corrected_iou - s.base_iou;
  };
  out.oracle_auc = order_auc(samples, sorted_order(samples, gain), nullptr);
  out.worst_auc = order_auc(
      samples,
      sorted_order(samples, [&](const ScoredSample& s) { return -gain(s); }),
      nullptr);
  out.rel_auc = out.oracle_auc == out.worst_auc
                    ? 1.0
                    : (out.auc - out.worst_auc) /
                          (out.oracle_auc - out.worst_auc);
  return out;
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw Error("pearson: length mismatch (" + std::to_string(xs.size()) +
                " vs " + std::to_string(ys.size()) + ")");
  const size_t n = xs.size();
  if (n == 0) throw Error("pearson: empty input");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += xs[i] / double(n);
    my += ys[i] / double(n);
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson: zero variance input");
  return sxy / std::sqrt(sxx * syy);
}

CorrelationMatrix correlation_matrix(
    const std::vector<std::string>& names,
    const std::vector<std::vector<double>>& columns) {
  if (names.size() != columns.size())
    throw Error("correlation matrix: " + std::to_string(names.size()) +
                " names for " + std::to_string(columns.size()) + " columns");
  if (columns.empty()) throw Error("correlation matrix: no columns");
  const size_t rows = columns[0].size();
  if (rows == 0) throw Error("correlation matrix: empty columns");
  for (size_t c = 0; c < columns.size(); ++c)
    if (columns[c].size() != rows)
      throw Error("correlation matrix: column '" + names[c] + "' has " +
                  std::to_string(columns[c].size()) + " rows, expected " +
                  std::to_string(rows));

  const size_t n = names.size();
  std::vector<bool> flat(n);
  for (size_t c = 0; c < n; ++c) {
    const double first = columns[c][0];
    flat[c] = std::all_of(columns[c].begin(), columns[c].end(),
                          [&](double v) { return v == first; });
  }

  CorrelationMatrix out;
  out.names = names;
  out.values.assign(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) {
    out.values[i * n + i] = 1.0;
    for (size_t j = i + 1; j < n; ++j) {
      const double r = flat[i] || flat[j]
                           ? std::numeric_limits<double>::quiet_NaN()
                           : pearson(columns[i], columns[j]);
      out.values[i * n + j] = r;
      out.values[j * n + i] = r;
    }
  }
  return out;
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::ModelSwap: return "model_swap";
    case Scenario::PromptRefine: return "prompt_refine";
    case Scenario::TaskSupervise: return "task_supervise";
    case Scenario::GtCorrect: return "gt_correct";
  }
  throw Error("unknown scenario");
}

Scenario scenario_from_name(std::string_view name) {
  for (Scenario s : {Scenario::ModelSwap, Scenario::PromptRefine,
                     Scenario::TaskSupervise, Scenario::GtCorrect})
    if (name == scenario_name(s)) return s;
  throw Error("unknown scenario '" + std::string(name) + "'");
}

ModelId default_base_model(Scenario s) {
  return s == Scenario::GtCorrect ? ModelId::L : ModelId::T;
}

ScenarioReport evaluate_scenario(std::span<const SampleSet> sets,
                                 const UsamHeads* heads, Scenario scenario,
                                 ModelId base_model, int prompt_index) {
  ScenarioReport report;
  report.scenario = scenario;
  report.base_model = base_model;

  std::vector<MethodTag> tags = {MethodTag::MeanMaskEntropy,
                                 MethodTag::InverseSamScore};
  // Grid-wide entropies need the full augmentation sweep.
  const bool full_grid =
      !sets.empty() &&
      std::any_of(sets[0].records.begin(), sets[0].records.end(),
                  [](const SampleRecord& r) { return r.config.aug_index != 0; });
  if (full_grid) {
    tags.push_back(MethodTag::PredictiveEntropy);
    tags.push_back(MethodTag::PromptEntropy);
  }
  tags.push_back(MethodTag::EpistemicEntropy);
  tags.push_back(MethodTag::TaskEntropy);
  if (heads) {
    tags.insert(tags.end(),
                {MethodTag::UsamUncertainty, MethodTag::DeltaModel,
                 MethodTag::DeltaPrompt, MethodTag::DeltaTask,
                 MethodTag::DeltaModelDirect, MethodTag::DeltaPromptDirect,
                 MethodTag::DeltaTaskDirect});
  }

  std::vector<std::vector<ScoredSample>> per_method(tags.size());
  std::vector<ScoredSample> envelope;

  for (const SampleSet& set : sets) {
    CellRecords cells[kNumModels];
    CellRecords refined;
    for (const SampleRecord& r : set.records) {
      if (r.config.aug_index != 0) continue;
      if (r.config.head < 0 || r.config.head >= kNumHeads)
        throw Error("sample '" + set.image_id + "': head index out of range");
      const int m = int(r.config.model);
      if (r.config.prompt_index == prompt_index)
        cells[m].heads[r.config.head] = &r;
      else if (r.config.prompt_index == kRefinedPromptIndex &&
               r.config.model == base_model)
        refined.heads[r.config.head] = &r;
    }
    const CellRecords& base_cell = cells[int(base_model)];
    if (!base_cell.complete())
      throw Error("sample '" + set.image_id + "': model " +
                  model_name(base_model) + " is missing prompt " +
                  std::to_string(prompt_index) + " records");
    const SampleRecord& sel = base_cell.selected();
    const double base_iou = iou(threshold(sel.mask), set.gt);

    double corrected = 1.0;
    switch (scenario) {
      case Scenario::ModelSwap: {
        const CellRecords& large = cells[int(ModelId::L)];
        if (!large.complete())
          throw Error("sample '" + set.image_id +
                      "': model L records required for the swap scenario");
        corrected = iou(threshold(large.selected().mask), set.gt);
        break;
      }
      case Scenario::PromptRefine:
        if (!refined.complete())
          throw Error("sample '" + set.image_id + "': model " +
                      model_name(base_model) +
                      " is missing refined-prompt records");
        corrected = iou(threshold(refined.selected().mask), set.gt);
        break;
      case Scenario::TaskSupervise:
        corrected = base_cell.best_iou(set.gt);
        break;
      case Scenario::GtCorrect:
        corrected = 1.0;
        break;
    }

    const std::vector<double>& tokens = base_cell.heads[0]->tokens;
    for (size_t t = 0; t < tags.size(); ++t) {
      double unc = 0.0;
      switch (tags[t]) {
        case MethodTag::MeanMaskEntropy:
          unc = mean_mask_entropy(sel.mask, threshold(sel.mask)).value;
          break;
        case MethodTag::InverseSamScore:
          unc = 1.0 - sel.sam_score;
          break;
        case MethodTag::PredictiveEntropy:
          unc = predictive_entropy(set).value;
          break;
        case MethodTag::EpistemicEntropy:
          unc = epistemic_entropy(set, prompt_index, set.gt).value;
          break;
        case MethodTag::PromptEntropy:
          unc = prompt_entropy(set, base_model, set.gt).value;
          break;
        case MethodTag::TaskEntropy:
          unc = task_entropy(set, prompt_index, base_model).value;
          break;
        case MethodTag::UsamUncertainty:
          unc = predictive_uncertainty(*heads, tokens, base_model).value;
          break;
        case MethodTag::DeltaModel: unc = delta_model(*heads, tokens); break;
        case MethodTag::DeltaPrompt:
          unc = delta_prompt(*heads, tokens, base_model);
          break;
        case MethodTag::DeltaTask:
          unc = delta_task(*heads, tokens, base_model);
          break;
        case MethodTag::DeltaModelDirect:
          unc = direct_delta(*heads, DeltaKind::Model, tokens);
          break;
        case MethodTag::DeltaPromptDirect:
          unc = direct_delta(*heads, DeltaKind::Prompt, tokens);
          break;
        case MethodTag::DeltaTaskDirect:
          unc = direct_delta(*heads, DeltaKind::Task, tokens);
          break;
      }
      per_method[t].push_back({set.image_id, base_iou, corrected, unc});
    }
    envelope.push_back({set.image_id, base_iou, corrected, 0.0});
  }

  for (size_t t = 0; t < tags.size(); ++t)
    report.methods.push_back(
        {method_name(tags[t]), correction_curve(per_method[t])});

  // Envelope rows: ranking by the true gain (and its negation) realizes the
  // oracle and worst curves.
  for (ScoredSample& s : envelope) s.unc = s.corrected_iou - s.base_iou;
  report.methods.push_back({"oracle", correction_curve(envelope)});
  for (ScoredSample& s : envelope) s.unc = -s.unc;
  report.methods.push_back({"worst", correction_curve(envelope)});
  return report;
}

DeltaRelAuc direct_delta_rel_auc(const UsamHeads& heads,
                                 std::span<const TrainingExample> test) {
  std::vector<ScoredSample> model_rows, prompt_rows, task_rows;
  for (const TrainingExample& ex : test) {
    const std::string id =
        ex.sample_id + "#" + model_name(ex.source);
    // Swapping T for L, ranked by the direct model-gap head on T tokens.
    if (ex.source == ModelId::T)
      model_rows.push_back({id, ex.iou_model[size_t(ModelId::T)],
                            ex.iou_model[size_t(ModelId::L)],
                            direct_delta(heads, DeltaKind::Model, ex.tokens)});
    prompt_rows.push_back({id, ex.iou_model[size_t(ex.source)],
                           ex.iou_refined,
                           direct_delta(heads, DeltaKind::Prompt, ex.tokens)});
    task_rows.push_back({id, ex.iou_sam_selected,
                         ex.iou_model[size_t(ex.source)],
                         direct_delta(heads, DeltaKind::Task, ex.tokens)});
  }
  DeltaRelAuc out;
  out.model = correction_curve(std::move(model_rows)).rel_auc;
  out.prompt = correction_curve(std::move(prompt_rows)).rel_auc;
  out.task = correction_curve(std::move(task_rows)).rel_auc;
  return out;
}

std::vector<AblationRow> token_ablation_report(
    std::span<const TrainingExample> train,
    std::span<const TrainingExample> test, const TrainConfig& cfg,
    int hidden_dim) {
  const HeadsTrainFn fn = [hidden_dim](std::span<const TrainingExample> d,
                                       const TrainConfig& c) {
    return train_heads(d, c, hidden_dim);
  };
  std::vector<AblationRow> rows;
  for (TokenZeroing z : {TokenZeroing::None, TokenZeroing::MaskToken,
                         TokenZeroing::IouToken}) {
    const UsamHeads heads = token_ablation(fn, train, z, cfg);
    std::vector<TrainingExample> test_z(test.begin(), test.end());
    zero_tokens(test_z, z);
    rows.push_back({z, direct_delta_rel_auc(heads, test_z)});
  }
  return rows;
}

BenchReport bench_uq_overhead(int mask_edge, int repeats) {
  if (mask_edge < 1) throw Error("bench: mask edge must be positive");
  if (repeats < 10)
    throw Error("bench: needs at least 10 repeats, got " +
                std::to_string(repeats));

  BenchReport report;
  report.mask_edge = mask_edge;
  report.repeats = repeats;

  Mlp head = Mlp::he_uniform(kTokenDim, 512, 17);
  Rng rng(18);
  std::vector<double> tokens(static_cast<size_t>(kTokenDim));
  for (double& v : tokens) v = rng.uniform(-1.0, 1.0);
  volatile double sink = 0.0;
  report.usam_infer_ms =
      timed_median_ms(repeats, [&] { sink = sink + head.forward(tokens); });

  ProbMask prob;
  prob.height = mask_edge;
  prob.width = mask_edge;
  prob.data.resize(size_t(mask_edge) * size_t(mask_edge));
  for (size_t i = 0; i < prob.data.size(); ++i)
    prob.data[i] = 0.02 + 0.96 * hash01(mix64(19, i));
  const BinaryMask thresh = threshold(prob);
  report.mask_entropy_ms = timed_median_ms(
      repeats, [&] { sink = sink + mean_mask_entropy(prob, thresh).value; });

  // The backend runs at the benchmark resolution so the three methods are
  // priced against the same working size.
  SyntheticWorld world;
  world.height = std::max(16, mask_edge);
  world.width = std::max(16, mask_edge);
  SyntheticBackend backend(world);
  const SyntheticSample sample = synthesize_sample(world, 23);
  const PointPrompt prompt = centroid_prompt(sample.gt);
  const auto augs = standard_augmentations();
  report.single_forward_ms = timed_median_ms(repeats, [&] {
    sink = sink + backend.forward(sample.image, prompt, ModelId::L)
                      .sam_scores[0];
  });
  report.mc_loop_ms = timed_median_ms(repeats, [&] {
    for (int t = 0; t < 5; ++t) {
      const ImageU8 img = apply_augmentation(sample.image, augs[size_t(t)], 29);
      sink = sink + backend.forward(img, prompt, ModelId::L).sam_scores[0];
    }
  });
  return report;
}

}  // namespace usamkit
