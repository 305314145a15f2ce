#include "usamkit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "usamkit/backend.hpp"
#include "usamkit/bayes.hpp"
#include "usamkit/error.hpp"
#include "usamkit/eval.hpp"
#include "usamkit/io.hpp"
#include "usamkit/kernels.hpp"
#include "usamkit/rng.hpp"
#include "usamkit/usam.hpp"

namespace usamkit {

namespace {

namespace fs = std::filesystem;

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)v);
  return buf;
}

// Writes <out>/manifest.json before any artifact so partial runs are
// detectable: an artifact without a manifest (or a manifest listing missing
// outputs) marks an interrupted run. The digest hashes the full command
// configuration; artifacts reference the manifest by living next to it.
void write_manifest(const std::string& out_dir, const std::string& command,
                    const nlohmann::json& config,
                    const std::vector<uint64_t>& seeds,
                    const std::vector<std::string>& outputs) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec)
    throw Error("cannot create output directory '" + out_dir +
                "': " + ec.message());
  nlohmann::json m;
  m["command"] = command;
  m["config"] = config;
  const std::string canon = config.dump();
  m["config_digest"] = hex64(fnv1a64(std::span<const uint8_t>(
      reinterpret_cast<const uint8_t*>(canon.data()), canon.size())));
  m["seeds"] = seeds;
  m["versions"] = {{"record_schema", kRecordSchemaVersion},
                   {"token_layout", kTokenLayoutVersion}};
  m["outputs"] = outputs;
  m["timestamp_utc"] = utc_timestamp();
  const std::string path = (fs::path(out_dir) / "manifest.json").string();
  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << m.dump(2) << "\n";
  if (!f) throw Error("short write to '" + path + "'");
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

// One flag set per world parameter, mirroring SyntheticWorld's fields.
struct WorldFlags {
  SyntheticWorld world;
  std::vector<double> model_noise;

  void attach(CLI::App* cmd) {
    cmd->add_option("--world.seed", world.seed, "Scene-content seed");
    cmd->add_option("--world.height", world.height, "Mask height (>= 16)");
    cmd->add_option("--world.width", world.width, "Mask width (>= 16)");
    cmd->add_option("--world.model-noise", model_noise,
                    "Boundary noise per model: L B+ S T")
        ->expected(4);
    cmd->add_option("--world.prompt-gain", world.prompt_gain,
                    "Error reduction per extra prompt point");
    cmd->add_option("--world.ambiguity", world.ambiguity,
                    "Probability of granularity-ambiguous scenes");
    cmd->add_option("--world.score-noise", world.score_noise,
                    "Sigma of the self-estimated score error");
  }

  SyntheticWorld resolve() const {
    SyntheticWorld w = world;
    if (!model_noise.empty())
      for (int m = 0; m < kNumModels; ++m)
        w.model_noise[size_t(m)] = model_noise[size_t(m)];
    w.validate();
    return w;
  }

  nlohmann::json to_json() const {
    const SyntheticWorld w = resolve();
    return {{"seed", w.seed},
            {"height", w.height},
            {"width", w.width},
            {"model_noise", w.model_noise},
            {"prompt_gain", w.prompt_gain},
            {"ambiguity", w.ambiguity},
            {"score_noise", w.score_noise}};
  }
};

// Training-config flag set shared by train and ablate.
struct TrainFlags {
  TrainConfig cfg{.epochs = 80,
                  .batch_size = 16,
                  .learning_rate = 0.1,
                  .momentum = 0.9};
  int hidden_dim = 32;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", cfg.epochs, "Training epochs [5, 80]");
    cmd->add_option("--batch", cfg.batch_size, "Mini-batch size [16, 256]");
    cmd->add_option("--lr", cfg.learning_rate, "Learning rate [1e-4, 0.1]");
    cmd->add_option("--momentum", cfg.momentum, "SGD momentum [0.1, 0.9]");
    cmd->add_option("--hidden", hidden_dim, "Hidden width of every head");
  }

  nlohmann::json to_json() const {
    return {{"epochs", cfg.epochs},
            {"batch_size", cfg.batch_size},
            {"learning_rate", cfg.learning_rate},
            {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay},
            {"seed", cfg.seed},
            {"hidden_dim", hidden_dim}};
  }
};

struct SetUq {
  double h_y, h_theta, h_xp, h_a, h_std, inv_sam_score;
};

// Shared convention for per-sample UQ rows: model T's argmax-score head at
// prompt 0 anchors the mask-level baselines; grid entropies that need
// records the file does not carry come back NaN.
SetUq compute_uq(const SampleSet& set) {
  constexpr ModelId base = ModelId::T;
  constexpr int prompt = 0;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  SetUq uq{nan, nan, nan, nan, nan, nan};

  const SampleRecord* sel = nullptr;
  for (const SampleRecord& r : set.records) {
    if (r.config.aug_index != 0 || r.config.model != base ||
        r.config.prompt_index != prompt)
      continue;
    if (!sel || r.sam_score > sel->sam_score) sel = &r;
  }
  if (!sel)
    throw Error("sample '" + set.image_id + "': model T is missing prompt 0");
  uq.h_std = mean_mask_entropy(sel->mask, threshold(sel->mask)).value;
  uq.inv_sam_score = 1.0 - sel->sam_score;
  uq.h_a = task_entropy(set, prompt, base).value;
  uq.h_theta = epistemic_entropy(set, prompt, set.gt).value;
  try {
    uq.h_y = predictive_entropy(set).value;
  } catch (const Error&) {
  }
  try {
    uq.h_xp = prompt_entropy(set, base, set.gt).value;
  } catch (const Error&) {
  }
  return uq;
}

std::string cell(double v) {
  return std::isnan(v) ? "nan" : fmt_double(v);
}

double selected_iou(const SampleSet& set, ModelId model, int prompt) {
  const SampleRecord* sel = nullptr;
  for (const SampleRecord& r : set.records) {
    if (r.config.aug_index != 0 || r.config.model != model ||
        r.config.prompt_index != prompt)
      continue;
    if (!sel || r.sam_score > sel->sam_score) sel = &r;
  }
  if (!sel)
    throw Error("sample '" + set.image_id + "': model " + model_name(model) +
                " is missing prompt " + std::to_string(prompt));
  return iou(threshold(sel->mask), set.gt);
}

const std::vector<double>& base_tokens(const SampleSet& set) {
  for (const SampleRecord& r : set.records)
    if (r.config.aug_index == 0 && r.config.model == ModelId::T &&
        r.config.prompt_index == 0)
      return r.tokens;
  throw Error("sample '" + set.image_id + "': model T is missing prompt 0");
}

// Deterministic 80/20 split by set order; source-model grouping inside one
// set never straddles the boundary.
void split_examples(std::span<const SampleSet> sets,
                    std::vector<TrainingExample>& train,
                    std::vector<TrainingExample>& test) {
  const size_t cut = sets.size() - std::max<size_t>(1, sets.size() / 5);
  const auto head = build_training_set(sets.subspan(0, cut));
  const auto tail = build_training_set(sets.subspan(cut));
  train.assign(head.begin(), head.end());
  test.assign(tail.begin(), tail.end());
}

std::vector<SampleSet> load_sets(const std::string& path) {
  auto sets = read_records(path);
  if (sets.empty()) throw Error("record file '" + path + "' has no samples");
  return sets;
}

// Minimal self-contained line plot; CSV stays the authoritative output.
void write_curves_svg(const std::string& path, const ScenarioReport& report) {
  static const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                   "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                   "#bcbd22", "#17becf", "#393b79", "#637939",
                                   "#8c6d31", "#843c39", "#7b4173"};
  const double w = 640, h = 420, ml = 60, mr = 180, mt = 20, mb = 40;
  double lo = 1.0, hi = 0.0;
  for (const MethodCurve& m : report.methods)
    for (double v : m.curve.mious) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi <= lo) hi = lo + 1e-9;
  const auto px = [&](double ratio) { return ml + ratio * (w - ml - mr); };
  const auto py = [&](double miou) {
    return h - mb - (miou - lo) / (hi - lo) * (h - mt - mb);
  };

  std::ofstream f(path);
  if (!f) throw Error("cannot write '" + path + "'");
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
  f << "<!-- corrected-fraction vs mIoU; see manifest.json -->\n";
  f << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
    << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
    << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  f << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 8
    << "\" text-anchor=\"middle\" font-size=\"13\">corrected fraction</text>\n";
  f << "<text x=\"14\" y=\"" << (mt + h - mb) / 2
    << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
    << (mt + h - mb) / 2 << ")\">mIoU</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double r = k / 4.0;
    f << "<text x=\"" << px(r) << "\" y=\"" << h - mb + 16
      << "\" text-anchor=\"middle\" font-size=\"11\">" << fixed2(r)
      << "</text>\n";
    f << "<text x=\"" << ml - 6 << "\" y=\"" << py(lo + r * (hi - lo)) + 4
      << "\" text-anchor=\"end\" font-size=\"11\">"
      << fixed2(lo + r * (hi - lo)) << "</text>\n";
  }
  for (size_t m = 0; m < report.methods.size(); ++m) {
    const MethodCurve& mc = report.methods[m];
    const char* color = kPalette[m % (sizeof(kPalette) / sizeof(*kPalette))];
    f << "<polyline fill=\"none\" stroke=\"" << color
      << "\" stroke-width=\"1.5\" points=\"";
    for (size_t k = 0; k < mc.curve.ratios.size(); ++k) {
      if (k) f << ' ';
      f << fixed2(px(mc.curve.ratios[k])) << ',' << fixed2(py(mc.curve.mious[k]));
    }
    f << "\"/>\n";
    const double ly = mt + 14 + 16.0 * double(m);
    f << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << ly - 4 << "\" x2=\""
      << w - mr + 30 << "\" y2=\"" << ly - 4 << "\" stroke=\"" << color
      << "\" stroke-width=\"2\"/>\n";
    f << "<text x=\"" << w - mr + 36 << "\" y=\"" << ly
      << "\" font-size=\"11\">" << mc.method << "</text>\n";
  }
  f << "</svg>\n";
  if (!f) throw Error("short write to '" + path + "'");
}

int cmd_generate(const std::string& out_dir, int n, uint64_t seed,
                 const std::string& grid, int n_prompts,
                 const WorldFlags& wf) {
  if (n < 1) throw Error("--n must be at least 1");
  const SyntheticWorld world = wf.resolve();
  const GridKind kind = grid == "train" ? GridKind::Train : GridKind::Full;

  write_manifest(out_dir, "generate",
                 {{"n", n},
                  {"seed", seed},
                  {"grid", grid},
                  {"n_prompts", n_prompts},
                  {"world", wf.to_json()}},
                 {seed, world.seed}, {"records.jsonl"});

  std::vector<SampleSet> sets;
  sets.reserve(size_t(n));
  for (int i = 0; i < n; ++i)
    sets.push_back(generate_sample_set(world, mix64(seed, uint64_t(i)),
                                       "sample_" + std::to_string(i),
                                       n_prompts, kind));
  write_records(join_path(out_dir, "records.jsonl"), sets);
  std::cout << "wrote " << n << " sample sets to "
            << join_path(out_dir, "records.jsonl") << "\n";
  return 0;
}

int cmd_bayes(const std::string& records, const std::string& out_dir) {
  const auto sets = load_sets(records);
  write_manifest(out_dir, "bayes", {{"records", records}}, {},
                 {"uncertainty.csv"});
  std::vector<std::vector<std::string>> rows;
  rows.reserve(sets.size());
  for (const SampleSet& set : sets) {
    const SetUq uq = compute_uq(set);
    rows.push_back({set.image_id, cell(uq.h_y), cell(uq.h_theta),
                    cell(uq.h_xp), cell(uq.h_a), cell(uq.h_std),
                    cell(uq.inv_sam_score)});
  }
  write_csv(join_path(out_dir, "uncertainty.csv"),
            {"image_id", "h_y", "h_theta", "h_xp", "h_a", "h_std",
             "inv_sam_score"},
            rows);
  std::cout << "wrote " << rows.size() << " rows to "
            << join_path(out_dir, "uncertainty.csv") << "\n";
  return 0;
}

int cmd_train(const std::string& records, const std::string& out_dir,
              uint64_t seed, int search_trials, TrainFlags tf) {
  const auto sets = load_sets(records);
  const auto examples = build_training_set(sets);
  tf.cfg.seed = seed;

  if (search_trials > 0) {
    // Search scores candidate configs on the own-IoU regression task, the
    // common denominator of all nine heads.
    Dataset d;
    d.dim = kTokenDim;
    for (const TrainingExample& ex : examples) {
      d.inputs.insert(d.inputs.end(), ex.tokens.begin(), ex.tokens.end());
      d.targets.push_back(ex.iou_model[size_t(ex.source)]);
    }
    const SearchResult sr =
        random_search(d, search_trials, seed, tf.hidden_dim);
    tf.cfg = sr.best;
    tf.cfg.seed = seed;
    std::cout << "search picked epochs=" << tf.cfg.epochs
              << " batch=" << tf.cfg.batch_size
              << " lr=" << fmt_double(tf.cfg.learning_rate)
              << " momentum=" << fmt_double(tf.cfg.momentum)
              << " (val mse " << fmt_double(sr.best_val_mse) << ")\n";
  }

  write_manifest(out_dir, "train",
                 {{"records", records},
                  {"search_trials", search_trials},
                  {"train", tf.to_json()}},
                 {seed}, {"heads"});
  const UsamHeads heads = train_heads(examples, tf.cfg, tf.hidden_dim);
  save_heads(heads, join_path(out_dir, "heads"));
  std::cout << "trained " << kNumUsamHeads << " heads on " << examples.size()
            << " examples -> " << join_path(out_dir, "heads") << "\n";
  return 0;
}

int cmd_eval(const std::string& records, const std::string& heads_dir,
             const std::string& scenario_flag, const std::string& out_dir,
             bool svg) {
  std::string name = scenario_flag;
  for (char& c : name)
    if (c == '-') c = '_';
  const Scenario scenario = scenario_from_name(name);

  const auto sets = load_sets(records);
  std::optional<UsamHeads> heads;
  if (!heads_dir.empty()) heads = load_heads(heads_dir);

  std::vector<std::string> outputs = {"curves.csv", "rel_auc.csv"};
  if (svg) outputs.push_back("curves.svg");
  write_manifest(out_dir, "eval",
                 {{"records", records},
                  {"heads", heads_dir},
                  {"scenario", scenario_name(scenario)},
                  {"svg", svg}},
                 {}, outputs);

  const ScenarioReport report =
      evaluate_scenario(sets, heads ? &*heads : nullptr, scenario,
                        default_base_model(scenario));

  std::vector<std::string> header = {"ratio"};
  for (const MethodCurve& m : report.methods) header.push_back(m.method);
  const size_t points = report.methods[0].curve.ratios.size();
  std::vector<std::vector<std::string>> rows;
  rows.reserve(points);
  for (size_t k = 0; k < points; ++k) {
    std::vector<std::string> row = {
        fmt_double(report.methods[0].curve.ratios[k])};
    for (const MethodCurve& m : report.methods)
      row.push_back(fmt_double(m.curve.mious[k]));
    rows.push_back(std::move(row));
  }
  write_csv(join_path(out_dir, "curves.csv"), header, rows);

  std::vector<std::vector<std::string>> table;
  for (const MethodCurve& m : report.methods)
    table.push_back({m.method, fixed2(100.0 * m.curve.rel_auc)});
  write_csv(join_path(out_dir, "rel_auc.csv"), {"method", "rel_auc_percent"},
            table);

  if (svg) write_curves_svg(join_path(out_dir, "curves.svg"), report);

  std::cout << "scenario " << scenario_name(scenario) << " (base model "
            << model_name(report.base_model) << "), " << report.methods.size()
            << " methods over " << sets.size() << " samples:\n";
  for (const MethodCurve& m : report.methods)
    std::cout << "  " << m.method << " rel-AUC "
              << fixed2(100.0 * m.curve.rel_auc) << "\n";
  return 0;
}

int cmd_correlate(const std::string& records, const std::string& heads_dir,
                  const std::string& out_dir) {
  const auto sets = load_sets(records);
  std::optional<UsamHeads> heads;
  if (!heads_dir.empty()) heads = load_heads(heads_dir);

  write_manifest(out_dir, "correlate",
                 {{"records", records}, {"heads", heads_dir}}, {},
                 {"correlation.csv"});

  std::vector<std::string> names = {"iou_gt", "h_std", "inv_sam_score"};
  const bool full_grid = std::any_of(
      sets[0].records.begin(), sets[0].records.end(),
      [](const SampleRecord& r) { return r.config.aug_index != 0; });
  if (full_grid) {
    names.push_back("h_y");
    names.push_back("h_xp");
  }
  names.push_back("h_theta");
  names.push_back("h_a");
  if (heads) {
    for (const char* n : {"usam", "delta_model", "delta_prompt", "delta_task",
                          "dstar_model", "dstar_prompt", "dstar_task"})
      names.push_back(n);
  }

  std::vector<std::vector<double>> columns(names.size());
  for (const SampleSet& set : sets) {
    const SetUq uq = compute_uq(set);
    size_t c = 0;
    columns[c++].push_back(selected_iou(set, ModelId::T, 0));
    columns[c++].push_back(uq.h_std);
    columns[c++].push_back(uq.inv_sam_score);
    if (full_grid) {
      columns[c++].push_back(uq.h_y);
      columns[c++].push_back(uq.h_xp);
    }
    columns[c++].push_back(uq.h_theta);
    columns[c++].push_back(uq.h_a);
    if (heads) {
      const std::vector<double>& tokens = base_tokens(set);
      columns[c++].push_back(
          predictive_uncertainty(*heads, tokens, ModelId::T).value);
      columns[c++].push_back(delta_model(*heads, tokens));
      columns[c++].push_back(delta_prompt(*heads, tokens, ModelId::T));
      columns[c++].push_back(delta_task(*heads, tokens, ModelId::T));
      columns[c++].push_back(direct_delta(*heads, DeltaKind::Model, tokens));
      columns[c++].push_back(direct_delta(*heads, DeltaKind::Prompt, tokens));
      columns[c++].push_back(direct_delta(*heads, DeltaKind::Task, tokens));
    }
  }
  for (auto& col : columns)
    for (double& v : col)
      if (std::isnan(v))
        throw Error(
            "grid entropies are unavailable on this record file; correlate "
            "needs full-grid records or train-grid columns only");

  const CorrelationMatrix matrix = correlation_matrix(names, columns);
  std::vector<std::string> header = {"column"};
  header.insert(header.end(), names.begin(), names.end());
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < matrix.n(); ++i) {
    std::vector<std::string> row = {names[size_t(i)]};
    for (int j = 0; j < matrix.n(); ++j) row.push_back(cell(matrix.at(i, j)));
    rows.push_back(std::move(row));
  }
  write_csv(join_path(out_dir, "correlation.csv"), header, rows);
  std::cout << "wrote " << matrix.n() << "x" << matrix.n() << " matrix to "
            << join_path(out_dir, "correlation.csv") << "\n";
  return 0;
}

int cmd_ablate(const std::string& records, const std::string& out_dir,
               uint64_t seed, TrainFlags tf) {
  const auto sets = load_sets(records);
  if (sets.size() < 5)
    throw Error("ablation needs at least 5 samples for the 80/20 split");
  std::vector<TrainingExample> train, test;
  split_examples(sets, train, test);
  tf.cfg.seed = seed;

  write_manifest(out_dir, "ablate",
                 {{"records", records}, {"train", tf.to_json()}}, {seed},
                 {"ablation.csv"});

  const auto report = token_ablation_report(train, test, tf.cfg, tf.hidden_dim);
  std::vector<std::vector<std::string>> rows;
  for (const AblationRow& row : report)
    rows.push_back({zeroing_name(row.zeroing),
                    fixed2(100.0 * row.rel_auc.model),
                    fixed2(100.0 * row.rel_auc.prompt),
                    fixed2(100.0 * row.rel_auc.task)});
  write_csv(join_path(out_dir, "ablation.csv"),
            {"zeroing", "rel_auc_model", "rel_auc_prompt", "rel_auc_task"},
            rows);
  std::cout << "wrote token ablation (" << train.size() << " train / "
            << test.size() << " test examples) to "
            << join_path(out_dir, "ablation.csv") << "\n";
  return 0;
}

int cmd_bench(const std::string& out_dir, int mask_edge, int repeats) {
  write_manifest(out_dir, "bench",
                 {{"mask_edge", mask_edge}, {"repeats", repeats}}, {},
                 {"bench.csv"});
  const BenchReport r = bench_uq_overhead(mask_edge, repeats);
  write_csv(join_path(out_dir, "bench.csv"), {"metric", "median_ms"},
            {{"usam_infer", fmt_double(r.usam_infer_ms)},
             {"mask_entropy", fmt_double(r.mask_entropy_ms)},
             {"single_forward", fmt_double(r.single_forward_ms)},
             {"mc_loop_5aug", fmt_double(r.mc_loop_ms)}});
  std::cout << "usam_infer " << fmt_double(r.usam_infer_ms)
            << " ms, mask_entropy " << fmt_double(r.mask_entropy_ms)
            << " ms, single_forward " << fmt_double(r.single_forward_ms)
            << " ms, mc_loop_5aug " << fmt_double(r.mc_loop_ms) << " ms\n";
  return 0;
}

int cmd_export(const std::string& records, const std::string& out_dir) {
  const auto sets = load_sets(records);
  write_manifest(out_dir, "export", {{"records", records}}, {},
                 {"records_summary.csv"});
  const auto augs = standard_augmentations();
  std::vector<std::vector<std::string>> rows;
  for (const SampleSet& set : sets)
    for (const SampleRecord& r : set.records)
      rows.push_back({set.image_id,
                      aug_name(augs[size_t(r.config.aug_index)].kind),
                      std::to_string(r.config.prompt_index),
                      model_name(r.config.model),
                      std::to_string(r.config.head),
                      fmt_double(r.sam_score),
                      fmt_double(iou(threshold(r.mask), set.gt)),
                      fmt_double(weighted_mask_entropy(r.mask).value)});
  write_csv(join_path(out_dir, "records_summary.csv"),
            {"image_id", "aug", "prompt_index", "model", "head", "sam_score",
             "iou_gt", "mask_entropy"},
            rows);
  std::cout << "wrote " << rows.size() << " record rows to "
            << join_path(out_dir, "records_summary.csv") << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  if (const char* env = std::getenv("USAMKIT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap > 0) set_thread_cap(cap);
  }

  CLI::App app{
      "Uncertainty quantification for promptable segmentation: synthetic "
      "record generation, Bayesian entropy estimators, post-hoc IoU "
      "estimator heads, and the correction-curve evaluation harness.\n"
      "Per-sample rows use model T's argmax-score head at prompt 0 as the "
      "base prediction. Set USAMKIT_THREADS to cap parallelism."};
  app.require_subcommand(1);

  std::string records, heads_dir, out_dir, scenario, grid = "full";
  uint64_t seed = 1;
  int n = 20, n_prompts = 8, search_trials = 0;
  int mask_edge = 1024, repeats = 20;
  bool svg = false;
  WorldFlags wf;
  TrainFlags tf;

  CLI::App* generate = app.add_subcommand(
      "generate", "Write synthetic sample sets as a JSONL record file");
  generate->add_option("--out", out_dir, "Output directory")->required();
  generate->add_option("--n", n, "Number of sample sets");
  generate->add_option("--seed", seed, "Scene seed");
  generate->add_option("--grid", grid, "Record grid: full or train")
      ->check(CLI::IsMember({"full", "train"}));
  generate->add_option("--n-prompts", n_prompts, "Single-point prompts per set");
  wf.attach(generate);

  CLI::App* bayes = app.add_subcommand(
      "bayes", "Per-sample entropy estimates and score baselines as CSV");
  bayes->add_option("--records", records, "Input record file")->required();
  bayes->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* train = app.add_subcommand(
      "train", "Train the nine estimator heads and save a checkpoint bundle");
  train->add_option("--records", records, "Input record file")->required();
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--seed", seed, "Training seed");
  train->add_option("--search", search_trials,
                    "Random-search trials before the final fit");
  tf.attach(train);

  CLI::App* eval = app.add_subcommand(
      "eval", "Correction curves and rel-AUC table for one scenario");
  eval->add_option("--records", records, "Input record file")->required();
  eval->add_option("--heads", heads_dir, "Trained head bundle directory");
  eval->add_option("--scenario", scenario,
                   "model-swap, prompt-refine, task-supervise or gt-correct")
      ->required();
  eval->add_option("--out", out_dir, "Output directory")->required();
  eval->add_flag("--svg", svg, "Also draw the curves as an SVG line plot");

  CLI::App* correlate = app.add_subcommand(
      "correlate", "Pearson correlation matrix of true IoU and UQ methods");
  correlate->add_option("--records", records, "Input record file")->required();
  correlate->add_option("--heads", heads_dir, "Trained head bundle directory");
  correlate->add_option("--out", out_dir, "Output directory")->required();

  CLI::App* ablate = app.add_subcommand(
      "ablate", "Token-zeroing ablation: retrain per zeroing, compare rel-AUC");
  ablate->add_option("--records", records, "Input record file")->required();
  ablate->add_option("--out", out_dir, "Output directory")->required();
  ablate->add_option("--seed", seed, "Training seed");
  tf.attach(ablate);

  CLI::App* bench = app.add_subcommand(
      "bench", "Median wall times of the UQ building blocks");
  bench->add_option("--out", out_dir, "Output directory")->required();
  bench->add_option("--mask-edge", mask_edge, "Entropy benchmark mask edge");
  bench->add_option("--repeats", repeats, "Timing repeats (>= 10)");

  CLI::App* exp = app.add_subcommand(
      "export", "Flatten a record file into a per-record summary CSV");
  exp->add_option("--records", records, "Input record file")->required();
  exp->add_option("--out", out_dir, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (generate->parsed())
      return cmd_generate(out_dir, n, seed, grid, n_prompts, wf);
    if (bayes->parsed()) return cmd_bayes(records, out_dir);
    if (train->parsed())
      return cmd_train(records, out_dir, seed, search_trials, tf);
    if (eval->parsed())
      return cmd_eval(records, heads_dir, scenario, out_dir, svg);
    if (correlate->parsed())
      return cmd_correlate(records, heads_dir, out_dir);
    if (ablate->parsed()) return cmd_ablate(records, out_dir, seed, tf);
    if (bench->parsed()) return cmd_bench(out_dir, mask_edge, repeats);
    if (exp->parsed()) return cmd_export(records, out_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace usamkit
