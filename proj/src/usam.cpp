#include "usamkit/usam.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

#include "json.hpp"
#include "usamkit/bayes.hpp"
#include "usamkit/error.hpp"
#include "usamkit/rng.hpp"

namespace usamkit {

namespace {

constexpr double kTargetClamp = 1e-4;

constexpr const char* kHeadNames[kNumUsamHeads] = {
    "iou_l",       "iou_bplus",    "iou_s",
    "iou_t",       "iou_refined",  "iou_sam_selected",
    "delta_model", "delta_prompt", "delta_task",
};

UsamHead model_head(ModelId m) { return UsamHead(int(m)); }

UsamHead delta_head(DeltaKind kind) {
  switch (kind) {
    case DeltaKind::Model: return UsamHead::DeltaModel;
    case DeltaKind::Prompt: return UsamHead::DeltaPrompt;
    case DeltaKind::Task: return UsamHead::DeltaTask;
  }
  throw Error("unknown delta kind");
}

double clamp_target(double t) {
  return std::clamp(t, kTargetClamp, 1.0 - kTargetClamp);
}

struct CellView {
  const SampleRecord* heads[kNumHeads] = {nullptr, nullptr, nullptr};

  bool complete() const { return heads[0] && heads[1] && heads[2]; }
};

// Best-head IoU against gt; ties in score keep the lowest head index.
double best_head_iou(const CellView& cell, const BinaryMask& gt) {
  double best = 0.0;
  for (const SampleRecord* r : cell.heads)
    best = std::max(best, iou(threshold(r->mask), gt));
  return best;
}

double selected_head_iou(const CellView& cell, const BinaryMask& gt) {
  int sel = 0;
  for (int h = 1; h < kNumHeads; ++h)
    if (cell.heads[h]->sam_score > cell.heads[sel]->sam_score) sel = h;
  return iou(threshold(cell.heads[sel]->mask), gt);
}

}  // namespace

const char* usam_head_name(UsamHead head) {
  const int i = int(head);
  if (i < 0 || i >= kNumUsamHeads) throw Error("unknown estimator head");
  return kHeadNames[i];
}

UsamHead usam_head_from_name(std::string_view name) {
  for (int i = 0; i < kNumUsamHeads; ++i)
    if (name == kHeadNames[i]) return UsamHead(i);
  throw Error("unknown estimator head '" + std::string(name) + "'");
}

const char* zeroing_name(TokenZeroing z) {
  switch (z) {
    case TokenZeroing::None: return "none";
    case TokenZeroing::MaskToken: return "mask_token";
    case TokenZeroing::IouToken: return "iou_token";
  }
  throw Error("unknown token zeroing");
}

std::vector<TrainingExample> build_training_set(
    std::span<const SampleSet> samples) {
  std::vector<TrainingExample> out;
  out.reserve(samples.size() * kNumModels);
  for (const SampleSet& set : samples) {
    CellView single[kNumModels];
    CellView refined[kNumModels];
    for (const SampleRecord& r : set.records) {
      if (r.config.aug_index != 0) continue;
      if (r.config.head < 0 || r.config.head >= kNumHeads)
        throw Error("sample '" + set.image_id + "': head index out of range");
      const int m = int(r.config.model);
      if (r.config.prompt_index == 0)
        single[m].heads[r.config.head] = &r;
      else if (r.config.prompt_index == kRefinedPromptIndex)
        refined[m].heads[r.config.head] = &r;
    }
    std::array<double, kNumModels> iou_model{};
    for (int m = 0; m < kNumModels; ++m) {
      if (!single[m].complete() || !refined[m].complete())
        throw Error("sample '" + set.image_id + "': model " +
                    model_name(ModelId(m)) +
                    " is missing centroid or refined records");
      iou_model[size_t(m)] = best_head_iou(single[m], set.gt);
    }
    for (int m = 0; m < kNumModels; ++m) {
      TrainingExample ex;
      ex.sample_id = set.image_id;
      ex.tokens = single[m].heads[0]->tokens;
      if (int(ex.tokens.size()) != kTokenDim)
        throw Error("sample '" + set.image_id + "': token vector has " +
                    std::to_string(ex.tokens.size()) + " dims, expected " +
                    std::to_string(kTokenDim));
      ex.source = ModelId(m);
      ex.iou_model = iou_model;
      ex.iou_refined = best_head_iou(refined[m], set.gt);
      ex.iou_sam_selected = selected_head_iou(single[m], set.gt);
      out.push_back(std::move(ex));
    }
  }
  return out;
}

const Mlp& UsamHeads::head(UsamHead h) const {
  const int i = int(h);
  if (i < 0 || i >= kNumUsamHeads) throw Error("unknown estimator head");
  if (!trained[size_t(i)])
    throw Error(std::string("estimator head '") + kHeadNames[i] +
                "' is untrained");
  return heads[size_t(i)];
}

UsamHeads train_heads(std::span<const TrainingExample> examples,
                      const TrainConfig& cfg, int hidden_dim) {
  if (examples.empty()) throw Error("training set is empty");
  Dataset base;
  base.dim = kTokenDim;
  base.inputs.reserve(examples.size() * size_t(kTokenDim));
  for (const TrainingExample& ex : examples) {
    if (int(ex.tokens.size()) != kTokenDim)
      throw Error("example '" + ex.sample_id + "' has " +
                  std::to_string(ex.tokens.size()) + " token dims, expected " +
                  std::to_string(kTokenDim));
    base.inputs.insert(base.inputs.end(), ex.tokens.begin(), ex.tokens.end());
  }
  base.targets.resize(examples.size());

  UsamHeads out;
  out.hidden_dim = hidden_dim;
  out.config = cfg;
  for (int h = 0; h < kNumUsamHeads; ++h) {
    for (size_t i = 0; i < examples.size(); ++i) {
      const TrainingExample& ex = examples[i];
      double t = 0.0;
      switch (UsamHead(h)) {
        case UsamHead::ModelL:
        case UsamHead::ModelBPlus:
        case UsamHead::ModelS:
        case UsamHead::ModelT:
          t = ex.iou_model[size_t(h)];
          break;
        case UsamHead::RefinedPrompt: t = ex.iou_refined; break;
        case UsamHead::SamSelected: t = ex.iou_sam_selected; break;
        case UsamHead::DeltaModel:
          t = (ex.iou_model[size_t(ModelId::L)] -
               ex.iou_model[size_t(ModelId::T)] + 1.0) / 2.0;
          break;
        case UsamHead::DeltaPrompt:
          t = (ex.iou_refined - ex.iou_model[size_t(ex.source)] + 1.0) / 2.0;
          break;
        case UsamHead::DeltaTask:
          t = (ex.iou_model[size_t(ex.source)] - ex.iou_sam_selected + 1.0) /
              2.0;
          break;
      }
      base.targets[i] = clamp_target(t);
    }
    TrainConfig head_cfg = cfg;
    head_cfg.seed = mix64(cfg.seed, 0x4ead, uint64_t(h));
    out.heads[size_t(h)] = train_mlp(base, head_cfg, hidden_dim).model;
    out.trained[size_t(h)] = true;
  }
  return out;
}

double predicted_iou(const UsamHeads& heads, std::span<const double> tokens,
                     ModelId model) {
  return heads.head(model_head(model)).forward(tokens);
}

UncScore predictive_uncertainty(const UsamHeads& heads,
                                std::span<const double> tokens,
                                ModelId source_model) {
  return make_score(MethodTag::UsamUncertainty,
                    1.0 - predicted_iou(heads, tokens, source_model));
}

double delta_model(const UsamHeads& heads, std::span<const double> tokens) {
  return predicted_iou(heads, tokens, ModelId::L) -
         predicted_iou(heads, tokens, ModelId::T);
}

double delta_prompt(const UsamHeads& heads, std::span<const double> tokens,
                    ModelId source_model) {
  return heads.head(UsamHead::RefinedPrompt).forward(tokens) -
         predicted_iou(heads, tokens, source_model);
}

double delta_task(const UsamHeads& heads, std::span<const double> tokens,
                  ModelId source_model) {
  return predicted_iou(heads, tokens, source_model) -
         heads.head(UsamHead::SamSelected).forward(tokens);
}

double direct_delta(const UsamHeads& heads, DeltaKind kind,
                    std::span<const double> tokens) {
  return 2.0 * heads.head(delta_head(kind)).forward(tokens) - 1.0;
}

void zero_tokens(std::vector<TrainingExample>& examples, TokenZeroing z) {
  if (z == TokenZeroing::None) return;
  const size_t lo = z == TokenZeroing::MaskToken ? 0 : size_t(kMaskTokenDim);
  const size_t hi =
      z == TokenZeroing::MaskToken ? size_t(kMaskTokenDim) : size_t(kTokenDim);
  for (TrainingExample& ex : examples)
    std::fill(ex.tokens.begin() + long(lo), ex.tokens.begin() + long(hi), 0.0);
}

UsamHeads token_ablation(const HeadsTrainFn& train_fn,
                         std::span<const TrainingExample> dataset,
                         TokenZeroing zero, const TrainConfig& cfg) {
  std::vector<TrainingExample> copy(dataset.begin(), dataset.end());
  zero_tokens(copy, zero);
  return train_fn(copy, cfg);
}

void save_heads(const UsamHeads& heads, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec)
    throw Error("cannot create head bundle directory '" + dir +
                "': " + ec.message());
  nlohmann::json manifest;
  manifest["token_layout_version"] = kTokenLayoutVersion;
  manifest["hidden_dim"] = heads.hidden_dim;
  manifest["config"] = {
      {"epochs", heads.config.epochs},
      {"batch_size", heads.config.batch_size},
      {"learning_rate", heads.config.learning_rate},
      {"momentum", heads.config.momentum},
      {"weight_decay", heads.config.weight_decay},
      {"seed", heads.config.seed},
  };
  nlohmann::json files = nlohmann::json::object();
  for (int h = 0; h < kNumUsamHeads; ++h) {
    if (!heads.trained[size_t(h)]) continue;
    const std::string file = std::string(kHeadNames[h]) + ".bin";
    save_checkpoint(heads.heads[size_t(h)], (fs::path(dir) / file).string());
    files[kHeadNames[h]] = file;
  }
  manifest["heads"] = files;
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(manifest_path);
  if (!out) throw Error("cannot write '" + manifest_path + "'");
  out << manifest.dump(2) << "\n";
}

UsamHeads load_heads(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream in(manifest_path);
  if (!in) throw Error("cannot open head bundle manifest '" + manifest_path + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error("head bundle manifest '" + manifest_path +
                "' is not valid JSON: " + e.what());
  }
  const int version = manifest.at("token_layout_version").get<int>();
  if (version != kTokenLayoutVersion)
    throw Error("head bundle '" + dir + "' uses token layout version " +
                std::to_string(version) + ", expected " +
                std::to_string(kTokenLayoutVersion));
  UsamHeads out;
  out.hidden_dim = manifest.at("hidden_dim").get<int>();
  const auto& cfg = manifest.at("config");
  out.config.epochs = cfg.at("epochs").get<int>();
  out.config.batch_size = cfg.at("batch_size").get<int>();
  out.config.learning_rate = cfg.at("learning_rate").get<double>();
  out.config.momentum = cfg.at("momentum").get<double>();
  out.config.weight_decay = cfg.at("weight_decay").get<double>();
  out.config.seed = cfg.at("seed").get<uint64_t>();
  for (const auto& [name, file] : manifest.at("heads").items()) {
    const UsamHead h = usam_head_from_name(name);
    const std::string path = (fs::path(dir) / file.get<std::string>()).string();
    Mlp p = load_checkpoint(path);
    if (p.hidden_dim != out.hidden_dim)
      throw Error("head '" + name + "' in '" + dir + "' has hidden dim " +
                  std::to_string(p.hidden_dim) + ", manifest says " +
                  std::to_string(out.hidden_dim));
    out.heads[size_t(int(h))] = std::move(p);
    out.trained[size_t(int(h))] = true;
  }
  return out;
}

}  // namespace usamkit
