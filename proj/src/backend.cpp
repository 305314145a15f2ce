#include "usamkit/backend.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "usamkit/error.hpp"
#include "usamkit/rng.hpp"

namespace usamkit {

const char* grid_name(GridKind kind) {
  switch (kind) {
    case GridKind::Full: return "full";
    case GridKind::Train: return "train";
  }
  fail("grid_name: unknown kind");
}

void SyntheticWorld::validate() const {
  if (height < 16 || width < 16)
    fail("SyntheticWorld: image size must be at least 16x16");
  for (double s : model_noise)
    if (!(s >= 0.0)) fail("SyntheticWorld: model_noise must be non-negative");
  const double l = model_noise[int(ModelId::L)];
  const double bp = model_noise[int(ModelId::BPlus)];
  const double s = model_noise[int(ModelId::S)];
  const double t = model_noise[int(ModelId::T)];
  if (!(t >= s && s >= bp && bp >= l))
    fail("SyntheticWorld: corruption must satisfy T >= S >= B+ >= L");
  if (!(prompt_gain >= 0.0))
    fail("SyntheticWorld: prompt_gain must be non-negative");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0))
    fail("SyntheticWorld: ambiguity must lie in [0,1]");
  if (!(score_noise >= 0.0))
    fail("SyntheticWorld: score_noise must be non-negative");
}

namespace {

// Prediction softness: the logistic band around the boundary has width
// max(kMinSoftness, kSoftnessScale * strength), so zero-noise worlds produce
// hard masks while noisy ones expose a graded uncertainty band.
constexpr double kMinSoftness = 0.03;
constexpr double kSoftnessScale = 0.45;
// Single-point prompts inflate corruption by kPromptBoost * q_img; extra
// points divide the inflation through 1 + prompt_gain * (k - 1).
constexpr double kPromptBoost = 1.5;
// Measured photometric corruption (mean abs pixel deviation from the
// canonical rendering) scales strength by up to 1 + kSeverityGain.
constexpr double kSeverityGain = 0.5;
constexpr double kSeverityScale = 20.0;
constexpr int kRefinedPoints = 8;
constexpr int kFieldCell = 7;       // value-noise lattice pitch in pixels
constexpr int kMinObjectArea = 24;  // also guarantees kRefinedPoints prompts
constexpr double kMaxObjectFraction = 0.6;
constexpr double kGroupDilation = 3.0;
constexpr double kPartScale = 0.55;
constexpr int kNumFeatures = 16;

enum : uint64_t {
  kSaltScene = 0x5ce7e01,
  kSaltAmbiguous = 0xa3b190,
  kSaltTexture = 0x7e8715,
  kSaltDifficulty = 0xd1ff1c,
  kSaltPromptNeed = 0x99a0cc,
  kSaltPrompts = 0x903581,
  kSaltAugNoise = 0xa09b33,
  kSaltField = 0xf1e1d5,
  kSaltScore = 0x5c04e9,
  kSaltTokenNoiseMask = 0x70aa01,
  kSaltTokenNoiseIou = 0x70bb02,
  kSaltProjMask = 0x90a1f3,
  kSaltProjIou = 0x90b2e4,
};

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t;

  bool contains(double x, double y) const {
    const double px = x - cx, py = y - cy;
    const double u = (px * cos_t + py * sin_t) / a;
    const double v = (-px * sin_t + py * cos_t) / b;
    return u * u + v * v <= 1.0;
  }
};

void rasterize(const Ellipse& e, BinaryMask& m) {
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (e.contains(c + 0.5, r + 0.5)) m.at(r, c) = 1;
}

// Exact 3x3 chamfer distance (weights 1, sqrt(2)) to the nearest pixel of
// the chosen polarity; two raster passes.
std::vector<double> chamfer_distance(const BinaryMask& m, bool to_fg) {
  const int h = m.height, w = m.width;
  const double big = 2.0 * (h + w);
  const double diag = std::numbers::sqrt2;
  std::vector<double> d(size_t(h) * w);
  for (size_t i = 0; i < d.size(); ++i)
    d[i] = (bool(m.data[i]) == to_fg) ? 0.0 : big;

  auto relax = [&](size_t i, size_t j, double wgt) {
    if (d[j] + wgt < d[i]) d[i] = d[j] + wgt;
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const size_t i = size_t(r) * w + c;
      if (c > 0) relax(i, i - 1, 1.0);
      if (r > 0) {
        relax(i, i - w, 1.0);
        if (c > 0) relax(i, i - w - 1, diag);
        if (c + 1 < w) relax(i, i - w + 1, diag);
      }
    }
  for (int r = h - 1; r >= 0; --r)
    for (int c = w - 1; c >= 0; --c) {
      const size_t i = size_t(r) * w + c;
      if (c + 1 < w) relax(i, i + 1, 1.0);
      if (r + 1 < h) {
        relax(i, i + w, 1.0);
        if (c + 1 < w) relax(i, i + w + 1, diag);
        if (c > 0) relax(i, i + w - 1, diag);
      }
    }
  return d;
}

// Negative inside the mask, positive outside; |sdf| >= 1 everywhere so the
// zero level never lands on a pixel center.
std::vector<double> signed_distance(const BinaryMask& m) {
  std::vector<double> out = chamfer_distance(m, false);  // distance to bg
  std::vector<double> to_fg = chamfer_distance(m, true);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = m.data[i] ? -out[i] : to_fg[i];
  return out;
}

// Smooth value noise in [-1,1] on a kFieldCell lattice.
double value_noise(uint64_t seed, int r, int c) {
  const double gx = double(c) / kFieldCell, gy = double(r) / kFieldCell;
  const int i0 = int(gx), j0 = int(gy);
  const double fx = gx - i0, fy = gy - j0;
  const double ux = fx * fx * (3.0 - 2.0 * fx);
  const double uy = fy * fy * (3.0 - 2.0 * fy);
  auto corner = [&](int i, int j) {
    return 2.0 * hash01(mix64(seed, uint64_t(i), uint64_t(j))) - 1.0;
  };
  const double v00 = corner(i0, j0), v10 = corner(i0 + 1, j0);
  const double v01 = corner(i0, j0 + 1), v11 = corner(i0 + 1, j0 + 1);
  const double a = v00 + (v10 - v00) * uy;
  const double b = v01 + (v11 - v01) * uy;
  return a + (b - a) * ux;
}

SceneGeometry make_scene(const SyntheticWorld& world, uint64_t sample_seed) {
  const int h = world.height, w = world.width;
  const double minhw = std::min(h, w);
  for (uint64_t attempt = 0; attempt < 64; ++attempt) {
    Rng rng(mix64(world.seed, sample_seed, kSaltScene, attempt));
    const int n_extra = int(rng.next() % 3);  // 1-3 ellipses total

    Ellipse primary;
    primary.cx = rng.uniform(0.32, 0.68) * w;
    primary.cy = rng.uniform(0.32, 0.68) * h;
    primary.a = rng.uniform(0.12, 0.26) * minhw;
    primary.b = rng.uniform(0.12, 0.26) * minhw;
    const double t0 = rng.uniform(0.0, std::numbers::pi);
    primary.cos_t = std::cos(t0);
    primary.sin_t = std::sin(t0);

    BinaryMask object(h, w);
    rasterize(primary, object);
    for (int e = 0; e < n_extra; ++e) {
      Ellipse extra;
      extra.cx = primary.cx + rng.uniform(-0.9, 0.9) * primary.a;
      extra.cy = primary.cy + rng.uniform(-0.9, 0.9) * primary.b;
      const double scale = rng.uniform(0.45, 0.85);
      extra.a = primary.a * scale;
      extra.b = primary.b * scale;
      const double t = rng.uniform(0.0, std::numbers::pi);
      extra.cos_t = std::cos(t);
      extra.sin_t = std::sin(t);
      rasterize(extra, object);
    }

    Ellipse part_e = primary;
    part_e.a *= kPartScale;
    part_e.b *= kPartScale;
    BinaryMask part(h, w);
    rasterize(part_e, part);

    BinaryMask group(h, w);
    std::vector<double> dist = chamfer_distance(object, true);
    for (size_t i = 0; i < dist.size(); ++i)
      group.data[i] = dist[i] <= kGroupDilation ? 1 : 0;

    const size_t obj_area = object.area();
    if (obj_area < size_t(kMinObjectArea)) continue;
    if (double(obj_area) > kMaxObjectFraction * h * w) continue;
    if (part.area() < 4) continue;
    if (part == object || group == object) continue;

    SceneGeometry scene;
    scene.part = std::move(part);
    scene.object = std::move(object);
    scene.group = std::move(group);
    scene.ambiguous =
        hash01(mix64(world.seed, sample_seed, kSaltAmbiguous)) <
        world.ambiguity;
    return scene;
  }
  fail("make_scene: no valid geometry after 64 attempts (seed " +
       std::to_string(sample_seed) + ")");
}

ImageU8 render_scene(const SyntheticWorld& world, const SceneGeometry& scene,
                     uint64_t sample_seed) {
  ImageU8 img(world.height, world.width, 3);
  for (int r = 0; r < world.height; ++r)
    for (int c = 0; c < world.width; ++c) {
      const bool in_part = scene.part.at(r, c);
      const bool in_obj = scene.object.at(r, c);
      const bool in_grp = scene.group.at(r, c);
      const int base[3] = {in_part ? 225 : in_obj ? 195 : 40,
                           in_obj ? 205 : 45, in_grp ? 175 : 55};
      for (int ch = 0; ch < 3; ++ch) {
        const int tex =
            int(hash01(mix64(world.seed, sample_seed, kSaltTexture,
                             uint64_t(r), uint64_t(c), uint64_t(ch))) *
                31.0) -
            15;
        const int v = std::clamp(base[ch] + tex, 0, 255);
        img.at(r, c, ch) = uint8_t(v);
      }
    }
  img.scene_ref = sample_seed + 1;  // 0 stays "no provenance"
  return img;
}

uint64_t hash_prompt(const PointPrompt& p) {
  uint64_t h = 0x9e3779b97f4a7c15ull;
  for (auto [r, c] : p.points) h = mix64(h, uint64_t(r), uint64_t(c));
  return h;
}

const BinaryMask& head_target(const SceneGeometry& scene, int head) {
  if (!scene.ambiguous) return scene.object;
  switch (head) {
    case 0: return scene.object;
    case 1: return scene.part;
    default: return scene.group;
  }
}

double prompt_factor(const SyntheticWorld& world, double q_img, size_t kpts) {
  return 1.0 +
         kPromptBoost * q_img / (1.0 + world.prompt_gain * double(kpts - 1));
}

ProbMask build_prob(std::span<const double> sdf, int h, int w, double strength,
                    uint64_t field_seed) {
  ProbMask p(h, w);
  const double soft = std::max(kMinSoftness, kSoftnessScale * strength);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const size_t i = size_t(r) * w + c;
      const double arg =
          (sdf[i] + strength * (strength > 0.0
                                    ? value_noise(field_seed, r, c)
                                    : 0.0)) /
          soft;
      p.data[i] = 1.0 / (1.0 + std::exp(arg));
    }
  return p;
}

uint64_t world_digest(const SyntheticWorld& w) {
  uint64_t key = mix64(w.seed, uint64_t(w.height), uint64_t(w.width));
  auto fold = [&key](double v) { key = mix64(key, std::bit_cast<uint64_t>(v)); };
  for (double s : w.model_noise) fold(s);
  fold(w.prompt_gain);
  fold(w.ambiguity);
  fold(w.score_noise);
  return key;
}

struct CellStats {
  std::array<double, kNumHeads> obj_iou{};   // against the object GT
  std::array<double, kNumHeads> self_iou{};  // against the head's own target
  std::array<double, kNumHeads> score{};
};

struct ReplayFeatures {
  std::array<double, kNumModels> iou_model{};
  double iou_refined = 0.0;
  double iou_sam_selected = 0.0;
  double iou_own = 0.0;
  double mean_score = 0.0;
  int sel_head = 0;
};

// Canonical-frame reconstruction of one sample, cached per thread: within a
// sample the pipeline issues many forwards, all sharing this state.
struct SampleCtx {
  bool valid = false;
  uint64_t world_key = 0;
  uint64_t sample_seed = 0;
  SceneGeometry scene;
  ImageU8 canonical;
  uint64_t canonical_hash = 0;
  std::array<std::vector<double>, kNumHeads> sdf;  // per head target
  double d_img = 0.0, q_img = 0.0;
  PointPrompt centroid;
  uint64_t centroid_hash = 0;
  PointPrompt refined;
  uint64_t refined_hash = 0;
  std::array<std::optional<CellStats>, kNumModels> centroid_cell;
  std::array<std::optional<double>, kNumModels> refined_iou;
  std::array<std::optional<ReplayFeatures>, kNumModels> replay;
};

const CellStats& centroid_cell(const SyntheticWorld& world, SampleCtx& ctx,
                               int m) {
  if (!ctx.centroid_cell[m]) {
    CellStats cell;
    const double strength = world.model_noise[m] * ctx.d_img *
                            prompt_factor(world, ctx.q_img, 1);
    for (int h = 0; h < kNumHeads; ++h) {
      const BinaryMask& target = head_target(ctx.scene, h);
      const uint64_t fseed = mix64(world.seed, ctx.canonical_hash,
                                   ctx.centroid_hash, uint64_t(m), uint64_t(h),
                                   kSaltField);
      ProbMask p = build_prob(ctx.sdf[h], world.height, world.width, strength,
                              fseed);
      BinaryMask hard = threshold(p);
      cell.obj_iou[h] = iou(hard, ctx.scene.object);
      cell.self_iou[h] = iou(hard, target);
      cell.score[h] = synthetic_sam_score(
          cell.self_iou[h], world.score_noise,
          mix64(world.seed, ctx.canonical_hash, ctx.centroid_hash, uint64_t(m),
                uint64_t(h), kSaltScore));
    }
    ctx.centroid_cell[m] = cell;
  }
  return *ctx.centroid_cell[m];
}

double refined_iou(const SyntheticWorld& world, SampleCtx& ctx, int m) {
  if (!ctx.refined_iou[m]) {
    const double strength =
        world.model_noise[m] * ctx.d_img *
        prompt_factor(world, ctx.q_img, ctx.refined.points.size());
    double best = 0.0;
    for (int h = 0; h < kNumHeads; ++h) {
      const uint64_t fseed = mix64(world.seed, ctx.canonical_hash,
                                   ctx.refined_hash, uint64_t(m), uint64_t(h),
                                   kSaltField);
      ProbMask p = build_prob(ctx.sdf[h], world.height, world.width, strength,
                              fseed);
      best = std::max(best, iou(threshold(p), ctx.scene.object));
    }
    ctx.refined_iou[m] = best;
  }
  return *ctx.refined_iou[m];
}

const ReplayFeatures& replay_features(const SyntheticWorld& world,
                                      SampleCtx& ctx, int source) {
  if (!ctx.replay[source]) {
    ReplayFeatures f;
    for (int m = 0; m < kNumModels; ++m) {
      const CellStats& cell = centroid_cell(world, ctx, m);
      f.iou_model[m] =
          *std::max_element(cell.obj_iou.begin(), cell.obj_iou.end());
    }
    const CellStats& own = centroid_cell(world, ctx, source);
    int sel = 0;
    for (int h = 1; h < kNumHeads; ++h)
      if (own.score[h] > own.score[sel]) sel = h;
    f.sel_head = sel;
    f.iou_sam_selected = own.obj_iou[sel];
    f.mean_score = (own.score[0] + own.score[1] + own.score[2]) / 3.0;
    f.iou_own = f.iou_model[source];
    f.iou_refined = refined_iou(world, ctx, source);
    ctx.replay[source] = f;
  }
  return *ctx.replay[source];
}

SampleCtx& sample_ctx(const SyntheticWorld& world, uint64_t world_key,
                      uint64_t sample_seed) {
  thread_local SampleCtx ctx;
  if (ctx.valid && ctx.world_key == world_key &&
      ctx.sample_seed == sample_seed)
    return ctx;

  ctx = SampleCtx{};
  ctx.world_key = world_key;
  ctx.sample_seed = sample_seed;
  ctx.scene = make_scene(world, sample_seed);
  ctx.canonical = render_scene(world, ctx.scene, sample_seed);
  ctx.canonical_hash = fnv1a64(ctx.canonical.data);
  for (int h = 0; h < kNumHeads; ++h)
    ctx.sdf[h] = signed_distance(head_target(ctx.scene, h));
  ctx.d_img = 0.5 + hash01(mix64(world.seed, sample_seed, kSaltDifficulty));
  ctx.q_img = hash01(mix64(world.seed, sample_seed, kSaltPromptNeed));
  ctx.centroid = centroid_prompt(ctx.scene.object);
  ctx.centroid_hash = hash_prompt(ctx.centroid);
  ctx.refined = sample_prompt_points(ctx.scene.object, kRefinedPoints,
                                     mix64(world.seed, sample_seed,
                                           kSaltPrompts));
  ctx.refined_hash = hash_prompt(ctx.refined);
  ctx.valid = true;
  return ctx;
}

template <typename T>
std::vector<T> flip_rows_flat(const std::vector<T>& v, int h, int w) {
  std::vector<T> out(v.size());
  for (int r = 0; r < h; ++r)
    std::copy_n(v.data() + size_t(h - 1 - r) * w, w,
                out.data() + size_t(r) * w);
  return out;
}

// Feature noise per half; the last four features are pure nuisance.
constexpr std::array<double, kNumFeatures> kFeatureSigma = {
    0.02, 0.02, 0.02, 0.02, 0.04, 0.04, 0.04, 0.08,
    0.06, 0.02, 0.02, 0.02, 1.0,  1.0,  1.0,  1.0};

std::array<double, kNumFeatures> feature_vector(const ReplayFeatures& f,
                                                const SceneGeometry& scene,
                                                double q_img, int model) {
  const double ambiguity_feat =
      scene.ambiguous ? 1.0 - iou(scene.part, scene.group) : 0.0;
  return {f.iou_model[0], f.iou_model[1], f.iou_model[2], f.iou_model[3],
          f.iou_refined, f.iou_sam_selected, f.iou_own,
          q_img * kPromptBoost, ambiguity_feat, double(model) / 3.0,
          double(f.sel_head) / 2.0, f.mean_score, 0.0, 0.0, 0.0, 0.0};
}

}  // namespace

SyntheticSample synthesize_sample(const SyntheticWorld& world,
                                  uint64_t sample_seed) {
  world.validate();
  if (sample_seed == ~uint64_t(0))
    fail("synthesize_sample: sample_seed reserved");
  SceneGeometry scene = make_scene(world, sample_seed);
  SyntheticSample out;
  out.image = render_scene(world, scene, sample_seed);
  out.gt = scene.object;
  out.scene = std::move(scene);
  out.scene_ref = sample_seed;
  return out;
}

double synthetic_sam_score(double true_iou, double sigma, uint64_t seed) {
  if (!(true_iou >= 0.0 && true_iou <= 1.0))
    fail("synthetic_sam_score: true_iou outside [0,1]");
  double v = true_iou;
  if (sigma > 0.0) {
    Rng rng(seed);
    v += sigma * rng.gaussian();
  }
  return std::clamp(v, 0.0, 1.0);
}

SyntheticBackend::SyntheticBackend(const SyntheticWorld& world)
    : world_(world) {
  world_.validate();
  auto build = [this](uint64_t salt) {
    Rng rng(mix64(world_.seed, salt));
    std::vector<double> p(size_t(kMaskTokenDim) * kNumFeatures);
    const double scale = 1.0 / std::sqrt(double(kNumFeatures));
    for (double& v : p) v = rng.gaussian() * scale;
    return p;
  };
  proj_mask_ = build(kSaltProjMask);
  proj_iou_ = build(kSaltProjIou);
}

ForwardOutput SyntheticBackend::forward(const ImageU8& img,
                                        const PointPrompt& prompt,
                                        ModelId model) const {
  if (img.channels != 3 || img.height != world_.height ||
      img.width != world_.width)
    fail("SyntheticBackend::forward: image shape does not match the world");
  if (img.scene_ref == 0)
    fail("SyntheticBackend::forward: image lacks a scene reference; this "
         "backend only consumes images minted by its own world (import real "
         "predictions via record files)");
  if (prompt.points.empty())
    fail("SyntheticBackend::forward: empty prompt");
  for (auto [r, c] : prompt.points)
    if (r < 0 || r >= img.height || c < 0 || c >= img.width)
      fail("SyntheticBackend::forward: prompt point (" + std::to_string(r) +
           "," + std::to_string(c) + ") outside the image");

  const uint64_t world_key = world_digest(world_);
  SampleCtx& ctx = sample_ctx(world_, world_key, img.scene_ref - 1);

  // Photometric severity: mean abs deviation from the canonical rendering
  // in the image's own frame.
  double mad = 0.0;
  {
    const std::vector<uint8_t>* ref = &ctx.canonical.data;
    std::vector<uint8_t> flipped;
    if (img.flipped) {
      flipped = flip_rows_flat(ctx.canonical.data, img.height,
                               img.width * img.channels);
      ref = &flipped;
    }
    for (size_t i = 0; i < img.data.size(); ++i)
      mad += std::abs(int(img.data[i]) - int((*ref)[i]));
    mad /= double(img.data.size());
  }
  const double severity =
      1.0 + kSeverityGain * std::min(1.0, mad / kSeverityScale);

  const uint64_t img_hash = fnv1a64(img.data);
  const uint64_t prompt_hash = hash_prompt(prompt);
  const double strength_base =
      world_.model_noise[int(model)] * ctx.d_img *
      prompt_factor(world_, ctx.q_img, prompt.points.size()) * severity;

  ForwardOutput out;
  for (int h = 0; h < kNumHeads; ++h) {
    std::vector<double> sdf = ctx.sdf[h];
    if (img.flipped) sdf = flip_rows_flat(sdf, img.height, img.width);
    const uint64_t fseed = mix64(world_.seed, img_hash, prompt_hash,
                                 uint64_t(model), uint64_t(h), kSaltField);
    out.masks[h] = build_prob(sdf, img.height, img.width, strength_base, fseed);

    BinaryMask target = head_target(ctx.scene, h);
    if (img.flipped) target.data = flip_rows_flat(target.data, img.height,
                                                  img.width);
    const double self_iou = iou(threshold(out.masks[h]), target);
    out.sam_scores[h] = synthetic_sam_score(
        self_iou, world_.score_noise,
        mix64(world_.seed, img_hash, prompt_hash, uint64_t(model), uint64_t(h),
              kSaltScore));
  }

  // Tokens: every underlying feature appears in both halves with
  // independent noise, projected through the world's fixed random matrices.
  const ReplayFeatures& rf = replay_features(world_, ctx, int(model));
  const std::array<double, kNumFeatures> z =
      feature_vector(rf, ctx.scene, ctx.q_img, int(model));
  out.tokens.assign(kTokenDim, 0.0);
  const std::array<uint64_t, 2> noise_salt = {kSaltTokenNoiseMask,
                                              kSaltTokenNoiseIou};
  const std::array<const std::vector<double>*, 2> proj = {&proj_mask_,
                                                          &proj_iou_};
  for (int half = 0; half < 2; ++half) {
    Rng noise(mix64(world_.seed, img_hash, prompt_hash, uint64_t(model),
                    noise_salt[half]));
    std::array<double, kNumFeatures> zn;
    for (int j = 0; j < kNumFeatures; ++j)
      zn[j] = z[j] + kFeatureSigma[j] * noise.gaussian();
    const std::vector<double>& P = *proj[half];
    double* l = out.tokens.data() + half * kMaskTokenDim;
    for (int i = 0; i < kMaskTokenDim; ++i) {
      double acc = 0.0;
      for (int j = 0; j < kNumFeatures; ++j)
        acc += P[size_t(i) * kNumFeatures + j] * zn[j];
      l[i] = acc;
    }
  }
  return out;
}

namespace {

PointPrompt flip_prompt(const PointPrompt& p, int height) {
  PointPrompt out = p;
  for (auto& [r, c] : out.points) r = height - 1 - r;
  return out;
}

void append_cell(const SyntheticBackend& backend, const ImageU8& img,
                 const PointPrompt& prompt, int aug_index, int prompt_index,
                 int model, SampleSet& set) {
  ForwardOutput fwd = backend.forward(img, prompt, ModelId(model));
  for (int h = 0; h < kNumHeads; ++h) {
    SampleRecord rec;
    rec.config = SampleConfig{aug_index, prompt_index, ModelId(model), h};
    rec.sam_score = fwd.sam_scores[h];
    rec.tokens = fwd.tokens;
    rec.mask = std::move(fwd.masks[h]);
    if (img.flipped)
      rec.mask.data = flip_rows_flat(rec.mask.data, img.height, img.width);
    set.records.push_back(std::move(rec));
  }
}

}  // namespace

SampleSet generate_sample_set(const SyntheticWorld& world, uint64_t scene_ref,
                              const std::string& image_id, int n_prompts,
                              GridKind grid, PromptMode mode) {
  SyntheticSample sample = synthesize_sample(world, scene_ref);
  const SyntheticBackend backend(world);
  const PointPrompt all_points =
      sample_prompt_points(sample.gt, n_prompts,
                           mix64(world.seed, scene_ref, kSaltPrompts), mode);

  SampleSet set;
  set.image_id = image_id;
  set.gt = sample.gt;
  set.n_prompts = n_prompts;

  if (grid == GridKind::Full) {
    const std::array<Augmentation, kNumAugs> augs = standard_augmentations();
    for (int a = 0; a < kNumAugs; ++a) {
      const ImageU8 aimg = apply_augmentation(
          sample.image, augs[a],
          mix64(world.seed, scene_ref, kSaltAugNoise, uint64_t(a)));
      for (int p = 0; p < n_prompts; ++p) {
        PointPrompt pr;
        pr.points.push_back(all_points.points[p]);
        if (aimg.flipped) pr = flip_prompt(pr, aimg.height);
        for (int m = 0; m < kNumModels; ++m)
          append_cell(backend, aimg, pr, a, p, m, set);
      }
    }
  } else {
    PointPrompt pr;
    pr.points.push_back(all_points.points[0]);
    for (int m = 0; m < kNumModels; ++m)
      append_cell(backend, sample.image, pr, 0, 0, m, set);
  }

  for (int m = 0; m < kNumModels; ++m)
    append_cell(backend, sample.image, all_points, 0, kRefinedPromptIndex, m,
                set);
  return set;
}

std::vector<double> synthetic_tokens(const SyntheticWorld& world,
                                     const SyntheticSample& sample,
                                     const SampleConfig& config, int n_prompts,
                                     PromptMode mode) {
  world.validate();
  if (config.aug_index < 0 || config.aug_index >= kNumAugs)
    fail("synthetic_tokens: aug_index out of range");
  if (config.prompt_index != kRefinedPromptIndex &&
      (config.prompt_index < 0 || config.prompt_index >= n_prompts))
    fail("synthetic_tokens: prompt_index out of range");
  if (config.head < 0 || config.head >= kNumHeads)
    fail("synthetic_tokens: head out of range");

  const SyntheticBackend backend(world);
  const PointPrompt all_points = sample_prompt_points(
      sample.gt, n_prompts, mix64(world.seed, sample.scene_ref, kSaltPrompts),
      mode);
  ImageU8 img = sample.image;
  if (config.aug_index != 0) {
    const std::array<Augmentation, kNumAugs> augs = standard_augmentations();
    img = apply_augmentation(sample.image, augs[config.aug_index],
                             mix64(world.seed, sample.scene_ref, kSaltAugNoise,
                                   uint64_t(config.aug_index)));
  }
  PointPrompt pr;
  if (config.prompt_index == kRefinedPromptIndex) {
    pr = all_points;
  } else {
    pr.points.push_back(all_points.points[config.prompt_index]);
  }
  if (img.flipped) pr = flip_prompt(pr, img.height);
  return backend.forward(img, pr, config.model).tokens;
}

}  // namespace usamkit
