#include "usamkit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "usamkit/error.hpp"
#include "usamkit/rng.hpp"

namespace usamkit {

std::array<Augmentation, kNumAugs> standard_augmentations() {
  return {Augmentation{AugKind::Identity},
          Augmentation{AugKind::VerticalFlip},
          Augmentation{AugKind::JpegQ10},
          Augmentation{AugKind::JpegQ30},
          Augmentation{AugKind::GaussianBlurK5},
          Augmentation{AugKind::GaussianNoise}};
}

const char* aug_name(AugKind kind) {
  switch (kind) {
    case AugKind::Identity: return "identity";
    case AugKind::VerticalFlip: return "vertical_flip";
    case AugKind::JpegQ10: return "jpeg_q10";
    case AugKind::JpegQ30: return "jpeg_q30";
    case AugKind::GaussianBlurK5: return "gaussian_blur_k5";
    case AugKind::GaussianNoise: return "gaussian_noise";
  }
  fail("aug_name: unknown kind");
}

AugKind aug_from_name(std::string_view name) {
  for (int i = 0; i < kNumAugs; ++i) {
    AugKind kind = AugKind(i);
    if (name == aug_name(kind)) return kind;
  }
  fail("aug_from_name: unknown augmentation '" + std::string(name) + "'");
}

const char* model_name(ModelId id) {
  switch (id) {
    case ModelId::L: return "L";
    case ModelId::BPlus: return "B+";
    case ModelId::S: return "S";
    case ModelId::T: return "T";
  }
  fail("model_name: unknown model");
}

ModelId model_from_name(std::string_view name) {
  for (int i = 0; i < kNumModels; ++i) {
    ModelId id = ModelId(i);
    if (name == model_name(id)) return id;
  }
  fail("model_from_name: unknown model '" + std::string(name) + "'");
}

namespace {

void check_image(const ImageU8& img) {
  if (img.height <= 0 || img.width <= 0 || img.channels != 3 ||
      img.data.size() != size_t(img.height) * img.width * img.channels)
    fail("apply_augmentation: unsupported image shape");
}

ImageU8 flip_rows(const ImageU8& img) {
  ImageU8 out = img;
  const size_t stride = size_t(img.width) * img.channels;
  for (int r = 0; r < img.height; ++r)
    std::copy_n(img.data.data() + size_t(img.height - 1 - r) * stride, stride,
                out.data.data() + size_t(r) * stride);
  out.flipped = !img.flipped;
  return out;
}

ImageU8 gaussian_blur_5(const ImageU8& img, double sigma) {
  double w[5];
  double norm = 0.0;
  for (int i = -2; i <= 2; ++i) {
    w[i + 2] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += w[i + 2];
  }
  for (double& v : w) v /= norm;

  const int h = img.height, ww = img.width, ch = img.channels;
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : v >= hi ? hi - 1 : v; };
  std::vector<double> tmp(img.data.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ww; ++c)
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int i = -2; i <= 2; ++i)
          acc += w[i + 2] * img.at(r, clampi(c + i, ww), k);
        tmp[(size_t(r) * ww + c) * ch + k] = acc;
      }
  ImageU8 out = img;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < ww; ++c)
      for (int k = 0; k < ch; ++k) {
        double acc = 0.0;
        for (int i = -2; i <= 2; ++i)
          acc += w[i + 2] * tmp[(size_t(clampi(r + i, h)) * ww + c) * ch + k];
        double v = std::nearbyint(acc);
        out.at(r, c, k) = uint8_t(v < 0.0 ? 0.0 : v > 255.0 ? 255.0 : v);
      }
  return out;
}

ImageU8 add_gaussian_noise(const ImageU8& img, double sigma, uint64_t seed) {
  ImageU8 out = img;
  Rng rng(seed);
  for (uint8_t& v : out.data) {
    double noisy = std::nearbyint(double(v) + sigma * rng.gaussian());
    v = uint8_t(noisy < 0.0 ? 0.0 : noisy > 255.0 ? 255.0 : noisy);
  }
  return out;
}

}  // namespace

ImageU8 apply_augmentation(const ImageU8& img, const Augmentation& aug,
                           uint64_t seed) {
  check_image(img);
  switch (aug.kind) {
    case AugKind::Identity: return img;
    case AugKind::VerticalFlip: return flip_rows(img);
    case AugKind::JpegQ10: return jpeg_roundtrip(img, 10);
    case AugKind::JpegQ30: return jpeg_roundtrip(img, 30);
    case AugKind::GaussianBlurK5: return gaussian_blur_5(img, aug.blur_sigma);
    case AugKind::GaussianNoise:
      return add_gaussian_noise(img, aug.noise_sigma, seed);
  }
  fail("apply_augmentation: unknown kind");
}

PointPrompt centroid_prompt(const BinaryMask& gt) {
  double sum_r = 0.0, sum_c = 0.0;
  size_t n = 0;
  for (int r = 0; r < gt.height; ++r)
    for (int c = 0; c < gt.width; ++c)
      if (gt.at(r, c)) {
        sum_r += r;
        sum_c += c;
        ++n;
      }
  if (n == 0) fail("centroid_prompt: empty mask");
  const double cr = sum_r / double(n), cc = sum_c / double(n);

  double best = -1.0;
  std::pair<int, int> best_pt{0, 0};
  for (int r = 0; r < gt.height; ++r)
    for (int c = 0; c < gt.width; ++c) {
      if (!gt.at(r, c)) continue;
      double d = (r - cr) * (r - cr) + (c - cc) * (c - cc);
      if (best < 0.0 || d < best) {  // row-major scan keeps lexicographic ties
        best = d;
        best_pt = {r, c};
      }
    }
  return PointPrompt{{best_pt}};
}

PointPrompt sample_prompt_points(const BinaryMask& gt, int k, uint64_t seed,
                                 PromptMode mode) {
  if (k < 1) fail("sample_prompt_points: k must be >= 1");
  std::vector<std::pair<int, int>> fg;
  for (int r = 0; r < gt.height; ++r)
    for (int c = 0; c < gt.width; ++c)
      if (gt.at(r, c)) fg.emplace_back(r, c);
  if (int(fg.size()) < k)
    fail("sample_prompt_points: need " + std::to_string(k) +
         " foreground pixels, mask has " + std::to_string(fg.size()));

  PointPrompt prompt;
  if (mode == PromptMode::UniformRandom) {
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
      size_t j = i + rng.next() % (fg.size() - i);
      std::swap(fg[i], fg[j]);
      prompt.points.push_back(fg[i]);
    }
    return prompt;
  }

  // Farthest-point sampling; the seed is unused in this mode.
  prompt.points.push_back(centroid_prompt(gt).points[0]);
  std::vector<double> min_d2(fg.size());
  auto d2 = [](std::pair<int, int> a, std::pair<int, int> b) {
    double dr = a.first - b.first, dc = a.second - b.second;
    return dr * dr + dc * dc;
  };
  for (size_t i = 0; i < fg.size(); ++i) min_d2[i] = d2(fg[i], prompt.points[0]);
  for (int step = 1; step < k; ++step) {
    double best = -1.0;
    size_t best_i = 0;
    for (size_t i = 0; i < fg.size(); ++i) {
      if (min_d2[i] > best) {  // strict: ties keep the row-major earliest
        best = min_d2[i];
        best_i = i;
      }
    }
    prompt.points.push_back(fg[best_i]);
    for (size_t i = 0; i < fg.size(); ++i)
      min_d2[i] = std::min(min_d2[i], d2(fg[i], fg[best_i]));
  }
  return prompt;
}

std::vector<SampleConfig> enumerate_configs(int n_prompts) {
  if (n_prompts < 1) fail("enumerate_configs: n_prompts must be >= 1");
  std::vector<SampleConfig> out;
  out.reserve(size_t(kNumAugs) * n_prompts * kNumModels * kNumHeads);
  for (int a = 0; a < kNumAugs; ++a)
    for (int p = 0; p < n_prompts; ++p)
      for (int m = 0; m < kNumModels; ++m)
        for (int h = 0; h < kNumHeads; ++h)
          out.push_back(SampleConfig{a, p, ModelId(m), h});
  return out;
}

}  // namespace usamkit
