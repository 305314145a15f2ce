#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "usamkit/backend.hpp"
#include "usamkit/bayes.hpp"
#include "usamkit/error.hpp"
#include "usamkit/rng.hpp"
#include "usamkit/sampling.hpp"

using namespace usamkit;

namespace {

ProbMask hard_mask(int h, int w, const std::vector<int>& fg) {
  ProbMask m(h, w);
  for (int i : fg) m.data[size_t(i)] = 1.0;
  return m;
}

SampleSet degenerate_set(const BinaryMask& gt, int n_prompts) {
  SampleSet s;
  s.image_id = "hand-built";
  s.gt = gt;
  s.n_prompts = n_prompts;
  s.degenerate = true;
  return s;
}

void add_record(SampleSet& s, int aug, int prompt, ModelId model, int head,
                ProbMask mask, double score) {
  SampleRecord rec;
  rec.config = SampleConfig{aug, prompt, model, head};
  rec.mask = std::move(mask);
  rec.sam_score = score;
  s.records.push_back(std::move(rec));
}

// Independent oracle: explicit weighted sum + direct entropy formula.
double oracle_entropy(const std::vector<double>& mix) {
  double norm = 0.0;
  for (double y : mix) norm += y;
  if (norm == 0.0) return 0.0;
  double h = 0.0;
  for (double y : mix) {
    if (y == 0.0 || y == 1.0) continue;
    const double pc = std::clamp(y, 1e-7, 1.0 - 1e-7);
    h += (y / norm) * (-(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc)) /
                       std::log(2.0));
  }
  return h;
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return v[size_t(a)] < v[size_t(b)]; });
    std::vector<double> r(v.size());
    for (size_t i = 0; i < idx.size(); ++i) r[size_t(idx[i])] = double(i);
    return r;
  };
  const std::vector<double> rx = ranks(x), ry = ranks(y);
  const double n = double(x.size());
  double mx = (n - 1) / 2, sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - mx);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - mx) * (ry[i] - mx);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("task probabilities normalize SamScores") {
  const TaskProbs tp = task_probs({0.9, 0.6, 0.5});
  CHECK(tp.probs[0] == doctest::Approx(0.45).epsilon(1e-12));
  CHECK(tp.probs[1] == doctest::Approx(0.30).epsilon(1e-12));
  CHECK(tp.probs[2] == doctest::Approx(0.25).epsilon(1e-12));

  const TaskProbs uniform = task_probs({0, 0, 0});
  for (double p : uniform.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const TaskProbs certain = task_probs({1, 0, 0});
  CHECK(certain.probs == std::array<double, 3>{1, 0, 0});

  CHECK_THROWS_AS((void)task_probs({0.5, -0.1, 0.2}), Error);

  Rng rng(8);
  for (int i = 0; i < 100; ++i) {
    const TaskProbs p = task_probs({rng.uniform(), rng.uniform(), rng.uniform()});
    CHECK(std::abs(p.probs[0] + p.probs[1] + p.probs[2] - 1.0) <= 1e-9);
  }
}

TEST_CASE("best head picks max thresholded IoU with lowest-index ties") {
  BinaryMask gt(1, 7);
  for (int c = 0; c < 7; ++c) gt.at(0, c) = 1;

  const ProbMask exact = hard_mask(1, 7, {0, 1, 2, 3, 4, 5, 6});
  const ProbMask empty(1, 7);
  CHECK(best_head(gt, {&empty, &exact, &empty}) == 1);
  CHECK(best_head(gt, {&exact, &exact, &exact}) == 0);

  // IoUs 3/7, 3/7, 2/7: heads 0 and 1 tie, lowest index wins.
  const ProbMask left = hard_mask(1, 7, {0, 1, 2});
  const ProbMask right = hard_mask(1, 7, {4, 5, 6});
  const ProbMask small = hard_mask(1, 7, {0, 1});
  CHECK(iou(threshold(left), gt) == doctest::Approx(3.0 / 7));
  CHECK(best_head(gt, {&left, &right, &small}) == 0);
}

TEST_CASE("predictive entropy: certain and maximally conflicting mixtures") {
  BinaryMask gt(1, 6);
  for (int c = 0; c < 3; ++c) gt.at(0, c) = 1;
  const ProbMask a = hard_mask(1, 6, {0, 1, 2});
  const ProbMask b = hard_mask(1, 6, {3, 4, 5});

  // Every record the same hard mask; dyadic scores keep weights exact.
  SampleSet same = degenerate_set(gt, 1);
  for (int m = 0; m < 2; ++m)
    for (int h = 0; h < 3; ++h)
      add_record(same, 0, 0, ModelId(m), h, a, h == 0 ? 2.0 : 1.0);
  const UncScore hs = predictive_entropy(same);
  CHECK(hs.value == 0.0);
  CHECK(hs.method == MethodTag::PredictiveEntropy);

  // Non-dyadic weights leave pixels at 1-ulp, where the log clamp floors
  // the per-pixel entropy at -log2(1 - 1e-7) ~ 1.44e-7.
  SampleSet same2 = degenerate_set(gt, 1);
  for (int m = 0; m < 2; ++m)
    for (int h = 0; h < 3; ++h) add_record(same2, 0, 0, ModelId(m), h, a, 1.0);
  CHECK(predictive_entropy(same2).value <= 1e-6);

  // Two complementary equal-area hard masks in two cells -> all 0.5 -> 1.0.
  SampleSet conflict = degenerate_set(gt, 2);
  add_record(conflict, 0, 0, ModelId::L, 0, a, 0.7);
  add_record(conflict, 0, 1, ModelId::L, 0, b, 0.7);
  CHECK(predictive_entropy(conflict).value == 1.0);
}

TEST_CASE("predictive entropy ignores refined-prompt records and record order") {
  BinaryMask gt(1, 4);
  gt.at(0, 0) = 1;
  const ProbMask a = hard_mask(1, 4, {0});
  const ProbMask c = hard_mask(1, 4, {0, 1, 2, 3});

  SampleSet s = degenerate_set(gt, 2);
  add_record(s, 0, 0, ModelId::L, 0, a, 0.9);
  add_record(s, 1, 1, ModelId::T, 2, c, 0.4);
  const double base = predictive_entropy(s).value;

  SampleSet with_refined = s;
  ProbMask half(1, 4);
  std::fill(half.data.begin(), half.data.end(), 0.5);
  add_record(with_refined, 0, kRefinedPromptIndex, ModelId::L, 0, half, 0.9);
  CHECK(predictive_entropy(with_refined).value == base);

  SampleSet reordered = degenerate_set(gt, 2);
  add_record(reordered, 1, 1, ModelId::T, 2, c, 0.4);
  add_record(reordered, 0, 0, ModelId::L, 0, a, 0.9);
  CHECK(predictive_entropy(reordered).value == base);
}

TEST_CASE("predictive entropy matches a brute-force oracle on tiny grids") {
  Rng rng(314);
  for (int trial = 0; trial < 50; ++trial) {
    BinaryMask gt(2, 3);
    gt.at(0, 0) = 1;

    SampleSet s = degenerate_set(gt, 2);
    ProbMask m0(2, 3), m1(2, 3), m2(2, 3), m3(2, 3);
    for (int i = 0; i < 6; ++i) {
      m0.data[size_t(i)] = rng.uniform();
      m1.data[size_t(i)] = rng.uniform();
      m2.data[size_t(i)] = rng.uniform();
      m3.data[size_t(i)] = rng.uniform();
    }
    const double s0 = 0.9, s1 = 0.6, s2 = 0.5;
    add_record(s, 0, 0, ModelId::L, 0, m0, s0);
    add_record(s, 0, 0, ModelId::L, 1, m1, s1);
    add_record(s, 0, 0, ModelId::L, 2, m2, s2);
    add_record(s, 2, 1, ModelId::S, 2, m3, 0.0);  // lone head, zero score

    std::vector<double> mix(6, 0.0);
    const double sum = s0 + s1 + s2;
    for (int i = 0; i < 6; ++i)
      mix[size_t(i)] = 0.5 * (s0 / sum * m0.data[size_t(i)] +
                              s1 / sum * m1.data[size_t(i)] +
                              s2 / sum * m2.data[size_t(i)]) +
                       0.5 * m3.data[size_t(i)];
    CHECK(predictive_entropy(s).value ==
          doctest::Approx(oracle_entropy(mix)).epsilon(1e-12));
  }
}

TEST_CASE("predictive entropy demands the full grid outside degenerate mode") {
  SyntheticWorld w;
  SampleSet train = generate_sample_set(w, 5, "s", 8, GridKind::Train);
  CHECK_THROWS_WITH_AS((void)predictive_entropy(train),
                       doctest::Contains("missing"), Error);
  SampleSet full = generate_sample_set(w, 5, "s", 2, GridKind::Full);
  CHECK_NOTHROW((void)predictive_entropy(full));
  SampleSet dropped = full;
  dropped.records.erase(dropped.records.begin() + 40);
  CHECK_THROWS_AS((void)predictive_entropy(dropped), Error);
  SampleSet dup = full;
  dup.records.push_back(dup.records[0]);
  CHECK_THROWS_WITH_AS((void)predictive_entropy(dup),
                       doctest::Contains("duplicate"), Error);
}

TEST_CASE("epistemic entropy mixes best heads across models") {
  BinaryMask gt(1, 6);
  for (int c = 0; c < 3; ++c) gt.at(0, c) = 1;
  const ProbMask a = hard_mask(1, 6, {0, 1, 2});
  const ProbMask b = hard_mask(1, 6, {3, 4, 5});

  SampleSet agree = degenerate_set(gt, 1);
  for (int m = 0; m < 4; ++m) add_record(agree, 0, 0, ModelId(m), 0, a, 0.9);
  CHECK(epistemic_entropy(agree, 0, gt).value == 0.0);

  SampleSet split = degenerate_set(gt, 1);
  add_record(split, 0, 0, ModelId::L, 0, a, 0.9);
  add_record(split, 0, 0, ModelId::BPlus, 0, a, 0.9);
  add_record(split, 0, 0, ModelId::S, 0, b, 0.9);
  add_record(split, 0, 0, ModelId::T, 0, b, 0.9);
  const UncScore h = epistemic_entropy(split, 0, gt);
  CHECK(h.value == 1.0);
  CHECK(h.method == MethodTag::EpistemicEntropy);

  // Best-head selection: junk siblings must not affect the mixture.
  SampleSet with_junk = degenerate_set(gt, 1);
  for (int m = 0; m < 4; ++m) {
    add_record(with_junk, 0, 0, ModelId(m), 0, hard_mask(1, 6, {5}), 0.2);
    add_record(with_junk, 0, 0, ModelId(m), 1, a, 0.9);
  }
  CHECK(epistemic_entropy(with_junk, 0, gt).value == 0.0);

  SyntheticWorld w;
  SampleSet train = generate_sample_set(w, 9, "s", 8, GridKind::Train);
  CHECK_NOTHROW((void)epistemic_entropy(train, 0, train.gt));
  CHECK_THROWS_WITH_AS((void)epistemic_entropy(train, 3, train.gt),
                       doctest::Contains("prompt 3"), Error);
  CHECK_THROWS_AS((void)epistemic_entropy(train, 99, train.gt), Error);
}

TEST_CASE("prompt entropy mixes best heads across prompts, order-invariant") {
  BinaryMask gt(1, 6);
  for (int c = 0; c < 3; ++c) gt.at(0, c) = 1;
  const ProbMask a = hard_mask(1, 6, {0, 1, 2});
  const ProbMask b = hard_mask(1, 6, {3, 4, 5});

  SampleSet agree = degenerate_set(gt, 3);
  for (int p = 0; p < 3; ++p) add_record(agree, 0, p, ModelId::T, 0, a, 0.9);
  CHECK(prompt_entropy(agree, ModelId::T, gt).value == 0.0);

  SampleSet conflict = degenerate_set(gt, 2);
  add_record(conflict, 0, 0, ModelId::T, 0, a, 0.9);
  add_record(conflict, 0, 1, ModelId::T, 0, b, 0.9);
  CHECK(prompt_entropy(conflict, ModelId::T, gt).value == 1.0);

  SampleSet reordered = degenerate_set(gt, 2);
  add_record(reordered, 0, 1, ModelId::T, 0, b, 0.9);
  add_record(reordered, 0, 0, ModelId::T, 0, a, 0.9);
  CHECK(prompt_entropy(reordered, ModelId::T, gt).value == 1.0);

  // Other models' records don't leak in.
  add_record(reordered, 0, 0, ModelId::L, 0, a, 0.9);
  CHECK(prompt_entropy(reordered, ModelId::T, gt).value == 1.0);
  CHECK_THROWS_AS((void)prompt_entropy(reordered, ModelId::S, gt), Error);
}

TEST_CASE("task entropy weights the three heads by their SamScores") {
  BinaryMask gt(1, 6);
  gt.at(0, 0) = 1;
  const ProbMask a = hard_mask(1, 6, {0, 1});
  const ProbMask b = hard_mask(1, 6, {2, 3});
  const ProbMask c = hard_mask(1, 6, {4, 5});

  SampleSet same = degenerate_set(gt, 1);
  for (int h = 0; h < 3; ++h) add_record(same, 0, 0, ModelId::L, h, a, 0.5);
  CHECK(task_entropy(same, 0, ModelId::L).value == 0.0);

  // Pairwise-disjoint equal-area hard masks, uniform scores:
  // every union pixel mixes to 1/3, H_b(1/3) = 0.9182958340544896.
  SampleSet disjoint = degenerate_set(gt, 1);
  add_record(disjoint, 0, 0, ModelId::L, 0, a, 0.4);
  add_record(disjoint, 0, 0, ModelId::L, 1, b, 0.4);
  add_record(disjoint, 0, 0, ModelId::L, 2, c, 0.4);
  const UncScore h = task_entropy(disjoint, 0, ModelId::L);
  CHECK(h.value == doctest::Approx(0.9182958340544896).epsilon(1e-9));
  CHECK(h.method == MethodTag::TaskEntropy);

  // Probability mass (1,0,0) degenerates to head 0 alone.
  SampleSet certain = degenerate_set(gt, 1);
  add_record(certain, 0, 0, ModelId::L, 0, a, 1.0);
  add_record(certain, 0, 0, ModelId::L, 1, b, 0.0);
  add_record(certain, 0, 0, ModelId::L, 2, c, 0.0);
  CHECK(task_entropy(certain, 0, ModelId::L).value == 0.0);

  SampleSet incomplete = degenerate_set(gt, 1);
  add_record(incomplete, 0, 0, ModelId::L, 0, a, 1.0);
  CHECK_THROWS_WITH_AS((void)task_entropy(incomplete, 0, ModelId::L),
                       doctest::Contains("head"), Error);
  CHECK_THROWS_AS((void)task_entropy(incomplete, 0, ModelId::S), Error);
}

TEST_CASE("all four estimators stay inside [0,1] on synthetic grids") {
  SyntheticWorld w;
  for (uint64_t seed = 40; seed < 44; ++seed) {
    const SampleSet s = generate_sample_set(w, seed, "s", 2, GridKind::Full);
    const double hy = predictive_entropy(s).value;
    const double ht = epistemic_entropy(s, 0, s.gt).value;
    const double hp = prompt_entropy(s, ModelId::T, s.gt).value;
    const double ha = task_entropy(s, 0, ModelId::T).value;
    for (double v : {hy, ht, hp, ha}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("epistemic entropy tracks the spread of model quality") {
  // Multiplicative spread around a fixed geometric mean; ratio 1 means all
  // four models are equally corrupted.
  const std::vector<double> ratios = {1.0, 1.3, 1.6, 2.0, 2.4};
  const double offs[4] = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};
  std::vector<double> means;
  for (double k : ratios) {
    SyntheticWorld w;
    for (int m = 0; m < 4; ++m) w.model_noise[m] = 0.9 * std::pow(k, offs[m]);
    double mean = 0.0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
      const SampleSet set =
          generate_sample_set(w, 100 + uint64_t(i), "s", 8, GridKind::Train);
      mean += epistemic_entropy(set, 0, set.gt).value / n;
    }
    means.push_back(mean);
  }
  CHECK(spearman(ratios, means) > 0.9);
}
