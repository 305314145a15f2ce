#include "usamkit/kernels.hpp"

#include <cmath>

#include "usamkit/mask.hpp"

namespace usamkit {

namespace {

int g_thread_cap = 0;

// Mirrors binary_entropy() exactly, minus the domain checks (callers hold
// the ProbMask [0,1] invariant).
inline double hb(double p) {
  if (p == 0.0 || p == 1.0) return 0.0;
  const double pc = p < kProbClamp ? kProbClamp
                    : p > 1.0 - kProbClamp ? 1.0 - kProbClamp
                                           : p;
  return -(p * std::log2(pc) + (1.0 - p) * std::log2(1.0 - pc));
}

inline float hbf(float p) {
  if (p == 0.0f || p == 1.0f) return 0.0f;
  constexpr float eps = 1e-7f;
  const float pc = p < eps ? eps : p > 1.0f - eps ? 1.0f - eps : p;
  return -(p * std::log2f(pc) + (1.0f - p) * std::log2f(1.0f - pc));
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  if (g_thread_cap > 0 && g_thread_cap < n) n = g_thread_cap;
  return n;
}

void set_thread_cap(int cap) {
  g_thread_cap = cap > 0 ? cap : 0;
#ifdef _OPENMP
  if (cap > 0) omp_set_num_threads(cap);
#endif
}

namespace serial {

double weighted_mask_entropy(std::span<const double> y) {
  double norm = 0.0;
  double acc = 0.0;
  for (double v : y) {
    norm += v;
    acc += v * hb(v);
  }
  if (norm == 0.0) return 0.0;
  return acc / norm;
}

double mean_fg_entropy(std::span<const double> y, std::span<const uint8_t> fg) {
  double acc = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    if (fg[i]) {
      acc += hb(y[i]);
      ++n;
    }
  }
  if (n == 0) return 0.0;
  return acc / double(n);
}

void axpy(std::span<double> acc, std::span<const double> y, double w) {
  for (size_t i = 0; i < acc.size(); ++i) acc[i] += w * y[i];
}

}  // namespace serial

namespace par {

double weighted_mask_entropy(std::span<const double> y) {
  double norm = 0.0;
  double acc = 0.0;
  const int64_t n = int64_t(y.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : norm, acc)
#endif
  for (int64_t i = 0; i < n; ++i) {
    norm += y[i];
    acc += y[i] * hb(y[i]);
  }
  if (norm == 0.0) return 0.0;
  return acc / norm;
}

double mean_fg_entropy(std::span<const double> y, std::span<const uint8_t> fg) {
  double acc = 0.0;
  int64_t cnt = 0;
  const int64_t n = int64_t(y.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : acc, cnt)
#endif
  for (int64_t i = 0; i < n; ++i) {
    if (fg[i]) {
      acc += hb(y[i]);
      ++cnt;
    }
  }
  if (cnt == 0) return 0.0;
  return acc / double(cnt);
}

void axpy(std::span<double> acc, std::span<const double> y, double w) {
  double* a = acc.data();
  const double* b = y.data();
  const int64_t n = int64_t(acc.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) a[i] += w * b[i];
}

}  // namespace par

namespace fast32 {

float weighted_mask_entropy(std::span<const float> y) {
  float norm = 0.0f;
  float acc = 0.0f;
  for (float v : y) {
    norm += v;
    acc += v * hbf(v);
  }
  if (norm == 0.0f) return 0.0f;
  return acc / norm;
}

float weighted_mask_entropy_par(std::span<const float> y) {
  float norm = 0.0f;
  float acc = 0.0f;
  const int64_t n = int64_t(y.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(+ : norm, acc)
#endif
  for (int64_t i = 0; i < n; ++i) {
    norm += y[i];
    acc += y[i] * hbf(y[i]);
  }
  if (norm == 0.0f) return 0.0f;
  return acc / norm;
}

}  // namespace fast32

}  // namespace usamkit
