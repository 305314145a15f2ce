#pragma once

#include <cstdint>
#include <span>

#ifdef _OPENMP
#include <omp.h>
#endif

// Hot numeric kernels in two flavours: a serial f64 reference with fixed
// accumulation order (the mode every acceptance test runs in) and OpenMP
// variants for throughput. tools/bench_kernels.cpp compares them; unit tests
// bound their disagreement.

namespace usamkit {

// Effective worker count honouring set_thread_cap / USAMKIT_THREADS.
int max_threads();
// cap <= 0 resets to the OpenMP default.
void set_thread_cap(int cap);

namespace serial {

double weighted_mask_entropy(std::span<const double> y);
double mean_fg_entropy(std::span<const double> y, std::span<const uint8_t> fg);
// acc += w * y
void axpy(std::span<double> acc, std::span<const double> y, double w);

}  // namespace serial

namespace par {

double weighted_mask_entropy(std::span<const double> y);
double mean_fg_entropy(std::span<const double> y, std::span<const uint8_t> fg);
void axpy(std::span<double> acc, std::span<const double> y, double w);

}  // namespace par

namespace fast32 {

float weighted_mask_entropy(std::span<const float> y);
float weighted_mask_entropy_par(std::span<const float> y);

}  // namespace fast32

// Static-schedule parallel loop over [0, n). Callers must write to disjoint
// slots; results are then independent of the worker count.
template <class F>
void parallel_for_index(int64_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) f(i);
#else
  for (int64_t i = 0; i < n; ++i) f(i);
#endif
}

}  // namespace usamkit
