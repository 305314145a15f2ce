#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "usamkit/kernels.hpp"
#include "usamkit/rng.hpp"

// Compares the serial reference kernels against the OpenMP and f32 variants:
// median wall time plus the worst numeric disagreement at each size.

namespace {

using Clock = std::chrono::steady_clock;

volatile double g_sink = 0.0;

template <typename Fn>
double median_ms(int repeats, Fn&& fn) {
  std::vector<double> times;
  times.reserve(size_t(repeats));
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = Clock::now();
    g_sink = fn();
    const auto t1 = Clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

}  // namespace

int main(int argc, char** argv) {
  int repeats = 15;
  std::vector<int> edges = {256, 512, 1024, 2048};
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--repeats" && i + 1 < argc) {
      repeats = std::atoi(argv[++i]);
    } else if (arg == "--edges" && i + 1 < argc) {
      edges.clear();
      std::string list = argv[++i];
      size_t pos = 0;
      while (pos < list.size()) {
        const size_t comma = list.find(',', pos);
        edges.push_back(std::atoi(list.substr(pos, comma - pos).c_str()));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
    } else {
      std::fprintf(stderr,
                   "usage: bench_kernels [--repeats N] [--edges e1,e2,...]\n");
      return arg == "--help" || arg == "-h" ? 0 : 2;
    }
  }
  if (repeats < 3 || edges.empty()) {
    std::fprintf(stderr, "need --repeats >= 3 and at least one edge\n");
    return 2;
  }

  std::printf("threads: %d\n", usamkit::max_threads());
  std::printf("%8s %22s %12s %12s %12s %14s\n", "edge", "kernel", "serial_ms",
              "par_ms", "speedup", "max_abs_diff");

  for (int edge : edges) {
    const size_t n = size_t(edge) * size_t(edge);
    usamkit::Rng rng(uint64_t(edge) * 7919);
    std::vector<double> y(n);
    std::vector<float> yf(n);
    std::vector<uint8_t> fg(n);
    for (size_t i = 0; i < n; ++i) {
      y[i] = rng.uniform();
      yf[i] = float(y[i]);
      fg[i] = uint8_t(rng.next() & 1);
    }

    {
      const double serial = median_ms(
          repeats, [&] { return usamkit::serial::weighted_mask_entropy(y); });
      const double par = median_ms(
          repeats, [&] { return usamkit::par::weighted_mask_entropy(y); });
      const double diff = std::fabs(usamkit::serial::weighted_mask_entropy(y) -
                                    usamkit::par::weighted_mask_entropy(y));
      std::printf("%8d %22s %12.4f %12.4f %12.2f %14.3e\n", edge,
                  "weighted_entropy", serial, par, serial / par, diff);
    }
    {
      const double serial = median_ms(
          repeats, [&] { return usamkit::serial::mean_fg_entropy(y, fg); });
      const double par = median_ms(
          repeats, [&] { return usamkit::par::mean_fg_entropy(y, fg); });
      const double diff = std::fabs(usamkit::serial::mean_fg_entropy(y, fg) -
                                    usamkit::par::mean_fg_entropy(y, fg));
      std::printf("%8d %22s %12.4f %12.4f %12.2f %14.3e\n", edge,
                  "mean_fg_entropy", serial, par, serial / par, diff);
    }
    {
      std::vector<double> acc_s(n, 0.0), acc_p(n, 0.0);
      const double serial = median_ms(repeats, [&] {
        usamkit::serial::axpy(acc_s, y, 0.25);
        return acc_s[0];
      });
      const double par = median_ms(repeats, [&] {
        usamkit::par::axpy(acc_p, y, 0.25);
        return acc_p[0];
      });
      double diff = 0.0;
      for (size_t i = 0; i < n; ++i)
        diff = std::max(diff, std::fabs(acc_s[i] - acc_p[i]));
      std::printf("%8d %22s %12.4f %12.4f %12.2f %14.3e\n", edge, "axpy",
                  serial, par, serial / par, diff);
    }
    {
      const double serial = median_ms(
          repeats,
          [&] { return double(usamkit::fast32::weighted_mask_entropy(yf)); });
      const double par = median_ms(repeats, [&] {
        return double(usamkit::fast32::weighted_mask_entropy_par(yf));
      });
      const double diff =
          std::fabs(double(usamkit::fast32::weighted_mask_entropy(yf)) -
                    usamkit::serial::weighted_mask_entropy(y));
      std::printf("%8d %22s %12.4f %12.4f %12.2f %14.3e\n", edge,
                  "weighted_entropy_f32", serial, par, serial / par, diff);
    }
  }
  return 0;
}
