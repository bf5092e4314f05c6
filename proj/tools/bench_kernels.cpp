// Copyright 2026 The tlm Authors
// Licensed under the Apache License, Version 2.0
//
// Times the OpenMP kernels against the serial references on shapes taken
// from the model hot loops, verifying bit-identical outputs as it goes.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tlm/kernels.hpp"
#include "tlm/rng.hpp"

using namespace tlm;

namespace {

double time_best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const auto t1 = std::chrono::steady_clock::now();
    best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
  }
  return best;
}

std::vector<float> random_vec(Rng& rng, int64_t n) {
  std::vector<float> v(static_cast<size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

struct MatmulShape {
  const char* label;
  int64_t m, k, n;
};

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  if (argc > 1) reps = std::stoi(argv[1]);
  std::printf("threads=%d, best of %d runs\n\n", kernels::max_threads(), reps);
  std::printf("%-28s %10s %10s %8s %s\n", "kernel", "serial(ms)", "omp(ms)", "speedup",
              "bit-identical");

  Rng rng(42);
  const MatmulShape shapes[] = {
      {"matmul 64x768x768  (attn)", 64, 768, 768},
      {"matmul 64x768x3072 (ffn)", 64, 768, 3072},
      {"matmul 64x256x1024 (small)", 64, 256, 1024},
      {"matmul 8x768x25000 (vocab)", 8, 768, 25000},
  };
  for (const auto& s : shapes) {
    const auto a = random_vec(rng, s.m * s.k);
    const auto b = random_vec(rng, s.k * s.n);
    std::vector<float> c_ref(static_cast<size_t>(s.m * s.n));
    std::vector<float> c_omp(c_ref.size());
    const double ts = time_best_of(reps, [&]() {
      kernels::ref::matmul_nn(c_ref.data(), a.data(), b.data(), s.m, s.k, s.n);
    });
    const double tp = time_best_of(reps, [&]() {
      kernels::matmul_nn(c_omp.data(), a.data(), b.data(), s.m, s.k, s.n);
    });
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", s.label, ts * 1e3, tp * 1e3, ts / tp,
                c_ref == c_omp ? "yes" : "NO");
  }

  {
    const int64_t rows = 512, cols = 25000;
    const auto x = random_vec(rng, rows * cols);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double ts = time_best_of(reps, [&]() {
      kernels::ref::row_log_softmax(y_ref.data(), x.data(), rows, cols);
    });
    const double tp = time_best_of(reps, [&]() {
      kernels::row_log_softmax(y_omp.data(), x.data(), rows, cols);
    });
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "log_softmax 512x25000", ts * 1e3,
                tp * 1e3, ts / tp, y_ref == y_omp ? "yes" : "NO");
  }
  {
    const int64_t rows = 4096, cols = 768;
    const auto x = random_vec(rng, rows * cols);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double ts = time_best_of(reps, [&]() {
      kernels::ref::layer_norm_rows(y_ref.data(), x.data(), rows, cols, 1e-5f);
    });
    const double tp = time_best_of(reps, [&]() {
      kernels::layer_norm_rows(y_omp.data(), x.data(), rows, cols, 1e-5f);
    });
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "layer_norm 4096x768", ts * 1e3,
                tp * 1e3, ts / tp, y_ref == y_omp ? "yes" : "NO");
  }
  {
    const int64_t n = 1 << 22;
    const auto x = random_vec(rng, n);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double ts =
        time_best_of(reps, [&]() { kernels::ref::gelu(y_ref.data(), x.data(), n); });
    const double tp =
        time_best_of(reps, [&]() { kernels::gelu(y_omp.data(), x.data(), n); });
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "gelu 4M", ts * 1e3, tp * 1e3, ts / tp,
                y_ref == y_omp ? "yes" : "NO");
  }
  {
    const int64_t n = 512;
    const auto x = random_vec(rng, n * n);
    std::vector<float> y_ref(x.size()), y_omp(x.size());
    const double ts = time_best_of(
        reps, [&]() { kernels::ref::causal_softmax(y_ref.data(), x.data(), n); });
    const double tp =
        time_best_of(reps, [&]() { kernels::causal_softmax(y_omp.data(), x.data(), n); });
    std::printf("%-28s %10.3f %10.3f %7.2fx %s\n", "causal_softmax 512x512", ts * 1e3,
                tp * 1e3, ts / tp, y_ref == y_omp ? "yes" : "NO");
  }
  return 0;
}
