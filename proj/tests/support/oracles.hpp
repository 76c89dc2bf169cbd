#pragma once

// Independent reference computations shared by the tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ducat/mlp.hpp"
#include "ducat/random.hpp"
#include "ducat/tensor.hpp"

namespace ducat::testing {

inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                        std::size_t n, std::size_t k, std::size_t m) {
  std::vector<double> c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * m + j] += a[i * k + p] * b[p * m + j];
  return c;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Central differences of `f` with respect to every entry of `t`, which must
/// be a leaf whose values `f` reads.
inline std::vector<double> numeric_grad(Tensor& t, const std::function<double()>& f, double h = 1e-6) {
  std::vector<double> g(t.numel());
  auto data = t.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double orig = data[i];
    data[i] = orig + h;
    const double up = f();
    data[i] = orig - h;
    const double down = f();
    data[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// ‖a − b‖ / max(‖a‖, ‖b‖), or the absolute difference when both are tiny.
inline double relative_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / denom;
}

/// Labels drawn uniformly from [0, c).
inline std::vector<std::size_t> random_labels(Rng& rng, std::size_t n, std::size_t c) {
  std::vector<std::size_t> y(n);
  for (auto& v : y) v = rng.below(c);
  return y;
}

/// Row-wise log-sum-exp cross entropy written out by hand.
inline double reference_ce(const std::vector<double>& logits, const std::vector<double>& target,
                           std::size_t rows, std::size_t cols) {
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -INFINITY;
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, logits[r * cols + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(logits[r * cols + c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) total -= target[r * cols + c] * (logits[r * cols + c] - lse);
  }
  return total / static_cast<double>(rows);
}

}  // namespace ducat::testing
