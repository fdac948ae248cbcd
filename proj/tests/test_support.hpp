#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "deformer/tensor.hpp"

namespace deformer::testing {

inline std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n, double lo,
                                          double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

inline Tensor random_leaf(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::leaf(std::move(shape), uniform_values(rng, n, lo, hi));
}

inline Tensor random_const(std::mt19937_64& rng, Shape shape, double lo = -1.0,
                           double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), uniform_values(rng, n, lo, hi));
}

// Scalar probe sum(w * y) with fixed random weights, so that gradient checks
// do not rely on symmetric cancellations of a plain sum.
inline Tensor probe(const Tensor& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed + y.numel());
  Tensor w(y.shape(), uniform_values(rng, y.numel(), 0.5, 1.5));
  return sum(mul(y, w));
}

// Central differences resolve a gradient only down to roughly
// 1e-16 * |f| / h; a coordinate whose true gradient sits at that level makes
// the relative error meaningless. Random draws with such a coordinate
// (nonzero but below `floor`) are rejected by the gradient tests.
inline bool well_conditioned(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                             double floor = 1e-6) {
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = f(x);
  if (!loss.requires_grad()) return true;
  Tensor g = backward(loss).get_or_zero(x);
  for (double v : g.data()) {
    if (v != 0.0 && std::abs(v) < floor) return false;
  }
  return true;
}

// Largest finite-difference error of `loss` over every leaf in `leaves`, or
// -1 when some leaf has a coordinate too small to check reliably (callers
// redraw in that case).
inline double max_gradient_error(const std::vector<Tensor>& leaves,
                                 const std::function<Tensor()>& loss) {
  auto f = [&](const Tensor&) { return loss(); };
  for (const auto& leaf : leaves) {
    if (!well_conditioned(f, leaf)) return -1.0;
  }
  double worst = 0.0;
  for (auto leaf : leaves) worst = std::max(worst, finite_diff_check(f, leaf));
  return worst;
}

}  // namespace deformer::testing
