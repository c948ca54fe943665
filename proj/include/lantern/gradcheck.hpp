#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lantern/rng.hpp"
#include "lantern/tensor.hpp"

// Central-finite-difference gradient checking. The loss callback must be a
// pure forward evaluation (no tape); the harness perturbs one parameter
// coordinate at a time and never touches the analytic backward path.

namespace lantern {

template <class T, class LossFn>
double finite_diff_at(LossFn&& loss, T* slot, double h) {
  const T orig = *slot;
  *slot = orig + static_cast<T>(h);
  const double fp = loss();
  *slot = orig - static_cast<T>(h);
  const double fm = loss();
  *slot = orig;
  return (fp - fm) / (2.0 * h);
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
  std::string worst;  // "param[idx]: analytic=..., numeric=..."

  bool ok(double tol) const { return checked > 0 && max_rel_err <= tol; }
};

inline double rel_err(double a, double b, double floor = 1e-8) {
  const double denom = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / denom;
}

// Checks n_coords random coordinates drawn across all parameters. Parameters
// must already carry analytic gradients (caller ran backward beforehand).
template <class T, class LossFn>
GradCheckReport check_gradients(std::vector<std::pair<std::string, TensorT<T>>>& params,
                                LossFn&& loss, int n_coords, std::uint64_t seed,
                                double h = 1e-5) {
  GradCheckReport rep;
  std::size_t total = 0;
  for (auto& [name, p] : params) total += p.numel();
  if (total == 0) return rep;
  Prng rng(seed);
  for (int c = 0; c < n_coords; ++c) {
    std::size_t flat = rng.below(total);
    std::size_t pi = 0;
    while (flat >= params[pi].second.numel()) {
      flat -= params[pi].second.numel();
      ++pi;
    }
    auto& [name, p] = params[pi];
    const double analytic = static_cast<double>(p.grad()[flat]);
    const double numeric = finite_diff_at(loss, p.data() + flat, h);
    const double e = rel_err(analytic, numeric);
    ++rep.checked;
    if (e > rep.max_rel_err) {
      rep.max_rel_err = e;
      rep.worst = name + "[" + std::to_string(flat) + "]: analytic=" +
                  std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
  }
  return rep;
}

// Exhaustive variant over every coordinate of one tensor.
template <class T, class LossFn>
GradCheckReport check_all_coords(TensorT<T>& p, LossFn&& loss, double h = 1e-5) {
  GradCheckReport rep;
  for (std::size_t i = 0; i < p.numel(); ++i) {
    const double analytic = static_cast<double>(p.grad()[i]);
    const double numeric = finite_diff_at(loss, p.data() + i, h);
    const double e = rel_err(analytic, numeric);
    ++rep.checked;
    if (e > rep.max_rel_err) {
      rep.max_rel_err = e;
      rep.worst = "coord " + std::to_string(i) + ": analytic=" + std::to_string(analytic) +
                  " numeric=" + std::to_string(numeric);
    }
  }
  return rep;
}

}  // namespace lantern
