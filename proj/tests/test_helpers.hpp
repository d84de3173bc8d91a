#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "simdim/measure.hpp"
#include "simdim/rng.hpp"
#include "simdim/sim_group.hpp"

namespace simdim::testing {

// x -> x/3 + 1 and x -> x/3 - 1 with equal weights; 2^n distinct words.
inline FiniteMeasure free_third_system() {
  return FiniteMeasure({SimElement::scaling_1d(1.0 / 3.0, 1.0), SimElement::scaling_1d(1.0 / 3.0, -1.0)},
                       {0.5, 0.5});
}

// x -> lambda x +- 1 for arbitrary lambda.
inline FiniteMeasure bernoulli_system(double lambda) {
  return FiniteMeasure({SimElement::scaling_1d(lambda, 1.0), SimElement::scaling_1d(lambda, -1.0)}, {0.5, 0.5});
}

inline FiniteMeasure golden_system() { return bernoulli_system((std::sqrt(5.0) - 1.0) / 2.0); }

inline LieVector random_lie(int d, RngStream& rng, double norm_cap) {
  Mat skew = Mat::Zero(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = rng.next_gaussian();
      skew(i, j) = v;
      skew(j, i) = -v;
    }
  Vec beta(d);
  for (int i = 0; i < d; ++i) beta[i] = rng.next_gaussian();
  LieVector u(rng.next_gaussian(), skew, beta);
  const double n = u.norm();
  if (n > 0) u = u.scaled(norm_cap * rng.next_double() / n);
  return u;
}

inline SimElement random_element(int d, RngStream& rng, double lie_cap = 0.8) {
  return exp_map(random_lie(d, rng, lie_cap));
}

inline double brute_min_dist(const std::vector<SimElement>& els) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < els.size(); ++i)
    for (std::size_t j = i + 1; j < els.size(); ++j) best = std::min(best, metric_dist(els[i], els[j]));
  return best;
}

}  // namespace simdim::testing
