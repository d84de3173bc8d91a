#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <variant>
#include <vector>

#include "simdim/common.hpp"
#include "simdim/measure.hpp"
#include "simdim/parallel.hpp"
#include "simdim/rng.hpp"
#include "simdim/sim_group.hpp"

namespace simdim {

constexpr int kStoppingCap = 1'000'000;

// A realized walk: steps gamma_i and cumulative products q_i = gamma_1...gamma_i.
// Prefix products are maintained as long as the contraction ratio stays
// inside double range; for extremely long contracting walks the tail of the
// prefix list is truncated (prefix.size() <= steps.size()).
struct WalkPath {
  std::vector<SimElement> steps;
  std::vector<SimElement> prefix;  // prefix[i] = q_{i+1}
  std::uint64_t seed = 0;

  std::size_t length() const { return steps.size(); }
  SimElement q(std::size_t i) const {  // q_0 = identity
    if (i == 0) return SimElement::identity(steps.empty() ? 1 : steps.front().dim());
    if (i > prefix.size()) throw Error("WalkPath: prefix product left double range");
    return prefix[i - 1];
  }
};

namespace detail {

inline std::size_t draw_atom(const FiniteMeasure& mu, RngStream& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < mu.weights.size(); ++i) {
    acc += mu.weights[i];
    if (u < acc) return i;
  }
  return mu.weights.size() - 1;
}

}  // namespace detail

inline WalkPath sample_walk(const FiniteMeasure& mu, int n, std::uint64_t seed) {
  WalkPath path;
  path.seed = seed;
  RngStream rng(seed, 0x77a1);
  SimElement q = SimElement::identity(mu.dim());
  path.steps.reserve(n);
  path.prefix.reserve(n);
  bool in_range = true;
  for (int i = 0; i < n; ++i) {
    const SimElement& g = mu.atoms[detail::draw_atom(mu, rng)];
    path.steps.push_back(g);
    if (in_range) {
      const double next_rho = q.rho * g.rho;
      if (next_rho > 1e-290 && next_rho < 1e290) {
        q = compose(q, g);
        path.prefix.push_back(q);
      } else {
        in_range = false;
      }
    }
  }
  return path;
}

struct StoppedWalk {
  SimElement q;
  int tau = 0;
};

// tau_kappa = inf{ n >= 0 : rho(q_n) <= kappa }, the product version.
inline StoppedWalk stopped_walk(const FiniteMeasure& mu, double kappa, std::uint64_t seed,
                                std::uint64_t stream = 0) {
  if (!(kappa > 0.0 && kappa < 1.0)) throw Error("stopped_walk: kappa must lie in (0,1)");
  RngStream rng(seed, 0x57a2, stream);
  SimElement q = SimElement::identity(mu.dim());
  int tau = 0;
  while (q.rho > kappa) {
    if (tau >= kStoppingCap || q.rho > 1e280)
      throw StoppingCapExceeded("stopped_walk: cap hit; measure may not contract on average or kappa is too small");
    q = compose(q, mu.atoms[detail::draw_atom(mu, rng)]);
    ++tau;
  }
  return {q, tau};
}

struct FixedSteps {
  int n;
};
struct ContractionKappa {
  double kappa;
};
using StopRule = std::variant<FixedSteps, ContractionKappa>;

// Independent samples q x0 of (approximately) the self-similar measure; each
// trial owns its own RNG stream so the cloud is thread-count invariant.
inline PointCloud sample_attractor(const FiniteMeasure& mu, std::size_t count, std::uint64_t seed,
                                   const StopRule& stop, int threads = 1) {
  const int d = mu.dim();
  PointCloud cloud;
  cloud.d = d;
  cloud.data.assign(count * static_cast<std::size_t>(d), 0.0);
  const Vec x0 = Vec::Zero(d);
  parallel_for(count, threads, [&](std::size_t i) {
    Vec x(d);
    if (std::holds_alternative<FixedSteps>(stop)) {
      const int n = std::get<FixedSteps>(stop).n;
      RngStream rng(seed, 0x57a2, i);
      SimElement q = SimElement::identity(d);
      for (int s = 0; s < n; ++s) q = compose(q, mu.atoms[detail::draw_atom(mu, rng)]);
      x = apply(q, x0);
    } else {
      const double kappa = std::get<ContractionKappa>(stop).kappa;
      x = apply(stopped_walk(mu, kappa, seed, i).q, x0);
    }
    for (int k = 0; k < d; ++k) cloud.data[i * static_cast<std::size_t>(d) + k] = x[k];
  });
  return cloud;
}

// Depth selection for attractor sampling: for measures that only contract
// on average the support is unbounded, so the truncation bias is controlled
// by kappa <= target_resolution / (1 + empirical 99th percentile of |q x0|).
inline double suggest_kappa(const FiniteMeasure& mu, double target_resolution, std::size_t probes = 2000,
                            std::uint64_t seed = 1, double probe_kappa = 1e-6) {
  if (!is_contracting_on_average(mu)) throw Error("suggest_kappa: measure must contract on average");
  std::vector<double> norms(probes);
  const Vec x0 = Vec::Zero(mu.dim());
  for (std::size_t i = 0; i < probes; ++i)
    norms[i] = apply(stopped_walk(mu, probe_kappa, seed, i).q, x0).norm();
  std::sort(norms.begin(), norms.end());
  const double p99 = norms[static_cast<std::size_t>(0.99 * (probes - 1))];
  return target_resolution / (1.0 + p99);
}

struct TauReport {
  double kappa = 0.0;
  double mean_tau = 0.0;
  double var_tau = 0.0;
  std::vector<std::pair<double, double>> tail;  // (eps, P[|tau - E tau| >= eps E tau])
  double normalized_ratio = 0.0;                // mean_tau * |chi| / log kappa^{-1}
};

inline TauReport tau_statistics(const FiniteMeasure& mu, double kappa, std::size_t trials, std::uint64_t seed,
                                int threads = 1) {
  TauReport rep;
  rep.kappa = kappa;
  std::vector<double> taus(trials, 0.0);
  parallel_for(trials, threads, [&](std::size_t i) {
    taus[i] = static_cast<double>(stopped_walk(mu, kappa, seed, i).tau);
  });
  double mean = 0.0;
  for (double t : taus) mean += t;
  mean /= static_cast<double>(trials);
  double var = 0.0;
  for (double t : taus) var += (t - mean) * (t - mean);
  var /= std::max<std::size_t>(1, trials - 1);
  rep.mean_tau = mean;
  rep.var_tau = var;
  for (double eps : {0.05, 0.1, 0.2, 0.5}) {
    std::size_t hits = 0;
    for (double t : taus)
      if (std::abs(t - mean) >= eps * mean) ++hits;
    rep.tail.emplace_back(eps, static_cast<double>(hits) / static_cast<double>(trials));
  }
  const double chi = lyapunov_exponent(mu);
  rep.normalized_ratio = mean * std::abs(chi) / std::log(1.0 / kappa);
  return rep;
}

}  // namespace simdim
