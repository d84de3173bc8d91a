#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simdim/common.hpp"
#include "simdim/measure.hpp"
#include "simdim/parallel.hpp"
#include "simdim/sim_group.hpp"

namespace simdim {

// Deduplicated support of mu^{*n} with aggregated word probabilities.
struct WeightedElementSet {
  std::vector<SimElement> elements;
  std::vector<double> probs;
  int n = 0;

  std::size_t size() const { return elements.size(); }
};

struct ConvOptions {
  double dedup_tol = 1e-9;
  std::size_t budget = 20'000'000;  // pre-dedup products per call
  int threads = 1;
  bool ambiguity_check = true;
};

namespace detail {

// Comparable coordinate vector (log rho, vec U, b); lexicographic order on
// this fixes the merge representative and the output ordering.
inline std::vector<double> coord_vector(const SimElement& g) {
  std::vector<double> c;
  const int d = g.dim();
  c.reserve(1 + d * d + d);
  c.push_back(std::log(g.rho));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) c.push_back(g.rot(i, j));
  for (int i = 0; i < d; ++i) c.push_back(g.trans[i]);
  return c;
}

struct CellKey {
  std::vector<std::int64_t> q;
  bool operator==(const CellKey& o) const { return q == o.q; }
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto v : k.q) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Cells are keyed on (log rho, b) only; any pair within `cell` in the group
// metric is within `cell` in each keyed coordinate, so scanning the 3^K
// neighborhood of a key finds every such pair. Rotation coordinates are
// compared inside cells through the full metric.
inline CellKey cell_key(const SimElement& g, double cell) {
  CellKey k;
  const int d = g.dim();
  k.q.reserve(1 + d);
  k.q.push_back(static_cast<std::int64_t>(std::floor(std::log(g.rho) / cell)));
  for (int i = 0; i < d; ++i) k.q.push_back(static_cast<std::int64_t>(std::floor(g.trans[i] / cell)));
  return k;
}

class DedupGrid {
 public:
  explicit DedupGrid(double tol) : tol_(tol) {}

  // Insert or merge. Merging adds probability and keeps the
  // lexicographically-first representative.
  void insert(const SimElement& g, double prob) {
    const CellKey key = cell_key(g, tol_);
    const std::size_t ncoord = key.q.size();
    std::vector<std::int64_t> offsets(ncoord, -1);
    CellKey probe = key;
    while (true) {
      for (std::size_t i = 0; i < ncoord; ++i) probe.q[i] = key.q[i] + offsets[i];
      auto it = cells_.find(probe);
      if (it != cells_.end()) {
        for (std::size_t idx : it->second) {
          if (metric_dist(elements_[idx], g) <= tol_) {
            probs_[idx] += prob;
            auto cand = coord_vector(g);
            if (cand < coords_[idx]) {
              elements_[idx] = g;
              coords_[idx] = std::move(cand);
            }
            return;
          }
        }
      }
      // advance odometer over {-1,0,1}^ncoord
      std::size_t pos = 0;
      while (pos < ncoord) {
        if (++offsets[pos] <= 1) break;
        offsets[pos] = -1;
        ++pos;
      }
      if (pos == ncoord) break;
    }
    const std::size_t idx = elements_.size();
    elements_.push_back(g);
    probs_.push_back(prob);
    coords_.push_back(coord_vector(g));
    cells_[key].push_back(idx);
  }

  void merge_from(const DedupGrid& other) {
    for (std::size_t i = 0; i < other.elements_.size(); ++i) insert(other.elements_[i], other.probs_[i]);
  }

  WeightedElementSet finish(int n) {
    WeightedElementSet out;
    out.n = n;
    std::vector<std::size_t> order(elements_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return coords_[a] < coords_[b]; });
    out.elements.reserve(order.size());
    out.probs.reserve(order.size());
    for (std::size_t i : order) {
      out.elements.push_back(elements_[i]);
      out.probs.push_back(probs_[i]);
    }
    return out;
  }

  std::size_t size() const { return elements_.size(); }

 private:
  double tol_;
  std::vector<SimElement> elements_;
  std::vector<double> probs_;
  std::vector<std::vector<double>> coords_;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells_;
};

// Exact minimum pairwise distance. Small sets go through the quadratic scan;
// larger ones use one grid pass whose cell side is an upper bound on the
// minimum obtained from a sample of pairs, which guarantees the minimizing
// pair shares a cell neighborhood.
inline double min_pairwise_dist(const std::vector<SimElement>& els) {
  const std::size_t n = els.size();
  if (n < 2) return std::numeric_limits<double>::infinity();
  if (n <= 512) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) best = std::min(best, metric_dist(els[i], els[j]));
    return best;
  }
  double upper = std::numeric_limits<double>::infinity();
  const std::size_t stride = std::max<std::size_t>(1, n / 64);
  for (std::size_t i = 0; i + 1 < n; i += stride) upper = std::min(upper, metric_dist(els[i], els[i + 1]));
  for (std::size_t i = 0; i + stride < n; i += stride) upper = std::min(upper, metric_dist(els[i], els[i + stride]));
  if (!std::isfinite(upper) || upper <= 0.0) upper = 1.0;

  double best = upper;
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells;
  for (std::size_t i = 0; i < n; ++i) cells[cell_key(els[i], upper)].push_back(i);
  for (std::size_t i = 0; i < n; ++i) {
    const CellKey key = cell_key(els[i], upper);
    const std::size_t ncoord = key.q.size();
    std::vector<std::int64_t> offsets(ncoord, -1);
    CellKey probe = key;
    while (true) {
      for (std::size_t c = 0; c < ncoord; ++c) probe.q[c] = key.q[c] + offsets[c];
      auto it = cells.find(probe);
      if (it != cells.end())
        for (std::size_t j : it->second)
          if (j > i) best = std::min(best, metric_dist(els[i], els[j]));
      std::size_t pos = 0;
      while (pos < ncoord) {
        if (++offsets[pos] <= 1) break;
        offsets[pos] = -1;
        ++pos;
      }
      if (pos == ncoord) break;
    }
  }
  return best;
}

}  // namespace detail

inline WeightedElementSet identity_generation(int d) {
  WeightedElementSet out;
  out.n = 0;
  out.elements.push_back(SimElement::identity(d));
  out.probs.push_back(1.0);
  return out;
}

// All generations 1..n_max of mu^{*n}, built generation by generation so the
// working set stays at |supp(mu^{*n})| instead of |supp mu|^n.
inline std::vector<WeightedElementSet> convolution_ladder(const FiniteMeasure& mu, int n_max,
                                                          const ConvOptions& opts = {}) {
  if (n_max < 1) throw Error("convolution_ladder: n_max must be >= 1");
  std::vector<WeightedElementSet> gens;
  gens.reserve(n_max);
  std::size_t spent = 0;

  WeightedElementSet prev = identity_generation(mu.dim());
  for (int n = 1; n <= n_max; ++n) {
    const std::size_t products = prev.size() * mu.support_size();
    if (spent + products > opts.budget)
      throw BudgetExceeded("enumerate_convolution: pre-dedup product budget exceeded", n - 1);
    spent += products;

    const int threads = std::max(1, opts.threads);
    const std::size_t nblocks = std::min<std::size_t>(static_cast<std::size_t>(threads), prev.size());
    std::vector<detail::DedupGrid> local;
    local.reserve(nblocks);
    for (std::size_t b = 0; b < nblocks; ++b) local.emplace_back(opts.dedup_tol);
    const std::size_t block = (prev.size() + nblocks - 1) / nblocks;
    parallel_for(nblocks, threads, [&](std::size_t b) {
      const std::size_t lo = b * block;
      const std::size_t hi = std::min(prev.size(), lo + block);
      for (std::size_t i = lo; i < hi; ++i)
        for (std::size_t a = 0; a < mu.support_size(); ++a)
          local[b].insert(compose(prev.elements[i], mu.atoms[a]), prev.probs[i] * mu.weights[a]);
    });
    detail::DedupGrid grid(opts.dedup_tol);
    for (auto& g : local) grid.merge_from(g);
    WeightedElementSet cur = grid.finish(n);

    if (opts.ambiguity_check && cur.size() >= 2) {
      const double dmin = detail::min_pairwise_dist(cur.elements);
      if (dmin <= 10.0 * opts.dedup_tol) {
        std::ostringstream os;
        os << "enumerate_convolution: generation " << n << " has a pair at distance " << dmin
           << ", inside (tol, 10*tol]; dedup tolerance may split true collisions";
        throw AmbiguousDedup(os.str());
      }
    }
    gens.push_back(cur);
    prev = std::move(cur);
  }
  return gens;
}

inline WeightedElementSet enumerate_convolution(const FiniteMeasure& mu, int n, const ConvOptions& opts = {}) {
  auto gens = convolution_ladder(mu, n, opts);
  return std::move(gens.back());
}

// Shannon entropy -sum p log p (natural log).
inline double shannon_entropy(const WeightedElementSet& set) {
  double h = 0.0;
  for (double p : set.probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// Upper bounds H(mu^{*n})/n for n = 1..n_max; the last entry is the working
// estimate of h_mu.
inline std::vector<double> entropy_rate_bounds(const FiniteMeasure& mu, int n_max, const ConvOptions& opts = {}) {
  auto gens = convolution_ladder(mu, n_max, opts);
  std::vector<double> out;
  out.reserve(gens.size());
  for (const auto& g : gens) out.push_back(shannon_entropy(g) / static_cast<double>(g.n));
  return out;
}

// Delta_n: minimal pairwise distance inside supp(mu^{*n}).
inline std::optional<double> delta_n(const WeightedElementSet& set) {
  if (set.size() < 2) return std::nullopt;
  return detail::min_pairwise_dist(set.elements);
}

// M_n: minimal pairwise distance in the union of generations 0..n (the
// identity included). Cross-generation duplicates are merged before the
// minimum is taken, matching the set-union semantics.
inline std::optional<double> m_n(const std::vector<WeightedElementSet>& gens_1_to_k, int n, double dedup_tol = 1e-9) {
  if (n < 0) return std::nullopt;
  const int d = gens_1_to_k.empty() ? 1 : gens_1_to_k.front().elements.front().dim();
  detail::DedupGrid grid(dedup_tol);
  grid.insert(SimElement::identity(d), 1.0);
  for (const auto& gen : gens_1_to_k) {
    if (gen.n > n) break;
    for (const auto& e : gen.elements) grid.insert(e, 1.0);
  }
  auto merged = grid.finish(n);
  if (merged.size() < 2) return std::nullopt;
  return detail::min_pairwise_dist(merged.elements);
}

// Assembles the measure profile: Lyapunov data plus the entropy-rate upper
// bounds. The bound sequence is non-increasing (entropy increments of a
// random walk decrease), which callers may rely on.
inline MeasureProfile measure_profile(const FiniteMeasure& mu, int n_max, const ConvOptions& opts = {},
                                      std::uint64_t seed = 7) {
  MeasureProfile profile;
  profile.lyapunov = lyapunov_exponent(mu);
  profile.contracting_on_average = profile.lyapunov < 0.0;
  profile.rho_range = rho_range(mu);
  profile.entropy_upper = entropy_rate_bounds(mu, n_max, opts);
  profile.irreducible = is_irreducible(mu, 1e-8, 64, seed);
  profile.fixed_point = common_fixed_point(mu);
  return profile;
}

struct SeparationReport {
  int n_max = 0;
  std::vector<std::optional<double>> delta;  // Delta_1..Delta_n
  std::vector<std::optional<double>> m;      // M_1..M_n
  double fitted_c = std::numeric_limits<double>::quiet_NaN();
  bool condition_exponential = false;
  bool condition_weak = false;
  double eps_used = 0.0;
  std::string label = "finite-range evidence, not an asymptotic certificate";
};

// Fits the smallest c with M_k >= e^{-ck} over the computed range and checks
// the weak all-scales condition log M_k >= -k exp((log k)^{1/3 - eps})
// pointwise. Both verdicts are finite-range evidence only.
inline SeparationReport separation_verdict(const FiniteMeasure& mu, int n_max, double eps,
                                           const ConvOptions& opts = {}) {
  if (n_max < 2) throw Error("separation_verdict: n_max must be >= 2");
  SeparationReport rep;
  rep.n_max = n_max;
  rep.eps_used = eps;
  auto gens = convolution_ladder(mu, n_max, opts);
  for (const auto& g : gens) rep.delta.push_back(delta_n(g));
  for (int n = 1; n <= n_max; ++n) rep.m.push_back(m_n(gens, n, opts.dedup_tol));

  double c = 0.0;
  bool any = false;
  bool weak_ok = true;
  for (int n = 1; n <= n_max; ++n) {
    const auto& mv = rep.m[n - 1];
    if (!mv) continue;
    any = true;
    c = std::max(c, -std::log(*mv) / n);
    const double exponent = (n == 1) ? 0.0 : std::pow(std::log(static_cast<double>(n)), 1.0 / 3.0 - eps);
    const double weak_bound = -static_cast<double>(n) * std::exp(exponent);
    if (std::log(*mv) < weak_bound) weak_ok = false;
  }
  rep.fitted_c = any ? c : std::numeric_limits<double>::quiet_NaN();
  rep.condition_exponential = any;
  rep.condition_weak = any && weak_ok;
  return rep;
}

}  // namespace simdim
