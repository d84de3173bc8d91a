#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "simdim/common.hpp"
#include "simdim/parallel.hpp"
#include "simdim/rng.hpp"

namespace simdim {

// Smoothing kernels on R^d. The cube kernel xi_r (uniform on [-r/2, r/2]^d)
// drives the dimension pipeline; the truncated gaussian eta_{a,r} and the
// plain gaussian are provided for cross-checks.
struct SmoothingSpec {
  enum class Kind { Cube, TruncatedGaussian, Gaussian };
  Kind kind = Kind::Cube;
  double a = 2.0;  // truncation multiple for eta_{a,r}
  double r = 1.0;

  Vec sample(int d, RngStream& rng) const {
    Vec x(d);
    switch (kind) {
      case Kind::Cube:
        for (int i = 0; i < d; ++i) x[i] = (rng.next_double() - 0.5) * r;
        return x;
      case Kind::Gaussian:
        for (int i = 0; i < d; ++i) x[i] = r * rng.next_gaussian();
        return x;
      case Kind::TruncatedGaussian:
        for (int tries = 0; tries < 10000; ++tries) {
          for (int i = 0; i < d; ++i) x[i] = r * rng.next_gaussian();
          if (x.norm() <= a * r) return x;
        }
        throw Error("SmoothingSpec: truncated gaussian rejection failed (a too small?)");
    }
    throw Error("SmoothingSpec: unknown kind");
  }

  // Differential entropy H(A_r) in nats.
  double closed_entropy(int d) const {
    switch (kind) {
      case Kind::Cube:
        return d * std::log(r);
      case Kind::Gaussian:
        return 0.5 * d * std::log(2.0 * M_PI * M_E * r * r);
      case Kind::TruncatedGaussian: {
        // H = -log C + E|x|^2 / (2 r^2); radial integrals over [0, a] of the
        // unit-scale density s^{d-1} e^{-s^2/2}.
        const int steps = 4000;
        const double hstep = a / steps;
        double mass = 0.0, second = 0.0;
        for (int i = 0; i <= steps; ++i) {
          const double s = i * hstep;
          const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
          const double f = std::pow(s, d - 1) * std::exp(-0.5 * s * s);
          mass += w * f;
          second += w * f * s * s;
        }
        mass *= hstep / 3.0;
        second *= hstep / 3.0;
        const double surface = 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
        // density C e^{-|x|^2/2r^2}: C = 1 / (surface * mass * r^d)
        const double log_c = -(std::log(surface) + std::log(mass) + d * std::log(r));
        const double mean_sq = second / mass;  // E|x|^2 / r^2
        return -log_c + 0.5 * mean_sq;
      }
    }
    throw Error("SmoothingSpec: unknown kind");
  }
};

namespace detail {

struct GridKey {
  std::array<std::int64_t, 4> q{};
  int d = 1;
  bool operator==(const GridKey& o) const { return d == o.d && q == o.q; }
};

struct GridKeyHash {
  std::size_t operator()(const GridKey& k) const {
    std::uint64_t h = 1469598103934665603ULL;
    for (int i = 0; i < k.d; ++i) {
      h ^= static_cast<std::uint64_t>(k.q[i]);
      h *= 1099511628211ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

// Discrete entropy of grid-cell counts at side r and a fixed phase offset.
inline double grid_phase_entropy(const PointCloud& cloud, double r, const Vec& offset, int threads) {
  const std::size_t n = cloud.size();
  const int d = cloud.d;
  if (d > 4) throw Error("grid entropy: d > 4 not supported by the cell index");
  const int nblocks = std::max(1, threads);
  std::vector<std::unordered_map<GridKey, std::uint32_t, GridKeyHash>> local(nblocks);
  const std::size_t block = (n + nblocks - 1) / nblocks;
  parallel_for(static_cast<std::size_t>(nblocks), threads, [&](std::size_t b) {
    auto& map = local[b];
    const std::size_t lo = b * block;
    const std::size_t hi = std::min(n, lo + block);
    GridKey key;
    key.d = d;
    for (std::size_t i = lo; i < hi; ++i) {
      const double* p = cloud.point(i);
      for (int k = 0; k < d; ++k) key.q[k] = static_cast<std::int64_t>(std::floor((p[k] - offset[k]) / r));
      ++map[key];
    }
  });
  auto& total = local[0];
  for (int b = 1; b < nblocks; ++b)
    for (const auto& [key, c] : local[b]) total[key] += c;
  std::vector<std::uint32_t> counts;
  counts.reserve(total.size());
  for (const auto& [key, c] : total) counts.push_back(c);
  std::sort(counts.begin(), counts.end());
  double sum_clogc = 0.0;
  for (std::uint32_t c : counts)
    if (c > 1) sum_clogc += static_cast<double>(c) * std::log(static_cast<double>(c));
  const double nn = static_cast<double>(n);
  return std::log(nn) - sum_clogc / nn;
}

}  // namespace detail

struct GridEntropyOptions {
  int phases = 4;
  std::uint64_t seed = 1;
  int threads = 1;
  std::size_t min_samples = 1000;
};

// H^xi(cloud; r): discrete Shannon entropy of the r-grid cell counts,
// averaged over random grid phases. Offsets are r times a shared
// seed-derived phase sequence, so equal scales reuse identical values, the
// telescoping identity between scales holds exactly, grids at dyadic scale
// ratios nest, and H is exactly scaling covariant.
inline double grid_entropy_at_scale(const PointCloud& cloud, double r, const GridEntropyOptions& opts = {}) {
  if (cloud.size() < opts.min_samples) throw TooFewSamples("grid_entropy_at_scale: need more samples");
  if (!(r > 0.0)) throw Error("grid_entropy_at_scale: r must be positive");
  RngStream rng(opts.seed, 0x9a1d);
  double acc = 0.0;
  for (int p = 0; p < opts.phases; ++p) {
    Vec offset(cloud.d);
    for (int k = 0; k < cloud.d; ++k) offset[k] = r * rng.next_double();
    acc += detail::grid_phase_entropy(cloud, r, offset, opts.threads);
  }
  return acc / opts.phases;
}

// H(.; r1 | r2) = H(.; r1) - H(.; r2) on a shared cloud.
inline double entropy_between_scales(const PointCloud& cloud, double r1, double r2,
                                     const GridEntropyOptions& opts = {}) {
  if (!(r1 <= r2)) throw Error("entropy_between_scales: requires r1 <= r2");
  if (r1 == r2) return 0.0;
  return grid_entropy_at_scale(cloud, r1, opts) - grid_entropy_at_scale(cloud, r2, opts);
}


namespace detail {

// Minimal kd-tree over a flat point cloud; enough for k-NN queries and
// fixed-radius counting in d <= 4.
class KdTree {
 public:
  explicit KdTree(const PointCloud& cloud) : cloud_(cloud), idx_(cloud.size()) {
    std::iota(idx_.begin(), idx_.end(), std::size_t{0});
    if (!idx_.empty()) build(0, idx_.size(), 0);
  }

  // Distance to the k-th nearest neighbor of point i, excluding i itself.
  double knn_distance(std::size_t i, int k) const {
    std::vector<double> best(k, std::numeric_limits<double>::infinity());
    knn_query(0, idx_.size(), 0, i, best);
    return std::sqrt(best.back());
  }

  std::size_t count_within(const double* center, double radius) const {
    std::size_t count = 0;
    range_query(0, idx_.size(), 0, center, radius * radius, radius, count);
    return count;
  }

 private:
  void build(std::size_t lo, std::size_t hi, int axis) {
    if (hi - lo <= 1) return;
    const std::size_t mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](std::size_t a, std::size_t b) { return cloud_.point(a)[axis] < cloud_.point(b)[axis]; });
    const int next = (axis + 1) % cloud_.d;
    build(lo, mid, next);
    build(mid + 1, hi, next);
  }

  double sqdist(const double* a, const double* b) const {
    double s = 0.0;
    for (int k = 0; k < cloud_.d; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return s;
  }

  void knn_query(std::size_t lo, std::size_t hi, int axis, std::size_t self, std::vector<double>& best) const {
    if (lo >= hi) return;
    const std::size_t mid = (lo + hi) / 2;
    const std::size_t j = idx_[mid];
    const double* q = cloud_.point(self);
    if (j != self) {
      const double d2 = sqdist(q, cloud_.point(j));
      if (d2 < best.back()) {
        best.back() = d2;
        for (std::size_t t = best.size() - 1; t > 0 && best[t] < best[t - 1]; --t) std::swap(best[t], best[t - 1]);
      }
    }
    const double delta = q[axis] - cloud_.point(j)[axis];
    const int next = (axis + 1) % cloud_.d;
    if (delta < 0) {
      knn_query(lo, mid, next, self, best);
      if (delta * delta < best.back()) knn_query(mid + 1, hi, next, self, best);
    } else {
      knn_query(mid + 1, hi, next, self, best);
      if (delta * delta < best.back()) knn_query(lo, mid, next, self, best);
    }
  }

  void range_query(std::size_t lo, std::size_t hi, int axis, const double* c, double r2, double r,
                   std::size_t& count) const {
    if (lo >= hi) return;
    const std::size_t mid = (lo + hi) / 2;
    const std::size_t j = idx_[mid];
    if (sqdist(c, cloud_.point(j)) <= r2) ++count;
    const double delta = c[axis] - cloud_.point(j)[axis];
    const int next = (axis + 1) % cloud_.d;
    if (delta - r <= 0) range_query(lo, mid, next, c, r2, r, count);
    if (delta + r >= 0) range_query(mid + 1, hi, next, c, r2, r, count);
  }

  const PointCloud& cloud_;
  std::vector<std::size_t> idx_;
};

inline double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  result += std::log(x) - 0.5 * inv -
            inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)));
  return result;
}

}  // namespace detail

// H^A(cloud; r) through a Kozachenko-Leonenko differential entropy estimate
// of the A_r-jittered samples, minus the kernel's own entropy.
inline double knn_smoothed_entropy(const PointCloud& cloud, const SmoothingSpec& spec, std::uint64_t seed = 1,
                                   int k = 3, std::size_t min_samples = 10000) {
  const std::size_t n = cloud.size();
  if (n < min_samples) throw TooFewSamples("knn_smoothed_entropy: need more samples");
  const int d = cloud.d;
  PointCloud jittered;
  jittered.d = d;
  jittered.data.resize(cloud.data.size());
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, 0x71f7e5, i);
    const Vec noise = spec.sample(d, rng);
    for (int c = 0; c < d; ++c) jittered.data[i * d + c] = cloud.data[i * d + c] + noise[c];
  }
  detail::KdTree tree(jittered);
  double sum_log_eps = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double eps = tree.knn_distance(i, k);
    if (eps > 0.0 && std::isfinite(eps)) {
      sum_log_eps += std::log(eps);
      ++used;
    }
  }
  if (used == 0) throw TooFewSamples("knn_smoothed_entropy: degenerate cloud");
  const double log_ball_volume = 0.5 * d * std::log(M_PI) - std::lgamma(0.5 * d + 1.0);
  const double h = detail::digamma(static_cast<double>(n)) - detail::digamma(static_cast<double>(k)) +
                   log_ball_volume + (static_cast<double>(d) / used) * sum_log_eps;
  return h - spec.closed_entropy(d);
}

// Kernel-routed variant of the between-scales entropy: the cube kernel
// reduces to the grid estimator, the gaussian families go through the k-NN
// path.
inline double entropy_between_scales(const PointCloud& cloud, const SmoothingSpec& spec, double r1, double r2,
                                     const GridEntropyOptions& opts = {}) {
  if (!(r1 <= r2)) throw Error("entropy_between_scales: requires r1 <= r2");
  if (r1 == r2) return 0.0;
  if (spec.kind == SmoothingSpec::Kind::Cube) return entropy_between_scales(cloud, r1, r2, opts);
  SmoothingSpec s1 = spec, s2 = spec;
  s1.r = r1;
  s2.r = r2;
  return knn_smoothed_entropy(cloud, s1, opts.seed) - knn_smoothed_entropy(cloud, s2, opts.seed);
}

struct DimensionReport {
  std::vector<double> scales;
  std::vector<double> entropy_at_scale;
  std::vector<double> stderrs;
  double slope = 0.0;
  double slope_stderr = 0.0;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  std::string verdict;
  bool truncation_warning = false;
};

struct DimensionOptions {
  int phases = 4;
  std::uint64_t seed = 1;
  int threads = 1;
  int jackknife_splits = 8;
  double sampling_kappa = 0.0;  // set by callers that know it, for the bias warning
};

// Least-squares slope of H^xi(.; r) against log(1/r) across a geometric
// scale ladder; the slope estimates dim.
inline DimensionReport estimate_dimension(const PointCloud& cloud, double r_min, double r_max, int n_scales,
                                          const DimensionOptions& opts = {}) {
  if (n_scales < 4) throw ScaleRangeTooNarrow("estimate_dimension: need at least 4 scales");
  if (!(r_min < r_max)) throw Error("estimate_dimension: r_min must be below r_max");
  if (cloud.size() < 1000) throw TooFewSamples("estimate_dimension: need at least 1e3 samples");

  DimensionReport rep;
  GridEntropyOptions gopts;
  gopts.phases = opts.phases;
  gopts.seed = opts.seed;
  gopts.threads = opts.threads;

  const int splits = std::max(2, opts.jackknife_splits);
  std::vector<PointCloud> subsets(splits);
  for (auto& s : subsets) s.d = cloud.d;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    auto& s = subsets[i % splits];
    for (int c = 0; c < cloud.d; ++c) s.data.push_back(cloud.data[i * cloud.d + c]);
  }

  for (int s = 0; s < n_scales; ++s) {
    const double t = n_scales == 1 ? 0.0 : static_cast<double>(s) / (n_scales - 1);
    const double r = r_max * std::pow(r_min / r_max, t);
    rep.scales.push_back(r);
    rep.entropy_at_scale.push_back(grid_entropy_at_scale(cloud, r, gopts));
    double mean = 0.0, sq = 0.0;
    std::vector<double> vals;
    for (const auto& sub : subsets) {
      GridEntropyOptions sub_opts = gopts;
      sub_opts.min_samples = 1;
      vals.push_back(grid_entropy_at_scale(sub, r, sub_opts));
    }
    for (double v : vals) mean += v;
    mean /= vals.size();
    for (double v : vals) sq += (v - mean) * (v - mean);
    const double se = std::sqrt(sq / (vals.size() * (vals.size() - 1.0)));
    rep.stderrs.push_back(std::max(se, 1e-6));
  }

  // Weighted OLS of H against log(1/r).
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int s = 0; s < n_scales; ++s) {
    const double w = 1.0 / (rep.stderrs[s] * rep.stderrs[s]);
    const double x = std::log(1.0 / rep.scales[s]);
    const double y = rep.entropy_at_scale[s];
    sw += w;
    sx += w * x;
    sy += w * y;
    sxx += w * x * x;
    sxy += w * x * y;
  }
  const double det = sw * sxx - sx * sx;
  rep.slope = (sw * sxy - sx * sy) / det;
  rep.slope_stderr = std::sqrt(sw / det);

  if (opts.sampling_kappa > 0.0 && opts.sampling_kappa > 0.05 * r_min) rep.truncation_warning = true;
  return rep;
}

// min{d, h_hat / |chi|}; the estimate h_hat is itself an upper bound on
// h_mu, so the prediction is an upper bound.
inline double predicted_dimension(double h_hat, double chi, int d) {
  if (!(chi < 0.0)) throw NotContractingOnAverage("predicted_dimension: chi_mu must be negative");
  return std::min(static_cast<double>(d), h_hat / std::abs(chi));
}

struct LocalDimensionReport {
  std::vector<double> radii;
  std::vector<double> mean_ratio;
  std::vector<double> spread;       // standard deviation of the per-anchor ratios
  std::vector<std::size_t> anchors_used;
};

struct LocalDimensionOptions {
  std::uint64_t seed = 1;
  int band_points = 8;       // sub-radii per nominal radius
  double band_octaves = 2.0; // averaging window [r, r * 2^band_octaves]
};

// Per-point ratios log nu(B_s(x)) / log(2s) averaged over a small geometric
// band of radii around each nominal r; the diameter normalization makes the
// uniform-measure ratio exactly one, and the band average damps the
// log-periodic oscillation self-similar measures carry at a single radius.
// The spread across anchors is the exact-dimensionality diagnostic.
inline LocalDimensionReport local_dimension(const PointCloud& cloud, std::size_t anchor_count,
                                            const std::vector<double>& radii,
                                            const LocalDimensionOptions& opts = {}) {
  if (cloud.size() < 1000) throw TooFewSamples("local_dimension: need at least 1e3 samples");
  LocalDimensionReport rep;
  const double n = static_cast<double>(cloud.size());

  // Fast mass counting: sorted scan for d = 1, kd-tree otherwise.
  std::vector<double> sorted_1d;
  std::optional<detail::KdTree> tree;
  if (cloud.d == 1) {
    sorted_1d = cloud.data;
    std::sort(sorted_1d.begin(), sorted_1d.end());
  } else {
    tree.emplace(cloud);
  }
  auto ball_count = [&](const double* center, double radius) -> std::size_t {
    if (cloud.d == 1) {
      const auto lo = std::lower_bound(sorted_1d.begin(), sorted_1d.end(), center[0] - radius);
      const auto hi = std::upper_bound(sorted_1d.begin(), sorted_1d.end(), center[0] + radius);
      return static_cast<std::size_t>(hi - lo);
    }
    return tree->count_within(center, radius);
  };

  RngStream rng(opts.seed, 0x10ca1);
  std::vector<std::size_t> anchors;
  for (std::size_t t = 0; t < anchor_count; ++t) anchors.push_back(rng.next_index(cloud.size()));

  for (double r : radii) {
    std::vector<double> ratios;
    for (std::size_t a : anchors) {
      double acc = 0.0;
      int used = 0;
      for (int j = 0; j < opts.band_points; ++j) {
        const double s =
            r * std::pow(2.0, opts.band_octaves * j / std::max(1, opts.band_points - 1));
        const std::size_t count = ball_count(cloud.point(a), s);
        if (count == 0) continue;
        const double mass = static_cast<double>(count) / n;
        if (mass >= 1.0) continue;
        acc += std::log(mass) / std::log(2.0 * s);
        ++used;
      }
      if (used == opts.band_points) ratios.push_back(acc / used);
    }
    double mean = 0.0, sq = 0.0;
    for (double v : ratios) mean += v;
    if (!ratios.empty()) mean /= ratios.size();
    for (double v : ratios) sq += (v - mean) * (v - mean);
    const double sd = ratios.size() > 1 ? std::sqrt(sq / (ratios.size() - 1.0)) : 0.0;
    rep.radii.push_back(r);
    rep.mean_ratio.push_back(mean);
    rep.spread.push_back(sd);
    rep.anchors_used.push_back(ratios.size());
  }
  return rep;
}

}  // namespace simdim
