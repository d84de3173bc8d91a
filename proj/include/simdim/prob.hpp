#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "simdim/common.hpp"
#include "simdim/entropy.hpp"
#include "simdim/rng.hpp"

namespace simdim {

struct W1Result {
  double value = 0.0;
  enum class Method { Exact1d, Assignment, Sliced } method = Method::Exact1d;
  std::size_t size1 = 0;
  std::size_t size2 = 0;
  int slices = 0;
};

struct W1Options {
  std::size_t assignment_cap = 2000;
  int slices = 128;
  std::uint64_t seed = 1;
};

namespace detail {

// Exact W1 between two empirical measures on R: integral of |F - G| over the
// merged sample line; handles unequal sizes.
inline double w1_exact_1d(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double wa = 1.0 / static_cast<double>(a.size());
  const double wb = 1.0 / static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double fa = 0.0, fb = 0.0, prev = 0.0, total = 0.0;
  bool started = false;
  while (i < a.size() || j < b.size()) {
    double x;
    if (j >= b.size() || (i < a.size() && a[i] <= b[j])) {
      x = a[i];
    } else {
      x = b[j];
    }
    if (started) total += std::abs(fa - fb) * (x - prev);
    while (i < a.size() && a[i] <= x) {
      fa += wa;
      ++i;
    }
    while (j < b.size() && b[j] <= x) {
      fb += wb;
      ++j;
    }
    prev = x;
    started = true;
  }
  return total;
}

// Jonker-Volgenant style shortest augmenting path assignment; exact optimal
// transport for equal-size uniform empirical measures.
inline double w1_assignment(const PointCloud& a, const PointCloud& b) {
  const int n = static_cast<int>(a.size());
  const int d = a.d;
  auto cost = [&](int i, int j) {
    double s = 0.0;
    const double* p = a.point(i);
    const double* q = b.point(j);
    for (int k = 0; k < d; ++k) s += (p[k] - q[k]) * (p[k] - q[k]);
    return std::sqrt(s);
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total / n;
}

}  // namespace detail

inline W1Result empirical_w1(const PointCloud& a, const PointCloud& b, const W1Options& opts = {}) {
  if (a.size() == 0 || b.size() == 0) throw EmptyCloud("empirical_w1: empty cloud");
  if (a.d != b.d) throw Error("empirical_w1: dimension mismatch");
  W1Result out;
  out.size1 = a.size();
  out.size2 = b.size();
  if (a.d == 1) {
    std::vector<double> xs(a.data), ys(b.data);
    out.value = detail::w1_exact_1d(std::move(xs), std::move(ys));
    out.method = W1Result::Method::Exact1d;
    return out;
  }
  if (a.size() == b.size() && a.size() <= opts.assignment_cap) {
    out.value = detail::w1_assignment(a, b);
    out.method = W1Result::Method::Assignment;
    return out;
  }
  // Sliced-W1 surrogate: average exact 1-d distance over random projections.
  RngStream rng(opts.seed, 0x51ced);
  double acc = 0.0;
  for (int s = 0; s < opts.slices; ++s) {
    Vec dir(a.d);
    for (int k = 0; k < a.d; ++k) dir[k] = rng.next_gaussian();
    dir.normalize();
    std::vector<double> xs(a.size()), ys(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      double t = 0.0;
      for (int k = 0; k < a.d; ++k) t += dir[k] * a.point(i)[k];
      xs[i] = t;
    }
    for (std::size_t i = 0; i < b.size(); ++i) {
      double t = 0.0;
      for (int k = 0; k < a.d; ++k) t += dir[k] * b.point(i)[k];
      ys[i] = t;
    }
    acc += detail::w1_exact_1d(std::move(xs), std::move(ys));
  }
  out.value = acc / opts.slices;
  out.method = W1Result::Method::Sliced;
  out.slices = opts.slices;
  return out;
}

// Bounded independent summand model for the Berry-Esseen check. `draw_sum`
// may shortcut the n-fold sum when the distribution of S is known (the
// Rademacher generator uses a binomial draw).
struct SummandSpec {
  int d = 1;
  double delta = 1.0;  // |X_i| <= delta almost surely
  Vec mean;            // E X_i
  Mat cov;             // Var X_i (exact)
  std::function<Vec(RngStream&)> draw;
  std::function<Vec(int, RngStream&)> draw_sum;  // optional
};

inline SummandSpec rademacher_summands(double delta) {
  SummandSpec spec;
  spec.d = 1;
  spec.delta = delta;
  spec.mean = Vec::Zero(1);
  spec.cov = Mat::Constant(1, 1, delta * delta);
  spec.draw = [delta](RngStream& rng) {
    Vec x(1);
    x[0] = rng.next_double() < 0.5 ? -delta : delta;
    return x;
  };
  spec.draw_sum = [delta](int n, RngStream& rng) {
    std::binomial_distribution<long> bin(n, 0.5);
    const long heads = bin(rng);
    Vec x(1);
    x[0] = delta * static_cast<double>(2 * heads - n);
    return x;
  };
  return spec;
}

struct BerryEsseenReport {
  int n = 0;
  double delta = 0.0;
  double w1 = 0.0;
  double ratio = 0.0;  // w1 / delta, the quantity the bound controls
  std::size_t cloud_size = 0;
};

// Simulates S = X_1 + ... + X_n, draws a Gaussian cloud matched to
// (E S, sum Var X_i), and reports W1(S-cloud, Gaussian-cloud) / delta.
inline BerryEsseenReport berry_esseen_check(const SummandSpec& spec, int n, std::size_t trials,
                                            std::uint64_t seed = 1) {
  BerryEsseenReport rep;
  rep.n = n;
  rep.delta = spec.delta;
  rep.cloud_size = trials;
  PointCloud s_cloud, g_cloud;
  s_cloud.d = spec.d;
  g_cloud.d = spec.d;
  s_cloud.data.resize(trials * spec.d);
  g_cloud.data.resize(trials * spec.d);

  Eigen::SelfAdjointEigenSolver<Mat> eig(spec.cov * static_cast<double>(n));
  const Mat sqrt_cov = eig.eigenvectors() *
                       eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                       eig.eigenvectors().transpose();
  const Vec mean_s = static_cast<double>(n) * spec.mean;

  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng(seed, 0xbe55e, t);
    Vec s;
    if (spec.draw_sum) {
      s = spec.draw_sum(n, rng);
    } else {
      s = Vec::Zero(spec.d);
      for (int i = 0; i < n; ++i) s += spec.draw(rng);
    }
    for (int k = 0; k < spec.d; ++k) s_cloud.data[t * spec.d + k] = s[k];
    Vec z(spec.d);
    for (int k = 0; k < spec.d; ++k) z[k] = rng.next_gaussian();
    const Vec g = mean_s + sqrt_cov * z;
    for (int k = 0; k < spec.d; ++k) g_cloud.data[t * spec.d + k] = g[k];
  }
  rep.w1 = empirical_w1(s_cloud, g_cloud).value;
  rep.ratio = rep.w1 / spec.delta;
  return rep;
}

// Conditionally floored psd summand generator; `certified` asserts that
// 0 <= X_i <= b I and E[X_i | past] >= m_i I hold by construction.
struct PSDGenerator {
  int d = 1;
  double b = 1.0;
  bool certified = false;
  std::function<Mat(int, RngStream&)> draw;  // X_i for step index i
};

inline PSDGenerator bernoulli_psd_generator() {
  PSDGenerator gen;
  gen.d = 1;
  gen.b = 1.0;
  gen.certified = true;
  gen.draw = [](int, RngStream& rng) { return Mat::Constant(1, 1, rng.next_double() < 0.5 ? 0.0 : 1.0); };
  return gen;
}

// d=2: X = m I + u P_theta with u ~ U[0, b - m] and P a random line
// projection; E[X | past] = (m + (b-m)/4) I.
inline PSDGenerator rotated_noise_psd_generator(double m, double b) {
  PSDGenerator gen;
  gen.d = 2;
  gen.b = b;
  gen.certified = true;
  gen.draw = [m, b](int, RngStream& rng) {
    const double theta = 2.0 * M_PI * rng.next_double();
    const double u = (b - m) * rng.next_double();
    Vec dir(2);
    dir << std::cos(theta), std::sin(theta);
    return Mat(m * Mat::Identity(2, 2) + u * (dir * dir.transpose()));
  };
  return gen;
}

inline double rotated_noise_floor(double m, double b) { return m + 0.25 * (b - m); }

struct CramerCheck {
  int n = 0;
  double a = 0.0;
  double b = 0.0;
  double empirical_log_prob = -std::numeric_limits<double>::infinity();
  double bound_log_prob = 0.0;
  std::size_t hits = 0;
  std::size_t trials = 0;
  double c_configured = 0.0;
};

// Exact log P[Bin(n, 1/2) <= k].
inline double binomial_tail_log(int n, int k) {
  if (k < 0) return -std::numeric_limits<double>::infinity();
  double log_sum = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= k; ++i) {
    const double log_term = std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                            n * std::log(2.0);
    log_sum = std::max(log_sum, log_term) + std::log1p(std::exp(-std::abs(log_sum - log_term)));
  }
  return log_sum;
}

// Constant calibrated from the scalar case: the exact Bernoulli(1/2)
// tail at the half-mean threshold, halved for safety.
inline double cramer_configured_constant() {
  double c = std::numeric_limits<double>::infinity();
  for (int n : {50, 200}) {
    const double log_p = binomial_tail_log(n, n / 4);
    c = std::min(c, -log_p / (0.5 * n));
  }
  return 0.5 * c;
}

namespace detail {

inline double sphere_cover_log(int d, double mesh) {
  if (d <= 1) return std::log(2.0);
  mesh = std::min(mesh, 1.0);
  if (d == 2) return std::log(std::ceil(2.0 * M_PI / (2.0 * std::asin(0.5 * mesh))) + 1.0);
  return (d - 1) * std::log(1.0 + 2.0 / mesh) + std::log(2.0 * d);
}

}  // namespace detail

// Empirical tail of the matrix Cramer event {sum X_i <= (n a / 4) I} against
// the configured bound -c (a/b) n + log|cover|.
inline CramerCheck cramer_check(const PSDGenerator& gen, const std::vector<double>& floors, int n,
                                std::size_t trials, std::uint64_t seed = 1) {
  if (!gen.certified)
    throw HypothesisUnverifiable("cramer_check: generator does not certify its conditional floor");
  if (static_cast<int>(floors.size()) != n) throw Error("cramer_check: need one floor per step");
  CramerCheck out;
  out.n = n;
  out.b = gen.b;
  out.trials = trials;
  double a = 0.0;
  for (double m : floors) a += m;
  a /= n;
  out.a = a;
  const double threshold = 0.25 * a * n;
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    RngStream rng(seed, 0xc7a3e7, t);
    Mat sum = Mat::Zero(gen.d, gen.d);
    for (int i = 0; i < n; ++i) sum += gen.draw(i, rng);
    double min_eig;
    if (gen.d == 1) {
      min_eig = sum(0, 0);
    } else {
      Eigen::SelfAdjointEigenSolver<Mat> eig(sum);
      min_eig = eig.eigenvalues().minCoeff();
    }
    if (min_eig <= threshold) ++hits;
  }
  out.hits = hits;
  out.empirical_log_prob = hits == 0 ? -std::numeric_limits<double>::infinity()
                                     : std::log(static_cast<double>(hits) / static_cast<double>(trials));
  out.c_configured = cramer_configured_constant();
  out.bound_log_prob =
      -out.c_configured * (a / gen.b) * n + detail::sphere_cover_log(gen.d, a / (8.0 * gen.b));
  return out;
}

struct GaussianDimCheck {
  double mass_fraction_pass = 0.0;
  std::size_t cells_total = 0;
  std::size_t cells_pass = 0;
  double entropy_between = 0.0;  // H(.; r | 2r)
  double target_entropy = 0.0;   // d log 2
  bool verdict = false;
  double best_phase_offset = 0.0;
};

struct GaussianDimOptions {
  double cell_mult = 64.0;
  std::size_t min_cell_count = 64;
  int phases = 4;
  std::uint64_t seed = 1;
  double pass_fraction = 0.9;
  double entropy_slack = 0.1;
};

// Disintegrates the cloud into grid cells of side cell_mult * r, fits a
// Gaussian per cell, and measures on how much mass both hypothesis clauses
// (covariance floor C r^2 and W1-to-Gaussian below r / C) hold. The phase
// with the best passing mass is reported; any disintegration is a valid
// witness.
inline GaussianDimCheck gaussian_dimension_check(const PointCloud& cloud, double C, double r,
                                                 const GaussianDimOptions& opts = {}) {
  if (cloud.size() < 1000) throw TooFewSamples("gaussian_dimension_check: need at least 1e3 samples");
  const int d = cloud.d;
  const double side = opts.cell_mult * r;
  GaussianDimCheck best;

  RngStream phase_rng(opts.seed, 0x9d1f);
  for (int phase = 0; phase < opts.phases; ++phase) {
    const double offset = side * phase_rng.next_double();
    std::map<std::vector<std::int64_t>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      std::vector<std::int64_t> key(d);
      for (int k = 0; k < d; ++k)
        key[k] = static_cast<std::int64_t>(std::floor((cloud.point(i)[k] - offset) / side));
      cells[key].push_back(i);
    }
    double mass_pass = 0.0;
    std::size_t n_pass = 0;
    for (const auto& [key, idx] : cells) {
      if (idx.size() < opts.min_cell_count) continue;
      Vec mean = Vec::Zero(d);
      for (std::size_t i : idx) mean += cloud.point_vec(i);
      mean /= static_cast<double>(idx.size());
      Mat cov = Mat::Zero(d, d);
      for (std::size_t i : idx) {
        const Vec c = cloud.point_vec(i) - mean;
        cov += c * c.transpose();
      }
      cov /= std::max<std::size_t>(1, idx.size() - 1);
      Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
      const double min_eig = eig.eigenvalues().minCoeff();
      if (min_eig < C * r * r) continue;
      // W1 between the cell cloud and a matched Gaussian cloud.
      PointCloud cell_cloud, gauss_cloud;
      cell_cloud.d = d;
      gauss_cloud.d = d;
      const Mat sqrt_cov = eig.eigenvectors() *
                           eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                           eig.eigenvectors().transpose();
      RngStream grng(opts.seed, 0x9d2a, fnv1a64(key.data(), key.size() * sizeof(std::int64_t)));
      for (std::size_t i : idx) {
        cell_cloud.push(cloud.point_vec(i));
        Vec z(d);
        for (int k = 0; k < d; ++k) z[k] = grng.next_gaussian();
        gauss_cloud.push(mean + sqrt_cov * z);
      }
      const double w1 = empirical_w1(cell_cloud, gauss_cloud).value;
      if (w1 < r / C) {
        mass_pass += static_cast<double>(idx.size());
        ++n_pass;
      }
    }
    mass_pass /= static_cast<double>(cloud.size());
    if (mass_pass >= best.mass_fraction_pass) {
      best.mass_fraction_pass = mass_pass;
      best.cells_total = cells.size();
      best.cells_pass = n_pass;
      best.best_phase_offset = offset;
    }
  }

  GridEntropyOptions gopts;
  gopts.seed = opts.seed;
  best.entropy_between = entropy_between_scales(cloud, r, 2.0 * r, gopts);
  best.target_entropy = d * std::log(2.0);
  best.verdict = best.mass_fraction_pass >= opts.pass_fraction &&
                 best.entropy_between >= best.target_entropy - opts.entropy_slack;
  return best;
}

}  // namespace simdim
