#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "simdim/common.hpp"
#include "simdim/rng.hpp"
#include "simdim/sim_group.hpp"

namespace simdim {

// Finitely supported probability measure on Sim(R^d).
struct FiniteMeasure {
  std::vector<SimElement> atoms;
  std::vector<double> weights;

  FiniteMeasure(std::vector<SimElement> atoms_, std::vector<double> weights_, double dedup_tol = 1e-9)
      : atoms(std::move(atoms_)), weights(std::move(weights_)) {
    if (atoms.empty()) throw ConstructionError("FiniteMeasure: needs at least one atom");
    if (atoms.size() != weights.size()) throw ConstructionError("FiniteMeasure: atom/weight count mismatch");
    double total = 0.0;
    for (double w : weights) {
      if (!(w > 0.0)) throw ConstructionError("FiniteMeasure: weights must be positive");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      for (double& w : weights) w /= total;
    }
    const int d = atoms.front().dim();
    for (const auto& g : atoms)
      if (g.dim() != d) throw ConstructionError("FiniteMeasure: mixed dimensions");
    for (std::size_t i = 0; i < atoms.size(); ++i)
      for (std::size_t j = i + 1; j < atoms.size(); ++j)
        if (metric_dist(atoms[i], atoms[j]) <= dedup_tol)
          throw ConstructionError("FiniteMeasure: atoms collide below dedup tolerance");
  }

  int dim() const { return atoms.front().dim(); }
  std::size_t support_size() const { return atoms.size(); }
};

// chi_mu = E_{g ~ mu}[log rho(g)], a finite sum here.
inline double lyapunov_exponent(const FiniteMeasure& mu) {
  double chi = 0.0;
  for (std::size_t i = 0; i < mu.atoms.size(); ++i) chi += mu.weights[i] * std::log(mu.atoms[i].rho);
  return chi;
}

inline bool is_contracting_on_average(const FiniteMeasure& mu) { return lyapunov_exponent(mu) < 0.0; }

inline std::pair<double, double> rho_range(const FiniteMeasure& mu) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (const auto& g : mu.atoms) {
    lo = std::min(lo, g.rho);
    hi = std::max(hi, g.rho);
  }
  return {lo, hi};
}

// Fixed point of a single similarity: solves (I - rho U) x = b. Returns
// nullopt for degenerate atoms (rho = 1 with eigenvalue-1 rotation and
// incompatible translation) or when the solve is too ill-conditioned.
inline std::optional<Vec> fixed_point(const SimElement& g, double cond_guard = 1e12) {
  const int d = g.dim();
  const Mat a = Mat::Identity(d, d) - g.rho * g.rot;
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv[0] <= 0.0 || sv[d - 1] <= 0.0 || sv[0] / sv[d - 1] > cond_guard) {
    return std::nullopt;
  }
  return svd.solve(g.trans);
}

// A point fixed by every atom, if one exists within tol.
inline std::optional<Vec> common_fixed_point(const FiniteMeasure& mu, double tol = 1e-9) {
  std::optional<Vec> candidate;
  for (const auto& g : mu.atoms) {
    auto fp = fixed_point(g);
    if (fp) {
      candidate = fp;
      break;
    }
  }
  if (!candidate) return std::nullopt;
  for (const auto& g : mu.atoms)
    if ((apply(g, *candidate) - *candidate).norm() > tol) return std::nullopt;
  return candidate;
}

struct IrreducibilityVerdict {
  enum class Kind { Irreducible, ReducibleWithWitness, Inconclusive };
  Kind kind = Kind::Inconclusive;
  Mat witness;       // d x k orthonormal basis of the invariant subspace
  double residual = 0.0;  // max_i ||(I - P) U_i P||
};

namespace detail {

inline double invariance_residual(const FiniteMeasure& mu, const Mat& basis) {
  const int d = mu.dim();
  const Mat p = basis * basis.transpose();
  const Mat q = Mat::Identity(d, d) - p;
  double worst = 0.0;
  for (const auto& g : mu.atoms) worst = std::max(worst, operator_norm(q * g.rot * p));
  return worst;
}

}  // namespace detail

// Randomized invariant-subspace search over eigen-spaces of random real
// combinations of the rotation parts and their short products.
inline IrreducibilityVerdict is_irreducible(const FiniteMeasure& mu, double tol = 1e-8, int trials = 64,
                                            std::uint64_t seed = 7) {
  IrreducibilityVerdict out;
  const int d = mu.dim();
  if (d == 1) {
    out.kind = IrreducibilityVerdict::Kind::Irreducible;
    return out;
  }

  // Pool of candidate rotations: atoms and their products up to length 3.
  std::vector<Mat> pool;
  for (const auto& g : mu.atoms) pool.push_back(g.rot);
  const std::size_t base = pool.size();
  for (std::size_t i = 0; i < base; ++i)
    for (std::size_t j = 0; j < base; ++j) pool.push_back(pool[i] * pool[j]);
  for (std::size_t i = 0; i < base; ++i)
    for (std::size_t j = 0; j < base; ++j)
      for (std::size_t k = 0; k < base; ++k) pool.push_back(pool[i] * pool[j] * pool[k]);

  RngStream rng(seed, 0xa11ce);
  for (int trial = 0; trial < trials; ++trial) {
    Mat combo = Mat::Zero(d, d);
    for (const auto& m : pool) combo += (rng.next_gaussian()) * m;
    Eigen::EigenSolver<Mat> es(combo);
    if (es.info() != Eigen::Success) continue;
    const auto& vals = es.eigenvalues();
    const auto& vecs = es.eigenvectors();
    // Collect candidate subspaces: 1-d real eigenspaces and 2-d spaces from
    // complex-conjugate pairs.
    for (int c = 0; c < d; ++c) {
      Mat basis;
      if (std::abs(vals[c].imag()) < 1e-10) {
        Vec v = vecs.col(c).real();
        if (v.norm() < 1e-12) continue;
        basis = v.normalized();
      } else if (d >= 3) {
        Mat span(d, 2);
        span.col(0) = vecs.col(c).real();
        span.col(1) = vecs.col(c).imag();
        Eigen::HouseholderQR<Mat> qr(span);
        basis = qr.householderQ() * Mat::Identity(d, 2);
      } else {
        continue;
      }
      if (basis.cols() >= d) continue;
      const double res = detail::invariance_residual(mu, basis);
      if (res <= tol) {
        out.kind = IrreducibilityVerdict::Kind::ReducibleWithWitness;
        out.witness = basis;
        out.residual = res;
        return out;
      }
    }
  }
  out.kind = IrreducibilityVerdict::Kind::Irreducible;
  return out;
}

// Radius R with supp(nu) inside the closed R-ball when every atom contracts;
// infinity otherwise.
inline double attractor_radius_bound(const FiniteMeasure& mu) {
  double rho_max = 0.0;
  double b_max = 0.0;
  for (const auto& g : mu.atoms) {
    rho_max = std::max(rho_max, g.rho);
    b_max = std::max(b_max, g.trans.norm());
  }
  if (rho_max >= 1.0) return std::numeric_limits<double>::infinity();
  return b_max / (1.0 - rho_max);
}

struct MeasureProfile {
  double lyapunov = 0.0;
  std::pair<double, double> rho_range{1.0, 1.0};
  std::vector<double> entropy_upper;  // H(mu^{*n})/n for n = 1..
  IrreducibilityVerdict irreducible;
  std::optional<Vec> fixed_point;
  bool contracting_on_average = false;

  // Working estimate of h_mu: the deepest computed upper bound.
  double h_hat() const {
    return entropy_upper.empty() ? std::numeric_limits<double>::quiet_NaN() : entropy_upper.back();
  }
};

}  // namespace simdim
