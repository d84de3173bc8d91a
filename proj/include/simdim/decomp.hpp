#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "simdim/common.hpp"
#include "simdim/measure.hpp"
#include "simdim/rng.hpp"
#include "simdim/sim_group.hpp"
#include "simdim/walk.hpp"

namespace simdim {

struct TaylorReport {
  int n = 0;
  double r = 0.0;
  double rho_product = 1.0;
  Vec exact_x;
  Vec linear_S;
  double error = 0.0;
  double bound_constant = 0.0;  // C with error <= C^n rho^{-1} r^2 for this instance
};

// Compares x = g_1 exp(u_1) ... g_n exp(u_n) v against its linearization
// S = g_1...g_n v + sum zeta_i(u_i), zeta_i(u) = rho(g_1..g_i) U(g_1..g_i)
// psi_{g_{i+1}..g_n v}(u).
inline TaylorReport taylor_linearize(const std::vector<SimElement>& g, const std::vector<LieVector>& u,
                                     const Vec& v, double A, double r) {
  const int n = static_cast<int>(g.size());
  if (n == 0 || u.size() != g.size()) throw Error("taylor_linearize: need matching g and u lists");
  if (!(v.norm() <= A))
    throw PreconditionViolation("taylor_linearize: |v| <= A fails");
  std::vector<SimElement> prefix;  // prefix[i] = g_1...g_{i+1}
  SimElement acc = SimElement::identity(g.front().dim());
  for (int i = 0; i < n; ++i) {
    if (!(g[i].rho < 1.0)) throw PreconditionViolation("taylor_linearize: rho(g_i) < 1 fails");
    if (!(g[i].trans.norm() <= A)) throw PreconditionViolation("taylor_linearize: |b(g_i)| <= A fails");
    acc = compose(acc, g[i]);
    prefix.push_back(acc);
  }
  for (int i = 0; i < n; ++i) {
    const double bound = r / prefix[i].rho;
    if (!(bound < 1.0))
      throw PreconditionViolation("taylor_linearize: rho(g_1..g_i)^{-1} r < 1 fails");
    if (!(u[i].norm() <= bound))
      throw PreconditionViolation("taylor_linearize: |u_i| <= rho(g_1..g_i)^{-1} r fails");
  }

  // suffix[i] = g_{i+1} ... g_n v
  std::vector<Vec> suffix(n + 1);
  suffix[n] = v;
  for (int i = n - 1; i >= 0; --i) suffix[i] = apply(g[i], suffix[i + 1]);

  // exact product with the exp factors
  SimElement whole = SimElement::identity(g.front().dim());
  for (int i = 0; i < n; ++i) whole = compose(compose(whole, g[i]), exp_map(u[i]));
  const Vec x = apply(whole, v);

  Vec s = suffix[0];
  for (int i = 0; i < n; ++i) {
    const Vec zeta = prefix[i].rho * (prefix[i].rot * differential_psi(suffix[i + 1], u[i]));
    s += zeta;
  }

  TaylorReport rep;
  rep.n = n;
  rep.r = r;
  rep.rho_product = prefix.back().rho;
  rep.exact_x = x;
  rep.linear_S = s;
  rep.error = (x - s).norm();
  const double normalized = rep.error * rep.rho_product / (r * r);
  rep.bound_constant = normalized <= 0.0 ? 0.0 : std::pow(normalized, 1.0 / n);
  return rep;
}

struct BlockPlan {
  int n_blocks = 1;
  int K = 4;
  std::vector<int> S, T;  // optional explicit stopping times (1-based step indices)

  // Equal-length plan: S_i = (2i-1)K, T_i = 2iK, satisfying A1 with equality.
  void materialize() {
    if (!S.empty()) return;
    for (int i = 1; i <= n_blocks; ++i) {
      S.push_back((2 * i - 1) * K);
      T.push_back(2 * i * K);
    }
  }
};

struct DecompOptions {
  std::size_t enum_budget = 1 << 16;  // exact word enumeration cap per block
  int mc_samples = 4096;
  int bootstrap = 200;
  std::uint64_t seed = 1;
};

namespace detail {

// Lie-coordinate view of U for covariance accumulation.
inline Vec lie_coords(const LieVector& u) {
  const int d = u.dim();
  const int nskew = d * (d - 1) / 2;
  Vec c(1 + nskew + d);
  c[0] = u.scale_part;
  int idx = 1;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) c[idx++] = u.skew_part(i, j);
  for (int i = 0; i < d; ++i) c[idx++] = u.trans_part[i];
  return c;
}

// Grid geometry for one block; a deterministic function of the prefix
// contraction, the block length and the measure, so cells realize a valid
// sigma-algebra.
struct BlockGrid {
  double budget = 0.0;   // conservative A6 allowance for this block
  double s_scale = 0.0;  // 0 disables rounding of that coordinate
  double s_rot = 0.0;
  double s_b_factor = 0.0;  // cell side for b is s_b_factor * rho(f)
  double r = 0.0;
  double prefix_rho = 1.0;

  static BlockGrid make(const FiniteMeasure& mu, double prefix_rho, int block_len, double r,
                        double grid_step) {
    BlockGrid g;
    g.r = r;
    g.prefix_rho = prefix_rho;
    const auto [rho_lo, rho_hi] = rho_range(mu);
    const double rho_max_block = std::pow(rho_hi, block_len);
    // Deep blocks get enormous A6 allowances; the rounding scale is capped so
    // exp/log round trips stay well inside the reconstruction tolerance. The
    // A6 bound itself is still checked against the uncapped allowance.
    g.budget = std::min(r / (prefix_rho * rho_max_block), 32.0);
    const int d = mu.dim();
    // The log-rho cell must keep the representative's contraction within a
    // modest factor of the block's own, or the b-cells (whose side scales
    // with rho(f)) drift away from the A6 allowance (which scales with the
    // actual block contraction). 0.35 keeps the two within e^{0.175}.
    const double cap_scale =
        rho_hi < 1.0 ? std::min(0.5 * block_len * std::abs(std::log(rho_hi)), 0.35) : 0.0;
    g.s_scale = std::min(grid_step * g.budget / 4.0, cap_scale);
    const int nskew = d * (d - 1) / 2;
    g.s_rot = nskew > 0 ? std::min(grid_step * g.budget / (4.0 * std::sqrt(static_cast<double>(nskew))), 0.5)
                        : 0.0;
    g.s_b_factor = std::min(grid_step * g.budget / (4.0 * std::sqrt(static_cast<double>(d))), 1e6);
    return g;
  }
};

struct RoundedBlock {
  SimElement f;
  LieVector u;
  std::string cell;
  bool zeroed = false;
};

// Round a block product onto the grid; the cell id records every rounded
// coordinate, so "same cell" pins f exactly.
inline RoundedBlock round_block(const SimElement& block, const BlockGrid& grid) {
  RoundedBlock out{block, LieVector::zero(block.dim()), "", false};
  const int d = block.dim();
  std::ostringstream tag;

  double rho_f = block.rho;
  const double logrho = std::log(block.rho);
  if (grid.s_scale > 0.0) {
    const auto q = static_cast<std::int64_t>(std::floor(logrho / grid.s_scale));
    rho_f = std::exp((static_cast<double>(q) + 0.5) * grid.s_scale);
    tag << "s" << q;
  } else {
    tag << "s*";
  }

  Mat rot_f = block.rot;
  if (d >= 2 && grid.s_rot > 0.0) {
    const Mat w = log_orthogonal(block.rot);
    Mat wq = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) {
        const auto q = static_cast<std::int64_t>(std::floor(w(i, j) / grid.s_rot));
        const double val = (static_cast<double>(q) + 0.5) * grid.s_rot;
        wq(i, j) = val;
        wq(j, i) = -val;
        tag << "w" << q;
      }
    rot_f = exp_map(LieVector(0.0, wq, Vec::Zero(d))).rot;
  } else if (d == 1) {
    tag << "u" << (block.rot(0, 0) > 0 ? 1 : -1);
  } else {
    tag << "w*";
  }

  Vec b_f = block.trans;
  const double s_b = grid.s_b_factor * rho_f;
  if (s_b > 0.0) {
    for (int k = 0; k < d; ++k) {
      const auto q = static_cast<std::int64_t>(std::floor(block.trans[k] / s_b));
      b_f[k] = (static_cast<double>(q) + 0.5) * s_b;
      tag << "b" << q;
    }
  } else {
    tag << "b*";
  }

  out.cell = tag.str();
  try {
    out.f = SimElement(rho_f, rot_f, b_f);
    out.u = log_map(compose(inverse(out.f), block));
  } catch (const RotationBranchError&) {
    out.f = block;
    out.u = LieVector::zero(d);
    out.zeroed = true;
    out.cell += ":exact";
  }
  return out;
}

// Exact enumeration of block words (products of `len` atoms) with their
// probabilities. Only valid when |supp|^len fits the budget.
inline void enumerate_words(const FiniteMeasure& mu, int len, std::vector<SimElement>& prods,
                            std::vector<double>& probs) {
  prods.clear();
  probs.clear();
  prods.push_back(SimElement::identity(mu.dim()));
  probs.push_back(1.0);
  for (int step = 0; step < len; ++step) {
    std::vector<SimElement> next_p;
    std::vector<double> next_w;
    next_p.reserve(prods.size() * mu.support_size());
    next_w.reserve(prods.size() * mu.support_size());
    for (std::size_t i = 0; i < prods.size(); ++i)
      for (std::size_t a = 0; a < mu.support_size(); ++a) {
        next_p.push_back(compose(prods[i], mu.atoms[a]));
        next_w.push_back(probs[i] * mu.weights[a]);
      }
    prods.swap(next_p);
    probs.swap(next_w);
  }
}

inline void sample_words(const FiniteMeasure& mu, int len, int count, std::uint64_t seed,
                         std::uint64_t stream, std::vector<SimElement>& prods, std::vector<double>& probs) {
  prods.clear();
  probs.clear();
  for (int t = 0; t < count; ++t) {
    RngStream rng(seed, stream, t);
    SimElement q = SimElement::identity(mu.dim());
    for (int s = 0; s < len; ++s) q = compose(q, mu.atoms[draw_atom(mu, rng)]);
    prods.push_back(q);
    probs.push_back(1.0 / count);
  }
}

struct HMoments {
  double good_mass = 0.0;  // P[|b(h)| <= A]
  Vec m1;                  // restricted first moment of b(h)
  Mat m2;                  // restricted second moment
};

inline HMoments h_moments(const std::vector<SimElement>& words, const std::vector<double>& probs, double A,
                          int d) {
  HMoments hm;
  hm.m1 = Vec::Zero(d);
  hm.m2 = Mat::Zero(d, d);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const Vec& b = words[i].trans;
    if (b.norm() > A) continue;
    hm.good_mass += probs[i];
    hm.m1 += probs[i] * b;
    hm.m2 += probs[i] * (b * b.transpose());
  }
  return hm;
}

// E over (cell, h) of Var(rho(f) U(f) psi_{b(h)}(U) | cell, h). The A6
// zeroing inside uses the grid's own build-time budget; callers apply the
// scale normalization rho(prefix)^2 / r^2 for whatever scale they validate
// at.
inline Mat a9_expected_variance(const std::vector<SimElement>& fwords, const std::vector<double>& fprobs,
                                const HMoments& hm, const BlockGrid& grid) {
  const int d = fwords.empty() ? 1 : fwords.front().dim();
  struct CellStats {
    double mass = 0.0;
    SimElement f;
    // accumulators over words (A_w = alpha of U_w, beta_w = trans of U_w)
    Mat sum_A_m2_At;
    Mat sum_A_m1_bt;
    Mat sum_bbt;
    Mat sum_A;
    Vec sum_b;
    bool init = false;
  };
  std::map<std::string, CellStats> cells;
  for (std::size_t w = 0; w < fwords.size(); ++w) {
    const RoundedBlock rb = round_block(fwords[w], grid);
    auto& cs = cells[rb.cell];
    if (!cs.init) {
      cs.f = rb.f;
      cs.sum_A_m2_At = Mat::Zero(d, d);
      cs.sum_A_m1_bt = Mat::Zero(d, d);
      cs.sum_bbt = Mat::Zero(d, d);
      cs.sum_A = Mat::Zero(d, d);
      cs.sum_b = Vec::Zero(d);
      cs.init = true;
    }
    Mat A_w = Mat::Zero(d, d);
    Vec beta_w = Vec::Zero(d);
    bool zero = rb.zeroed;
    if (!zero) {
      const double bound = grid.r / (grid.prefix_rho * rb.f.rho);
      if (rb.u.norm() > bound) zero = true;  // A6 would fail; the builder zeroes
    }
    if (!zero) {
      A_w = rb.u.alpha();
      beta_w = rb.u.trans_part;
    }
    const double p = fprobs[w];
    cs.mass += p;
    cs.sum_A_m2_At += p * (A_w * hm.m2 * A_w.transpose());
    cs.sum_A_m1_bt += p * (A_w * hm.m1 * beta_w.transpose());
    cs.sum_bbt += p * (beta_w * beta_w.transpose());
    cs.sum_A += p * A_w;
    cs.sum_b += p * beta_w;
  }

  Mat total = Mat::Zero(d, d);
  for (auto& [cell, cs] : cells) {
    if (cs.mass <= 0.0) continue;
    const Mat Abar = cs.sum_A / cs.mass;
    const Vec bbar = cs.sum_b / cs.mass;
    const Mat mean_part = Abar * hm.m2 * Abar.transpose() + Abar * hm.m1 * bbar.transpose() +
                          bbar * hm.m1.transpose() * Abar.transpose() +
                          hm.good_mass * (bbar * bbar.transpose());
    Mat v = cs.sum_A_m2_At / cs.mass + cs.sum_A_m1_bt / cs.mass +
            (cs.sum_A_m1_bt / cs.mass).transpose() + hm.good_mass * cs.sum_bbt / cs.mass - mean_part;
    // conjugate by rho(f) U(f); orthogonal conjugation preserves eigenvalues
    v = (cs.f.rho * cs.f.rho) * (cs.f.rot * v * cs.f.rot.transpose());
    total += cs.mass * v;
  }
  return total;
}

inline double min_eigenvalue(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  return eig.eigenvalues().minCoeff();
}

}  // namespace detail

struct ProperDecomposition {
  int n = 0;
  int K = 0;
  double A = 0.0;
  double r = 0.0;
  double grid_step = 1.0;
  std::vector<SimElement> f, h;
  std::vector<LieVector> U;
  std::vector<int> S, T;
  std::vector<double> m;
  std::vector<std::string> cells;  // conditioning tag: rounded cell per block
  std::vector<std::uint8_t> zeroed;
  std::vector<detail::BlockGrid> grids;  // frozen sigma-algebra geometry per block
  double kappa_realized = 1.0;  // min over k of rho(f_1 h_1 ... f_k h_k)
  bool exact_conditionals = true;
};

// Realizes the proper-decomposition data on a sampled path by grid rounding. Variance
// floors come from the exact conditional block-word distribution when the
// word count fits the enumeration budget, otherwise from Monte-Carlo
// resampling with a bootstrap-calibrated floor.
inline ProperDecomposition build_decomposition(const FiniteMeasure& mu, const WalkPath& path, BlockPlan plan,
                                               double A, double r, double grid_step,
                                               const DecompOptions& opts = {}) {
  plan.materialize();
  const int n = static_cast<int>(plan.S.size());
  if (n == 0) throw BlockPlanInfeasible("build_decomposition: empty plan");
  if (plan.T.size() != plan.S.size()) throw BlockPlanInfeasible("build_decomposition: S/T length mismatch");
  // A1 checks
  int prev_t = 0;
  for (int i = 0; i < n; ++i) {
    if (plan.S[i] < prev_t + plan.K || plan.T[i] < plan.S[i] + plan.K)
      throw BlockPlanInfeasible("build_decomposition: plan violates the A1 spacing");
    prev_t = plan.T[i];
  }
  if (static_cast<std::size_t>(plan.T.back()) > path.length())
    throw BlockPlanInfeasible("build_decomposition: path shorter than the plan");

  ProperDecomposition pd;
  pd.n = n;
  pd.K = plan.K;
  pd.A = A;
  pd.r = r;
  pd.grid_step = grid_step;
  pd.S = plan.S;
  pd.T = plan.T;
  pd.exact_conditionals = true;

  SimElement prefix = SimElement::identity(mu.dim());
  prev_t = 0;
  for (int i = 0; i < n; ++i) {
    const int block_len = plan.S[i] - prev_t;
    const int h_len = plan.T[i] - plan.S[i];
    SimElement block = SimElement::identity(mu.dim());
    for (int s = prev_t; s < plan.S[i]; ++s) block = compose(block, path.steps[s]);
    SimElement hblock = SimElement::identity(mu.dim());
    for (int s = plan.S[i]; s < plan.T[i]; ++s) hblock = compose(hblock, path.steps[s]);

    const auto grid = detail::BlockGrid::make(mu, prefix.rho, block_len, r, grid_step);
    detail::RoundedBlock rb = detail::round_block(block, grid);

    // A5 / A6 zeroing: forcing U = 0 requires f to carry the block exactly.
    bool zero = rb.zeroed;
    if (hblock.trans.norm() > A) zero = true;
    if (!zero && rb.u.norm() > r / (prefix.rho * rb.f.rho)) zero = true;
    if (zero) {
      rb.f = block;
      rb.u = LieVector::zero(mu.dim());
      rb.zeroed = true;
    }

    // Conditional variance floor for this block.
    std::vector<SimElement> fwords, hwords;
    std::vector<double> fprobs, hprobs;
    const double word_count = std::pow(static_cast<double>(mu.support_size()), block_len);
    const double hword_count = std::pow(static_cast<double>(mu.support_size()), h_len);
    if (word_count <= static_cast<double>(opts.enum_budget) &&
        hword_count <= static_cast<double>(opts.enum_budget)) {
      detail::enumerate_words(mu, block_len, fwords, fprobs);
      detail::enumerate_words(mu, h_len, hwords, hprobs);
    } else {
      pd.exact_conditionals = false;
      detail::sample_words(mu, block_len, opts.mc_samples, opts.seed, 0xf00d0 + i, fwords, fprobs);
      detail::sample_words(mu, h_len, opts.mc_samples, opts.seed, 0x600d0 + i, hwords, hprobs);
    }
    const auto hm = detail::h_moments(hwords, hprobs, A, mu.dim());
    const double norm_factor = (prefix.rho * prefix.rho) / (r * r);
    double floor;
    if (pd.exact_conditionals) {
      const Mat a9 = detail::a9_expected_variance(fwords, fprobs, hm, grid) * norm_factor;
      floor = std::max(0.0, detail::min_eigenvalue(a9) - 1e-12);
    } else {
      // Bootstrap over the sampled words; floor at the configured confidence.
      std::vector<double> eigs;
      RngStream boot(opts.seed, 0xb0075 + i);
      for (int bst = 0; bst < opts.bootstrap; ++bst) {
        std::vector<SimElement> fw(fwords.size());
        std::vector<double> fp(fwords.size(), 1.0 / fwords.size());
        for (std::size_t t = 0; t < fwords.size(); ++t) fw[t] = fwords[boot.next_index(fwords.size())];
        const Mat a9 = detail::a9_expected_variance(fw, fp, hm, grid) * norm_factor;
        eigs.push_back(detail::min_eigenvalue(a9));
      }
      std::sort(eigs.begin(), eigs.end());
      const std::size_t at = static_cast<std::size_t>(0.05 * eigs.size());
      floor = std::max(0.0, eigs[at]);
    }

    pd.f.push_back(rb.f);
    pd.h.push_back(hblock);
    pd.U.push_back(rb.u);
    pd.m.push_back(floor);
    pd.cells.push_back(rb.cell);
    pd.zeroed.push_back(rb.zeroed ? 1 : 0);
    pd.grids.push_back(grid);

    prefix = compose(prefix, compose(rb.f, hblock));
    pd.kappa_realized = std::min(pd.kappa_realized, prefix.rho);
    prev_t = plan.T[i];
  }
  return pd;
}

struct AxiomReport {
  struct Item {
    std::string axiom;
    bool pass = false;
    std::string detail;
  };
  std::vector<Item> items;
  bool all_pass = true;

  void add(const std::string& axiom, bool pass, const std::string& detail = "") {
    items.push_back({axiom, pass, detail});
    all_pass = all_pass && pass;
  }
};

// Checks A1-A9 against the path the decomposition was built from. A7/A8 are
// structural: disjoint step ranges and U_i recomputable from its own block
// and cell.
inline AxiomReport validate_decomposition(const FiniteMeasure& mu, const ProperDecomposition& pd,
                                          const WalkPath& path, const DecompOptions& opts = {}) {
  AxiomReport rep;
  const int n = pd.n;

  bool a1 = true;
  std::ostringstream a1_detail;
  int prev_t = 0;
  for (int i = 0; i < n; ++i) {
    if (pd.S[i] < prev_t + pd.K || pd.T[i] < pd.S[i] + pd.K) {
      a1 = false;
      a1_detail << "block " << (i + 1) << " violates spacing; ";
    }
    prev_t = pd.T[i];
  }
  rep.add("A1", a1, a1_detail.str());

  bool a2 = true, a3 = true, a4 = true, a5 = true, a6 = true, a78 = true;
  std::ostringstream a2d, a3d, a4d, a5d, a6d, a78d;
  SimElement prefix = SimElement::identity(mu.dim());
  prev_t = 0;
  for (int i = 0; i < n; ++i) {
    SimElement block = SimElement::identity(mu.dim());
    for (int s = prev_t; s < pd.S[i]; ++s) block = compose(block, path.steps[s]);
    SimElement hblock = SimElement::identity(mu.dim());
    for (int s = pd.S[i]; s < pd.T[i]; ++s) hblock = compose(hblock, path.steps[s]);

    const SimElement recon = compose(pd.f[i], exp_map(pd.U[i]));
    if (metric_dist(recon, block) > 1e-9) {
      a2 = false;
      a2d << "block " << (i + 1) << " off by " << metric_dist(recon, block) << "; ";
    }
    if (metric_dist(pd.h[i], hblock) > 1e-12) {
      a3 = false;
      a3d << "block " << (i + 1) << "; ";
    }
    if (!(pd.f[i].rho < 1.0)) {
      a4 = false;
      a4d << "block " << (i + 1) << " rho(f)=" << pd.f[i].rho << "; ";
    }
    if (pd.h[i].trans.norm() > pd.A && pd.U[i].norm() != 0.0) {
      a5 = false;
      a5d << "block " << (i + 1) << "; ";
    }
    const double bound = pd.r / (prefix.rho * pd.f[i].rho);
    if (pd.U[i].norm() > bound * (1.0 + 1e-12)) {
      a6 = false;
      a6d << "block " << (i + 1) << " |U|=" << pd.U[i].norm() << " > " << bound << "; ";
    }

    // A7/A8 structure: disjoint step ranges hold by the index layout checked
    // in A1; U_i must be the deterministic rounding residue of its own block
    // under the frozen grid geometry.
    if (!pd.zeroed[i]) {
      const auto rb = detail::round_block(block, pd.grids[i]);
      if (rb.cell != pd.cells[i] || metric_dist(rb.f, pd.f[i]) > 1e-9) {
        a78 = false;
        a78d << "block " << (i + 1) << " cell mismatch; ";
      }
    }

    prefix = compose(prefix, compose(pd.f[i], hblock));
    prev_t = pd.T[i];
  }
  rep.add("A2", a2, a2d.str());
  rep.add("A3", a3, a3d.str());
  rep.add("A4", a4, a4d.str());
  rep.add("A5", a5, a5d.str());
  rep.add("A6", a6, a6d.str());
  rep.add("A7/A8", a78, a78 ? "satisfied by construction" : a78d.str());

  // A9: recompute the conditional floor matrix and test its least eigenvalue
  // against the declared floor.
  bool a9 = true;
  std::ostringstream a9d;
  prefix = SimElement::identity(mu.dim());
  prev_t = 0;
  for (int i = 0; i < n; ++i) {
    const int block_len = pd.S[i] - prev_t;
    const int h_len = pd.T[i] - pd.S[i];
    std::vector<SimElement> fwords, hwords;
    std::vector<double> fprobs, hprobs;
    double slack = 1e-9;
    const double wc = std::pow(static_cast<double>(mu.support_size()), block_len);
    const double hc = std::pow(static_cast<double>(mu.support_size()), h_len);
    if (wc <= static_cast<double>(opts.enum_budget) && hc <= static_cast<double>(opts.enum_budget)) {
      detail::enumerate_words(mu, block_len, fwords, fprobs);
      detail::enumerate_words(mu, h_len, hwords, hprobs);
    } else {
      detail::sample_words(mu, block_len, opts.mc_samples, opts.seed ^ 0x5eedULL, 0xa9f0 + i, fwords, fprobs);
      detail::sample_words(mu, h_len, opts.mc_samples, opts.seed ^ 0x5eedULL, 0xa9b0 + i, hwords, hprobs);
      slack = 3.0 / std::sqrt(static_cast<double>(opts.mc_samples));
    }
    const auto hm = detail::h_moments(hwords, hprobs, pd.A, mu.dim());
    const Mat a9m = detail::a9_expected_variance(fwords, fprobs, hm, pd.grids[i]) *
                    ((prefix.rho * prefix.rho) / (pd.r * pd.r));
    const double lam = detail::min_eigenvalue(a9m - pd.m[i] * Mat::Identity(mu.dim(), mu.dim()));
    if (lam < -slack) {
      a9 = false;
      a9d << "block " << (i + 1) << " short by " << -lam << "; ";
    }
    prefix = compose(prefix, compose(pd.f[i], pd.h[i]));
    prev_t = pd.T[i];
  }
  rep.add("A9", a9, a9d.str());
  return rep;
}

struct AchievedVariance {
  double sum_m = 0.0;
  int n = 0;
  int K = 0;
  double kappa = 0.0;
  double A = 0.0;
  double r = 0.0;
};

// Sum m_i with the realized (n, K, kappa, A, r) tuple; any kappa' <= kappa
// certifies the same lower bound.
inline AchievedVariance variance_sum_achieved(const ProperDecomposition& pd) {
  AchievedVariance out;
  for (double v : pd.m) out.sum_m += v;
  out.n = pd.n;
  out.K = pd.K;
  out.kappa = pd.kappa_realized;
  out.A = pd.A;
  out.r = pd.r;
  return out;
}

struct ConcatResult {
  ProperDecomposition pd;
  WalkPath path;
  double rescale_factor = 1.0;  // applied to pd2's floors
  double kappa_guarantee = 0.0; // R^{-1} M^{-1} kappa_1 kappa_2
};

// Joins two decompositions across scales. pd2 must live at scale
// M kappa_1^{-1} r; the gap between them is absorbed into pd1's last h-block
// by extending it until the contraction clears kappa_1 / M, which is what
// makes "A6 at the combined scale" hold for pd2's perturbations.
inline ConcatResult concatenate(const FiniteMeasure& mu, const ProperDecomposition& pd1, const WalkPath& path1,
                                const ProperDecomposition& pd2, const WalkPath& path2, double M, double R) {
  if (M < R) throw Error("concatenate: requires M >= R");
  const double kappa1 = pd1.kappa_realized;
  const double expected_r2 = M / kappa1 * pd1.r;
  if (std::abs(pd2.r - expected_r2) > 1e-9 * expected_r2)
    throw ScaleMismatch("concatenate: pd2 scale is not M kappa_1^{-1} r");
  if (pd1.K != pd2.K) throw ScaleMismatch("concatenate: block plans disagree on K");

  // Extend pd1's last h block until rho(f_1 h_1 ... f_n h_n^ext) <= kappa1/M.
  SimElement total1 = SimElement::identity(mu.dim());
  for (int i = 0; i < pd1.n; ++i) total1 = compose(total1, compose(pd1.f[i], pd1.h[i]));
  int ext_end = pd1.T.back();
  SimElement total_ext = total1;
  while (total_ext.rho > kappa1 / M) {
    if (static_cast<std::size_t>(ext_end) >= path1.length())
      throw BlockPlanInfeasible("concatenate: path1 too short to bridge the scale gap");
    total_ext = compose(total_ext, path1.steps[ext_end]);
    ++ext_end;
  }
  const double rho_star = total_ext.rho;

  ConcatResult out;
  out.pd = pd1;
  SimElement ext = SimElement::identity(mu.dim());
  for (int s = pd1.S.back(); s < ext_end; ++s) ext = compose(ext, path1.steps[s]);
  out.pd.h.back() = ext;  // h_n extended across the gap
  out.pd.T.back() = ext_end;

  out.rescale_factor = (pd2.r * rho_star / pd1.r) * (pd2.r * rho_star / pd1.r);
  for (int j = 0; j < pd2.n; ++j) {
    out.pd.f.push_back(pd2.f[j]);
    out.pd.h.push_back(pd2.h[j]);
    out.pd.U.push_back(pd2.U[j]);
    out.pd.m.push_back(pd2.m[j] * out.rescale_factor);
    out.pd.cells.push_back(pd2.cells[j]);
    out.pd.zeroed.push_back(pd2.zeroed[j]);
    out.pd.grids.push_back(pd2.grids[j]);
    out.pd.S.push_back(pd2.S[j] + ext_end);
    out.pd.T.push_back(pd2.T[j] + ext_end);
  }
  out.pd.n = pd1.n + pd2.n;
  out.pd.exact_conditionals = pd1.exact_conditionals && pd2.exact_conditionals;

  // Combined path: path1 up to the extension end, then path2's steps.
  out.path.seed = path1.seed;
  for (int s = 0; s < ext_end; ++s) out.path.steps.push_back(path1.steps[s]);
  for (std::size_t s = 0; s < path2.length(); ++s) out.path.steps.push_back(path2.steps[s]);
  SimElement q = SimElement::identity(mu.dim());
  for (const auto& g : out.path.steps) {
    const double next = q.rho * g.rho;
    if (next < 1e-290 || next > 1e290) break;
    q = compose(q, g);
    out.path.prefix.push_back(q);
  }

  // Realized kappa over the combined f/h prefixes.
  SimElement prefix = SimElement::identity(mu.dim());
  out.pd.kappa_realized = 1.0;
  for (int i = 0; i < out.pd.n; ++i) {
    prefix = compose(prefix, compose(out.pd.f[i], out.pd.h[i]));
    out.pd.kappa_realized = std::min(out.pd.kappa_realized, prefix.rho);
  }
  out.kappa_guarantee = kappa1 * pd2.kappa_realized / (R * M);
  return out;
}

struct TraceLowerBound {
  double t = 0.0;
  double zeroed_mass = 0.0;
  std::size_t cells = 0;
  std::size_t trials = 0;
};

// Achieved lower bound for tr(q_{tau_kappa}; r): rounds stopped products to
// a lattice h and measures E[tr Var(U | cell)] / r^2 for U = log(h^{-1} q).
inline TraceLowerBound trace_at_scale_lower(const FiniteMeasure& mu, double kappa, double r, double grid_step,
                                            std::size_t trials, std::uint64_t seed) {
  const int d = mu.dim();
  const int nskew = d * (d - 1) / 2;
  const double s_scale = std::min(grid_step * r / 4.0, 0.5);
  const double s_rot = nskew > 0 ? std::min(grid_step * r / (4.0 * std::sqrt(static_cast<double>(nskew))), 0.5)
                                 : 0.0;

  std::map<std::string, std::vector<Vec>> cells;
  std::size_t zeroed = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto stopped = stopped_walk(mu, kappa, seed, t);
    const SimElement& q = stopped.q;
    std::ostringstream tag;
    const auto qs = static_cast<std::int64_t>(std::floor(std::log(q.rho) / s_scale));
    const double rho_h = std::exp((static_cast<double>(qs) + 0.5) * s_scale);
    tag << "s" << qs;
    Mat rot_h = q.rot;
    if (d >= 2 && s_rot > 0.0) {
      Mat w;
      try {
        w = detail::log_orthogonal(q.rot);
      } catch (const RotationBranchError&) {
        ++zeroed;
        continue;
      }
      Mat wq = Mat::Zero(d, d);
      for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
          const auto qr = static_cast<std::int64_t>(std::floor(w(i, j) / s_rot));
          const double val = (static_cast<double>(qr) + 0.5) * s_rot;
          wq(i, j) = val;
          wq(j, i) = -val;
          tag << "w" << qr;
        }
      rot_h = exp_map(LieVector(0.0, wq, Vec::Zero(d))).rot;
    } else if (d == 1) {
      tag << "u" << (q.rot(0, 0) > 0 ? 1 : -1);
    }
    const double s_b = grid_step * r * rho_h / (4.0 * std::sqrt(static_cast<double>(d)));
    Vec b_h(d);
    for (int k = 0; k < d; ++k) {
      const auto qb = static_cast<std::int64_t>(std::floor(q.trans[k] / s_b));
      b_h[k] = (static_cast<double>(qb) + 0.5) * s_b;
      tag << "b" << qb;
    }
    LieVector u = LieVector::zero(d);
    try {
      u = log_map(compose(inverse(SimElement(rho_h, rot_h, b_h)), q));
    } catch (const RotationBranchError&) {
      ++zeroed;
      continue;
    }
    if (u.norm() > r) {
      ++zeroed;
      cells[tag.str()].push_back(Vec::Zero(1 + nskew + d));
      continue;
    }
    cells[tag.str()].push_back(detail::lie_coords(u));
  }

  TraceLowerBound out;
  out.trials = trials;
  out.cells = cells.size();
  out.zeroed_mass = static_cast<double>(zeroed) / static_cast<double>(trials);
  double acc = 0.0;
  for (const auto& [tag, us] : cells) {
    if (us.size() < 2) continue;
    Vec mean = Vec::Zero(us.front().size());
    for (const auto& u : us) mean += u;
    mean /= static_cast<double>(us.size());
    double trace = 0.0;
    for (const auto& u : us) trace += (u - mean).squaredNorm();
    trace /= static_cast<double>(us.size() - 1);
    acc += static_cast<double>(us.size()) / static_cast<double>(trials) * trace;
  }
  out.t = acc / (r * r);
  return out;
}

// Structured text dump for external inspection: one block per record.
inline std::string dump_decomposition(const ProperDecomposition& pd) {
  std::ostringstream os;
  os.precision(17);
  os << "proper-decomposition n=" << pd.n << " K=" << pd.K << " A=" << pd.A << " r=" << pd.r
     << " kappa=" << pd.kappa_realized << "\n";
  for (int i = 0; i < pd.n; ++i) {
    os << "block " << (i + 1) << "\n";
    os << "  S=" << pd.S[i] << " T=" << pd.T[i] << " cell=" << pd.cells[i]
       << " zeroed=" << static_cast<int>(pd.zeroed[i]) << " m=" << pd.m[i] << "\n";
    os << "  f: rho=" << pd.f[i].rho << " b=[";
    for (int k = 0; k < pd.f[i].dim(); ++k) os << (k ? "," : "") << pd.f[i].trans[k];
    os << "]\n";
    os << "  h: rho=" << pd.h[i].rho << " b=[";
    for (int k = 0; k < pd.h[i].dim(); ++k) os << (k ? "," : "") << pd.h[i].trans[k];
    os << "]\n";
    os << "  U: scale=" << pd.U[i].scale_part << " |U|=" << pd.U[i].norm() << "\n";
  }
  return os.str();
}

}  // namespace simdim
