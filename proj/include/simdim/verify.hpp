#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "simdim/decomp.hpp"
#include "simdim/entropy.hpp"
#include "simdim/exact_semigroup.hpp"
#include "simdim/measure.hpp"
#include "simdim/prob.hpp"
#include "simdim/semigroup.hpp"
#include "simdim/sim_group.hpp"
#include "simdim/walk.hpp"

namespace simdim {

// Invariant suites behind `verify`: every module's documented properties run
// against built-in systems with a caller-provided seed. All randomness flows
// through counter-based streams, so results are byte-stable across thread
// counts.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct SuiteResult {
  std::string suite;
  std::vector<CheckResult> checks;
  bool all_pass = true;

  void add(const std::string& name, bool pass, const std::string& detail = "") {
    checks.push_back({name, pass, detail});
    all_pass = all_pass && pass;
  }
};

namespace verify_detail {

inline FiniteMeasure free_system() {
  return FiniteMeasure({SimElement::scaling_1d(1.0 / 3.0, 1.0), SimElement::scaling_1d(1.0 / 3.0, -1.0)},
                       {0.5, 0.5});
}

inline FiniteMeasure golden_system() {
  const double l = (std::sqrt(5.0) - 1.0) / 2.0;
  return FiniteMeasure({SimElement::scaling_1d(l, 1.0), SimElement::scaling_1d(l, -1.0)}, {0.5, 0.5});
}

inline FiniteMeasure three_atom_system() {
  return FiniteMeasure({SimElement::scaling_1d(0.4, 1.0), SimElement::scaling_1d(0.3, -1.0),
                        SimElement::scaling_1d(0.5, 0.25)},
                       {0.4, 0.35, 0.25});
}

inline LieVector random_lie(int d, RngStream& rng, double cap) {
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
  if (u.norm() > 0) u = u.scaled(cap * rng.next_double() / u.norm());
  return u;
}

inline std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace verify_detail

inline SuiteResult verify_sim_group(std::uint64_t seed) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "sim_group";

  {
    RngStream rng(seed, 0x5a01);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const auto g = exp_map(random_lie(2, rng, 1.5));
      const auto h = exp_map(random_lie(2, rng, 1.5));
      worst = std::max(worst, std::abs(compose(g, h).rho - g.rho * h.rho) / (g.rho * h.rho));
    }
    suite.add("rho_multiplicative", worst <= 1e-15, "max rel err " + fmt(worst));
  }
  {
    RngStream rng(seed, 0x5a02);
    bool ok = true;
    for (int t = 0; t < 1000 && ok; ++t) {
      const int d = 1 + static_cast<int>(rng.next_index(3));
      const auto a = exp_map(random_lie(d, rng, 1.0));
      const auto b = exp_map(random_lie(d, rng, 1.0));
      const auto c = exp_map(random_lie(d, rng, 1.0));
      ok = metric_dist(a, c) <= metric_dist(a, b) + metric_dist(b, c) + 1e-12;
    }
    suite.add("metric_triangle_inequality", ok);
  }
  {
    RngStream rng(seed, 0x5a03);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const int d = 1 + static_cast<int>(rng.next_index(3));
      const auto u = random_lie(d, rng, 0.5);
      const auto g = exp_map(u);
      worst = std::max(worst, metric_dist(exp_map(log_map(g)), g));
    }
    suite.add("exp_log_round_trip", worst <= 1e-9, "max dist " + fmt(worst));
  }
  {
    RngStream rng(seed, 0x5a04);
    double worst = 0.0;
    for (int t = 0; t < 200; ++t) {
      const auto u = random_lie(3, rng, 1.0);
      const auto v = random_lie(3, rng, 1.0);
      const double a = rng.next_gaussian(), b = rng.next_gaussian();
      Vec x(3);
      for (int i = 0; i < 3; ++i) x[i] = rng.next_gaussian();
      const Vec lhs = differential_psi(x, u.scaled(a).plus(v.scaled(b)));
      const Vec rhs = a * differential_psi(x, u) + b * differential_psi(x, v);
      worst = std::max(worst, (lhs - rhs).norm());
    }
    suite.add("psi_linear", worst <= 1e-12, "max err " + fmt(worst));
  }
  {
    // psi is the derivative: the finite-difference error fits K*t across the
    // t-ladder, with the fitted K below the a-priori second-derivative
    // ceiling |u|^2 (|x| + 1) of the curve t -> exp(tu)x.
    RngStream rng(seed, 0x5a05);
    bool ok = true;
    double worst_margin = 0.0;
    for (int t = 0; t < 20 && ok; ++t) {
      const int d = 1 + static_cast<int>(rng.next_index(3));
      const auto u = random_lie(d, rng, 1.0);
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = rng.next_gaussian();
      double fitted_k = 0.0;
      for (double step : {1e-3, 1e-4, 1e-5}) {
        const Vec fd = (apply(exp_map(u.scaled(step)), x) - x) / step;
        fitted_k = std::max(fitted_k, (fd - differential_psi(x, u)).norm() / step);
      }
      const double ceiling = 1.2 * u.norm() * u.norm() * (x.norm() + 1.0);
      worst_margin = std::max(worst_margin, fitted_k / ceiling);
      if (fitted_k > ceiling) ok = false;
    }
    suite.add("psi_is_derivative", ok, "worst K/ceiling " + fmt(worst_margin));
  }
  {
    // Orthogonality is enforced at construction; the accept tolerance is the
    // env-overridable knob, so an injected bad tolerance fails here.
    Mat drifted = SimElement::rotation2d(0.4);
    drifted(0, 0) += 5e-9;
    bool ok = true;
    std::string detail;
    try {
      const SimElement g(1.0, drifted, Vec::Zero(2));
      const double residual = (g.rot * g.rot.transpose() - Mat::Identity(2, 2)).norm();
      ok = residual <= 1e-10;
      detail = "residual " + fmt(residual);
    } catch (const ConstructionError& e) {
      ok = false;
      detail = e.what();
    }
    suite.add("orthogonality_enforced", ok, detail);
  }
  return suite;
}

inline SuiteResult verify_measure_core(std::uint64_t seed) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "measure_core";
  {
    RngStream rng(seed, 0x3c01);
    const auto g1 = SimElement::scaling_1d(0.3, 1.0);
    const auto g2 = SimElement::scaling_1d(1.7, -2.0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
      const double p = 0.05 + 0.9 * rng.next_double();
      const FiniteMeasure mu({g1, g2}, {p, 1.0 - p});
      worst = std::max(worst,
                       std::abs(lyapunov_exponent(mu) - (p * std::log(0.3) + (1.0 - p) * std::log(1.7))));
    }
    suite.add("lyapunov_affine_in_weights", worst <= 1e-12, "max err " + fmt(worst));
  }
  {
    const FiniteMeasure mu({SimElement::scaling_1d(0.25, 1.0), SimElement::scaling_1d(0.25, -1.0)},
                           {0.3, 0.7});
    suite.add("constant_rho_exact", lyapunov_exponent(mu) == std::log(0.25),
              "chi = " + fmt(lyapunov_exponent(mu)));
  }
  {
    Vec b1(2), b2(2);
    b1 << 1.0, 0.0;
    b2 << -0.4, 0.7;
    const FiniteMeasure mu({SimElement(0.5, Mat::Identity(2, 2), b1), SimElement(0.6, Mat::Identity(2, 2), b2)},
                           {0.5, 0.5});
    const auto verdict = is_irreducible(mu, 1e-8, 64, seed);
    bool ok = verdict.kind == IrreducibilityVerdict::Kind::ReducibleWithWitness;
    if (ok) ok = detail::invariance_residual(mu, verdict.witness) <= 1e-8;
    suite.add("witness_reverified", ok);
  }
  return suite;
}

inline SuiteResult verify_semigroup(std::uint64_t seed, int threads) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "semigroup_enum";
  (void)seed;
  {
    double worst = 0.0;
    const auto gens = convolution_ladder(golden_system(), 8);
    for (const auto& g : gens) {
      double total = 0.0;
      for (double p : g.probs) total += p;
      worst = std::max(worst, std::abs(total - 1.0) / g.n);
    }
    suite.add("probability_conserved", worst <= 1e-10, "max err/n " + fmt(worst));
  }
  {
    const auto gens = convolution_ladder(free_system(), 10);
    bool ok = true;
    for (int n = 1; n <= 10; ++n)
      if (gens[n - 1].size() != (static_cast<std::size_t>(1) << n)) ok = false;
    suite.add("free_support_is_2_pow_n", ok);
  }
  {
    const auto gens = convolution_ladder(golden_system(), 8);
    std::vector<double> H;
    for (const auto& g : gens) H.push_back(shannon_entropy(g));
    bool ok = true;
    for (std::size_t m = 1; m + 1 <= H.size(); ++m)
      for (std::size_t n = 1; m + n <= H.size(); ++n)
        if (H[m + n - 1] > H[m - 1] + H[n - 1] + 1e-9) ok = false;
    suite.add("entropy_subadditive", ok);
  }
  {
    const auto gens = convolution_ladder(free_system(), 6);
    bool ok = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= 6; ++n) {
      const double m = m_n(gens, n).value();
      if (m > prev + 1e-15) ok = false;
      for (int k = 1; k <= n; ++k)
        if (m > delta_n(gens[k - 1]).value() + 1e-15) ok = false;
      prev = m;
    }
    suite.add("m_n_monotone_below_delta", ok);
  }
  {
    bool ok = true;
    for (const auto& mu : {free_system(), golden_system(), three_atom_system()}) {
      const auto gens = convolution_ladder(mu, 4);
      for (int n = 2; n <= 4; ++n) {
        const auto& els = gens[n - 1].elements;
        double brute = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < els.size(); ++i)
          for (std::size_t j = i + 1; j < els.size(); ++j)
            brute = std::min(brute, metric_dist(els[i], els[j]));
        if (delta_n(gens[n - 1]).value() != brute) ok = false;

        // M_n against the all-pairs scan over the union of generations 0..n.
        std::vector<SimElement> pool{SimElement::identity(mu.dim())};
        for (int k = 1; k <= n; ++k)
          for (const auto& e : gens[k - 1].elements) pool.push_back(e);
        double brute_m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < pool.size(); ++i)
          for (std::size_t j = i + 1; j < pool.size(); ++j)
            brute_m = std::min(brute_m, metric_dist(pool[i], pool[j]));
        if (m_n(gens, n).value() != brute_m) ok = false;
      }
    }
    suite.add("delta_and_m_match_bruteforce_oracle", ok);
  }
  {
    ConvOptions one, eight;
    one.threads = 1;
    eight.threads = threads > 1 ? threads : 8;
    const auto a = enumerate_convolution(golden_system(), 7, one);
    const auto b = enumerate_convolution(golden_system(), 7, eight);
    bool ok = a.size() == b.size();
    for (std::size_t i = 0; ok && i < a.size(); ++i)
      ok = a.probs[i] == b.probs[i] && metric_dist(a.elements[i], b.elements[i]) == 0.0;
    suite.add("thread_count_invariance", ok);
  }
  return suite;
}

inline SuiteResult verify_walk(std::uint64_t seed, int threads) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "walk_sampler";
  {
    // Stationarity: push the attractor cloud through one more mu-step and
    // compare W1 against the spread of two independent clouds.
    const auto mu = golden_system();
    const std::size_t n = 20000;
    const auto cloud = sample_attractor(mu, n, seed, ContractionKappa{1e-8}, threads);
    const auto cloud2 = sample_attractor(mu, n, seed ^ 0xabcdef, ContractionKappa{1e-8}, threads);
    PointCloud pushed;
    pushed.d = 1;
    for (std::size_t i = 0; i < n; ++i) {
      RngStream rng(seed, 0x9057, i);
      const auto& g = mu.atoms[rng.next_double() < 0.5 ? 0 : 1];
      Vec x(1);
      x[0] = cloud.data[i];
      pushed.push(apply(g, x));
    }
    const double base = empirical_w1(cloud, cloud2).value;
    const double moved = empirical_w1(cloud, pushed).value;
    suite.add("stationarity_w1", moved <= 3.0 * base,
              "pushed " + fmt(moved) + " vs independent " + fmt(base));
  }
  {
    const auto mu = three_atom_system();
    const double kappa = 1e-5;
    const auto [rho_lo, rho_hi] = rho_range(mu);
    bool ok = true;
    for (std::uint64_t t = 0; t < 500 && ok; ++t) {
      const auto stopped = stopped_walk(mu, kappa, seed, t);
      ok = stopped.q.rho <= kappa && stopped.q.rho >= kappa * rho_lo;
    }
    suite.add("stopped_rho_window", ok);
  }
  {
    const auto a = sample_attractor(free_system(), 2000, seed, ContractionKappa{1e-7}, 1);
    const auto b = sample_attractor(free_system(), 2000, seed, ContractionKappa{1e-7}, threads > 1 ? threads : 8);
    suite.add("seed_reproducibility", a.data == b.data);
  }
  return suite;
}

inline SuiteResult verify_entropy(std::uint64_t seed, int threads) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "entropy_est";
  const std::size_t n = 1'000'000;
  PointCloud cloud;
  cloud.d = 1;
  cloud.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(seed, 0xe507, i);
    cloud.data[i] = rng.next_double();
  }
  GridEntropyOptions gopts;
  gopts.seed = seed;
  gopts.threads = threads;
  {
    PointCloud shifted = cloud;
    for (auto& x : shifted.data) x += 0.4217;
    const double gap =
        std::abs(grid_entropy_at_scale(cloud, 1.0 / 256.0, gopts) - grid_entropy_at_scale(shifted, 1.0 / 256.0, gopts));
    suite.add("shift_invariance", gap <= 0.05, "gap " + fmt(gap));
  }
  {
    PointCloud scaled = cloud;
    for (auto& x : scaled.data) x *= 3.75;
    const double a = grid_entropy_at_scale(cloud, 0.01, gopts);
    const double b = grid_entropy_at_scale(scaled, 3.75 * 0.01, gopts);
    suite.add("scaling_covariance", a == b, "difference " + fmt(b - a));
  }
  {
    bool ok = true;
    double prev = -std::numeric_limits<double>::infinity();
    for (int k = 3; k <= 9; ++k) {
      const double h = grid_entropy_at_scale(cloud, std::pow(2.0, -k), gopts);
      if (h < prev - 0.02) ok = false;
      prev = h;
    }
    suite.add("monotone_in_scale", ok);
  }
  {
    const double r = 1.0 / 128.0;
    PointCloud jittered = cloud;
    for (std::size_t i = 0; i < n; ++i) {
      RngStream rng(seed, 0xe517, i);
      jittered.data[i] += (2.0 * rng.next_double() - 1.0) * r;
    }
    const double gap =
        std::abs(grid_entropy_at_scale(jittered, r, gopts) - grid_entropy_at_scale(cloud, r, gopts));
    suite.add("jitter_stability", gap <= std::log(6.0) + 0.05, "gap " + fmt(gap) + " vs d log 6");
  }
  return suite;
}

inline SuiteResult verify_decomp(std::uint64_t seed) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "decomp_engine";
  const auto mu = free_system();
  {
    bool ok = true;
    std::string detail;
    for (std::uint64_t t = 0; t < 50 && ok; ++t) {
      const auto path = sample_walk(mu, 24, seed + t);
      BlockPlan plan;
      plan.n_blocks = 3;
      plan.K = 4;
      const auto pd = build_decomposition(mu, path, plan, 2.0, 0.5, 1.0);
      SimElement lhs = SimElement::identity(1);
      for (int i = 0; i < pd.n; ++i) lhs = compose(lhs, compose(compose(pd.f[i], exp_map(pd.U[i])), pd.h[i]));
      const double gap = metric_dist(lhs, path.q(pd.T.back()));
      if (gap > 1e-8) {
        ok = false;
        detail = "gap " + fmt(gap);
      }
      const auto rep = validate_decomposition(mu, pd, path);
      if (!rep.all_pass) {
        ok = false;
        detail = "axioms failed";
      }
    }
    suite.add("reconstruction_and_axioms", ok, detail);
  }
  {
    // Taylor constant stability across r: the same instances with u scaled
    // proportionally to r must fit the same C up to 20% (quadratic-in-r
    // scaling is the literal test).
    RngStream rng(seed, 0xdc01);
    const double base_r = 1e-2;
    std::vector<std::vector<SimElement>> all_g;
    std::vector<std::vector<LieVector>> all_u;
    std::vector<Vec> all_v;
    for (int t = 0; t < 300; ++t) {
      std::vector<SimElement> gs;
      std::vector<LieVector> us;
      double prefix = 1.0;
      for (int i = 0; i < 3; ++i) {
        const double rho = 0.75 + 0.2 * rng.next_double();
        Vec b(2);
        b << rng.next_double() - 0.5, rng.next_double() - 0.5;
        gs.emplace_back(rho, SimElement::rotation2d(0.3 * rng.next_gaussian()), b);
        prefix *= rho;
        auto u = random_lie(2, rng, 1.0);
        if (u.norm() > 0) u = u.scaled(0.9 * base_r / prefix * rng.next_double() / u.norm());
        us.push_back(u);
      }
      Vec v(2);
      v << rng.next_double(), rng.next_double();
      all_g.push_back(gs);
      all_u.push_back(us);
      all_v.push_back(v);
    }
    std::vector<double> cs;
    for (double r : {1e-2, 1e-3, 1e-4}) {
      double worst = 0.0;
      for (std::size_t t = 0; t < all_g.size(); ++t) {
        std::vector<LieVector> us;
        for (const auto& u : all_u[t]) us.push_back(u.scaled(r / base_r));
        worst = std::max(worst, taylor_linearize(all_g[t], us, all_v[t], 2.0, r).bound_constant);
      }
      cs.push_back(worst);
    }
    const double cmax = std::max({cs[0], cs[1], cs[2]});
    const double cmin = std::min({cs[0], cs[1], cs[2]});
    suite.add("taylor_constant_stable", cmax <= 1.2 * cmin + 1e-9,
              "fitted C in [" + fmt(cmin) + ", " + fmt(cmax) + "]");
  }
  {
    // Achieved-variance additivity through concatenation.
    const double r1 = 1e-5;
    const auto path1 = sample_walk(mu, 40, seed + 101);
    BlockPlan plan;
    plan.n_blocks = 1;
    plan.K = 4;
    const auto pd1 = build_decomposition(mu, path1, plan, 2.0, r1, 1.0);
    const double r2 = 3.0 / pd1.kappa_realized * r1;
    const auto path2 = sample_walk(mu, 40, seed + 202);
    const auto pd2 = build_decomposition(mu, path2, plan, 2.0, r2, 1.0);
    const auto joined = concatenate(mu, pd1, path1, pd2, path2, 3.0, 3.0);
    const double expected = pd1.m[0] + joined.rescale_factor * pd2.m[0];
    const bool sums = std::abs(variance_sum_achieved(joined.pd).sum_m - expected) <= 1e-13 * (1.0 + expected);
    const bool valid = validate_decomposition(mu, joined.pd, joined.path).all_pass;
    suite.add("concatenation_bookkeeping", sums && valid);
  }
  {
    // A9 consistency: declared floors stay below independently recomputed
    // conditional covariances.
    bool ok = true;
    for (std::uint64_t t = 0; t < 20 && ok; ++t) {
      const auto path = sample_walk(mu, 24, seed + 301 + t);
      BlockPlan plan;
      plan.n_blocks = 3;
      plan.K = 4;
      const auto pd = build_decomposition(mu, path, plan, 2.0, 0.5, 1.0);
      const auto rep = validate_decomposition(mu, pd, path);
      for (const auto& item : rep.items)
        if (item.axiom == "A9" && !item.pass) ok = false;
    }
    suite.add("a9_floors_consistent", ok);
  }
  return suite;
}

inline SuiteResult verify_prob(std::uint64_t seed) {
  using namespace verify_detail;
  SuiteResult suite;
  suite.suite = "prob_tools";
  {
    RngStream rng(seed, 0x9b01);
    bool ok = true;
    for (int t = 0; t < 5 && ok; ++t) {
      PointCloud a, b, c;
      a.d = b.d = c.d = 2;
      for (int i = 0; i < 48; ++i) {
        for (auto* cl : {&a, &b, &c}) {
          Vec x(2);
          x << rng.next_gaussian(), rng.next_gaussian();
          cl->push(x);
        }
      }
      const double ab = empirical_w1(a, b).value;
      const double ba = empirical_w1(b, a).value;
      if (std::abs(ab - ba) > 1e-9) ok = false;
      if (empirical_w1(a, c).value > ab + empirical_w1(b, c).value + 1e-9) ok = false;
    }
    suite.add("w1_metric_properties", ok);
  }
  {
    const auto chk =
        cramer_check(bernoulli_psd_generator(), std::vector<double>(100, 0.5), 100, 50000, seed);
    suite.add("cramer_below_bound", chk.empirical_log_prob <= chk.bound_log_prob + 1e-9);
  }
  {
    const auto a = berry_esseen_check(rademacher_summands(0.05), 400, 50000, seed);
    suite.add("berry_esseen_bounded", a.ratio <= 2.0, "ratio " + fmt(a.ratio));
  }
  return suite;
}

inline std::vector<SuiteResult> run_verify_suites(std::uint64_t seed, int threads, const std::string& filter) {
  std::vector<std::pair<std::string, std::function<SuiteResult()>>> suites{
      {"sim_group", [&] { return verify_sim_group(seed); }},
      {"measure_core", [&] { return verify_measure_core(seed); }},
      {"semigroup_enum", [&] { return verify_semigroup(seed, threads); }},
      {"walk_sampler", [&] { return verify_walk(seed, threads); }},
      {"entropy_est", [&] { return verify_entropy(seed, threads); }},
      {"decomp_engine", [&] { return verify_decomp(seed); }},
      {"prob_tools", [&] { return verify_prob(seed); }},
  };
  std::vector<SuiteResult> out;
  for (auto& [name, fn] : suites) {
    if (!filter.empty() && name != filter) continue;
    out.push_back(fn());
  }
  return out;
}

}  // namespace simdim
