#include <catch2/catch.hpp>

#include <cmath>

#include "simdim/prob.hpp"
#include "simdim/walk.hpp"
#include "test_helpers.hpp"

using namespace simdim;

namespace {

PointCloud cloud_1d(const std::vector<double>& xs) {
  PointCloud c;
  c.d = 1;
  c.data = xs;
  return c;
}

PointCloud random_cloud(std::size_t n, int d, std::uint64_t seed, double scale = 1.0) {
  PointCloud c;
  c.d = d;
  RngStream rng(seed, 0xc10d);
  for (std::size_t i = 0; i < n * d; ++i) c.data.push_back(scale * rng.next_gaussian());
  return c;
}

}  // namespace

TEST_CASE("empirical W1") {
  SECTION("identical clouds have zero distance") {
    const auto c = random_cloud(100, 2, 1);
    REQUIRE(empirical_w1(c, c).value == Approx(0.0).margin(1e-12));
  }
  SECTION("single-atom transport") {
    REQUIRE(empirical_w1(cloud_1d({0.0}), cloud_1d({1.0})).value == Approx(1.0));
  }
  SECTION("uniform grids on [0,1] vs [0,2]") {
    std::vector<double> a, b;
    const std::size_t n = 1000;
    for (std::size_t i = 0; i < n; ++i) {
      a.push_back((i + 0.5) / n);
      b.push_back(2.0 * (i + 0.5) / n);
    }
    REQUIRE(empirical_w1(cloud_1d(a), cloud_1d(b)).value == Approx(0.5).margin(2.0 / n));
  }
  SECTION("empty clouds are refused") {
    REQUIRE_THROWS_AS(empirical_w1(cloud_1d({}), cloud_1d({1.0})), EmptyCloud);
  }
  SECTION("assignment agrees with the exact 1-d path") {
    const auto a1 = random_cloud(200, 1, 2);
    const auto b1 = random_cloud(200, 1, 3);
    const double exact = empirical_w1(a1, b1).value;
    PointCloud a2, b2;  // embed in 2d with a zero second coordinate
    a2.d = b2.d = 2;
    for (double x : a1.data) {
      a2.data.push_back(x);
      a2.data.push_back(0.0);
    }
    for (double x : b1.data) {
      b2.data.push_back(x);
      b2.data.push_back(0.0);
    }
    const auto r = empirical_w1(a2, b2);
    REQUIRE(r.method == W1Result::Method::Assignment);
    REQUIRE(r.value == Approx(exact).margin(1e-9));
  }
  SECTION("symmetry and triangle inequality (assignment)") {
    for (int t = 0; t < 10; ++t) {
      const auto a = random_cloud(48, 2, 100 + t);
      const auto b = random_cloud(48, 2, 200 + t, 1.5);
      const auto c = random_cloud(48, 2, 300 + t, 0.7);
      const double ab = empirical_w1(a, b).value;
      const double ba = empirical_w1(b, a).value;
      REQUIRE(ab == Approx(ba).margin(1e-9));
      REQUIRE(empirical_w1(a, c).value <= ab + empirical_w1(b, c).value + 1e-9);
    }
  }
  SECTION("large unequal clouds fall back to sliced") {
    const auto a = random_cloud(3000, 2, 4);
    const auto b = random_cloud(2500, 2, 5);
    REQUIRE(empirical_w1(a, b).method == W1Result::Method::Sliced);
  }
}

TEST_CASE("TV is dominated by Lipschitz W1 (gaussian smoothing)") {
  // TV(X + A, Y + A) <= (c/2) W1(X, Y) with c the Lipschitz constant of the
  // gaussian kernel density.
  const double sigma = 0.5;
  const double lipschitz = std::exp(-0.5) / (sigma * sigma * std::sqrt(2.0 * M_PI));
  const double shift = 0.15;
  const std::size_t n = 200000;
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream rng(6, 0x7f, i);
    const double base = rng.next_double();
    const double noise = sigma * rng.next_gaussian();
    xs[i] = base + noise;
    ys[i] = base + shift + sigma * rng.next_gaussian();
  }
  const double w1 = shift;  // W1 between U[0,1] and U[0,1]+shift
  // histogram TV
  const double lo = -3.0, hi = 4.0;
  const int bins = 70;
  std::vector<double> ha(bins, 0.0), hb(bins, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int ba = static_cast<int>((xs[i] - lo) / (hi - lo) * bins);
    const int bb = static_cast<int>((ys[i] - lo) / (hi - lo) * bins);
    if (ba >= 0 && ba < bins) ha[ba] += 1.0 / n;
    if (bb >= 0 && bb < bins) hb[bb] += 1.0 / n;
  }
  double tv = 0.0;
  for (int b = 0; b < bins; ++b) tv += std::abs(ha[b] - hb[b]);
  tv *= 0.5;
  REQUIRE(tv <= 0.5 * lipschitz * w1 + 0.05);
}

TEST_CASE("Berry-Esseen ratio") {
  SECTION("single Rademacher step stays below 2") {
    const auto rep = berry_esseen_check(rademacher_summands(0.5), 1, 100000, 7);
    REQUIRE(rep.ratio <= 2.0);
  }
  SECTION("degenerate summands give zero distance") {
    SummandSpec zero;
    zero.d = 1;
    zero.delta = 1.0;
    zero.mean = Vec::Zero(1);
    zero.cov = Mat::Zero(1, 1);
    zero.draw = [](RngStream&) { return Vec::Zero(1); };
    const auto rep = berry_esseen_check(zero, 10, 5000, 8);
    REQUIRE(rep.w1 == Approx(0.0).margin(1e-12));
  }
  SECTION("binomial shortcut matches direct summation") {
    const auto spec = rademacher_summands(1.0);
    SummandSpec direct = spec;
    direct.draw_sum = nullptr;
    const auto a = berry_esseen_check(spec, 64, 20000, 9);
    const auto b = berry_esseen_check(direct, 64, 20000, 9);
    REQUIRE(a.ratio == Approx(b.ratio).margin(0.1));
  }
  SECTION("ratio trend over growing n is bounded and non-increasing") {
    // Cloud sizes grow with n so the Monte-Carlo W1 noise (~ delta sqrt(n/N))
    // stays below the trend slack.
    const std::vector<std::pair<int, std::size_t>> schedule{{100, 100000}, {1000, 1000000}, {10000, 4000000}};
    std::vector<double> ratios;
    for (const auto& [n, trials] : schedule) {
      const auto rep = berry_esseen_check(rademacher_summands(0.01), n, trials, 10);
      ratios.push_back(rep.ratio);
      REQUIRE(rep.ratio <= 2.0);
    }
    for (std::size_t i = 1; i < ratios.size(); ++i) REQUIRE(ratios[i] <= ratios[i - 1] + 0.06);
  }
  SECTION("rotation invariance of the d=2 summand ratio") {
    auto make_spec = [](double angle) {
      SummandSpec spec;
      spec.d = 2;
      const double delta = 0.1;
      spec.delta = delta;
      spec.mean = Vec::Zero(2);
      Mat base(2, 2);
      base << delta * delta / 2.0, 0.0, 0.0, delta * delta / 2.0;
      spec.cov = base;
      spec.draw = [delta, angle](RngStream& rng) {
        // one of four rotated corners of a square of radius delta/sqrt(2)
        const int c = static_cast<int>(rng.next_index(4));
        const double t = angle + M_PI_4 + M_PI_2 * c;
        Vec x(2);
        x << delta / std::sqrt(2.0) * std::cos(t) * std::sqrt(2.0) / 1.0,
            delta / std::sqrt(2.0) * std::sin(t) * std::sqrt(2.0) / 1.0;
        return x;
      };
      return spec;
    };
    const auto a = berry_esseen_check(make_spec(0.0), 200, 4000, 11);
    const auto b = berry_esseen_check(make_spec(0.7), 200, 4000, 11);
    REQUIRE(a.ratio == Approx(b.ratio).margin(0.3 * a.ratio + 0.05));
  }
}

TEST_CASE("matrix Cramer check") {
  SECTION("deterministic summands above the threshold never hit") {
    PSDGenerator gen;
    gen.d = 1;
    gen.b = 1.0;
    gen.certified = true;
    gen.draw = [](int, RngStream&) { return Mat::Constant(1, 1, 0.5); };
    const auto chk = cramer_check(gen, std::vector<double>(50, 0.5), 50, 2000, 12);
    REQUIRE(chk.hits == 0);
    REQUIRE(chk.empirical_log_prob == -std::numeric_limits<double>::infinity());
  }
  SECTION("scalar Bernoulli tail matches the exact binomial within 3 SE") {
    for (int n : {50, 200}) {
      const std::size_t trials = 200000;
      const auto chk = cramer_check(bernoulli_psd_generator(), std::vector<double>(n, 0.5), n, trials, 13);
      const double exact = std::exp(binomial_tail_log(n, n / 8));
      const double se = std::sqrt(std::max(exact * (1.0 - exact), 1.0 / trials) / trials);
      const double empirical = chk.hits / static_cast<double>(trials);
      REQUIRE(std::abs(empirical - exact) <= 3.0 * se + 1e-12);
      REQUIRE(chk.empirical_log_prob <= chk.bound_log_prob + 1e-9);
    }
  }
  SECTION("scalar tail at the half-mean threshold is observable and matches") {
    // Direct check of the scalar tail at the na/2 threshold where the
    // probability is large enough to measure.
    const int n = 50;
    const std::size_t trials = 200000;
    std::size_t hits = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      RngStream rng(14, 0xc0de, t);
      int sum = 0;
      for (int i = 0; i < n; ++i) sum += rng.next_double() < 0.5 ? 1 : 0;
      if (sum <= n / 4) ++hits;
    }
    const double exact = std::exp(binomial_tail_log(n, n / 4));
    const double empirical = static_cast<double>(hits) / trials;
    const double se = std::sqrt(exact * (1.0 - exact) / trials);
    REQUIRE(std::abs(empirical - exact) <= 3.0 * se + 1e-9);
    REQUIRE(std::log(exact) <= -cramer_configured_constant() * 0.5 * n);
  }
  SECTION("d=2 rotated generator stays under the configured bound") {
    const auto gen = rotated_noise_psd_generator(0.3, 1.0);
    const double floor = rotated_noise_floor(0.3, 1.0);
    const auto chk = cramer_check(gen, std::vector<double>(200, floor), 200, 20000, 15);
    REQUIRE(chk.empirical_log_prob <= chk.bound_log_prob + 1e-9);
  }
  SECTION("uncertified generators are rejected") {
    PSDGenerator gen;
    gen.certified = false;
    gen.draw = [](int, RngStream&) { return Mat::Zero(1, 1); };
    REQUIRE_THROWS_AS(cramer_check(gen, {0.5}, 1, 10, 16), HypothesisUnverifiable);
  }
}

TEST_CASE("gaussian dimension check") {
  SECTION("a genuine gaussian cloud passes at C = 10") {
    const double r = 0.01;
    const auto cloud = random_cloud(200000, 1, 17, 4.0 * r);
    const auto chk = gaussian_dimension_check(cloud, 10.0, r);
    REQUIRE(chk.mass_fraction_pass >= 0.9);
    REQUIRE(chk.entropy_between >= std::log(2.0) - 0.1);
    REQUIRE(chk.verdict);
  }
  SECTION("a point mass fails the covariance floor") {
    PointCloud c;
    c.d = 1;
    c.data.assign(5000, 0.0);
    const auto chk = gaussian_dimension_check(c, 10.0, 0.01);
    REQUIRE(chk.mass_fraction_pass == 0.0);
    REQUIRE_FALSE(chk.verdict);
  }
  SECTION("the Cantor cloud fails at a gap scale") {
    const auto cloud = sample_attractor(simdim::testing::free_third_system(), 100000, 18,
                                        ContractionKappa{std::pow(3.0, -20)});
    const auto chk = gaussian_dimension_check(cloud, 10.0, std::pow(3.0, -5));
    REQUIRE_FALSE(chk.verdict);
  }
}
