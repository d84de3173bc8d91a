#include <catch2/catch.hpp>

#include <cmath>

#include "simdim/semigroup.hpp"
#include "test_helpers.hpp"

using namespace simdim;
using simdim::testing::brute_min_dist;
using simdim::testing::free_third_system;
using simdim::testing::golden_system;

TEST_CASE("enumerate_convolution basics") {
  const auto mu = free_third_system();
  SECTION("n=1 returns the atoms") {
    const auto set = enumerate_convolution(mu, 1);
    REQUIRE(set.size() == 2);
    REQUIRE(set.probs[0] == Approx(0.5));
  }
  SECTION("free system has 2^n words") {
    const auto set = enumerate_convolution(mu, 3);
    REQUIRE(set.size() == 8);
    for (double p : set.probs) REQUIRE(p == Approx(0.125).epsilon(1e-12));
  }
  SECTION("golden system collides at n=3") {
    const auto set = enumerate_convolution(golden_system(), 3);
    REQUIRE(set.size() == 7);
    int merged = 0;
    for (double p : set.probs) {
      if (p > 0.2) {
        ++merged;
        REQUIRE(p == Approx(0.25).epsilon(1e-9));
      }
    }
    REQUIRE(merged == 1);
  }
  SECTION("probability is conserved through dedup") {
    for (int n : {1, 3, 6}) {
      const auto set = enumerate_convolution(golden_system(), n);
      double total = 0.0;
      for (double p : set.probs) total += p;
      REQUIRE(std::abs(total - 1.0) <= 1e-10 * n);
    }
  }
  SECTION("budget aborts with the last completed generation") {
    ConvOptions opts;
    opts.budget = 20;  // enough for n=1..3 of a 2-atom system, not more
    try {
      enumerate_convolution(free_third_system(), 10, opts);
      FAIL("expected BudgetExceeded");
    } catch (const BudgetExceeded& e) {
      REQUIRE(e.largest_completed_n >= 1);
      REQUIRE(e.largest_completed_n < 10);
    }
  }
  SECTION("near-tolerance atoms trigger the ambiguity guard") {
    FiniteMeasure mu2({SimElement::scaling_1d(0.5, 0.0), SimElement::scaling_1d(0.5, 5e-9)}, {0.5, 0.5});
    ConvOptions opts;
    opts.dedup_tol = 1e-9;
    REQUIRE_THROWS_AS(enumerate_convolution(mu2, 1, opts), AmbiguousDedup);
  }
}

TEST_CASE("shannon entropy of generations") {
  SECTION("single element has zero entropy") {
    FiniteMeasure mu({SimElement::scaling_1d(0.5, 1.0)}, {1.0});
    REQUIRE(shannon_entropy(enumerate_convolution(mu, 4)) == 0.0);
  }
  SECTION("uniform over 8 atoms") {
    REQUIRE(shannon_entropy(enumerate_convolution(free_third_system(), 3)) ==
            Approx(3.0 * std::log(2.0)).epsilon(1e-12));
  }
  SECTION("golden n=3 entropy drops to (22/8) log 2") {
    REQUIRE(shannon_entropy(enumerate_convolution(golden_system(), 3)) ==
            Approx(22.0 / 8.0 * std::log(2.0)).epsilon(1e-9));
  }
}

TEST_CASE("entropy rate bounds") {
  SECTION("deterministic measure gives zeros") {
    FiniteMeasure mu({SimElement::scaling_1d(0.5, 1.0)}, {1.0});
    for (double h : entropy_rate_bounds(mu, 5)) REQUIRE(h == 0.0);
  }
  SECTION("free system stays at log 2") {
    for (double h : entropy_rate_bounds(free_third_system(), 8))
      REQUIRE(h == Approx(std::log(2.0)).epsilon(1e-12));
  }
  SECTION("golden system drops strictly below log 2 from n=3") {
    const auto hs = entropy_rate_bounds(golden_system(), 6);
    REQUIRE(hs[0] == Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(hs[1] == Approx(std::log(2.0)).epsilon(1e-12));
    REQUIRE(hs[2] == Approx(22.0 / 24.0 * std::log(2.0)).epsilon(1e-9));
    for (std::size_t i = 2; i < hs.size(); ++i) REQUIRE(hs[i] < std::log(2.0) - 1e-6);
  }
  SECTION("subadditivity across computed pairs") {
    const auto gens = convolution_ladder(golden_system(), 8);
    std::vector<double> H;
    for (const auto& g : gens) H.push_back(shannon_entropy(g));
    for (std::size_t m = 1; m + 1 <= H.size(); ++m)
      for (std::size_t n = 1; m + n <= H.size(); ++n)
        REQUIRE(H[m + n - 1] <= H[m - 1] + H[n - 1] + 1e-9);
  }
  SECTION("entropy rate sequence is non-increasing") {
    for (const auto& sys : {free_third_system(), golden_system()}) {
      const auto hs = entropy_rate_bounds(sys, 8);
      for (std::size_t i = 1; i < hs.size(); ++i) REQUIRE(hs[i] <= hs[i - 1] + 1e-9);
    }
  }
}

TEST_CASE("delta_n and m_n") {
  const auto mu = free_third_system();
  auto gens = convolution_ladder(mu, 6);
  SECTION("free system Delta_3 = 2/9") {
    REQUIRE(delta_n(gens[2]).value() == Approx(2.0 / 9.0).epsilon(1e-12));
  }
  SECTION("free system closed form Delta_n = 2*3^{-(n-1)}") {
    for (int n = 2; n <= 6; ++n)
      REQUIRE(delta_n(gens[n - 1]).value() == Approx(2.0 * std::pow(3.0, -(n - 1))).epsilon(1e-10));
  }
  SECTION("single atom has no pairs") {
    FiniteMeasure point({SimElement::scaling_1d(0.5, 1.0)}, {1.0});
    REQUIRE_FALSE(delta_n(enumerate_convolution(point, 3)).has_value());
    auto single = convolution_ladder(point, 1);
    REQUIRE_FALSE(m_n(single, 0).has_value());
  }
  SECTION("M_3 = 2/9 because cross-generation gaps are >= log 3") {
    REQUIRE(m_n(gens, 3).value() == Approx(2.0 / 9.0).epsilon(1e-12));
  }
  SECTION("M_n is non-increasing and below each Delta_k") {
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= 6; ++n) {
      const double m = m_n(gens, n).value();
      REQUIRE(m <= prev + 1e-15);
      for (int k = 1; k <= n; ++k) REQUIRE(m <= delta_n(gens[k - 1]).value() + 1e-15);
      prev = m;
    }
  }
  SECTION("grid path agrees with the quadratic oracle on small cases") {
    for (int n = 2; n <= 4; ++n) {
      const auto& set = gens[n - 1];
      REQUIRE(delta_n(set).value() == brute_min_dist(set.elements));
    }
    const auto golden = convolution_ladder(golden_system(), 4);
    for (int n = 2; n <= 4; ++n)
      REQUIRE(delta_n(golden[n - 1]).value() == Approx(brute_min_dist(golden[n - 1].elements)).epsilon(1e-14));
  }
  SECTION("grid path agrees with the quadratic oracle on a large generation") {
    const auto big = convolution_ladder(mu, 10);
    const auto& set = big[9];
    REQUIRE(set.size() == 1024);
    REQUIRE(delta_n(set).value() == Approx(brute_min_dist(set.elements)).epsilon(1e-14));
  }
  SECTION("support size never exceeds |supp mu|^n, equality for the free system") {
    for (int n = 1; n <= 6; ++n) REQUIRE(gens[n - 1].size() == static_cast<std::size_t>(1) << n);
    const auto golden = convolution_ladder(golden_system(), 6);
    for (int n = 1; n <= 6; ++n)
      REQUIRE(golden[n - 1].size() <= static_cast<std::size_t>(1) << n);
  }
}

TEST_CASE("determinism across thread counts") {
  ConvOptions one;
  one.threads = 1;
  ConvOptions eight;
  eight.threads = 8;
  const auto a = enumerate_convolution(golden_system(), 7, one);
  const auto b = enumerate_convolution(golden_system(), 7, eight);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a.probs[i] == b.probs[i]);
    REQUIRE(metric_dist(a.elements[i], b.elements[i]) == 0.0);
  }
}

TEST_CASE("separation verdict") {
  SECTION("free system fits c near log 3") {
    const auto rep = separation_verdict(free_third_system(), 6, 0.1);
    REQUIRE(rep.condition_exponential);
    REQUIRE(rep.condition_weak);
    REQUIRE(rep.fitted_c < std::log(3.0) + 0.1);
    // closed form: -log M_n / n = ((n-1) log 3 - log 2)/n, maximal at n=6
    const double expected = (5.0 * std::log(3.0) - std::log(2.0)) / 6.0;
    REQUIRE(rep.fitted_c == Approx(expected).epsilon(1e-9));
  }
  SECTION("golden system stays separated over the computed range") {
    const auto rep = separation_verdict(golden_system(), 8, 0.1);
    REQUIRE(rep.condition_exponential);
    for (const auto& m : rep.m) REQUIRE(m.value() > 0.0);
  }
}

TEST_CASE("mixed expanding system separations") {
  const FiniteMeasure mu({SimElement::scaling_1d(2.0, 1.0), SimElement::scaling_1d(0.25, -1.0)},
                         {1.0 / 3.0, 2.0 / 3.0});
  SECTION("genuine near-tolerance separations trigger the ambiguity guard") {
    // Translations are dyadic rationals; by generation 15 real gaps reach
    // 2^-28, inside the default guard zone.
    ConvOptions loose;
    loose.dedup_tol = 1e-9;
    REQUIRE_THROWS_AS(convolution_ladder(mu, 16, loose), AmbiguousDedup);
  }
  SECTION("a tighter tolerance resolves them") {
    ConvOptions tight;
    tight.dedup_tol = 1e-12;
    const auto gens = convolution_ladder(mu, 16, tight);
    REQUIRE(gens.back().size() < (static_cast<std::size_t>(1) << 16));  // true collisions merged
    const auto hs = entropy_rate_bounds(mu, 14, tight);
    for (std::size_t i = 1; i < hs.size(); ++i) REQUIRE(hs[i] <= hs[i - 1] + 1e-9);
  }
}
