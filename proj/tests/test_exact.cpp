#include <catch2/catch.hpp>

#include <cmath>

#include "simdim/exact_semigroup.hpp"
#include "simdim/quad_field.hpp"
#include "simdim/semigroup.hpp"
#include "test_helpers.hpp"

using namespace simdim;

namespace {

ExactMeasure exact_third_system() {
  ExactMeasure mu;
  mu.atoms = {ExactElement{Quad::from_fraction(1, 3), 1, Quad::from_int(1)},
              ExactElement{Quad::from_fraction(1, 3), 1, Quad::from_int(-1)}};
  mu.weight_num = {1, 1};
  mu.weight_den = 2;
  return mu;
}

ExactMeasure exact_golden_system() {
  ExactMeasure mu;
  mu.atoms = {ExactElement{Quad::golden_lambda(), 1, Quad::from_int(1)},
              ExactElement{Quad::golden_lambda(), 1, Quad::from_int(-1)}};
  mu.weight_num = {1, 1};
  mu.weight_den = 2;
  return mu;
}

}  // namespace

TEST_CASE("quad field arithmetic") {
  SECTION("golden lambda satisfies lambda^2 = 1 - lambda") {
    const Quad l = Quad::golden_lambda();
    REQUIRE(l * l == Quad::from_int(1) - l);
  }
  SECTION("value of the golden lambda") {
    REQUIRE(Quad::golden_lambda().to_double() == Approx((std::sqrt(5.0) - 1.0) / 2.0).epsilon(1e-15));
  }
  SECTION("normalization and exact comparison") {
    REQUIRE(Quad(2, 0, 6) == Quad::from_fraction(1, 3));
    REQUIRE(Quad::from_fraction(1, 3) < Quad::from_fraction(1, 2));
    REQUIRE(sign(Quad(-7, 3, 1)) < 0);   // 3*sqrt(5) = 6.7... < 7
    REQUIRE(sign(Quad(-6, 3, 1)) > 0);
  }
  SECTION("overflow raises") {
    const Quad big(INT64_MAX / 2, 0, 1);
    REQUIRE_THROWS_AS(big * big, ExactOverflow);
  }
}

TEST_CASE("exact composition matches the float group law") {
  const auto mu = exact_third_system();
  const ExactElement p = exact_compose(mu.atoms[0], mu.atoms[1]);
  REQUIRE(p.rho == Quad::from_fraction(1, 9));
  REQUIRE(p.b == Quad::from_fraction(2, 3));
  const SimElement fp = to_float_element(p);
  const SimElement ff = compose(to_float_element(mu.atoms[0]), to_float_element(mu.atoms[1]));
  REQUIRE(metric_dist(fp, ff) < 1e-15);
}

TEST_CASE("exact ladder for the free system") {
  const auto gens = exact_convolution_ladder(exact_third_system(), 10);
  SECTION("support sizes are 2^n") {
    for (int n = 1; n <= 10; ++n) REQUIRE(gens[n - 1].size() == static_cast<std::size_t>(1) << n);
  }
  SECTION("entropy per step is exactly log 2") {
    for (const auto& gen : gens)
      REQUIRE(exact_entropy(gen, 2) / gen.n == Approx(std::log(2.0)).margin(1e-13));
  }
  SECTION("Delta_3 and M_3 are exactly 2/9") {
    const auto d3 = exact_delta_n(gens[2]);
    REQUIRE(d3.exact.has_value());
    REQUIRE(*d3.exact == Quad::from_fraction(2, 9));
    const auto m3 = exact_m_n(gens, 3);
    REQUIRE(m3.exact.has_value());
    REQUIRE(*m3.exact == Quad::from_fraction(2, 9));
  }
  SECTION("Delta_n closed form") {
    for (int n = 2; n <= 10; ++n) {
      const auto dn = exact_delta_n(gens[n - 1]);
      REQUIRE(dn.exact.has_value());
      std::int64_t den = 1;
      for (int k = 1; k < n; ++k) den *= 3;
      REQUIRE(*dn.exact == Quad::from_fraction(2, den));
    }
  }
}

TEST_CASE("exact ladder for the golden system") {
  const auto gens = exact_convolution_ladder(exact_golden_system(), 12);
  SECTION("n=3 has exactly 7 elements with one double mass") {
    REQUIRE(gens[2].size() == 7);
    int doubled = 0;
    for (auto m : gens[2].mass)
      if (m == 2) ++doubled;
    REQUIRE(doubled == 1);
  }
  SECTION("H(mu*3) = (22/8) log 2") {
    REQUIRE(exact_entropy(gens[2], 2) == Approx(22.0 / 8.0 * std::log(2.0)).margin(1e-13));
  }
  SECTION("entropy rate strictly below log 2 from n=3 on") {
    for (int n = 1; n <= 2; ++n)
      REQUIRE(exact_entropy(gens[n - 1], 2) / n == Approx(std::log(2.0)).margin(1e-13));
    for (int n = 3; n <= 12; ++n)
      REQUIRE(exact_entropy(gens[n - 1], 2) / n < std::log(2.0) - 1e-6);
  }
  SECTION("exact masses agree with the float-mode dedup") {
    const auto float_set = enumerate_convolution(simdim::testing::golden_system(), 6);
    REQUIRE(float_set.size() == gens[5].size());
    // Both orders are sorted by (rho, b); compare mass profiles.
    for (std::size_t i = 0; i < float_set.size(); ++i)
      REQUIRE(float_set.probs[i] == Approx(gens[5].prob(i)).epsilon(1e-9));
  }
  SECTION("M stays positive over the computed range") {
    const auto m12 = exact_m_n(gens, 12);
    REQUIRE(m12.value > 0.0);
  }
}
