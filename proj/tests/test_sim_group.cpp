#include <catch2/catch.hpp>

#include <cmath>

#include "simdim/sim_group.hpp"
#include "test_helpers.hpp"

using namespace simdim;
using simdim::testing::random_element;
using simdim::testing::random_lie;

TEST_CASE("compose matches the group law") {
  SECTION("identity is neutral") {
    RngStream rng(11);
    for (int t = 0; t < 20; ++t) {
      const auto g = random_element(2, rng);
      const auto gi = compose(SimElement::identity(2), g);
      REQUIRE(metric_dist(gi, g) < 1e-12);
    }
  }
  SECTION("hand-computed 1d example") {
    const auto g = SimElement::scaling_1d(1.0 / 3.0, 1.0);
    const auto h = SimElement::scaling_1d(1.0 / 3.0, -1.0);
    const auto gh = compose(g, h);
    REQUIRE(gh.rho == Approx(1.0 / 9.0).epsilon(1e-15));
    REQUIRE(gh.trans[0] == Approx(2.0 / 3.0).epsilon(1e-15));
  }
  SECTION("inverse composes to the identity") {
    RngStream rng(12);
    for (int t = 0; t < 20; ++t) {
      const auto g = random_element(3, rng);
      REQUIRE(metric_dist(compose(g, inverse(g)), SimElement::identity(3)) < 1e-12);
    }
  }
  SECTION("rho is multiplicative") {
    RngStream rng(13);
    for (int t = 0; t < 50; ++t) {
      const auto g = random_element(2, rng);
      const auto h = random_element(2, rng);
      REQUIRE(compose(g, h).rho == Approx(g.rho * h.rho).epsilon(1e-15));
    }
  }
}

TEST_CASE("apply acts as rho U x + b") {
  SECTION("identity") {
    Vec x(2);
    x << 3.0, -1.0;
    REQUIRE((apply(SimElement::identity(2), x) - x).norm() == 0.0);
  }
  SECTION("worked 2d example") {
    Vec b(2);
    b << 1.0, 0.0;
    const SimElement g(0.5, Mat::Identity(2, 2), b);
    Vec x(2);
    x << 2.0, 2.0;
    const Vec y = apply(g, x);
    REQUIRE(y[0] == Approx(2.0));
    REQUIRE(y[1] == Approx(1.0));
  }
  SECTION("similarity scales distances by rho") {
    RngStream rng(14);
    for (int t = 0; t < 30; ++t) {
      const auto g = random_element(3, rng);
      Vec x(3), y(3);
      for (int i = 0; i < 3; ++i) {
        x[i] = rng.next_gaussian();
        y[i] = rng.next_gaussian();
      }
      REQUIRE((apply(g, x) - apply(g, y)).norm() == Approx(g.rho * (x - y).norm()).epsilon(1e-12));
    }
  }
}

TEST_CASE("metric_dist") {
  const auto id1 = SimElement::scaling_1d(1.0, 0.0);
  SECTION("zero on the diagonal") { REQUIRE(metric_dist(id1, id1) == 0.0); }
  SECTION("log-rho term") {
    const auto h = SimElement::scaling_1d(std::exp(1.0), 0.0);
    REQUIRE(metric_dist(id1, h) == Approx(1.0).epsilon(1e-14));
  }
  SECTION("translation term") {
    const auto h = SimElement::scaling_1d(1.0, 3.0);
    REQUIRE(metric_dist(id1, h) == Approx(3.0).epsilon(1e-14));
  }
  SECTION("triangle inequality on random triples") {
    RngStream rng(15);
    for (int t = 0; t < 1000; ++t) {
      const int d = 1 + static_cast<int>(rng.next_index(3));
      const auto a = random_element(d, rng);
      const auto b = random_element(d, rng);
      const auto c = random_element(d, rng);
      REQUIRE(metric_dist(a, c) <= metric_dist(a, b) + metric_dist(b, c) + 1e-12);
    }
  }
}

TEST_CASE("exp and log") {
  SECTION("exp(0) is the identity") {
    for (int d : {1, 2, 3}) {
      REQUIRE(metric_dist(exp_map(LieVector::zero(d)), SimElement::identity(d)) < 1e-14);
    }
  }
  SECTION("scalar exponential") {
    const LieVector u(std::log(2.0), Mat::Zero(1, 1), Vec::Zero(1));
    const auto g = exp_map(u);
    REQUIRE(g.rho == Approx(2.0).epsilon(1e-15));
    REQUIRE(std::abs(g.trans[0]) < 1e-15);
  }
  SECTION("scalar logarithm") {
    const auto u = log_map(SimElement::scaling_1d(2.0, 0.0));
    REQUIRE(u.scale_part == Approx(std::log(2.0)).epsilon(1e-15));
    REQUIRE(std::abs(u.trans_part[0]) < 1e-15);
  }
  SECTION("rho of exp is exp of scale part") {
    RngStream rng(16);
    for (int t = 0; t < 20; ++t) {
      const auto u = random_lie(2, rng, 2.0);
      REQUIRE(exp_map(u).rho == Approx(std::exp(u.scale_part)).epsilon(1e-14));
    }
  }
  SECTION("round trip") {
    RngStream rng(17);
    for (int t = 0; t < 200; ++t) {
      const int d = 1 + static_cast<int>(rng.next_index(3));
      const auto u = random_lie(d, rng, 0.5);
      const auto g = exp_map(u);
      const auto g2 = exp_map(log_map(g));
      REQUIRE(metric_dist(g2, g) <= 1e-9);
    }
  }
  SECTION("rotation by pi is rejected") {
    const SimElement g(1.0, SimElement::rotation2d(M_PI), Vec::Zero(2));
    REQUIRE_THROWS_AS(log_map(g), RotationBranchError);
  }
  SECTION("1d reflection is rejected") {
    REQUIRE_THROWS_AS(log_map(SimElement::scaling_1d(1.0, 0.0, true)), RotationBranchError);
  }
}

TEST_CASE("psi is the differential of exp at zero") {
  SECTION("worked example") {
    const LieVector u(2.0, Mat::Zero(1, 1), Vec::Constant(1, 3.0));
    Vec x(1);
    x << 5.0;
    REQUIRE(differential_psi(x, u)[0] == Approx(13.0));
  }
  SECTION("zero maps to zero") {
    Vec x(2);
    x << 1.0, 2.0;
    REQUIRE(differential_psi(x, LieVector::zero(2)).norm() == 0.0);
  }
  SECTION("linearity") {
    RngStream rng(18);
    for (int t = 0; t < 50; ++t) {
      const auto u = random_lie(3, rng, 1.0);
      const auto v = random_lie(3, rng, 1.0);
      const double a = rng.next_gaussian();
      const double b = rng.next_gaussian();
      Vec x(3);
      for (int i = 0; i < 3; ++i) x[i] = rng.next_gaussian();
      const Vec lhs = differential_psi(x, u.scaled(a).plus(v.scaled(b)));
      const Vec rhs = a * differential_psi(x, u) + b * differential_psi(x, v);
      REQUIRE((lhs - rhs).norm() < 1e-12);
    }
  }
  SECTION("finite difference oracle") {
    RngStream rng(19);
    for (int t = 0; t < 20; ++t) {
      const int d = 1 + static_cast<int>(rng.next_index(3));
      const auto u = random_lie(d, rng, 1.0);
      Vec x(d);
      for (int i = 0; i < d; ++i) x[i] = rng.next_gaussian();
      const double t_step = 1e-6;
      const Vec fd = (apply(exp_map(u.scaled(t_step)), x) - x) / t_step;
      const Vec an = differential_psi(x, u);
      const double denom = std::max(1.0, an.norm());
      REQUIRE((fd - an).norm() / denom < 1e-4);
    }
  }
  SECTION("first-order error shrinks linearly in t") {
    RngStream rng(20);
    const auto u = random_lie(2, rng, 1.0);
    Vec x(2);
    x << 0.7, -0.2;
    double prev_ratio = 0.0;
    for (double t : {1e-3, 1e-4, 1e-5}) {
      const Vec fd = (apply(exp_map(u.scaled(t)), x) - x) / t;
      const double err = (fd - differential_psi(x, u)).norm();
      const double ratio = err / t;  // should be roughly the constant K
      if (prev_ratio > 0.0) REQUIRE(ratio == Approx(prev_ratio).epsilon(0.15));
      prev_ratio = ratio;
    }
  }
}

TEST_CASE("affine embedding is a homomorphism") {
  SECTION("identity embeds to identity") {
    REQUIRE((embed_affine(SimElement::identity(2)) - Mat::Identity(3, 3)).norm() == 0.0);
  }
  SECTION("worked 1d example") {
    const auto g = SimElement::scaling_1d(1.0 / 3.0, 1.0);
    const Mat m = embed_affine(g);
    REQUIRE(m(0, 0) == Approx(1.0 / 3.0));
    REQUIRE(m(0, 1) == Approx(1.0));
    REQUIRE(m(1, 0) == 0.0);
    REQUIRE(m(1, 1) == 1.0);
  }
  SECTION("multiplicativity on random pairs") {
    RngStream rng(21);
    for (int t = 0; t < 50; ++t) {
      const auto g = random_element(2, rng);
      const auto h = random_element(2, rng);
      REQUIRE((embed_affine(compose(g, h)) - embed_affine(g) * embed_affine(h)).norm() < 1e-12);
    }
  }
}

TEST_CASE("construction guards") {
  SECTION("small drift is repaired by polar projection") {
    Mat r = SimElement::rotation2d(0.3);
    r(0, 0) += 4e-9;
    const SimElement g(1.0, r, Vec::Zero(2));
    REQUIRE((g.rot * g.rot.transpose() - Mat::Identity(2, 2)).norm() < 1e-12);
  }
  SECTION("large drift is rejected") {
    Mat r = SimElement::rotation2d(0.3);
    r(0, 0) += 1e-3;
    REQUIRE_THROWS_AS(SimElement(1.0, r, Vec::Zero(2)), ConstructionError);
  }
  SECTION("nonpositive rho is rejected") {
    REQUIRE_THROWS_AS(SimElement(0.0, Mat::Identity(1, 1), Vec::Zero(1)), ConstructionError);
  }
}

TEST_CASE("exp/log round trips survive extreme scale parts") {
  RngStream rng(55);
  for (double s : {-20.0, -5.0, -1.4, 1.6, 20.0}) {
    for (int d : {1, 2, 3}) {
      auto u = random_lie(d, rng, 1.0);
      u.scale_part = s;
      const auto g = exp_map(u);
      REQUIRE(g.rho == Approx(std::exp(s)).epsilon(1e-14));
      const auto back = log_map(g);
      REQUIRE(back.scale_part == Approx(s).epsilon(1e-13));
      REQUIRE((back.trans_part - u.trans_part).norm() <=
              1e-9 * std::max(1.0, u.trans_part.norm()));
      REQUIRE(metric_dist(exp_map(back), g) <= 1e-9 * std::max(1.0, g.trans.norm()));
    }
  }
}
