#include <catch2/catch.hpp>

#include <cmath>

#include "simdim/config.hpp"

using namespace simdim;

namespace {

const char* kThirdConfig = R"(dimension = 1
arithmetic = "exact"
seed = 42

[[atom]]
weight = "1/2"
rho = "1/3"
translation = [1]

[[atom]]
weight = "1/2"
rho = "1/3"
translation = [-1]

[analyze]
n_max = 10
dedup_tol = 1e-9
)";

}  // namespace

TEST_CASE("config parsing") {
  SECTION("exact free-system config") {
    const auto sys = load_system_config(kThirdConfig);
    REQUIRE(sys.dimension == 1);
    REQUIRE(sys.exact);
    REQUIRE(sys.seed == 42);
    REQUIRE(sys.atoms.size() == 2);
    REQUIRE(sys.atoms[0].rho == Approx(1.0 / 3.0));
    REQUIRE(sys.analyze.n_max == 10);
    REQUIRE(sys.exact_measure);
    REQUIRE(sys.exact_measure->weight_den == 2);
    REQUIRE(sys.exact_measure->atoms[0].rho == Quad::from_fraction(1, 3));
  }
  SECTION("golden keyword parses into Q(sqrt 5)") {
    const std::string cfg = R"(dimension = 1
arithmetic = "exact"
[[atom]]
weight = "1/2"
rho = "golden"
translation = [1]
[[atom]]
weight = "1/2"
rho = "golden"
translation = [-1]
)";
    const auto sys = load_system_config(cfg);
    REQUIRE(sys.exact_measure->atoms[0].rho == Quad::golden_lambda());
    REQUIRE(sys.atoms[0].rho == Approx((std::sqrt(5.0) - 1.0) / 2.0));
  }
  SECTION("d=2 rotation angles") {
    const std::string cfg = R"(dimension = 2
[[atom]]
weight = 1.0
rho = 0.5
translation = [1.0, 0.0]
rotation_angles = [0.7853981633974483]
)";
    const auto sys = load_system_config(cfg);
    REQUIRE(sys.atoms[0].rot(0, 0) == Approx(std::cos(M_PI / 4.0)));
    REQUIRE(sys.atoms[0].rot(1, 0) == Approx(std::sin(M_PI / 4.0)));
  }
  SECTION("rotation matrix rows") {
    const std::string cfg = R"(dimension = 2
[[atom]]
weight = 1.0
rho = 0.5
translation = [0.0, 0.0]
rotation_matrix = [[0.0, -1.0], [1.0, 0.0]]
)";
    const auto sys = load_system_config(cfg);
    REQUIRE(sys.atoms[0].rot(0, 1) == Approx(-1.0));
  }
  SECTION("comments and blank lines are ignored") {
    const std::string cfg = "dimension = 1 # inline comment\n\n# full line\n[[atom]]\nweight = 1.0\nrho = 0.5\ntranslation = [0.0]\n";
    REQUIRE(load_system_config(cfg).atoms.size() == 1);
  }
  SECTION("parse errors carry line numbers") {
    const std::string cfg = "dimension = 1\n[[atom]]\nweight : 0.5\n";
    try {
      load_system_config(cfg);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
  SECTION("missing atoms are rejected") {
    REQUIRE_THROWS_AS(load_system_config("dimension = 1\n"), ConfigError);
  }
  SECTION("exact mode demands d = 1") {
    const std::string cfg = R"(dimension = 2
arithmetic = "exact"
[[atom]]
weight = "1/2"
rho = "1/3"
translation = [1, 0]
)";
    REQUIRE_THROWS_AS(load_system_config(cfg), ConfigError);
  }
  SECTION("exact weights must sum to one") {
    const std::string cfg = R"(dimension = 1
arithmetic = "exact"
[[atom]]
weight = "1/2"
rho = "1/3"
translation = [1]
[[atom]]
weight = "1/3"
rho = "1/3"
translation = [-1]
)";
    REQUIRE_THROWS_AS(load_system_config(cfg), ConfigError);
  }
  SECTION("weights normalize in float mode") {
    const std::string cfg = R"(dimension = 1
[[atom]]
weight = 2.0
rho = 0.5
translation = [1.0]
[[atom]]
weight = 2.0
rho = 0.5
translation = [-1.0]
)";
    const auto sys = load_system_config(cfg);
    const auto mu = config_measure(sys);
    REQUIRE(mu.weights[0] == Approx(0.5));
  }
}
