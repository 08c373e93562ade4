#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "rampmeter/fundamental_diagram.hpp"

using namespace rampmeter::traffic;

TEST_CASE("speed at zero density is the free-flow speed") {
    FundamentalDiagram fd{110.0, 30.0, 2.0};
    CHECK(equilibrium_speed(fd, 0.0) == 110.0);
}

TEST_CASE("speed at critical density carries the exp(-1/a) factor") {
    FundamentalDiagram fd{110.0, 30.0, 2.0};
    CHECK(equilibrium_speed(fd, 30.0) ==
          doctest::Approx(110.0 * std::exp(-0.5)).epsilon(1e-12));
    CHECK(equilibrium_speed(fd, 30.0) == doctest::Approx(66.71).epsilon(1e-3));
}

TEST_CASE("linear-exponent diagram at twice the critical density") {
    FundamentalDiagram fd{110.0, 30.0, 1.0};
    CHECK(equilibrium_speed(fd, 60.0) ==
          doctest::Approx(110.0 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(equilibrium_speed(fd, 60.0) == doctest::Approx(14.89).epsilon(1e-3));
}

TEST_CASE("negative density is rejected") {
    FundamentalDiagram fd;
    CHECK_THROWS_AS(equilibrium_speed(fd, -1.0), std::invalid_argument);
}

TEST_CASE("speed is strictly decreasing in density") {
    FundamentalDiagram fd{110.0, 30.0, 2.0};
    double prev = fd.speed(0.0);
    for (double rho = 0.5; rho <= 180.0; rho += 0.5) {
        const double v = fd.speed(rho);
        CHECK(v < prev);
        prev = v;
    }
}

TEST_CASE("per-lane flow peaks at the critical density") {
    // scan a fine grid; the argmax must land within one grid cell of rho_crit
    for (double a : {1.0, 2.0, 3.5}) {
        FundamentalDiagram fd{100.0, 25.0, a};
        double best_rho = 0.0, best_q = -1.0;
        for (double rho = 0.01; rho <= 150.0; rho += 0.01) {
            const double q = fd.flow_per_lane(rho);
            if (q > best_q) {
                best_q = q;
                best_rho = rho;
            }
        }
        CHECK(best_rho == doctest::Approx(fd.rho_crit).epsilon(1e-3));
        CHECK(best_q == doctest::Approx(fd.capacity_per_lane()).epsilon(1e-6));
    }
}

TEST_CASE("validity flags non-positive parameters") {
    CHECK(FundamentalDiagram{110.0, 30.0, 2.0}.valid());
    CHECK_FALSE(FundamentalDiagram{0.0, 30.0, 2.0}.valid());
    CHECK_FALSE(FundamentalDiagram{110.0, -1.0, 2.0}.valid());
    CHECK_FALSE(FundamentalDiagram{110.0, 30.0, 0.0}.valid());
}
