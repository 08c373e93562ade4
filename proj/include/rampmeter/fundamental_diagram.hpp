#pragma once

#include <cmath>
#include <stdexcept>

namespace rampmeter::traffic {

/** Exponential speed-density relation
 *
 *    V(rho) = v_free * exp(-(1/a) * (rho/rho_crit)^a)
 *
 * Units: speed km/h, density veh/km/lane. Per-lane flow rho*V(rho) peaks
 * exactly at rho_crit.
 */
struct FundamentalDiagram {
    double v_free = 110.0;
    double rho_crit = 30.0;
    double a = 2.0;

    bool valid() const {
        return v_free > 0.0 && rho_crit > 0.0 && a > 0.0;
    }

    double speed(double rho) const {
        if (rho <= 0.0) return v_free;
        return v_free * std::exp(-(1.0 / a) * std::pow(rho / rho_crit, a));
    }

    double flow_per_lane(double rho) const { return rho * speed(rho); }

    // rho_crit * v_free * e^{-1/a}
    double capacity_per_lane() const {
        return rho_crit * v_free * std::exp(-1.0 / a);
    }
};

// checked entry point; the member is lenient for internal pre-clamped use
inline double equilibrium_speed(const FundamentalDiagram& fd, double rho) {
    if (rho < 0.0) throw std::invalid_argument("density must be non-negative");
    return fd.speed(rho);
}

} // namespace rampmeter::traffic
