#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rampmeter/fundamental_diagram.hpp"

namespace rampmeter::traffic {

// Internal units follow the macroscopic convention: time h, length km,
// density veh/km/lane, flow veh/h, speed km/h. Config-facing code converts
// from seconds at the boundary.

enum class RampSupplyFormula { metanet, hyperbolic };

struct SegmentParams {
    double length_km = 0.5;
    double lanes = 2.0;
    double tau_h = 18.0 / 3600.0;  // speed relaxation time
    double nu = 60.0;              // anticipation coefficient [km^2/h]
    double kappa = 40.0;           // anticipation regularizer [veh/km/lane]
    double rho_max = 180.0;        // jam density [veh/km/lane]
};

struct RampParams {
    double q_sat = 1800.0;         // ramp saturation flow [veh/h]
    double r_min = 0.0;
    double r_max = 1.0;
    double t_s_h = 20.0 / 3600.0;  // queue service period (control period)
    int merge_segment = 0;
    RampSupplyFormula supply = RampSupplyFormula::metanet;
    double eps_supply = 1e-6;      // guard width around rho_s == rho_crit (hyperbolic form)
};

struct BoundaryInput {
    double demand_up = 0.0;    // mainstream demand [veh/h]
    double demand_ramp = 0.0;  // on-ramp demand [veh/h]
    double rho_down = 0.0;     // ghost segment density [veh/km/lane]
};

struct FreewayState {
    std::vector<double> rho;  // [veh/km/lane]
    std::vector<double> v;    // [km/h]
    double w_ramp = 0.0;      // on-ramp queue [veh]
    double w_up = 0.0;        // upstream entry queue [veh]
    double t_h = 0.0;
};

// Per-step bookkeeping. clamp_mass is the vehicle count created (+) or
// removed (-) by density clamping; the exact balance is
//   storage' - storage = T*(demand_up + demand_ramp - q_out) + clamp_mass
struct StepInfo {
    double q_in = 0.0;    // flow admitted into segment 0 [veh/h]
    double q_ramp = 0.0;  // flow admitted from the ramp [veh/h]
    double q_out = 0.0;   // flow leaving the last segment [veh/h]
    double clamp_mass = 0.0;
    int density_clamps = 0;
    int speed_clamps = 0;
    int queue_clamps = 0;  // only possible when T > t_s
};

struct StepResult {
    FreewayState state;
    StepInfo info;
};

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void validate_segments(const std::vector<SegmentParams>& seg,
                       const FundamentalDiagram& fd);
void validate_ramp(const RampParams& ramp, int n_segments);

// Admission ratio in [0, 1] limiting inflow by mainline room.
//   metanet:    (rho_max - rho_s) / (rho_max - rho_crit), linear falloff
//   hyperbolic: (rho_max - rho_s) / (rho_s - rho_crit), guarded near rho_crit
double supply_ratio(RampSupplyFormula f, double rho_s, double rho_crit,
                    double rho_max, double eps);

// q_r = r * min(demand + w/t_s, q_sat * min(r, supply_ratio))
double ramp_flow(double r, double rho_s, double w, double demand,
                 const RampParams& ramp, const FundamentalDiagram& fd,
                 double rho_max);

// w' = max(0, w + T*(demand - q)); the max never binds while T <= t_s
double queue_step(double w, double demand, double q, double T_h);

// One explicit forward step of the second-order model. Throws
// SimulationError when a pre-clamp density leaves [0, rho_max] by more than
// instab_tol (step size too large for the current speeds).
StepResult step(const FreewayState& s, const BoundaryInput& in, double r,
                const std::vector<SegmentParams>& seg, const RampParams& ramp,
                const FundamentalDiagram& fd, double T_h,
                double instab_tol = 1.0);

} // namespace rampmeter::traffic
