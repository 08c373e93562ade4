#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rampmeter/fd_estim.hpp"
#include "rampmeter/mfc.hpp"
#include "rampmeter/traffic_model.hpp"

namespace rampmeter::harness {

// Scenario files and all harness-facing numbers use SI-friendly units
// (seconds, km, veh); conversion to the model's hour-based units happens
// inside run().

struct DemandPoint {
    double t_s = 0.0;
    double value = 0.0;  // veh/h
};

struct DemandProfile {
    std::vector<DemandPoint> pts;
    double at(double t_s) const;  // piecewise linear, clamped at the ends
};

struct NoiseConfig {
    double sigma_speed_rel = 0.0;  // multiplicative on measured speed
    double sigma_density = 0.0;    // additive on measured density [veh/km/lane]
    std::uint64_t seed = 1;
};

enum class ControllerKind { none, ipi, ip, alinea };

struct Scenario {
    int version = 1;
    std::string name = "scenario";

    std::vector<traffic::SegmentParams> segments;
    traffic::FundamentalDiagram diagram{};
    traffic::RampParams ramp{};  // t_s_h is derived from control_period_s

    double step_s = 10.0;
    double control_period_s = 20.0;
    double duration_s = 4.0 * 3600.0;

    DemandProfile demand_up, demand_ramp;
    double rho_down = 20.0;
    std::optional<double> rho_init;  // empty: equilibrium at initial demand

    ControllerKind controller = ControllerKind::ipi;
    mfc::ControllerConfig control{};
    std::optional<double> alpha;  // empty: q_sat / (L * lambda) at the merge
    double alinea_kr = 1.0 / 40.0;

    NoiseConfig noise{};
    int detector_segment = -1;  // <0: merge segment
    fdestim::EstimatorConfig estimator{};

    void validate() const;  // throws std::invalid_argument with a located message
    int merge() const { return ramp.merge_segment; }
    int detector() const { return detector_segment < 0 ? ramp.merge_segment : detector_segment; }
    double resolved_alpha() const;
};

// State after step k, the flows that produced it, and the control values in
// force during the step (held between control instants).
struct TrajectoryRecord {
    double t_s = 0.0;  // time at the END of the step
    std::vector<double> rho;
    std::vector<double> v;
    double w_ramp = 0.0;
    double w_up = 0.0;
    double r = 1.0;
    double demand_up = 0.0;
    double demand_ramp = 0.0;
    double q_in = 0.0, q_ramp = 0.0, q_out = 0.0;
    double clamp_mass = 0.0;
    int density_clamps = 0, speed_clamps = 0;
    bool control_step = false;  // a control update happened at the step start
    double rho_meas = std::nan(""), v_meas = std::nan("");
    double rho_star = std::nan(""), e = std::nan("");
    double f_est = std::nan(""), r_raw = std::nan("");
};

struct RunMetrics {
    double tts_veh_h = 0.0;        // T * sum_k (sum_i rho_i L_i lambda_i + w_ramp)
    double tts_total_veh_h = 0.0;  // + upstream entry queue
    double ttd_veh_km = 0.0;       // T * sum_k sum_i q_i L_i
    double mean_speed_kmh = 0.0;   // ttd / mainline vehicle-hours
    double min_merge_speed_kmh = 0.0;
    double max_merge_rho = 0.0;
    double peak_ramp_queue_veh = 0.0;
    double peak_up_queue_veh = 0.0;
    double served_ramp_veh = 0.0;
    double outflow_veh = 0.0;
    long density_clamp_events = 0;
    long speed_clamp_events = 0;
};

struct RunResult {
    traffic::FreewayState initial;
    std::vector<TrajectoryRecord> traj;
    RunMetrics metrics;
    long control_steps = 0;
};

// ALINEA: r = r_prev + k_r * (rho_target - rho_measured), clamp by caller
double alinea_control(double r_prev, double rho_target, double rho_measured,
                      double k_r);

// Per-lane equilibrium density on the uncongested branch: rho*V(rho) = q_lane
double equilibrium_density(const traffic::FundamentalDiagram& fd, double q_lane);

RunMetrics compute_metrics(const std::vector<TrajectoryRecord>& traj,
                           const Scenario& sc);

RunResult run(const Scenario& sc);

// Demand surge demo: 6 x 1 km x 2 lanes, ramp at segment 4 (zero-based).
// A steep 10 min onset takes the mainstream from 2500 to 4200 veh/h and the
// ramp from 300 to 1400 for over an hour; uncontrolled, the merge collapses.
Scenario surge_scenario();

} // namespace rampmeter::harness
