#include "rampmeter/harness.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rampmeter::harness {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

} // namespace

double DemandProfile::at(double t_s) const {
    if (pts.empty()) return 0.0;
    if (t_s <= pts.front().t_s) return pts.front().value;
    if (t_s >= pts.back().t_s) return pts.back().value;
    for (size_t i = 1; i < pts.size(); ++i) {
        if (t_s <= pts[i].t_s) {
            const DemandPoint& a = pts[i - 1];
            const DemandPoint& b = pts[i];
            if (b.t_s <= a.t_s) return b.value;
            const double s = (t_s - a.t_s) / (b.t_s - a.t_s);
            return a.value + s * (b.value - a.value);
        }
    }
    return pts.back().value;
}

double Scenario::resolved_alpha() const {
    if (alpha) return *alpha;
    const auto& m = segments[ramp.merge_segment];
    // ramp capacity contribution to the merge density rate, per unit r
    return ramp.q_sat / (m.length_km * m.lanes);
}

void Scenario::validate() const {
    if (version != 1) fail(name + ": unsupported scenario version");
    traffic::validate_segments(segments, diagram);
    traffic::RampParams rp = ramp;
    rp.t_s_h = control_period_s / 3600.0;
    traffic::validate_ramp(rp, static_cast<int>(segments.size()));
    if (step_s <= 0.0) fail(name + ": step_s must be positive");
    if (control_period_s <= 0.0) fail(name + ": control_period_s must be positive");
    const double k = control_period_s / step_s;
    if (std::abs(k - std::round(k)) > 1e-9 || k < 1.0 - 1e-9)
        fail(name + ": control_period_s must be an integer multiple of step_s");
    if (duration_s <= 0.0) fail(name + ": duration_s must be positive");
    for (const auto* prof : {&demand_up, &demand_ramp}) {
        double prev = -1.0;
        if (prof->pts.empty()) fail(name + ": demand profile is empty");
        for (const auto& p : prof->pts) {
            if (p.value < 0.0) fail(name + ": demand values must be non-negative");
            if (p.t_s < prev) fail(name + ": demand breakpoints must be sorted by time");
            prev = p.t_s;
        }
    }
    if (rho_down < 0.0) fail(name + ": rho_down must be non-negative");
    if (rho_init && (*rho_init < 0.0 || *rho_init > segments.front().rho_max))
        fail(name + ": rho_init out of range");
    if (alpha && *alpha == 0.0) fail(name + ": alpha must be non-zero");
    if (control.gains.kp < 0.0 || control.gains.ki < 0.0)
        fail(name + ": gains must be non-negative");
    if (control.f_window_steps < 1) fail(name + ": f_window_steps must be >= 1");
    if (alinea_kr <= 0.0) fail(name + ": alinea k_r must be positive");
    if (noise.sigma_speed_rel < 0.0 || noise.sigma_density < 0.0)
        fail(name + ": noise sigmas must be non-negative");
    if (detector_segment >= static_cast<int>(segments.size()))
        fail(name + ": detector_segment out of range");
}

double alinea_control(double r_prev, double rho_target, double rho_measured,
                      double k_r) {
    return r_prev + k_r * (rho_target - rho_measured);
}

double equilibrium_density(const traffic::FundamentalDiagram& fd, double q_lane) {
    if (q_lane <= 0.0) return 0.0;
    if (q_lane >= fd.capacity_per_lane()) return fd.rho_crit;
    double lo = 0.0, hi = fd.rho_crit;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (fd.flow_per_lane(mid) < q_lane) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

RunResult run(const Scenario& sc) {
    sc.validate();

    const double T_h = sc.step_s / 3600.0;
    const long n_sub = std::lround(sc.control_period_s / sc.step_s);
    const long n_steps = std::lround(sc.duration_s / sc.step_s);
    const int n_seg = static_cast<int>(sc.segments.size());
    const int det = sc.detector();

    traffic::RampParams ramp = sc.ramp;
    ramp.t_s_h = sc.control_period_s / 3600.0;

    mfc::ControllerConfig cc = sc.control;
    cc.alpha = sc.resolved_alpha();
    cc.r_min = ramp.r_min;
    cc.r_max = ramp.r_max;
    if (sc.controller == ControllerKind::ip) cc.law = mfc::ControlLaw::ip;
    if (sc.controller == ControllerKind::ipi) cc.law = mfc::ControlLaw::ipi;

    std::optional<mfc::RampMeteringController> ctrl;
    std::optional<mfc::ReferenceGenerator> alinea_ref;
    if (sc.controller == ControllerKind::ipi || sc.controller == ControllerKind::ip)
        ctrl.emplace(cc, sc.control_period_s);
    if (sc.controller == ControllerKind::alinea)
        alinea_ref.emplace(sc.control.reference, sc.control_period_s);

    std::mt19937_64 rng(sc.noise.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    RunResult out;
    traffic::FreewayState state;
    state.rho.resize(n_seg);
    state.v.resize(n_seg);
    for (int i = 0; i < n_seg; ++i) {
        state.rho[i] = sc.rho_init
                           ? *sc.rho_init
                           : equilibrium_density(sc.diagram,
                                                 sc.demand_up.at(0.0) /
                                                     sc.segments[i].lanes);
        state.v[i] = sc.diagram.speed(state.rho[i]);
    }
    out.initial = state;

    double r = ramp.r_max;
    double held_rho_meas = std::nan(""), held_v_meas = std::nan("");
    double held_rho_star = std::nan(""), held_e = std::nan("");
    double held_f = std::nan(""), held_r_raw = std::nan("");

    out.traj.reserve(n_steps);
    for (long k = 0; k < n_steps; ++k) {
        const double t_s = static_cast<double>(k) * sc.step_s;
        bool control_step = false;

        if (k % n_sub == 0) {
            control_step = true;
            out.control_steps += 1;
            double rho_m = state.rho[det];
            double v_m = state.v[det];
            if (sc.noise.sigma_density > 0.0)
                rho_m = std::max(0.0, rho_m + sc.noise.sigma_density * gauss(rng));
            if (sc.noise.sigma_speed_rel > 0.0)
                v_m = std::max(0.0, v_m * (1.0 + sc.noise.sigma_speed_rel * gauss(rng)));
            held_rho_meas = rho_m;
            held_v_meas = v_m;

            switch (sc.controller) {
                case ControllerKind::none:
                    r = ramp.r_max;
                    held_r_raw = r;
                    break;
                case ControllerKind::alinea: {
                    const double target = alinea_ref->update(v_m);
                    const double u = alinea_control(r, target, rho_m, sc.alinea_kr);
                    r = mfc::clamp_control(u, ramp.r_min, ramp.r_max);
                    held_rho_star = target;
                    held_e = rho_m - target;
                    held_r_raw = u;
                    break;
                }
                case ControllerKind::ipi:
                case ControllerKind::ip: {
                    const auto rec = ctrl->update(t_s / 3600.0, rho_m, v_m);
                    r = rec.r_clamped;
                    held_rho_star = rec.rho_star;
                    held_e = rec.e;
                    held_f = rec.f_est;
                    held_r_raw = rec.r_raw;
                    break;
                }
            }
        }

        traffic::BoundaryInput in;
        in.demand_up = sc.demand_up.at(t_s);
        in.demand_ramp = sc.demand_ramp.at(t_s);
        in.rho_down = sc.rho_down;

        auto res = traffic::step(state, in, r, sc.segments, ramp, sc.diagram, T_h);

        TrajectoryRecord rec;
        rec.t_s = t_s + sc.step_s;
        rec.rho = res.state.rho;
        rec.v = res.state.v;
        rec.w_ramp = res.state.w_ramp;
        rec.w_up = res.state.w_up;
        rec.r = r;
        rec.demand_up = in.demand_up;
        rec.demand_ramp = in.demand_ramp;
        rec.q_in = res.info.q_in;
        rec.q_ramp = res.info.q_ramp;
        rec.q_out = res.info.q_out;
        rec.clamp_mass = res.info.clamp_mass;
        rec.density_clamps = res.info.density_clamps + res.info.queue_clamps;
        rec.speed_clamps = res.info.speed_clamps;
        rec.control_step = control_step;
        rec.rho_meas = held_rho_meas;
        rec.v_meas = held_v_meas;
        rec.rho_star = held_rho_star;
        rec.e = held_e;
        rec.f_est = held_f;
        rec.r_raw = held_r_raw;
        out.traj.push_back(std::move(rec));

        state = std::move(res.state);
    }

    out.metrics = compute_metrics(out.traj, sc);
    return out;
}

RunMetrics compute_metrics(const std::vector<TrajectoryRecord>& traj,
                           const Scenario& sc) {
    RunMetrics m;
    if (traj.empty()) return m;
    const double T_h = sc.step_s / 3600.0;
    const int merge = sc.merge();
    double vh_main = 0.0;
    m.min_merge_speed_kmh = sc.diagram.v_free;
    for (const auto& rec : traj) {
        double storage = 0.0, ttd_step = 0.0;
        for (size_t i = 0; i < sc.segments.size(); ++i) {
            const auto& sg = sc.segments[i];
            storage += rec.rho[i] * sg.length_km * sg.lanes;
            ttd_step += sg.lanes * rec.rho[i] * rec.v[i] * sg.length_km;
        }
        m.tts_veh_h += T_h * (storage + rec.w_ramp);
        m.tts_total_veh_h += T_h * (storage + rec.w_ramp + rec.w_up);
        m.ttd_veh_km += T_h * ttd_step;
        vh_main += T_h * storage;
        m.min_merge_speed_kmh = std::min(m.min_merge_speed_kmh, rec.v[merge]);
        m.max_merge_rho = std::max(m.max_merge_rho, rec.rho[merge]);
        m.peak_ramp_queue_veh = std::max(m.peak_ramp_queue_veh, rec.w_ramp);
        m.peak_up_queue_veh = std::max(m.peak_up_queue_veh, rec.w_up);
        m.served_ramp_veh += T_h * rec.q_ramp;
        m.outflow_veh += T_h * rec.q_out;
        m.density_clamp_events += rec.density_clamps;
        m.speed_clamp_events += rec.speed_clamps;
    }
    m.mean_speed_kmh = (vh_main > 0.0) ? m.ttd_veh_km / vh_main : 0.0;
    return m;
}

Scenario surge_scenario() {
    Scenario sc;
    sc.name = "surge";
    traffic::SegmentParams seg;
    seg.length_km = 1.0;
    // moderate anticipation: a jammed merge then discharges well below
    // capacity, which is what makes metering pay off
    seg.nu = 30.0;
    sc.segments.assign(6, seg);
    sc.diagram = {115.0, 33.0, 2.0};
    sc.ramp.q_sat = 1800.0;
    sc.ramp.r_min = 0.05;
    sc.ramp.r_max = 1.0;
    sc.ramp.merge_segment = 4;
    sc.step_s = 10.0;
    sc.control_period_s = 20.0;
    sc.duration_s = 4.0 * 3600.0;
    sc.demand_up.pts = {{0.0, 2500.0},    {1800.0, 2500.0}, {2400.0, 4200.0},
                        {7200.0, 4200.0}, {9000.0, 2500.0}, {14400.0, 2500.0}};
    sc.demand_ramp.pts = {{0.0, 300.0},    {1800.0, 300.0}, {2400.0, 1400.0},
                          {7200.0, 1400.0}, {9000.0, 300.0}, {14400.0, 300.0}};
    sc.rho_down = 20.0;
    sc.controller = ControllerKind::ipi;
    sc.control.gains = {20.0, 100.0};
    sc.control.reference = {30.0, 2.0, 6.0, 70.0, 60.0};
    sc.control.deriv.ema_tau_s = 40.0;
    sc.control.deriv.baseline_steps = 2;
    // inert while use_algediff is false; hour-based so the saved file shows
    // a sane 300 s window if someone enables it
    sc.control.deriv.diff.window = 300.0 / 3600.0;
    sc.control.deriv.diff.sample_period = 20.0 / 3600.0;
    sc.alinea_kr = 1.0 / 40.0;
    return sc;
}

} // namespace rampmeter::harness
