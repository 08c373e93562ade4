#include "rampmeter/traffic_model.hpp"

#include <algorithm>
#include <cmath>

namespace rampmeter::traffic {

namespace {

void fail(const std::string& msg) { throw std::invalid_argument(msg); }

} // namespace

void validate_segments(const std::vector<SegmentParams>& seg,
                       const FundamentalDiagram& fd) {
    if (!fd.valid()) fail("diagram: v_free, rho_crit and exponent must be positive");
    if (seg.empty()) fail("segments: at least one segment required");
    for (size_t i = 0; i < seg.size(); ++i) {
        const auto& s = seg[i];
        const std::string at = "segment " + std::to_string(i) + ": ";
        if (s.length_km <= 0.0) fail(at + "length must be positive");
        if (s.lanes <= 0.0) fail(at + "lanes must be positive");
        if (s.tau_h <= 0.0) fail(at + "tau must be positive");
        if (s.nu < 0.0) fail(at + "nu must be non-negative");
        if (s.kappa <= 0.0) fail(at + "kappa must be positive");
        if (s.rho_max <= fd.rho_crit)
            fail(at + "rho_max must exceed the diagram's rho_crit");
    }
}

void validate_ramp(const RampParams& ramp, int n_segments) {
    if (ramp.q_sat <= 0.0) fail("ramp: q_sat must be positive");
    if (!(ramp.r_min >= 0.0 && ramp.r_min < ramp.r_max && ramp.r_max <= 1.0))
        fail("ramp: need 0 <= r_min < r_max <= 1");
    if (ramp.t_s_h <= 0.0) fail("ramp: service period must be positive");
    if (ramp.merge_segment < 0 || ramp.merge_segment >= n_segments)
        fail("ramp: merge_segment out of range");
}

double supply_ratio(RampSupplyFormula f, double rho_s, double rho_crit,
                    double rho_max, double eps) {
    double ratio;
    if (f == RampSupplyFormula::metanet) {
        ratio = (rho_max - rho_s) / (rho_max - rho_crit);
    } else {
        // near the singularity the congested-side limit is +inf: no restriction
        if (std::abs(rho_s - rho_crit) <= eps) return 1.0;
        ratio = (rho_max - rho_s) / (rho_s - rho_crit);
    }
    return std::clamp(ratio, 0.0, 1.0);
}

double ramp_flow(double r, double rho_s, double w, double demand,
                 const RampParams& ramp, const FundamentalDiagram& fd,
                 double rho_max) {
    const double ratio = supply_ratio(ramp.supply, rho_s, fd.rho_crit, rho_max,
                                      ramp.eps_supply);
    const double q_hat = std::min(demand + w / ramp.t_s_h,
                                  ramp.q_sat * std::min(r, ratio));
    return r * std::max(q_hat, 0.0);
}

double queue_step(double w, double demand, double q, double T_h) {
    return std::max(0.0, w + T_h * (demand - q));
}

StepResult step(const FreewayState& s, const BoundaryInput& in, double r,
                const std::vector<SegmentParams>& seg, const RampParams& ramp,
                const FundamentalDiagram& fd, double T_h, double instab_tol) {
    const int n = static_cast<int>(seg.size());
    if (static_cast<int>(s.rho.size()) != n || static_cast<int>(s.v.size()) != n)
        throw std::invalid_argument("step: state size does not match segment count");
    if (T_h <= 0.0) throw std::invalid_argument("step: T must be positive");
    if (in.demand_up < 0.0 || in.demand_ramp < 0.0)
        throw std::invalid_argument("step: demands must be non-negative");

    const int m = ramp.merge_segment;
    StepResult out;
    StepInfo& info = out.info;

    // ramp admission against the merge segment
    info.q_ramp = ramp_flow(r, s.rho[m], s.w_ramp, in.demand_ramp, ramp, fd,
                            seg[m].rho_max);

    // upstream boundary: entry queue identical in form to the on-ramp, with
    // the mainline capacity as saturation flow and r = 1
    const double cap0 = seg[0].lanes * fd.capacity_per_lane();
    const double ratio0 = supply_ratio(ramp.supply, s.rho[0], fd.rho_crit,
                                       seg[0].rho_max, ramp.eps_supply);
    info.q_in = std::min(in.demand_up + s.w_up / ramp.t_s_h,
                         cap0 * std::min(1.0, ratio0));
    info.q_in = std::max(info.q_in, 0.0);

    // segment flows
    std::vector<double> q(n);
    for (int i = 0; i < n; ++i) q[i] = seg[i].lanes * s.rho[i] * s.v[i];
    info.q_out = q[n - 1];

    FreewayState ns;
    ns.rho.resize(n);
    ns.v.resize(n);
    ns.t_h = s.t_h + T_h;

    for (int i = 0; i < n; ++i) {
        const double q_up = (i == 0) ? info.q_in : q[i - 1];
        const double q_merge = (i == m) ? info.q_ramp : 0.0;
        double rho_new = s.rho[i] + T_h / (seg[i].length_km * seg[i].lanes) *
                                        (q_up - q[i] + q_merge);

        if (rho_new < -instab_tol || rho_new > seg[i].rho_max + instab_tol)
            throw SimulationError(
                "instability: segment " + std::to_string(i) + " density " +
                std::to_string(rho_new) + " at t=" +
                std::to_string(ns.t_h * 3600.0) + " s (reduce the step size)");

        const double clamped = std::clamp(rho_new, 0.0, seg[i].rho_max);
        if (clamped != rho_new) {
            info.density_clamps += 1;
            info.clamp_mass += (clamped - rho_new) * seg[i].length_km * seg[i].lanes;
            rho_new = clamped;
        }
        ns.rho[i] = rho_new;

        const double v_up = (i == 0) ? s.v[0] : s.v[i - 1];
        const double rho_down = (i == n - 1) ? in.rho_down : s.rho[i + 1];
        double v_new = s.v[i] +
                       T_h / seg[i].tau_h * (fd.speed(s.rho[i]) - s.v[i]) +
                       T_h / seg[i].length_km * s.v[i] * (v_up - s.v[i]) -
                       seg[i].nu * T_h / (seg[i].tau_h * seg[i].length_km) *
                           (rho_down - s.rho[i]) / (s.rho[i] + seg[i].kappa);
        const double v_cl = std::clamp(v_new, 0.0, fd.v_free);
        if (v_cl != v_new) {
            info.speed_clamps += 1;
            v_new = v_cl;
        }
        ns.v[i] = v_new;
    }

    // T <= t_s keeps both queues non-negative without the max binding; if a
    // larger step is forced the created mass is accounted for
    const auto queue_update = [&](double w, double demand, double q) {
        const double raw = w + T_h * (demand - q);
        if (raw < 0.0) {
            info.clamp_mass += -raw;
            info.queue_clamps += 1;
            return 0.0;
        }
        return raw;
    };
    ns.w_ramp = queue_update(s.w_ramp, in.demand_ramp, info.q_ramp);
    ns.w_up = queue_update(s.w_up, in.demand_up, info.q_in);

    out.state = std::move(ns);
    return out;
}

} // namespace rampmeter::traffic
