#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "rampmeter/harness.hpp"

using namespace rampmeter;
using namespace rampmeter::harness;

namespace {

DemandProfile flat(double value, double dur_s) {
    DemandProfile p;
    p.pts = {{0.0, value}, {dur_s, value}};
    return p;
}

// one segment, no ramp traffic, everything at rest unless a test says otherwise
Scenario small_scenario() {
    Scenario sc;
    sc.name = "small";
    sc.segments = {traffic::SegmentParams{.length_km = 1.0, .lanes = 2.0}};
    sc.diagram = traffic::FundamentalDiagram{110.0, 30.0, 2.0};
    sc.ramp.merge_segment = 0;
    sc.ramp.q_sat = 1800.0;
    sc.step_s = 10.0;
    sc.control_period_s = 20.0;
    sc.duration_s = 3600.0;
    sc.demand_up = flat(0.0, sc.duration_s);
    sc.demand_ramp = flat(0.0, sc.duration_s);
    sc.rho_down = 0.0;
    sc.rho_init = 0.0;
    sc.controller = ControllerKind::none;
    return sc;
}

double storage_of(const Scenario& sc, const std::vector<double>& rho,
                  double w_ramp, double w_up) {
    double s = w_ramp + w_up;
    for (size_t i = 0; i < rho.size(); ++i)
        s += rho[i] * sc.segments[i].length_km * sc.segments[i].lanes;
    return s;
}

} // namespace

TEST_CASE("demand profile interpolation") {
    DemandProfile p;
    p.pts = {{0.0, 100.0}, {3600.0, 200.0}};
    CHECK(p.at(1800.0) == doctest::Approx(150.0).epsilon(1e-14));
    CHECK(p.at(-5.0) == 100.0);    // clamped before the first point
    CHECK(p.at(7200.0) == 200.0);  // clamped after the last point
    DemandProfile single;
    single.pts = {{0.0, 42.0}};
    CHECK(single.at(1234.0) == 42.0);
}

TEST_CASE("equilibrium density inversion") {
    const traffic::FundamentalDiagram fd{110.0, 30.0, 2.0};
    CHECK(equilibrium_density(fd, 0.0) == 0.0);
    CHECK(equilibrium_density(fd, -5.0) == 0.0);
    // at or beyond capacity the uncongested branch ends at the critical point
    CHECK(equilibrium_density(fd, fd.capacity_per_lane() * 1.1) == 30.0);
    for (double rho : {2.0, 12.0, 25.0, 29.9}) {
        const double q = rho * fd.speed(rho);
        CHECK(equilibrium_density(fd, q) == doctest::Approx(rho).epsilon(1e-6));
    }
}

TEST_CASE("alinea update direction") {
    CHECK(alinea_control(0.5, 30.0, 30.0, 1.0 / 40.0) == 0.5);
    CHECK(alinea_control(0.5, 30.0, 34.0, 1.0 / 40.0) ==
          doctest::Approx(0.4).epsilon(1e-14));
    CHECK(alinea_control(0.5, 30.0, 26.0, 1.0 / 40.0) ==
          doctest::Approx(0.6).epsilon(1e-14));
}

TEST_CASE("empty road stays empty") {
    Scenario sc = small_scenario();
    sc.segments = {traffic::SegmentParams{.length_km = 0.5, .lanes = 2.0},
                   traffic::SegmentParams{.length_km = 0.5, .lanes = 2.0},
                   traffic::SegmentParams{.length_km = 0.5, .lanes = 2.0}};
    const RunResult res = run(sc);
    for (const auto& rec : res.traj) {
        for (double rho : rec.rho) CHECK(rho == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(rec.q_out == doctest::Approx(0.0).epsilon(1e-12));
    }
    CHECK(res.metrics.tts_veh_h <= 1e-9);
    CHECK(res.metrics.served_ramp_veh <= 1e-9);
}

TEST_CASE("steady equilibrium gives the hand-computed metrics") {
    // 10 veh/km/lane held for one hour on 1 km x 2 lanes: 20 veh h
    Scenario sc = small_scenario();
    const double rho_e = 10.0;
    const double v_e = sc.diagram.speed(rho_e);
    sc.rho_init = rho_e;
    sc.rho_down = rho_e;
    sc.demand_up = flat(sc.segments[0].lanes * rho_e * v_e, sc.duration_s);
    const RunResult res = run(sc);

    CHECK(res.metrics.tts_veh_h == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(res.metrics.tts_total_veh_h == doctest::Approx(20.0).epsilon(1e-6));
    CHECK(res.metrics.ttd_veh_km == doctest::Approx(20.0 * v_e).epsilon(1e-6));
    CHECK(res.metrics.mean_speed_kmh == doctest::Approx(v_e).epsilon(1e-6));
    CHECK(res.metrics.min_merge_speed_kmh == doctest::Approx(v_e).epsilon(1e-6));
    CHECK(res.metrics.max_merge_rho == doctest::Approx(rho_e).epsilon(1e-6));
    CHECK(res.metrics.peak_ramp_queue_veh == 0.0);
    CHECK(res.metrics.density_clamp_events == 0);

    SUBCASE("integral metrics are additive over a split of the record") {
        const auto& tr = res.traj;
        const size_t half = tr.size() / 2;
        std::vector<TrajectoryRecord> a(tr.begin(), tr.begin() + half);
        std::vector<TrajectoryRecord> b(tr.begin() + half, tr.end());
        const RunMetrics ma = compute_metrics(a, sc);
        const RunMetrics mb = compute_metrics(b, sc);
        const RunMetrics mf = compute_metrics(tr, sc);
        CHECK(ma.tts_veh_h + mb.tts_veh_h ==
              doctest::Approx(mf.tts_veh_h).epsilon(1e-12));
        CHECK(ma.ttd_veh_km + mb.ttd_veh_km ==
              doctest::Approx(mf.ttd_veh_km).epsilon(1e-12));
        CHECK(ma.outflow_veh + mb.outflow_veh ==
              doctest::Approx(mf.outflow_veh).epsilon(1e-12));
        CHECK(ma.served_ramp_veh + mb.served_ramp_veh ==
              doctest::Approx(mf.served_ramp_veh).epsilon(1e-12));
    }
}

TEST_CASE("recorded flows reproduce the exact vehicle balance") {
    Scenario sc = small_scenario();
    sc.segments = {traffic::SegmentParams{}, traffic::SegmentParams{},
                   traffic::SegmentParams{}};
    sc.ramp.merge_segment = 1;
    sc.ramp.r_max = 0.6;
    sc.demand_up = flat(3200.0, sc.duration_s);
    sc.demand_ramp = flat(700.0, sc.duration_s);
    sc.rho_down = 25.0;
    sc.rho_init.reset();  // equilibrium seed
    sc.duration_s = 1800.0;
    const RunResult res = run(sc);

    const double T_h = sc.step_s / 3600.0;
    double prev = storage_of(sc, res.initial.rho, res.initial.w_ramp,
                             res.initial.w_up);
    for (const auto& rec : res.traj) {
        const double cur = storage_of(sc, rec.rho, rec.w_ramp, rec.w_up);
        const double expected =
            prev + T_h * (rec.demand_up + rec.demand_ramp - rec.q_out) +
            rec.clamp_mass;
        CHECK(cur == doctest::Approx(expected).epsilon(1e-9));
        prev = cur;
    }
}

TEST_CASE("a throttled ramp builds a queue and serves the rest") {
    Scenario sc = small_scenario();
    sc.ramp.r_max = 0.1;  // hard throttle, controller off
    sc.demand_ramp = flat(600.0, sc.duration_s);
    sc.demand_up = flat(1000.0, sc.duration_s);
    sc.rho_init = 8.0;
    sc.rho_down = 8.0;
    sc.duration_s = 600.0;
    const RunResult res = run(sc);
    // metering scales the saturation branch too: q_r = r * (q_sat * r)
    CHECK(res.metrics.peak_ramp_queue_veh > 50.0);
    CHECK(res.metrics.served_ramp_veh <
          600.0 * sc.duration_s / 3600.0 * 0.5);
    CHECK(res.metrics.served_ramp_veh ==
          doctest::Approx(1800.0 * 0.1 * 0.1 * sc.duration_s / 3600.0).epsilon(1e-6));
}

TEST_CASE("demand beyond entry capacity queues upstream") {
    Scenario sc = small_scenario();
    sc.segments = {traffic::SegmentParams{.length_km = 0.5, .lanes = 1.0}};
    sc.demand_up = flat(2200.0, sc.duration_s);  // above ~2001 veh/h capacity
    sc.rho_init = 15.0;
    sc.rho_down = 5.0;
    sc.duration_s = 600.0;
    const RunResult res = run(sc);
    CHECK(res.metrics.peak_up_queue_veh > 0.0);
    CHECK(res.metrics.tts_total_veh_h > res.metrics.tts_veh_h);
}

TEST_CASE("a far-out fixed target saturates the law at full admission") {
    // with the target unreachable above, the clamped command sits at r_max,
    // which is exactly what the uncontrolled run does
    Scenario mk = small_scenario();
    mk.segments = {traffic::SegmentParams{}, traffic::SegmentParams{},
                   traffic::SegmentParams{}};
    mk.ramp.merge_segment = 1;
    mk.ramp.r_min = 0.05;
    mk.demand_up = flat(3000.0, mk.duration_s);
    mk.demand_ramp = flat(400.0, mk.duration_s);
    mk.rho_down = 15.0;
    mk.rho_init.reset();
    mk.duration_s = 1200.0;

    Scenario off = mk;
    off.controller = ControllerKind::none;
    Scenario on = mk;
    on.controller = ControllerKind::ipi;
    on.control.fixed_reference = true;
    on.control.rho_star_fixed = 500.0;

    const RunResult a = run(off);
    const RunResult b = run(on);
    REQUIRE(a.traj.size() == b.traj.size());
    bool states_equal = true, flows_equal = true, r_equal = true;
    for (size_t k = 0; k < a.traj.size(); ++k) {
        states_equal = states_equal && a.traj[k].rho == b.traj[k].rho &&
                       a.traj[k].v == b.traj[k].v &&
                       a.traj[k].w_ramp == b.traj[k].w_ramp;
        flows_equal = flows_equal && a.traj[k].q_ramp == b.traj[k].q_ramp &&
                      a.traj[k].q_out == b.traj[k].q_out;
        r_equal = r_equal && a.traj[k].r == b.traj[k].r;
    }
    CHECK(states_equal);
    CHECK(flows_equal);
    CHECK(r_equal);
    CHECK(a.metrics.tts_veh_h == b.metrics.tts_veh_h);
}

TEST_CASE("fixed seed makes noisy runs reproducible") {
    Scenario sc = surge_scenario();
    sc.duration_s = 1800.0;
    sc.noise.sigma_speed_rel = 0.05;
    sc.noise.sigma_density = 1.0;
    sc.noise.seed = 7;
    const RunResult a = run(sc);
    const RunResult b = run(sc);
    REQUIRE(a.traj.size() == b.traj.size());
    bool equal = true;
    for (size_t k = 0; k < a.traj.size(); ++k) {
        equal = equal && a.traj[k].rho == b.traj[k].rho &&
                a.traj[k].r == b.traj[k].r &&
                a.traj[k].rho_meas == b.traj[k].rho_meas;
    }
    CHECK(equal);
    CHECK(a.metrics.tts_veh_h == b.metrics.tts_veh_h);
    CHECK(a.metrics.outflow_veh == b.metrics.outflow_veh);
}

TEST_CASE("zero noise ignores the seed entirely") {
    Scenario sc = surge_scenario();
    sc.duration_s = 1800.0;
    Scenario sc2 = sc;
    sc2.noise.seed = 999;
    const RunResult a = run(sc);
    const RunResult b = run(sc2);
    bool equal = a.traj.size() == b.traj.size();
    for (size_t k = 0; equal && k < a.traj.size(); ++k)
        equal = a.traj[k].rho == b.traj[k].rho && a.traj[k].r == b.traj[k].r;
    CHECK(equal);
    CHECK(a.metrics.tts_veh_h == b.metrics.tts_veh_h);
}

TEST_CASE("surge scenario invariants") {
    const Scenario sc = surge_scenario();
    CHECK_NOTHROW(sc.validate());
    CHECK(sc.segments.size() == 6);
    CHECK(sc.merge() == 4);
    CHECK(sc.detector() == 4);
    CHECK(sc.controller == ControllerKind::ipi);
    // q_sat / (L * lambda) = 1800 / (1.0 * 2)
    CHECK(sc.resolved_alpha() == doctest::Approx(900.0).epsilon(1e-12));
    // the corridor can pass the peak when admission is managed
    const double cap = sc.segments.back().lanes * sc.diagram.capacity_per_lane();
    CHECK(cap > 4200.0);
    // demand really peaks above the uncontrolled bottleneck for one hour
    double peak = 0.0;
    for (const auto& p : sc.demand_up.pts) peak = std::max(peak, p.value);
    CHECK(peak == 4200.0);
}

TEST_CASE("control cadence and clamping in the recorded trajectory") {
    Scenario sc = surge_scenario();
    sc.duration_s = 1200.0;
    const RunResult res = run(sc);
    REQUIRE(res.traj.size() == 120);
    const long n_sub = std::lround(sc.control_period_s / sc.step_s);
    for (size_t k = 0; k < res.traj.size(); ++k) {
        CHECK(res.traj[k].control_step == (static_cast<long>(k) % n_sub == 0));
        CHECK(res.traj[k].t_s == doctest::Approx((k + 1) * sc.step_s));
        CHECK(res.traj[k].r >= sc.ramp.r_min);
        CHECK(res.traj[k].r <= sc.ramp.r_max);
    }
    CHECK(res.control_steps == 60);
}

TEST_CASE("scenario validation rejects broken configurations") {
    auto expect_throw = [](Scenario s) {
        CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    };
    Scenario s = small_scenario();
    CHECK_NOTHROW(s.validate());

    { Scenario b = s; b.version = 2; expect_throw(b); }
    { Scenario b = s; b.segments.clear(); expect_throw(b); }
    { Scenario b = s; b.duration_s = 0.0; expect_throw(b); }
    { Scenario b = s; b.control_period_s = 25.0; expect_throw(b); }  // not a multiple
    { Scenario b = s; b.demand_up.pts.clear(); expect_throw(b); }
    { Scenario b = s; b.demand_up.pts = {{100.0, 5.0}, {0.0, 5.0}}; expect_throw(b); }
    { Scenario b = s; b.demand_ramp.pts = {{0.0, -1.0}}; expect_throw(b); }
    { Scenario b = s; b.rho_init = 1e9; expect_throw(b); }
    { Scenario b = s; b.rho_down = -2.0; expect_throw(b); }
    { Scenario b = s; b.alpha = 0.0; expect_throw(b); }
    { Scenario b = s; b.alinea_kr = 0.0; expect_throw(b); }
    { Scenario b = s; b.control.gains.kp = -1.0; expect_throw(b); }
    { Scenario b = s; b.noise.sigma_density = -0.1; expect_throw(b); }
    { Scenario b = s; b.detector_segment = 7; expect_throw(b); }
}
