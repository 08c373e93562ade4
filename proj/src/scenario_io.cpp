#include "rampmeter/scenario_io.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace rampmeter::scenario_io {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw std::runtime_error(path + ": " + msg);
}

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& path, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            fail(path, where + ": unknown key '" + it.key() + "'");
}

const json& member(const json& j, const char* key, const std::string& path,
                   const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) fail(path, where + ": missing required key '" + key + "'");
    return *it;
}

double as_num(const json& j, const std::string& path, const std::string& where) {
    if (!j.is_number()) fail(path, where + ": expected a number");
    return j.get<double>();
}

double num_or(const json& j, const char* key, double dflt,
              const std::string& path, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    return as_num(*it, path, where + "." + key);
}

long int_or(const json& j, const char* key, long dflt, const std::string& path,
            const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_number_integer()) fail(path, where + "." + key + ": expected an integer");
    return it->get<long>();
}

bool bool_or(const json& j, const char* key, bool dflt, const std::string& path,
             const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_boolean()) fail(path, where + "." + key + ": expected a boolean");
    return it->get<bool>();
}

std::string str_or(const json& j, const char* key, const std::string& dflt,
                   const std::string& path, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_string()) fail(path, where + "." + key + ": expected a string");
    return it->get<std::string>();
}

harness::DemandProfile load_profile(const json& j, const std::string& path,
                                    const std::string& where) {
    if (!j.is_array()) fail(path, where + ": expected an array of [t_s, veh_per_h]");
    harness::DemandProfile p;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 2)
            fail(path, where + ": each breakpoint must be [t_s, veh_per_h]");
        p.pts.push_back({as_num(e[0], path, where), as_num(e[1], path, where)});
    }
    return p;
}

json save_profile(const harness::DemandProfile& p) {
    json j = json::array();
    for (const auto& pt : p.pts) j.push_back({pt.t_s, pt.value});
    return j;
}

fdestim::EstimatorConfig load_estimator(const json& j, const std::string& path,
                                        const std::string& where) {
    check_keys(j,
               {"window_s", "w_window_s", "sample_period_s", "extra_integrations",
                "eps_rho_dot", "eps_w", "a_min", "a_max", "median_window"},
               path, where);
    fdestim::EstimatorConfig c;
    c.d1.window = num_or(j, "window_s", c.d1.window, path, where);
    c.dw.window = num_or(j, "w_window_s", c.dw.window, path, where);
    const double sp = num_or(j, "sample_period_s", c.d1.sample_period, path, where);
    c.d1.sample_period = sp;
    c.dw.sample_period = sp;
    const long n = int_or(j, "extra_integrations", c.d1.extra_integrations, path, where);
    c.d1.extra_integrations = static_cast<int>(n);
    c.dw.extra_integrations = static_cast<int>(n);
    c.eps_rho_dot = num_or(j, "eps_rho_dot", c.eps_rho_dot, path, where);
    c.eps_w = num_or(j, "eps_w", c.eps_w, path, where);
    c.a_min = num_or(j, "a_min", c.a_min, path, where);
    c.a_max = num_or(j, "a_max", c.a_max, path, where);
    c.median_window = static_cast<int>(int_or(j, "median_window", c.median_window, path, where));
    return c;
}

json save_estimator(const fdestim::EstimatorConfig& c) {
    return json{{"window_s", c.d1.window},
                {"w_window_s", c.dw.window},
                {"sample_period_s", c.d1.sample_period},
                {"extra_integrations", c.d1.extra_integrations},
                {"eps_rho_dot", c.eps_rho_dot},
                {"eps_w", c.eps_w},
                {"a_min", c.a_min},
                {"a_max", c.a_max},
                {"median_window", c.median_window}};
}

} // namespace

harness::Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(path, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail(path, "top level must be an object");
    check_keys(j,
               {"version", "name", "segments", "diagram", "ramp", "step_s",
                "control_period_s", "duration_s", "demand_up", "demand_ramp",
                "rho_down", "rho_init", "controller", "control", "alpha",
                "alinea_kr", "noise", "detector_segment", "estimator"},
               path, "scenario");

    harness::Scenario sc;
    sc.version = static_cast<int>(int_or(j, "version", -1, path, "scenario"));
    if (sc.version != 1) fail(path, "unsupported or missing schema version (want 1)");
    sc.name = str_or(j, "name", "scenario", path, "scenario");

    const json& segs = member(j, "segments", path, "scenario");
    if (!segs.is_array() || segs.empty()) fail(path, "segments: expected a non-empty array");
    for (size_t i = 0; i < segs.size(); ++i) {
        const std::string where = "segments[" + std::to_string(i) + "]";
        const json& s = segs[i];
        if (!s.is_object()) fail(path, where + ": expected an object");
        check_keys(s, {"length_km", "lanes", "tau_s", "nu", "kappa", "rho_max"},
                   path, where);
        traffic::SegmentParams sp;
        sp.length_km = num_or(s, "length_km", sp.length_km, path, where);
        sp.lanes = num_or(s, "lanes", sp.lanes, path, where);
        sp.tau_h = num_or(s, "tau_s", sp.tau_h * 3600.0, path, where) / 3600.0;
        sp.nu = num_or(s, "nu", sp.nu, path, where);
        sp.kappa = num_or(s, "kappa", sp.kappa, path, where);
        sp.rho_max = num_or(s, "rho_max", sp.rho_max, path, where);
        sc.segments.push_back(sp);
    }

    if (auto it = j.find("diagram"); it != j.end()) {
        check_keys(*it, {"v_free", "rho_crit", "a"}, path, "diagram");
        sc.diagram.v_free = num_or(*it, "v_free", sc.diagram.v_free, path, "diagram");
        sc.diagram.rho_crit = num_or(*it, "rho_crit", sc.diagram.rho_crit, path, "diagram");
        sc.diagram.a = num_or(*it, "a", sc.diagram.a, path, "diagram");
    }

    if (auto it = j.find("ramp"); it != j.end()) {
        check_keys(*it, {"q_sat", "r_min", "r_max", "merge_segment", "supply"},
                   path, "ramp");
        sc.ramp.q_sat = num_or(*it, "q_sat", sc.ramp.q_sat, path, "ramp");
        sc.ramp.r_min = num_or(*it, "r_min", sc.ramp.r_min, path, "ramp");
        sc.ramp.r_max = num_or(*it, "r_max", sc.ramp.r_max, path, "ramp");
        sc.ramp.merge_segment = static_cast<int>(
            int_or(*it, "merge_segment", sc.ramp.merge_segment, path, "ramp"));
        const std::string sup = str_or(*it, "supply", "metanet", path, "ramp");
        if (sup == "metanet") sc.ramp.supply = traffic::RampSupplyFormula::metanet;
        else if (sup == "hyperbolic") sc.ramp.supply = traffic::RampSupplyFormula::hyperbolic;
        else fail(path, "ramp.supply: expected 'metanet' or 'hyperbolic'");
    }

    sc.step_s = num_or(j, "step_s", sc.step_s, path, "scenario");
    sc.control_period_s = num_or(j, "control_period_s", sc.control_period_s, path, "scenario");
    sc.duration_s = num_or(j, "duration_s", sc.duration_s, path, "scenario");
    sc.demand_up = load_profile(member(j, "demand_up", path, "scenario"), path, "demand_up");
    sc.demand_ramp = load_profile(member(j, "demand_ramp", path, "scenario"), path, "demand_ramp");
    sc.rho_down = num_or(j, "rho_down", sc.rho_down, path, "scenario");

    if (auto it = j.find("rho_init"); it != j.end()) {
        if (it->is_string()) {
            if (it->get<std::string>() != "auto")
                fail(path, "rho_init: expected a number or 'auto'");
        } else {
            sc.rho_init = as_num(*it, path, "rho_init");
        }
    }

    const std::string ck = str_or(j, "controller", "ipi", path, "scenario");
    if (ck == "none") sc.controller = harness::ControllerKind::none;
    else if (ck == "ipi") sc.controller = harness::ControllerKind::ipi;
    else if (ck == "ip") sc.controller = harness::ControllerKind::ip;
    else if (ck == "alinea") sc.controller = harness::ControllerKind::alinea;
    else fail(path, "controller: expected one of none/ipi/ip/alinea");

    if (auto it = j.find("control"); it != j.end()) {
        const json& c = *it;
        check_keys(c,
                   {"kp", "ki", "reference", "fixed_reference", "rho_star_fixed",
                    "deriv", "f_source", "f_window_steps"},
                   path, "control");
        sc.control.gains.kp = num_or(c, "kp", sc.control.gains.kp, path, "control");
        sc.control.gains.ki = num_or(c, "ki", sc.control.gains.ki, path, "control");
        if (auto rit = c.find("reference"); rit != c.end()) {
            check_keys(*rit,
                       {"rho_d0", "rho_inc", "rho_dec", "v_threshold", "v_filter_tau_s"},
                       path, "control.reference");
            auto& rc = sc.control.reference;
            rc.rho_d0 = num_or(*rit, "rho_d0", rc.rho_d0, path, "control.reference");
            rc.rho_inc = num_or(*rit, "rho_inc", rc.rho_inc, path, "control.reference");
            rc.rho_dec = num_or(*rit, "rho_dec", rc.rho_dec, path, "control.reference");
            rc.v_threshold = num_or(*rit, "v_threshold", rc.v_threshold, path, "control.reference");
            rc.v_filter_tau_s = num_or(*rit, "v_filter_tau_s", rc.v_filter_tau_s, path, "control.reference");
        }
        sc.control.fixed_reference = bool_or(c, "fixed_reference", sc.control.fixed_reference, path, "control");
        sc.control.rho_star_fixed = num_or(c, "rho_star_fixed", sc.control.rho_star_fixed, path, "control");
        if (auto dit = c.find("deriv"); dit != c.end()) {
            check_keys(*dit,
                       {"use_algediff", "ema_tau_s", "baseline_steps", "window_s",
                        "sample_period_s", "extra_integrations"},
                       path, "control.deriv");
            auto& dc = sc.control.deriv;
            dc.use_algediff = bool_or(*dit, "use_algediff", dc.use_algediff, path, "control.deriv");
            dc.ema_tau_s = num_or(*dit, "ema_tau_s", dc.ema_tau_s, path, "control.deriv");
            dc.baseline_steps = static_cast<int>(
                int_or(*dit, "baseline_steps", dc.baseline_steps, path, "control.deriv"));
            dc.diff.window = num_or(*dit, "window_s", dc.diff.window * 3600.0, path, "control.deriv") / 3600.0;
            dc.diff.sample_period = num_or(*dit, "sample_period_s", dc.diff.sample_period * 3600.0, path, "control.deriv") / 3600.0;
            dc.diff.extra_integrations = static_cast<int>(
                int_or(*dit, "extra_integrations", dc.diff.extra_integrations, path, "control.deriv"));
        }
        const std::string fs = str_or(c, "f_source", "derivative", path, "control");
        if (fs == "derivative") sc.control.f_source = mfc::FSource::derivative;
        else if (fs == "integral") sc.control.f_source = mfc::FSource::integral;
        else fail(path, "control.f_source: expected 'derivative' or 'integral'");
        sc.control.f_window_steps = static_cast<int>(
            int_or(c, "f_window_steps", sc.control.f_window_steps, path, "control"));
    }

    if (auto it = j.find("alpha"); it != j.end()) {
        if (it->is_string()) {
            if (it->get<std::string>() != "auto")
                fail(path, "alpha: expected a number or 'auto'");
        } else {
            sc.alpha = as_num(*it, path, "alpha");
        }
    }
    sc.alinea_kr = num_or(j, "alinea_kr", sc.alinea_kr, path, "scenario");

    if (auto it = j.find("noise"); it != j.end()) {
        check_keys(*it, {"sigma_speed_rel", "sigma_density", "seed"}, path, "noise");
        sc.noise.sigma_speed_rel = num_or(*it, "sigma_speed_rel", sc.noise.sigma_speed_rel, path, "noise");
        sc.noise.sigma_density = num_or(*it, "sigma_density", sc.noise.sigma_density, path, "noise");
        sc.noise.seed = static_cast<std::uint64_t>(
            int_or(*it, "seed", static_cast<long>(sc.noise.seed), path, "noise"));
    }

    sc.detector_segment = static_cast<int>(
        int_or(j, "detector_segment", sc.detector_segment, path, "scenario"));
    if (auto it = j.find("estimator"); it != j.end())
        sc.estimator = load_estimator(*it, path, "estimator");

    sc.validate();
    return sc;
}

void save_scenario(const harness::Scenario& sc, const std::string& path) {
    json j;
    j["version"] = sc.version;
    j["name"] = sc.name;
    json segs = json::array();
    for (const auto& s : sc.segments)
        segs.push_back({{"length_km", s.length_km},
                        {"lanes", s.lanes},
                        {"tau_s", s.tau_h * 3600.0},
                        {"nu", s.nu},
                        {"kappa", s.kappa},
                        {"rho_max", s.rho_max}});
    j["segments"] = segs;
    j["diagram"] = {{"v_free", sc.diagram.v_free},
                    {"rho_crit", sc.diagram.rho_crit},
                    {"a", sc.diagram.a}};
    j["ramp"] = {{"q_sat", sc.ramp.q_sat},
                 {"r_min", sc.ramp.r_min},
                 {"r_max", sc.ramp.r_max},
                 {"merge_segment", sc.ramp.merge_segment},
                 {"supply", sc.ramp.supply == traffic::RampSupplyFormula::hyperbolic
                                ? "hyperbolic"
                                : "metanet"}};
    j["step_s"] = sc.step_s;
    j["control_period_s"] = sc.control_period_s;
    j["duration_s"] = sc.duration_s;
    j["demand_up"] = save_profile(sc.demand_up);
    j["demand_ramp"] = save_profile(sc.demand_ramp);
    j["rho_down"] = sc.rho_down;
    if (sc.rho_init) j["rho_init"] = *sc.rho_init;
    else j["rho_init"] = "auto";
    switch (sc.controller) {
        case harness::ControllerKind::none: j["controller"] = "none"; break;
        case harness::ControllerKind::ipi: j["controller"] = "ipi"; break;
        case harness::ControllerKind::ip: j["controller"] = "ip"; break;
        case harness::ControllerKind::alinea: j["controller"] = "alinea"; break;
    }
    j["control"] = {
        {"kp", sc.control.gains.kp},
        {"ki", sc.control.gains.ki},
        {"reference",
         {{"rho_d0", sc.control.reference.rho_d0},
          {"rho_inc", sc.control.reference.rho_inc},
          {"rho_dec", sc.control.reference.rho_dec},
          {"v_threshold", sc.control.reference.v_threshold},
          {"v_filter_tau_s", sc.control.reference.v_filter_tau_s}}},
        {"fixed_reference", sc.control.fixed_reference},
        {"rho_star_fixed", sc.control.rho_star_fixed},
        {"deriv",
         {{"use_algediff", sc.control.deriv.use_algediff},
          {"ema_tau_s", sc.control.deriv.ema_tau_s},
          {"baseline_steps", sc.control.deriv.baseline_steps},
          {"window_s", sc.control.deriv.diff.window * 3600.0},
          {"sample_period_s", sc.control.deriv.diff.sample_period * 3600.0},
          {"extra_integrations", sc.control.deriv.diff.extra_integrations}}},
        {"f_source",
         sc.control.f_source == mfc::FSource::integral ? "integral" : "derivative"},
        {"f_window_steps", sc.control.f_window_steps}};
    if (sc.alpha) j["alpha"] = *sc.alpha;
    else j["alpha"] = "auto";
    j["alinea_kr"] = sc.alinea_kr;
    j["noise"] = {{"sigma_speed_rel", sc.noise.sigma_speed_rel},
                  {"sigma_density", sc.noise.sigma_density},
                  {"seed", sc.noise.seed}};
    j["detector_segment"] = sc.detector_segment;
    j["estimator"] = save_estimator(sc.estimator);

    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    out << j.dump(2) << "\n";
}

EstimateOptions load_estimate_options(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(path, "cannot open");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(path, std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) fail(path, "top level must be an object");
    check_keys(j, {"sample_period_s", "detector", "estimator"}, path, "options");
    EstimateOptions opt;
    opt.sample_period_s = num_or(j, "sample_period_s", opt.sample_period_s, path, "options");
    if (auto it = j.find("detector"); it != j.end()) {
        check_keys(*it, {"l_eff_m", "lanes", "max_forward_fill"}, path, "detector");
        opt.detector.l_eff_m = num_or(*it, "l_eff_m", opt.detector.l_eff_m, path, "detector");
        opt.detector.lanes = num_or(*it, "lanes", opt.detector.lanes, path, "detector");
        opt.detector.max_forward_fill = static_cast<int>(
            int_or(*it, "max_forward_fill", opt.detector.max_forward_fill, path, "detector"));
    }
    if (auto it = j.find("estimator"); it != j.end())
        opt.estimator = load_estimator(*it, path, "estimator");
    if (opt.sample_period_s <= 0.0) fail(path, "sample_period_s must be positive");
    return opt;
}

} // namespace rampmeter::scenario_io
