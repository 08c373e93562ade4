#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "rampmeter/algediff.hpp"
#include "rampmeter/csv_io.hpp"
#include "rampmeter/fd_estim.hpp"
#include "rampmeter/harness.hpp"
#include "rampmeter/scenario_io.hpp"

namespace {

using namespace rampmeter;

std::string resolve_out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("RAMPMETER_OUT")) {
        if (*env) return env;
    }
    throw std::runtime_error("no output directory (pass --out or set RAMPMETER_OUT)");
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void write_trajectory(const harness::RunResult& res, const harness::Scenario& sc,
                      const std::string& path) {
    csv::Writer w(path);
    std::vector<std::string> names{"t_s"};
    const size_t n = sc.segments.size();
    for (size_t i = 0; i < n; ++i) names.push_back("rho_" + std::to_string(i));
    for (size_t i = 0; i < n; ++i) names.push_back("v_" + std::to_string(i));
    for (const char* c : {"w_ramp", "w_up", "r", "demand_up", "demand_ramp",
                          "q_in", "q_ramp", "q_out", "clamp_mass", "control_step",
                          "rho_meas", "v_meas", "rho_star", "e", "f_est", "r_raw"})
        names.push_back(c);
    w.header(names);
    for (const auto& rec : res.traj) {
        w.cell(rec.t_s);
        for (size_t i = 0; i < n; ++i) w.cell(rec.rho[i]);
        for (size_t i = 0; i < n; ++i) w.cell(rec.v[i]);
        w.cell(rec.w_ramp);
        w.cell(rec.w_up);
        w.cell(rec.r);
        w.cell(rec.demand_up);
        w.cell(rec.demand_ramp);
        w.cell(rec.q_in);
        w.cell(rec.q_ramp);
        w.cell(rec.q_out);
        w.cell(rec.clamp_mass);
        w.cell(rec.control_step ? 1.0 : 0.0);
        w.cell(rec.rho_meas);
        w.cell(rec.v_meas);
        w.cell(rec.rho_star);
        w.cell(rec.e);
        w.cell(rec.f_est);
        w.cell(rec.r_raw);
        w.end_row();
    }
}

void write_metrics(const harness::RunMetrics& m, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    auto line = [&](const char* k, double v) {
        std::string s = std::string(k) + "=" + csv::format_double(v) + "\n";
        std::fwrite(s.data(), 1, s.size(), f);
    };
    line("tts_veh_h", m.tts_veh_h);
    line("tts_total_veh_h", m.tts_total_veh_h);
    line("ttd_veh_km", m.ttd_veh_km);
    line("mean_speed_kmh", m.mean_speed_kmh);
    line("min_merge_speed_kmh", m.min_merge_speed_kmh);
    line("max_merge_rho", m.max_merge_rho);
    line("peak_ramp_queue_veh", m.peak_ramp_queue_veh);
    line("peak_up_queue_veh", m.peak_up_queue_veh);
    line("served_ramp_veh", m.served_ramp_veh);
    line("outflow_veh", m.outflow_veh);
    line("density_clamp_events", static_cast<double>(m.density_clamp_events));
    line("speed_clamp_events", static_cast<double>(m.speed_clamp_events));
    std::fclose(f);
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag);
    std::filesystem::create_directories(out);
    const harness::Scenario sc = scenario_io::load_scenario(scenario_path);
    const harness::RunResult res = harness::run(sc);
    write_trajectory(res, sc, join(out, "trajectory.csv"));
    write_metrics(res.metrics, join(out, "metrics.txt"));
    std::printf("wrote %s and %s\n", join(out, "trajectory.csv").c_str(),
                join(out, "metrics.txt").c_str());
    return 0;
}

int cmd_estimate(const std::string& csv_path, const std::string& config_path,
                 const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag);
    std::filesystem::create_directories(out);
    scenario_io::EstimateOptions opt;
    if (!config_path.empty()) opt = scenario_io::load_estimate_options(config_path);
    const csv::DetectorSeries series = csv::read_detector_csv(csv_path, opt.detector);
    if (series.samples.empty())
        throw std::runtime_error(csv_path + ": no usable detector rows");

    // Windows are configured in seconds; the estimator runs on an hour
    // timebase so the density-rate guard keeps its per-hour meaning.
    fdestim::EstimatorConfig cfg = opt.estimator;
    cfg.d1.window /= 3600.0;
    cfg.d1.sample_period /= 3600.0;
    cfg.dw.window /= 3600.0;
    cfg.dw.sample_period /= 3600.0;

    fdestim::FdEstimator est(cfg);
    csv::Writer w(join(out, "estimates.csv"));
    w.header({"t", "a_raw", "a_pub", "K_pub", "rho_c_pub", "v_f_pub",
              "rejected_flag", "reject_reason"});
    for (const auto& s : series.samples) {
        const fdestim::Estimate e = est.push(s.t_s / 3600.0, s.density, s.speed);
        w.cell(s.t_s);
        w.cell(e.a_raw);
        w.cell(e.a);
        w.cell(e.K);
        w.cell(e.rho_c);
        w.cell(e.v_f);
        w.cell(e.valid ? 0.0 : 1.0);
        w.cell(std::string(fdestim::to_string(e.reject)));
        w.end_row();
    }
    const auto& c = est.counters();
    std::printf("%ld samples, %ld valid (warmup %ld, rho_dot %ld, w %ld, a band %ld, K %ld)\n",
                c.samples_in, c.valid_samples, c.warmup, c.rho_dot_small,
                c.w_invalid, c.a_out_of_band, c.k_invalid);
    if (series.filled_values || series.dropped_rows)
        std::printf("input repairs: %ld filled values, %ld dropped rows\n",
                    series.filled_values, series.dropped_rows);
    std::printf("wrote %s\n", join(out, "estimates.csv").c_str());
    return 0;
}

int cmd_differentiate(const std::string& csv_path, const std::string& column,
                      const std::string& time_column, int degree, double window_s,
                      double sample_period_s, int extra, const std::string& out_flag) {
    const std::string out = resolve_out_dir(out_flag);
    std::filesystem::create_directories(out);
    const csv::Table t = csv::read_csv(csv_path);
    const int ct = t.column(time_column);
    const int cy = t.column(column);
    if (ct < 0) throw std::runtime_error(csv_path + ": missing column '" + time_column + "'");
    if (cy < 0) throw std::runtime_error(csv_path + ": missing column '" + column + "'");
    if (t.rows.size() < 2) throw std::runtime_error(csv_path + ": need at least two rows");

    double sp = sample_period_s;
    if (sp <= 0.0) {
        const double t0 = csv::parse_double(t.rows[0][ct], csv_path + ": t");
        const double t1 = csv::parse_double(t.rows[1][ct], csv_path + ": t");
        sp = t1 - t0;
        if (sp <= 0.0) throw std::runtime_error(csv_path + ": cannot infer sample period");
    }

    algediff::DiffConfig cfg;
    cfg.degree = degree;
    cfg.extra_integrations = extra;
    cfg.window = window_s;
    cfg.sample_period = sp;
    algediff::DerivativeStream stream(cfg);

    csv::Writer w(join(out, "derivatives.csv"));
    if (degree >= 2) w.header({"t_emit", "t_eval", "value", "d1", "d2"});
    else w.header({"t_emit", "t_eval", "value", "d1"});
    long emitted = 0;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const std::string where = csv_path + " row " + std::to_string(i + 2);
        const double ts = csv::parse_double(t.rows[i][ct], where + ": t");
        const double y = csv::parse_double(t.rows[i][cy], where + ": " + column);
        const auto d = stream.push(ts, y);
        if (!d) continue;
        w.cell(d->t_emit);
        w.cell(d->t_eval);
        w.cell(d->value);
        w.cell(d->d1);
        if (degree >= 2) w.cell(d->d2);
        w.end_row();
        ++emitted;
    }
    std::printf("%ld derivative rows, wrote %s\n", emitted,
                join(out, "derivatives.csv").c_str());
    return 0;
}

int cmd_synth(const std::string& scenario_path, const std::string& out_csv,
              const std::string& truth_csv, std::optional<double> sigma_density,
              std::optional<double> sigma_speed, std::optional<long> seed) {
    harness::Scenario sc = scenario_io::load_scenario(scenario_path);
    if (sigma_density) sc.noise.sigma_density = *sigma_density;
    if (sigma_speed) sc.noise.sigma_speed_rel = *sigma_speed;
    if (seed) sc.noise.seed = static_cast<std::uint64_t>(*seed);
    const harness::RunResult res = harness::run(sc);
    const int det = sc.detector();

    csv::Writer w(out_csv);
    w.header({"t", "density", "speed", "station"});
    std::optional<csv::Writer> tw;
    if (!truth_csv.empty()) {
        tw.emplace(truth_csv);
        tw->header({"t", "density", "speed"});
    }
    const std::string station = "seg" + std::to_string(det);
    long rows = 0;
    for (const auto& rec : res.traj) {
        if (!rec.control_step) continue;
        const double t_meas = rec.t_s - sc.step_s;  // measurement at step start
        w.cell(t_meas);
        w.cell(rec.rho_meas);
        w.cell(rec.v_meas);
        w.cell(station);
        w.end_row();
        ++rows;
        if (tw) {
            // true state the measurement was taken from (pre-step values are
            // the previous record's post-step state; first row is initial)
            tw->cell(t_meas);
            if (&rec == &res.traj.front()) {
                tw->cell(res.initial.rho[det]);
                tw->cell(res.initial.v[det]);
            } else {
                const auto& prev = *(&rec - 1);
                tw->cell(prev.rho[det]);
                tw->cell(prev.v[det]);
            }
            tw->end_row();
        }
    }
    std::printf("%ld detector rows, wrote %s\n", rows, out_csv.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"freeway ramp-metering workbench"};
    app.require_subcommand(1);

    std::string scenario_path, out_flag, csv_path, config_path;
    std::string column, time_column = "t";
    int degree = 1, extra = 2;
    double window_s = 300.0, sample_period_s = 0.0;
    std::string out_csv, truth_csv;
    std::optional<double> sigma_density, sigma_speed;
    std::optional<long> seed;

    auto* sim = app.add_subcommand("simulate", "run a scenario, write trajectory.csv and metrics.txt");
    sim->add_option("scenario", scenario_path, "scenario JSON file")->required();
    sim->add_option("--out", out_flag, "output directory (or RAMPMETER_OUT)");

    auto* est = app.add_subcommand("estimate", "fundamental-diagram estimation from a detector CSV");
    est->add_option("detector", csv_path, "detector CSV (t + speed + density|occupancy)")->required();
    est->add_option("--config", config_path, "options JSON");
    est->add_option("--out", out_flag, "output directory (or RAMPMETER_OUT)");

    auto* dif = app.add_subcommand("differentiate", "algebraic derivatives of one CSV column");
    dif->add_option("input", csv_path, "input CSV")->required();
    dif->add_option("--column", column, "column to differentiate")->required();
    dif->add_option("--time-column", time_column, "time column (default t)");
    dif->add_option("--degree", degree, "local model degree (1 or 2)")
        ->check(CLI::Range(1, 2));
    dif->add_option("--window", window_s, "window length in the t unit");
    dif->add_option("--sample-period", sample_period_s, "grid spacing (default: inferred)");
    dif->add_option("--extra-integrations", extra, "extra integrations (>= 2)");
    dif->add_option("--out", out_flag, "output directory (or RAMPMETER_OUT)");

    auto* syn = app.add_subcommand("synth", "synthesize a detector CSV from a scenario run");
    syn->add_option("scenario", scenario_path, "scenario JSON file")->required();
    syn->add_option("--out", out_csv, "detector CSV to write")->required();
    syn->add_option("--truth", truth_csv, "noise-free sidecar CSV");
    syn->add_option("--noise", sigma_speed, "relative speed noise sigma override");
    syn->add_option("--sigma-density", sigma_density, "additive density sigma override");
    syn->add_option("--seed", seed, "noise seed override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(scenario_path, out_flag);
        if (est->parsed()) return cmd_estimate(csv_path, config_path, out_flag);
        if (dif->parsed())
            return cmd_differentiate(csv_path, column, time_column, degree,
                                     window_s, sample_period_s, extra, out_flag);
        if (syn->parsed())
            return cmd_synth(scenario_path, out_csv, truth_csv, sigma_density,
                             sigma_speed, seed);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
