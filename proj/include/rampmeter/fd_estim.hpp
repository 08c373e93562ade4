#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "rampmeter/algediff.hpp"

namespace rampmeter::fdestim {

// Online identification of the exponential speed-density relation from
// noisy (rho, V) detector streams, using only time derivatives:
//
//   V_rho = V_dot / rho_dot                (chain rule)
//   W     = V_rho / V                      (log-derivative, < 0 for rho > 0)
//   a     = 1 + rho * W_rho / W            with W_rho = W_dot / rho_dot
//   K     = -W / (a * rho^(a-1)),          K = 1/(a * rho_crit^a)
//   rho_c = (a*K)^(-1/a)
//   v_f   = V * exp(K * rho^a)
//
// All derivatives come from the algebraic differentiator; W is formed as a
// time series and differentiated again. Estimates from the three windows
// are aligned at a common effective evaluation instant before the algebra
// is applied.

double chain_rule_derivative(double v_dot, double rho_dot);
double log_derivative(double v_rho, double v);
// 1 + rho*W_rho/W, clamped to the plausibility band
double estimate_a(double rho, double w, double w_rho, double a_min = 0.5,
                  double a_max = 8.0);
double estimate_K(double a, double rho, double w);
double estimate_rho_c(double a, double K);
double estimate_vf(double v, double K, double rho, double a);

struct EstimatorConfig {
    // first-derivative windows on rho and V
    algediff::DiffConfig d1{.degree = 1, .extra_integrations = 2,
                            .window = 300.0, .sample_period = 20.0};
    // window on the derived W series (second-derivative role: longer span)
    algediff::DiffConfig dw{.degree = 1, .extra_integrations = 2,
                            .window = 600.0, .sample_period = 20.0};
    double eps_rho_dot = 0.5;  // |rho_dot| guard [veh/km/lane per h]
    double eps_w = 1e-4;       // |W| guard [km*lane/veh]
    double a_min = 0.5;
    double a_max = 8.0;
    int median_window = 50;    // published value = running median over valid samples
};

enum class RejectReason : uint8_t {
    none,
    warmup,
    rho_dot_small,
    w_invalid,
    a_out_of_band,
    k_invalid,
};

const char* to_string(RejectReason r);

struct Estimate {
    double t = 0.0;        // detector timestamp of the triggering sample
    bool valid = false;    // a raw sample was produced at this period
    double a_raw = std::nan("");
    bool published = false;
    double a = std::nan("");
    double K = std::nan("");
    double rho_c = std::nan("");
    double v_f = std::nan("");
    RejectReason reject = RejectReason::none;
};

struct RejectCounters {
    long samples_in = 0;
    long valid_samples = 0;
    long warmup = 0;
    long rho_dot_small = 0;
    long w_invalid = 0;
    long a_out_of_band = 0;
    long k_invalid = 0;
};

class FdEstimator {
public:
    explicit FdEstimator(const EstimatorConfig& cfg);

    // Feed one detector sample (t in the unit the windows are configured
    // for; rho veh/km/lane, v km/h). Returns the per-period estimate row.
    Estimate push(double t, double rho, double v);

    const RejectCounters& counters() const { return counters_; }

private:
    struct HistEntry {
        double t_eval, rho, rho_dot, v, v_dot;
    };

    std::optional<HistEntry> interp_hist(double t) const;
    Estimate publish_row(double t, bool valid, double a_raw, RejectReason why);

    EstimatorConfig cfg_;
    algediff::DerivativeStream rho_stream_;
    algediff::DerivativeStream v_stream_;
    algediff::DerivativeStream w_stream_;
    std::deque<HistEntry> hist_;
    std::deque<double> med_a_, med_k_, med_rc_, med_vf_;
    bool published_ = false;
    double pub_a_ = std::nan(""), pub_k_ = std::nan("");
    double pub_rc_ = std::nan(""), pub_vf_ = std::nan("");
    RejectCounters counters_{};
};

// Convenience batch run over parallel series.
std::vector<Estimate> run_estimator(const EstimatorConfig& cfg,
                                    const std::vector<double>& t,
                                    const std::vector<double>& rho,
                                    const std::vector<double>& v);

} // namespace rampmeter::fdestim
