#pragma once

#include <cmath>
#include <deque>
#include <optional>

#include "rampmeter/algediff.hpp"

namespace rampmeter::mfc {

// Model-free admission control around the ultra-local model
//
//   y_dot = F + alpha * u
//
// where y is the merge-segment density, u the metering rate and F lumps
// everything else. alpha carries the input sensitivity, sign included.
// Units: densities veh/km/lane, time h, so kp is 1/h and ki 1/h^2.

struct UltraLocalModel {
    double alpha = 1800.0;
};

struct IpiGains {
    double kp = 20.0;
    double ki = 100.0;
};

// u = -(f_est - rho_star_dot + kp*e + ki*integral_e) / alpha
double ipi_control(double f_est, double rho_star_dot, double e,
                   double integral_e, const IpiGains& g, double alpha);

// ki = 0 special case
double ip_control(double f_est, double rho_star_dot, double e,
                  const IpiGains& g, double alpha);

double clamp_control(double u, double r_min, double r_max);

// [F]_e = [y_dot]_e - alpha * u_prev  (u_prev: control applied over the
// interval the derivative estimate refers to)
double estimate_f_from_derivative(double rho_dot_est, double alpha, double r_prev);

/** Ring of controller tuples over the averaging span used by the integral
 *  form of the F estimate. */
class FWindow {
public:
    explicit FWindow(int capacity);  // samples, >= 2

    void push(double u, double rho_star_dot, double e, double integral_e);
    bool full() const { return static_cast<int>(u_.size()) == cap_; }
    int capacity() const { return cap_; }

    friend double estimate_f_integral(const FWindow& w, double alpha,
                                      const IpiGains& g, double dt_h);

private:
    int cap_;
    std::deque<double> u_, rsd_, e_, ie_;
};

// Trapezoidal mean of (-alpha*u + rho_star_dot - kp*e - ki*integral_e)
// over the window span; equals F when the loop identity holds.
double estimate_f_integral(const FWindow& w, double alpha, const IpiGains& g,
                           double dt_h);

struct ReferenceConfig {
    double rho_d0 = 28.0;
    double rho_inc = 2.0;
    double rho_dec = 6.0;
    double v_threshold = 70.0;    // [km/h]
    double v_filter_tau_s = 60.0; // speed EMA time constant [s]
};

/** Two-branch density reference off the filtered speed: above the speed
 *  threshold the target is rho_d0 + rho_inc, below it rho_d0 - rho_dec,
 *  exactly at the threshold the previous branch is held. */
class ReferenceGenerator {
public:
    ReferenceGenerator(const ReferenceConfig& cfg, double t_c_s);

    double update(double v_measured);  // returns rho_star
    double v_filtered() const { return v_f_; }
    bool branch_above() const { return above_; }

private:
    ReferenceConfig cfg_;
    double beta_;
    double v_f_ = 0.0;
    bool primed_ = false;
    bool above_ = true;
};

struct DerivEstimatorConfig {
    bool use_algediff = false;
    double ema_tau_s = 40.0;   // low-pass time constant
    int baseline_steps = 2;    // backward-difference span in control periods
    algediff::DiffConfig diff; // when use_algediff (window/sample_period in hours)
};

/** Streaming estimate of d(rho)/dt from measurements at the control period.
 *  Default: backward difference of an EMA-filtered signal; optionally the
 *  algebraic differentiator for higher noise rejection (longer delay). */
class OutputDerivativeEstimator {
public:
    OutputDerivativeEstimator(const DerivEstimatorConfig& cfg, double t_c_h);

    // t in hours; returns d/dt in per-hour units, nullopt during warm-up
    std::optional<double> push(double t, double y);

private:
    DerivEstimatorConfig cfg_;
    double t_c_h_;
    double beta_;
    std::deque<double> filt_;
    bool primed_ = false;
    double f_ = 0.0;
    std::optional<algediff::DerivativeStream> stream_;
};

enum class ControlLaw { ipi, ip };
enum class FSource { derivative, integral };

struct ControllerConfig {
    ControlLaw law = ControlLaw::ipi;
    IpiGains gains{};
    double alpha = 1800.0;
    double r_min = 0.0;
    double r_max = 1.0;
    ReferenceConfig reference{};
    bool fixed_reference = false;
    double rho_star_fixed = 0.0;
    DerivEstimatorConfig deriv{};
    FSource f_source = FSource::derivative;
    int f_window_steps = 3;  // integral-form averaging span in control periods
};

struct ControlRecord {
    double t_h = 0.0;
    double rho_s = 0.0;     // measured density
    double rho_star = 0.0;
    double e = 0.0;
    double f_est = 0.0;     // the estimate driving the law
    double f_integral = std::nan(""); // cross-check estimate when available
    double r_raw = 0.0;     // unclamped law output
    double r_clamped = 0.0;
    double integral_e = 0.0;
    bool warmup = false;
};

/** One control-period update: reference, derivative and F estimates, the
 *  chosen law, clamping with conditional integration (the error integral is
 *  frozen while the output saturates). Holds r_max until the derivative
 *  estimator warms up. */
class RampMeteringController {
public:
    RampMeteringController(const ControllerConfig& cfg, double t_c_s);

    ControlRecord update(double t_h, double rho_measured, double v_measured);

    double r() const { return r_prev_; }
    const ReferenceGenerator& reference() const { return refgen_; }

private:
    ControllerConfig cfg_;
    double t_c_h_;
    ReferenceGenerator refgen_;
    OutputDerivativeEstimator deriv_;
    FWindow fwin_;
    double integral_e_ = 0.0;
    double r_prev_;
};

} // namespace rampmeter::mfc
