#include "rampmeter/mfc.hpp"

#include <algorithm>
#include <stdexcept>

namespace rampmeter::mfc {

double ipi_control(double f_est, double rho_star_dot, double e,
                   double integral_e, const IpiGains& g, double alpha) {
    if (alpha == 0.0) throw std::invalid_argument("control: alpha must be non-zero");
    return -(f_est - rho_star_dot + g.kp * e + g.ki * integral_e) / alpha;
}

double ip_control(double f_est, double rho_star_dot, double e,
                  const IpiGains& g, double alpha) {
    IpiGains p{g.kp, 0.0};
    return ipi_control(f_est, rho_star_dot, e, 0.0, p, alpha);
}

double clamp_control(double u, double r_min, double r_max) {
    if (!(r_min < r_max))
        throw std::invalid_argument("control: need r_min < r_max");
    return std::clamp(u, r_min, r_max);
}

double estimate_f_from_derivative(double rho_dot_est, double alpha, double r_prev) {
    return rho_dot_est - alpha * r_prev;
}

FWindow::FWindow(int capacity) : cap_(capacity) {
    if (cap_ < 2) throw std::invalid_argument("f window: capacity must be >= 2");
}

void FWindow::push(double u, double rho_star_dot, double e, double integral_e) {
    u_.push_back(u);
    rsd_.push_back(rho_star_dot);
    e_.push_back(e);
    ie_.push_back(integral_e);
    while (static_cast<int>(u_.size()) > cap_) {
        u_.pop_front();
        rsd_.pop_front();
        e_.pop_front();
        ie_.pop_front();
    }
}

double estimate_f_integral(const FWindow& w, double alpha, const IpiGains& g,
                           double dt_h) {
    if (!w.full()) throw std::invalid_argument("f window: not full");
    const int n = static_cast<int>(w.u_.size());
    const double delta = dt_h * (n - 1);
    double acc = 0.0;
    double prev = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g_i = -alpha * w.u_[i] + w.rsd_[i] - g.kp * w.e_[i] - g.ki * w.ie_[i];
        if (i > 0) acc += 0.5 * (prev + g_i) * dt_h;
        prev = g_i;
    }
    return acc / delta;
}

ReferenceGenerator::ReferenceGenerator(const ReferenceConfig& cfg, double t_c_s)
    : cfg_(cfg) {
    if (t_c_s <= 0.0) throw std::invalid_argument("reference: control period must be positive");
    if (cfg_.rho_d0 <= 0.0 || cfg_.rho_inc < 0.0 || cfg_.rho_dec < 0.0)
        throw std::invalid_argument("reference: invalid density levels");
    if (cfg_.rho_dec >= cfg_.rho_d0)
        throw std::invalid_argument("reference: rho_dec must leave a positive target");
    beta_ = (cfg_.v_filter_tau_s > 0.0)
                ? 1.0 - std::exp(-t_c_s / cfg_.v_filter_tau_s)
                : 1.0;
}

double ReferenceGenerator::update(double v_measured) {
    if (!primed_) {
        v_f_ = v_measured;
        primed_ = true;
    } else {
        v_f_ += beta_ * (v_measured - v_f_);
    }
    if (v_f_ > cfg_.v_threshold) above_ = true;
    else if (v_f_ < cfg_.v_threshold) above_ = false;
    // exactly at the threshold: keep the previous branch
    return above_ ? cfg_.rho_d0 + cfg_.rho_inc : cfg_.rho_d0 - cfg_.rho_dec;
}

OutputDerivativeEstimator::OutputDerivativeEstimator(const DerivEstimatorConfig& cfg,
                                                     double t_c_h)
    : cfg_(cfg), t_c_h_(t_c_h) {
    if (t_c_h_ <= 0.0) throw std::invalid_argument("derivative: control period must be positive");
    if (cfg_.use_algediff) {
        stream_.emplace(cfg_.diff);
    } else {
        if (cfg_.baseline_steps < 1)
            throw std::invalid_argument("derivative: baseline must be >= 1 step");
        const double tau_h = cfg_.ema_tau_s / 3600.0;
        beta_ = (tau_h > 0.0) ? 1.0 - std::exp(-t_c_h_ / tau_h) : 1.0;
    }
}

std::optional<double> OutputDerivativeEstimator::push(double t, double y) {
    if (cfg_.use_algediff) {
        const auto d = stream_->push(t, y);
        if (!d) return std::nullopt;
        return d->d1;
    }
    if (!primed_) {
        f_ = y;
        primed_ = true;
    } else {
        f_ += beta_ * (y - f_);
    }
    filt_.push_back(f_);
    const int need = cfg_.baseline_steps + 1;
    while (static_cast<int>(filt_.size()) > need) filt_.pop_front();
    if (static_cast<int>(filt_.size()) < need) return std::nullopt;
    return (filt_.back() - filt_.front()) / (t_c_h_ * cfg_.baseline_steps);
}

RampMeteringController::RampMeteringController(const ControllerConfig& cfg,
                                               double t_c_s)
    : cfg_(cfg), t_c_h_(t_c_s / 3600.0), refgen_(cfg.reference, t_c_s),
      deriv_(cfg.deriv, t_c_s / 3600.0),
      fwin_(std::max(2, cfg.f_window_steps + 1)), r_prev_(cfg.r_max) {
    if (cfg_.alpha == 0.0) throw std::invalid_argument("controller: alpha must be non-zero");
}

ControlRecord RampMeteringController::update(double t_h, double rho_measured,
                                             double v_measured) {
    ControlRecord rec;
    rec.t_h = t_h;
    rec.rho_s = rho_measured;

    rec.rho_star = cfg_.fixed_reference ? cfg_.rho_star_fixed
                                        : refgen_.update(v_measured);
    const double rho_star_dot = 0.0;  // piecewise-constant reference
    rec.e = rho_measured - rec.rho_star;

    const auto rho_dot = deriv_.push(t_h, rho_measured);
    if (!rho_dot) {
        // estimator warm-up: hold the previous admission, no integration
        rec.warmup = true;
        rec.f_est = 0.0;
        rec.r_raw = r_prev_;
        rec.r_clamped = r_prev_;
        rec.integral_e = integral_e_;
        return rec;
    }

    const double f_der = estimate_f_from_derivative(*rho_dot, cfg_.alpha, r_prev_);
    double f_used = f_der;
    if (fwin_.full()) {
        rec.f_integral = estimate_f_integral(fwin_, cfg_.alpha, cfg_.gains, t_c_h_);
        if (cfg_.f_source == FSource::integral) f_used = rec.f_integral;
    }
    rec.f_est = f_used;

    const double u = (cfg_.law == ControlLaw::ipi)
                         ? ipi_control(f_used, rho_star_dot, rec.e, integral_e_,
                                       cfg_.gains, cfg_.alpha)
                         : ip_control(f_used, rho_star_dot, rec.e, cfg_.gains,
                                      cfg_.alpha);
    const double r = clamp_control(u, cfg_.r_min, cfg_.r_max);
    rec.r_raw = u;
    rec.r_clamped = r;
    rec.integral_e = integral_e_;

    // the integrand of the integral-form F estimate uses the values the
    // applied control was computed from
    fwin_.push(r, rho_star_dot, rec.e, integral_e_);

    // conditional integration: freeze the error integral while saturating
    if (cfg_.law == ControlLaw::ipi && r == u)
        integral_e_ += rec.e * t_c_h_;

    r_prev_ = r;
    return rec;
}

} // namespace rampmeter::mfc
