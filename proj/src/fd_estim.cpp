#include "rampmeter/fd_estim.hpp"

#include <algorithm>
#include <stdexcept>

namespace rampmeter::fdestim {

double chain_rule_derivative(double v_dot, double rho_dot) {
    return v_dot / rho_dot;
}

double log_derivative(double v_rho, double v) {
    return v_rho / v;
}

double estimate_a(double rho, double w, double w_rho, double a_min, double a_max) {
    return std::clamp(1.0 + rho * w_rho / w, a_min, a_max);
}

double estimate_K(double a, double rho, double w) {
    return -w / (a * std::pow(rho, a - 1.0));
}

double estimate_rho_c(double a, double K) {
    return std::pow(a * K, -1.0 / a);
}

double estimate_vf(double v, double K, double rho, double a) {
    return v * std::exp(K * std::pow(rho, a));
}

const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::none: return "none";
        case RejectReason::warmup: return "warmup";
        case RejectReason::rho_dot_small: return "rho_dot_small";
        case RejectReason::w_invalid: return "w_invalid";
        case RejectReason::a_out_of_band: return "a_out_of_band";
        case RejectReason::k_invalid: return "k_invalid";
    }
    return "unknown";
}

namespace {

double median_of(std::deque<double> d) {
    const size_t n = d.size();
    auto mid = d.begin() + n / 2;
    std::nth_element(d.begin(), mid, d.end());
    if (n % 2 == 1) return *mid;
    const double hi = *mid;
    std::nth_element(d.begin(), d.begin() + n / 2 - 1, d.end());
    return 0.5 * (d[n / 2 - 1] + hi);
}

} // namespace

FdEstimator::FdEstimator(const EstimatorConfig& cfg)
    : cfg_(cfg), rho_stream_(cfg.d1), v_stream_(cfg.d1), w_stream_(cfg.dw) {
    if (cfg_.eps_rho_dot <= 0.0 || cfg_.eps_w <= 0.0)
        throw std::invalid_argument("estimator: guard thresholds must be positive");
    if (!(cfg_.a_min > 0.0 && cfg_.a_min < cfg_.a_max))
        throw std::invalid_argument("estimator: need 0 < a_min < a_max");
    if (cfg_.median_window < 1)
        throw std::invalid_argument("estimator: median window must be >= 1");
}

std::optional<FdEstimator::HistEntry> FdEstimator::interp_hist(double t) const {
    if (hist_.size() < 2) return std::nullopt;
    if (t < hist_.front().t_eval || t > hist_.back().t_eval) return std::nullopt;
    // hist_ is short (a W window plus slack); linear scan from the back
    size_t i = hist_.size() - 1;
    while (i > 0 && hist_[i - 1].t_eval > t) --i;
    if (i == 0) i = 1;
    const HistEntry& lo = hist_[i - 1];
    const HistEntry& hi = hist_[i];
    const double span = hi.t_eval - lo.t_eval;
    const double s = (span > 0.0) ? (t - lo.t_eval) / span : 0.0;
    return HistEntry{t,
                     lo.rho + s * (hi.rho - lo.rho),
                     lo.rho_dot + s * (hi.rho_dot - lo.rho_dot),
                     lo.v + s * (hi.v - lo.v),
                     lo.v_dot + s * (hi.v_dot - lo.v_dot)};
}

Estimate FdEstimator::publish_row(double t, bool valid, double a_raw,
                                  RejectReason why) {
    Estimate e;
    e.t = t;
    e.valid = valid;
    e.a_raw = a_raw;
    e.reject = why;
    e.published = published_;
    e.a = pub_a_;
    e.K = pub_k_;
    e.rho_c = pub_rc_;
    e.v_f = pub_vf_;
    return e;
}

Estimate FdEstimator::push(double t, double rho, double v) {
    counters_.samples_in += 1;
    const auto dr = rho_stream_.push(t, rho);
    const auto dv = v_stream_.push(t, v);

    if (!dr || !dv) {
        counters_.warmup += 1;
        return publish_row(t, false, std::nan(""), RejectReason::warmup);
    }

    // stage 1: V_rho and W at the first-derivative evaluation instant
    if (std::abs(dr->d1) < cfg_.eps_rho_dot) {
        counters_.rho_dot_small += 1;
        return publish_row(t, false, std::nan(""), RejectReason::rho_dot_small);
    }
    if (!(dv->value > 0.0)) {
        counters_.w_invalid += 1;
        return publish_row(t, false, std::nan(""), RejectReason::w_invalid);
    }
    // The raw W sample goes into the series even when noise flips its sign;
    // dropping it would break the uniform grid the second stream needs and
    // reset it on every flip. The sign guard applies to the smoothed value
    // below, which is what the algebra divides by.
    const double v_rho = chain_rule_derivative(dv->d1, dr->d1);
    const double w = log_derivative(v_rho, dv->value);

    hist_.push_back({dr->t_eval, dr->value, dr->d1, dv->value, dv->d1});
    const double keep_span = cfg_.dw.window + 4.0 * cfg_.d1.sample_period;
    while (!hist_.empty() && hist_.front().t_eval < dr->t_eval - keep_span)
        hist_.pop_front();

    // stage 2: differentiate the W series in time
    const auto dw = w_stream_.push(dr->t_eval, w);
    if (!dw) {
        counters_.warmup += 1;
        return publish_row(t, false, std::nan(""), RejectReason::warmup);
    }

    const auto at = interp_hist(dw->t_eval);
    if (!at) {
        counters_.warmup += 1;
        return publish_row(t, false, std::nan(""), RejectReason::warmup);
    }
    if (std::abs(at->rho_dot) < cfg_.eps_rho_dot) {
        counters_.rho_dot_small += 1;
        return publish_row(t, false, std::nan(""), RejectReason::rho_dot_small);
    }
    const double w_at = dw->value;
    if (!(w_at < -cfg_.eps_w) || at->rho <= 0.0) {
        counters_.w_invalid += 1;
        return publish_row(t, false, std::nan(""), RejectReason::w_invalid);
    }

    const double w_rho = chain_rule_derivative(dw->d1, at->rho_dot);
    // the unclamped value decides acceptance; a clamped boundary value
    // would bias the medians instead of flagging the sample
    const double a_raw = 1.0 + at->rho * w_rho / w_at;
    if (!(a_raw >= cfg_.a_min && a_raw <= cfg_.a_max)) {
        counters_.a_out_of_band += 1;
        return publish_row(t, false, a_raw, RejectReason::a_out_of_band);
    }
    const double K = estimate_K(a_raw, at->rho, w_at);
    if (!(K > 0.0) || !std::isfinite(K)) {
        counters_.k_invalid += 1;
        return publish_row(t, false, a_raw, RejectReason::k_invalid);
    }
    const double rho_c = estimate_rho_c(a_raw, K);
    const double v_f = estimate_vf(at->v, K, at->rho, a_raw);
    if (!std::isfinite(rho_c) || !std::isfinite(v_f) || !(v_f > 0.0)) {
        counters_.k_invalid += 1;
        return publish_row(t, false, a_raw, RejectReason::k_invalid);
    }

    counters_.valid_samples += 1;
    const auto push_med = [&](std::deque<double>& d, double x) {
        d.push_back(x);
        while (static_cast<int>(d.size()) > cfg_.median_window) d.pop_front();
    };
    push_med(med_a_, a_raw);
    push_med(med_k_, K);
    push_med(med_rc_, rho_c);
    push_med(med_vf_, v_f);
    pub_a_ = median_of(med_a_);
    pub_k_ = median_of(med_k_);
    pub_rc_ = median_of(med_rc_);
    pub_vf_ = median_of(med_vf_);
    published_ = true;

    return publish_row(t, true, a_raw, RejectReason::none);
}

std::vector<Estimate> run_estimator(const EstimatorConfig& cfg,
                                    const std::vector<double>& t,
                                    const std::vector<double>& rho,
                                    const std::vector<double>& v) {
    if (t.size() != rho.size() || t.size() != v.size())
        throw std::invalid_argument("estimator: series lengths differ");
    FdEstimator est(cfg);
    std::vector<Estimate> out;
    out.reserve(t.size());
    for (size_t i = 0; i < t.size(); ++i) out.push_back(est.push(t[i], rho[i], v[i]));
    return out;
}

} // namespace rampmeter::fdestim
