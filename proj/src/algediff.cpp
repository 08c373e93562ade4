#include "rampmeter/algediff.hpp"

#include <cmath>
#include <stdexcept>

namespace rampmeter::algediff {

namespace {

double factorial(int k) {
    double f = 1.0;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

// Kernel stack for the annihilator equations in normalized window time
// u = tau/delta in [0, 1]. Row j is the kernel of the equation obtained by
// differentiating the s-domain model j times and multiplying by s^-m.
//
// degree 1, m = n+1:
//   row0: (1-u)^(m-3)/(m-3)!
//   row1: -u (1-u)^(m-3)/(m-3)! + 2 (1-u)^(m-2)/(m-2)!
// degree 2, m = n+2:
//   row0: (1-u)^(m-4)/(m-4)!
//   row1: -u (1-u)^(m-4)/(m-4)! + 3 (1-u)^(m-3)/(m-3)!
//   row2: u^2 (1-u)^(m-4)/(m-4)! - 6 u (1-u)^(m-3)/(m-3)!
//         + 6 (1-u)^(m-2)/(m-2)!
double kernel(int degree, int m, int row, double u) {
    const double b = 1.0 - u;
    if (degree == 1) {
        const double k0 = std::pow(b, m - 3) / factorial(m - 3);
        if (row == 0) return k0;
        return -u * k0 + 2.0 * std::pow(b, m - 2) / factorial(m - 2);
    }
    const double k0 = std::pow(b, m - 4) / factorial(m - 4);
    if (row == 0) return k0;
    const double k1 = std::pow(b, m - 3) / factorial(m - 3);
    if (row == 1) return -u * k0 + 3.0 * k1;
    return u * u * k0 - 6.0 * u * k1 + 6.0 * std::pow(b, m - 2) / factorial(m - 2);
}

// Trapezoid weights on the normalized grid; the same functional is applied
// to the Gram entries and to the data term, so degree <= N polynomials are
// reproduced exactly whatever the node count.
struct System {
    // A[row][col] = Q[K_row * u^col], b[row] = Q[K_row * y]
    double A[3][3] = {};
    double b[3] = {};
};

System build_system(const std::deque<double>& y, int degree, int m) {
    const int nsamp = static_cast<int>(y.size());
    const int nc = degree + 1;
    const double hu = 1.0 / (nsamp - 1);
    System sys;
    for (int i = 0; i < nsamp; ++i) {
        const double u = static_cast<double>(i) / (nsamp - 1);
        const double w = (i == 0 || i == nsamp - 1) ? hu / 2.0 : hu;
        double upow[3] = {1.0, u, u * u};
        for (int row = 0; row < nc; ++row) {
            const double kw = w * kernel(degree, m, row, u);
            for (int col = 0; col < nc; ++col) sys.A[row][col] += kw * upow[col];
            sys.b[row] += kw * y[i];
        }
    }
    return sys;
}

bool solve2(const System& s, double out[2]) {
    const double det = s.A[0][0] * s.A[1][1] - s.A[0][1] * s.A[1][0];
    if (std::abs(det) < 1e-14) return false;
    out[0] = (s.b[0] * s.A[1][1] - s.A[0][1] * s.b[1]) / det;
    out[1] = (s.A[0][0] * s.b[1] - s.b[0] * s.A[1][0]) / det;
    return true;
}

bool solve3(const System& s, double out[3]) {
    const auto& A = s.A;
    const double c00 = A[1][1] * A[2][2] - A[1][2] * A[2][1];
    const double c01 = A[1][2] * A[2][0] - A[1][0] * A[2][2];
    const double c02 = A[1][0] * A[2][1] - A[1][1] * A[2][0];
    const double det = A[0][0] * c00 + A[0][1] * c01 + A[0][2] * c02;
    if (std::abs(det) < 1e-14) return false;
    const double c10 = A[0][2] * A[2][1] - A[0][1] * A[2][2];
    const double c11 = A[0][0] * A[2][2] - A[0][2] * A[2][0];
    const double c12 = A[0][1] * A[2][0] - A[0][0] * A[2][1];
    const double c20 = A[0][1] * A[1][2] - A[0][2] * A[1][1];
    const double c21 = A[0][2] * A[1][0] - A[0][0] * A[1][2];
    const double c22 = A[0][0] * A[1][1] - A[0][1] * A[1][0];
    out[0] = (c00 * s.b[0] + c10 * s.b[1] + c20 * s.b[2]) / det;
    out[1] = (c01 * s.b[0] + c11 * s.b[1] + c21 * s.b[2]) / det;
    out[2] = (c02 * s.b[0] + c12 * s.b[1] + c22 * s.b[2]) / det;
    return true;
}

} // namespace

DerivativeWindow::DerivativeWindow(double sample_period, int capacity,
                                   double jitter_tol, int max_gap_fill)
    : h_(sample_period), capacity_(capacity), jitter_tol_(jitter_tol),
      max_gap_fill_(max_gap_fill) {
    if (h_ <= 0.0) throw std::invalid_argument("window: sample period must be positive");
    if (capacity_ < 2) throw std::invalid_argument("window: capacity must be >= 2");
}

void DerivativeWindow::clear() {
    y_.clear();
}

void DerivativeWindow::push(double t, double y) {
    if (!std::isfinite(t) || !std::isfinite(y))
        throw std::invalid_argument("window: non-finite sample");
    if (y_.empty()) {
        y_.push_back(y);
        t_last_ = t;
        return;
    }
    if (t <= t_last_)
        throw std::invalid_argument("window: timestamps must be strictly increasing");

    const double span = t - t_last_;
    const long gap = std::lround(span / h_);
    const double jitter = std::abs(span - static_cast<double>(gap) * h_) / h_;
    if (gap < 1 || jitter > jitter_tol_ || gap > max_gap_fill_ + 1) {
        // off-grid timestamp or an unfillable hole: restart from this sample
        resets_ += 1;
        y_.clear();
        y_.push_back(y);
        t_last_ = t;
        return;
    }
    const double y_prev = y_.back();
    for (long k = 1; k < gap; ++k) {
        y_.push_back(y_prev + (y - y_prev) * static_cast<double>(k) / gap);
        filled_ += 1;
    }
    y_.push_back(y);
    t_last_ = t;
    while (static_cast<int>(y_.size()) > capacity_) y_.pop_front();
}

FitResult<Fit1> estimate_coeffs_deg1(const DerivativeWindow& w, int n) {
    FitResult<Fit1> r;
    if (!w.full()) {
        r.err = FitError::window_not_full;
        return r;
    }
    const System sys = build_system(w.values(), 1, n + 1);
    double c[2];
    if (!solve2(sys, c)) {
        r.err = FitError::degenerate_system;
        return r;
    }
    const double delta = w.duration();
    r.coeffs = Fit1{c[0], c[1] / delta};
    return r;
}

FitResult<Fit2> estimate_coeffs_deg2(const DerivativeWindow& w, int n) {
    FitResult<Fit2> r;
    if (!w.full()) {
        r.err = FitError::window_not_full;
        return r;
    }
    const System sys = build_system(w.values(), 2, n + 2);
    double c[3];
    if (!solve3(sys, c)) {
        r.err = FitError::degenerate_system;
        return r;
    }
    const double delta = w.duration();
    r.coeffs = Fit2{c[0], c[1] / delta, c[2] / (delta * delta)};
    return r;
}

DerivativeStream::DerivativeStream(const DiffConfig& cfg)
    : cfg_(cfg),
      win_(cfg.sample_period,
           static_cast<int>(std::lround(cfg.window / cfg.sample_period)) + 1,
           cfg.jitter_tol, cfg.max_gap_fill) {
    if (cfg_.degree != 1 && cfg_.degree != 2)
        throw std::invalid_argument("differentiator: degree must be 1 or 2");
    if (cfg_.extra_integrations < 2)
        throw std::invalid_argument("differentiator: integral order must be >= 2");
    if (cfg_.degree == 2 && win_.capacity() < 3)
        throw std::invalid_argument("differentiator: degree 2 needs >= 3 samples per window");
}

double DerivativeStream::delay() const { return win_.duration() / 2.0; }

std::optional<Derivative> DerivativeStream::push(double t, double y) {
    win_.push(t, y);
    if (!win_.full()) return std::nullopt;

    const double delta = win_.duration();
    const double half = delta / 2.0;
    Derivative d;
    d.t_emit = win_.end_time();
    d.t_eval = d.t_emit - half;
    if (cfg_.degree == 1) {
        const auto fit = estimate_coeffs_deg1(win_, cfg_.extra_integrations);
        if (!fit) {
            degenerate_ += 1;
            return std::nullopt;
        }
        d.value = fit.coeffs.a0 + fit.coeffs.a1 * half;
        d.d1 = fit.coeffs.a1;
        d.d2 = 0.0;
    } else {
        const auto fit = estimate_coeffs_deg2(win_, cfg_.extra_integrations);
        if (!fit) {
            degenerate_ += 1;
            return std::nullopt;
        }
        d.value = fit.coeffs.a0 + fit.coeffs.a1 * half + fit.coeffs.a2 * half * half;
        d.d1 = fit.coeffs.a1 + 2.0 * fit.coeffs.a2 * half;
        d.d2 = 2.0 * fit.coeffs.a2;
    }
    return d;
}

} // namespace rampmeter::algediff
