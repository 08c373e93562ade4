#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

namespace rampmeter::algediff {

/** Sliding-window algebraic differentiation.
 *
 * A truncated Taylor model of the signal over the window is moved to the
 * operational (s) domain, differentiated with respect to s to isolate each
 * coefficient, and multiplied by s^-(n+N) so every data term turns into an
 * iterated time integral, i.e. a low-pass weighted average of the raw
 * samples. The resulting linear system is discretized with the trapezoidal
 * rule applied to BOTH sides (Gram entries and data terms), which makes
 * recovery of polynomials of degree <= N exact irrespective of quadrature
 * accuracy.
 *
 * Coefficients are the Taylor expansion at the window start. Outputs are
 * emitted causally at the window end; the value/derivative estimates are
 * anchored at the window center, the estimator's effective evaluation time
 * (a causal window cannot avoid this delay, and for curved signals the
 * center is where the degree-1 slope is second-order accurate).
 *
 * The module is unit-agnostic: timestamps, window and sample period just
 * have to share one time unit.
 */

struct DiffConfig {
    int degree = 1;              // 1 or 2
    int extra_integrations = 2;  // n >= 2
    double window = 300.0;       // window span, same unit as timestamps
    double sample_period = 20.0;
    double jitter_tol = 0.01;    // relative to sample_period
    int max_gap_fill = 3;        // consecutive missing samples filled by interpolation
};

enum class FitError : uint8_t { none, window_not_full, degenerate_system };

struct Fit1 {
    double a0 = 0.0, a1 = 0.0;
};
struct Fit2 {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
};

template <class T>
struct FitResult {
    T coeffs{};
    FitError err = FitError::none;
    explicit operator bool() const { return err == FitError::none; }
};

/** Uniform ring buffer of samples. push() enforces strictly increasing
 *  timestamps, fills short gaps by linear interpolation and resets on long
 *  gaps or jitter beyond tolerance. */
class DerivativeWindow {
public:
    DerivativeWindow(double sample_period, int capacity,
                     double jitter_tol = 0.01, int max_gap_fill = 3);

    void push(double t, double y);
    void clear();

    bool full() const { return static_cast<int>(y_.size()) == capacity_; }
    int size() const { return static_cast<int>(y_.size()); }
    int capacity() const { return capacity_; }
    double sample_period() const { return h_; }
    double duration() const { return h_ * (capacity_ - 1); }
    double end_time() const { return t_last_; }
    double start_time() const { return t_last_ - h_ * (y_.size() - 1); }
    const std::deque<double>& values() const { return y_; }

    long filled_samples() const { return filled_; }
    long resets() const { return resets_; }

private:
    double h_;
    int capacity_;
    double jitter_tol_;
    int max_gap_fill_;
    std::deque<double> y_;
    double t_last_ = 0.0;
    long filled_ = 0;
    long resets_ = 0;
};

// Taylor coefficients at window start for an affine window model.
// Requires a full window; reports degenerate_system when the Gram
// determinant is numerically zero.
FitResult<Fit1> estimate_coeffs_deg1(const DerivativeWindow& w, int extra_integrations = 2);

// Quadratic window model; needs at least 3 samples to be non-degenerate.
FitResult<Fit2> estimate_coeffs_deg2(const DerivativeWindow& w, int extra_integrations = 2);

struct Derivative {
    double t_emit = 0.0;  // window end: when the estimate became available
    double t_eval = 0.0;  // window center: where the estimate is anchored
    double value = 0.0;   // fitted signal value at t_eval
    double d1 = 0.0;      // first derivative at t_eval
    double d2 = 0.0;      // second derivative at t_eval (degree 2 only)
};

class DerivativeStream {
public:
    explicit DerivativeStream(const DiffConfig& cfg);

    // Feed one sample; returns an estimate once per push while the window
    // is full. Never throws on gaps/jitter (the window resets itself).
    std::optional<Derivative> push(double t, double y);

    double delay() const;  // t_emit - t_eval
    const DerivativeWindow& window() const { return win_; }
    long degenerate_windows() const { return degenerate_; }

private:
    DiffConfig cfg_;
    DerivativeWindow win_;
    long degenerate_ = 0;
};

} // namespace rampmeter::algediff
