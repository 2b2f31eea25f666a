#pragma once

#include <cstdint>

namespace lobregime::theory {

struct BoundInputs {
    double eta = 0.0;    // per-step drift-to-noise ratio
    double t1 = 1.0;     // build-up duration (timesteps)
    double delta = 0.1;  // false-alarm level
    double ell = 0.0;    // target mean lead-time (trade-off bound only)

    void validate() const;
};

// Drift-noise sufficiency: eta > sqrt(2 ln(1/delta) / t1).
bool snr_sufficient(const BoundInputs& in);

// The eta threshold in snr_sufficient.
double critical_eta(double t1, double delta);

// Lower bound on P(stopping time <= t1), clamped to [0, 1]:
//   1 - exp(-eta^2 t1 / 2 + sqrt(2 t1 ln(1/delta))) - delta.
double early_detection_bound(const BoundInputs& in);

// Same expression without clamping (negative values are vacuous).
double early_detection_bound_raw(const BoundInputs& in);

// 1 - Phi(ell * eta / sqrt(t1)); the O(1/T) correction is omitted.
double coverage_upper_bound(const BoundInputs& in);

double normal_cdf(double x);

struct McEstimate {
    double p = 0.0;   // fraction of trials with stopping time <= t1
    double se = 0.0;  // binomial standard error
    std::uint64_t n = 0;
    std::uint64_t partial_sum_exceedances = 0;  // trials with G_{t1} > h
    std::uint64_t coupling_violations = 0;      // G_{t1} > h but no crossing by t1
};

inline constexpr std::uint64_t kMinMcSamples = 10000;

// Simulates y_s = eta * s + xi_s (unit noise, c = 0), runs
// C_s = max(0, C_{s-1} + y_s - eta/2) with h = ln(1/delta), and counts
// trials whose first crossing happens at or before round(t1).
McEstimate mc_stopping_probability(const BoundInputs& in, std::uint64_t n_samples, std::uint64_t seed);

}  // namespace lobregime::theory
