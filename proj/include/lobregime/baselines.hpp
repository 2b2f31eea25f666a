#pragma once

#include "lobregime/hmm.hpp"
#include "lobregime/types.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace lobregime {

// ===========================================================================
// CUSUM
// ===========================================================================

struct CusumState {
    double c = 0.0;
    double mu0 = 0.0;
    double k_ref = 0.0;
    double h = 1.0;

    // Advances the statistic; returns true (and resets to 0) on an alarm.
    bool update(double y);
};

// Multi-alarm CUSUM: alarm whenever C_t > h, then reset and continue.
// Alarms closer than `suppression` steps to the previous alarm are dropped
// (0 disables suppression).
std::vector<Timestep> cusum_detect(std::span<const double> series, double mu0, double k_ref, double h,
                                   Timestep suppression = 0);

// ===========================================================================
// BOCPD
// ===========================================================================

// Normal-gamma prior over (mean, precision); predictive is Student-t.
struct NormalGammaPrior {
    double mu = 0.0;
    double kappa = 1.0;
    double alpha = 1.0;
    double beta = 1.0;

    // Prior predictive density at x.
    double log_predictive(double x) const;
    NormalGammaPrior updated(double x) const;

    // Weakly informative prior centred on sample moments.
    static NormalGammaPrior from_moments(double mean, double variance);
};

// Run-length recursion where r_t = 0 means x_t opens a new segment, so its
// predictive is the prior predictive. Run lengths above max_run are folded
// into the last bucket.
class BocpdState {
public:
    BocpdState(double hazard, NormalGammaPrior prior, std::size_t max_run = 2000);

    // Returns P(r_t = 0 | x_1..x_t).
    double update(double x);

    const std::vector<double>& run_length_posterior() const { return posterior_; }
    double hazard() const { return hazard_; }

private:
    double hazard_;
    NormalGammaPrior prior_;
    std::size_t max_run_;
    std::vector<double> posterior_;
    std::vector<NormalGammaPrior> stats_;
    std::vector<double> scratch_;
};

std::vector<Timestep> bocpd_detect(std::span<const double> series, double hazard, double alarm_threshold,
                                   const NormalGammaPrior& prior, Timestep suppression = 0,
                                   std::vector<double>* cp_prob = nullptr);

// ===========================================================================
// Threshold detectors
// ===========================================================================

// Posteriors must be in regime order (0 = stable). Alarms when the
// non-stable mass exceeds theta_hmm.
std::vector<Timestep> hmm_posterior_detect(std::span<const PosteriorState> posteriors, double theta_hmm,
                                           Timestep suppression = 0);

// Alarms when |I_t| > theta_imb.
std::vector<Timestep> imbalance_detect(std::span<const double> imbalance, double theta_imb,
                                       Timestep suppression = 0);

// Alarms when vol_t > theta_vol.
std::vector<Timestep> volatility_detect(std::span<const double> vol, double theta_vol,
                                        Timestep suppression = 0);

// Causal trailing mean over `window` steps (shorter at the start).
std::vector<double> trailing_mean(std::span<const double> x, std::size_t window);

}  // namespace lobregime
