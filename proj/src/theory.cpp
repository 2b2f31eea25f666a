#include "lobregime/theory.hpp"

#include "lobregime/rng.hpp"
#include "lobregime/types.hpp"

#include <algorithm>
#include <cmath>

namespace lobregime::theory {

void BoundInputs::validate() const {
    if (!(eta >= 0.0)) throw ParameterError("eta must be >= 0");
    if (!(t1 >= 1.0)) throw ParameterError("t1 must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw ParameterError("delta must lie in (0,1)");
    if (!(ell >= 0.0)) throw ParameterError("ell must be >= 0");
}

double critical_eta(double t1, double delta) { return std::sqrt(2.0 * std::log(1.0 / delta) / t1); }

bool snr_sufficient(const BoundInputs& in) {
    in.validate();
    return in.eta > critical_eta(in.t1, in.delta);
}

double early_detection_bound_raw(const BoundInputs& in) {
    in.validate();
    const double log_inv_delta = std::log(1.0 / in.delta);
    const double exponent = -in.eta * in.eta * in.t1 / 2.0 + std::sqrt(2.0 * in.t1 * log_inv_delta);
    return 1.0 - std::exp(exponent) - in.delta;
}

double early_detection_bound(const BoundInputs& in) {
    return std::clamp(early_detection_bound_raw(in), 0.0, 1.0);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double coverage_upper_bound(const BoundInputs& in) {
    in.validate();
    return 1.0 - normal_cdf(in.ell * in.eta / std::sqrt(in.t1));
}

McEstimate mc_stopping_probability(const BoundInputs& in, std::uint64_t n_samples, std::uint64_t seed) {
    in.validate();
    if (n_samples < kMinMcSamples) throw ParameterError("Monte-Carlo needs at least 10000 samples");
    const auto horizon = static_cast<std::uint64_t>(std::llround(in.t1));
    const double h = std::log(1.0 / in.delta);
    const double drift = in.eta;  // unit noise, so alpha = eta

    McEstimate est;
    est.n = n_samples;
    std::uint64_t hits = 0;
    for (std::uint64_t trial = 0; trial < n_samples; ++trial) {
        Rng rng(derive_seed(seed, trial));
        double c = 0.0;
        double g = 0.0;
        bool crossed = false;
        for (std::uint64_t s = 1; s <= horizon; ++s) {
            const double y = drift * static_cast<double>(s) + rng.normal();
            const double u = y - drift / 2.0;
            g += u;
            c = std::max(0.0, c + u);
            if (c > h) crossed = true;
        }
        if (crossed) ++hits;
        if (g > h) {
            ++est.partial_sum_exceedances;
            if (!crossed) ++est.coupling_violations;
        }
    }
    const double n = static_cast<double>(n_samples);
    est.p = n > 0 ? static_cast<double>(hits) / n : 0.0;
    est.se = n > 0 ? std::sqrt(est.p * (1.0 - est.p) / n) : 0.0;
    return est;
}

}  // namespace lobregime::theory
