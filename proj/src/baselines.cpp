#include "lobregime/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace lobregime {

namespace {

struct Suppressor {
    Timestep L;
    std::optional<Timestep> last;

    bool admit(Timestep t) {
        if (last && L > 0 && t - *last <= L) return false;
        last = t;
        return true;
    }
};

template <typename Pred>
std::vector<Timestep> threshold_alarms(std::size_t n, Pred above, Timestep suppression) {
    std::vector<Timestep> out;
    Suppressor sup{suppression, std::nullopt};
    for (std::size_t t = 0; t < n; ++t) {
        const auto tt = static_cast<Timestep>(t);
        if (above(t) && sup.admit(tt)) out.push_back(tt);
    }
    return out;
}

}  // namespace

bool CusumState::update(double y) {
    c = std::max(0.0, c + y - mu0 - k_ref);
    if (c > h) {
        c = 0.0;
        return true;
    }
    return false;
}

std::vector<Timestep> cusum_detect(std::span<const double> series, double mu0, double k_ref, double h,
                                   Timestep suppression) {
    if (!(h > 0.0)) throw ParameterError("CUSUM threshold h must be positive");
    CusumState st{0.0, mu0, k_ref, h};
    std::vector<Timestep> out;
    Suppressor sup{suppression, std::nullopt};
    for (std::size_t t = 0; t < series.size(); ++t) {
        if (st.update(series[t]) && sup.admit(static_cast<Timestep>(t))) out.push_back(static_cast<Timestep>(t));
    }
    return out;
}

double NormalGammaPrior::log_predictive(double x) const {
    // Student-t with 2*alpha dof, location mu, scale^2 = beta (kappa + 1) / (alpha kappa).
    const double nu = 2.0 * alpha;
    const double scale2 = beta * (kappa + 1.0) / (alpha * kappa);
    const double z2 = (x - mu) * (x - mu) / scale2;
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
           0.5 * std::log(nu * std::numbers::pi * scale2) - 0.5 * (nu + 1.0) * std::log1p(z2 / nu);
}

NormalGammaPrior NormalGammaPrior::updated(double x) const {
    NormalGammaPrior p;
    p.kappa = kappa + 1.0;
    p.mu = (kappa * mu + x) / p.kappa;
    p.alpha = alpha + 0.5;
    p.beta = beta + kappa * (x - mu) * (x - mu) / (2.0 * p.kappa);
    return p;
}

NormalGammaPrior NormalGammaPrior::from_moments(double mean, double variance) {
    const double var = std::max(variance, 1e-12);
    // Prior mean of the variance beta / (alpha - 1) equals the sample variance.
    return {mean, 1.0, 2.0, var};
}

BocpdState::BocpdState(double hazard, NormalGammaPrior prior, std::size_t max_run)
    : hazard_(hazard), prior_(prior), max_run_(max_run) {
    if (!(hazard > 0.0 && hazard <= 1.0)) throw ParameterError("BOCPD hazard must lie in (0,1]");
    if (max_run_ < 1) throw ParameterError("BOCPD max_run must be >= 1");
}

double BocpdState::update(double x) {
    if (posterior_.empty()) {
        posterior_ = {1.0};
        stats_ = {prior_.updated(x)};
        return 1.0;
    }
    const std::size_t n = posterior_.size();
    // Joint (unnormalized) masses in log space for r_t = 0 and growth r_{t-1}+1.
    const double log_h = std::log(hazard_);
    const double log_1mh = hazard_ < 1.0 ? std::log1p(-hazard_) : -std::numeric_limits<double>::infinity();
    const double log_prior_pred = prior_.log_predictive(x);

    scratch_.assign(n + 1, 0.0);
    std::vector<double> logs(n + 1);
    logs[0] = log_h + log_prior_pred;  // sum over r_{t-1} of posterior is 1
    for (std::size_t r = 0; r < n; ++r) {
        logs[r + 1] = std::log(posterior_[r]) + log_1mh + stats_[r].log_predictive(x);
    }
    const double m = *std::max_element(logs.begin(), logs.end());
    double z = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        scratch_[i] = std::exp(logs[i] - m);
        z += scratch_[i];
    }
    for (auto& p : scratch_) p /= z;

    std::vector<NormalGammaPrior> next_stats(n + 1);
    next_stats[0] = prior_.updated(x);
    for (std::size_t r = 0; r < n; ++r) next_stats[r + 1] = stats_[r].updated(x);

    if (scratch_.size() > max_run_ + 1) {
        // Fold the overflow bucket into the longest retained run length.
        scratch_[max_run_] += scratch_.back();
        scratch_.pop_back();
        next_stats.pop_back();
    }
    posterior_ = scratch_;
    stats_ = std::move(next_stats);
    return posterior_[0];
}

std::vector<Timestep> bocpd_detect(std::span<const double> series, double hazard, double alarm_threshold,
                                   const NormalGammaPrior& prior, Timestep suppression,
                                   std::vector<double>* cp_prob) {
    if (!(hazard > 0.0 && hazard < 1.0)) throw ParameterError("BOCPD hazard must lie in (0,1)");
    if (!(alarm_threshold > 0.0 && alarm_threshold < 1.0)) {
        throw ParameterError("BOCPD alarm threshold must lie in (0,1)");
    }
    BocpdState st(hazard, prior);
    std::vector<Timestep> out;
    Suppressor sup{suppression, std::nullopt};
    if (cp_prob) cp_prob->clear();
    for (std::size_t t = 0; t < series.size(); ++t) {
        const double p0 = st.update(series[t]);
        if (cp_prob) cp_prob->push_back(p0);
        // The first observation opens a segment by construction.
        if (t > 0 && p0 > alarm_threshold && sup.admit(static_cast<Timestep>(t))) {
            out.push_back(static_cast<Timestep>(t));
        }
    }
    return out;
}

std::vector<Timestep> hmm_posterior_detect(std::span<const PosteriorState> posteriors, double theta_hmm,
                                           Timestep suppression) {
    if (!(theta_hmm > 0.0 && theta_hmm < 1.0)) throw ParameterError("theta_hmm must lie in (0,1)");
    return threshold_alarms(
        posteriors.size(), [&](std::size_t t) { return posteriors[t].pi(1) + posteriors[t].pi(2) > theta_hmm; },
        suppression);
}

std::vector<Timestep> imbalance_detect(std::span<const double> imbalance, double theta_imb,
                                       Timestep suppression) {
    if (!(theta_imb > 0.0)) throw ParameterError("imbalance threshold must be positive");
    return threshold_alarms(
        imbalance.size(), [&](std::size_t t) { return std::abs(imbalance[t]) > theta_imb; }, suppression);
}

std::vector<Timestep> volatility_detect(std::span<const double> vol, double theta_vol, Timestep suppression) {
    if (!(theta_vol > 0.0)) throw ParameterError("volatility threshold must be positive");
    return threshold_alarms(vol.size(), [&](std::size_t t) { return vol[t] > theta_vol; }, suppression);
}

std::vector<double> trailing_mean(std::span<const double> x, std::size_t window) {
    std::vector<double> out(x.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        sum += x[t];
        if (t >= window) sum -= x[t - window];
        out[t] = sum / static_cast<double>(std::min(t + 1, window));
    }
    return out;
}

}  // namespace lobregime
