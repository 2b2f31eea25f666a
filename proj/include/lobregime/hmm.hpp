#pragma once

#include "lobregime/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace lobregime {

// Three-state Gaussian HMM with full covariances.
//
// Call prepare() after mutating covs; the cached Cholesky factors back
// log_emission(). fit_hmm() and the JSON loader return prepared models.
struct HmmModel {
    static constexpr std::size_t n_states = kNumRegimes;

    Eigen::Matrix3d trans = Eigen::Matrix3d::Identity();
    std::array<Eigen::VectorXd, n_states> means;
    std::array<Eigen::MatrixXd, n_states> covs;
    Eigen::Vector3d init = Eigen::Vector3d::Constant(1.0 / 3.0);
    double log_likelihood = 0.0;

    std::size_t dim() const { return static_cast<std::size_t>(means[0].size()); }

    void prepare();
    void validate() const;

    // log N(x | mean_k, cov_k) for each state.
    Eigen::Vector3d log_emission(const Eigen::Ref<const Eigen::VectorXd>& x) const;

private:
    std::array<Eigen::MatrixXd, n_states> chol_l_;
    std::array<double, n_states> log_norm_{};
    bool prepared_ = false;
};

struct PosteriorState {
    Eigen::Vector3d pi = Eigen::Vector3d::Constant(1.0 / 3.0);
    double entropy = 0.0;
    Timestep t = -1;
    bool degenerate = false;
};

double posterior_entropy(const Eigen::Vector3d& pi);

struct HmmFitOptions {
    std::size_t n_restarts = 10;
    std::size_t max_iters = 100;
    double tol = 1e-6;             // relative log-likelihood improvement
    double variance_floor = 1e-6;  // added to covariance diagonals each M-step
    std::uint64_t seed = 0;
};

struct HmmFitResult {
    HmmModel model;
    std::vector<double> trace;  // per-iteration log-likelihood of the best restart
    std::vector<double> restart_scores;
};

// Observations as a d x T matrix (one column per timestep).
Eigen::MatrixXd frames_to_matrix(std::span<const LobFrame> frames);

HmmFitResult fit_hmm_detailed(const Eigen::MatrixXd& obs, const HmmFitOptions& opts);
HmmModel fit_hmm(std::span<const LobFrame> frames, std::size_t n_restarts,
                 std::size_t max_iters, std::uint64_t seed);

// Total log-likelihood log p(x_1..x_T) under the model.
double log_likelihood(const HmmModel& model, const Eigen::MatrixXd& obs);

// Update-only step for the first observation (prior = model.init).
PosteriorState initial_posterior(const HmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 Timestep t = 0);

// Predict with the transition matrix, update with the emission likelihood.
PosteriorState forward_filter_step(const HmmModel& model, const PosteriorState& prev,
                                   const Eigen::Ref<const Eigen::VectorXd>& x);
PosteriorState forward_filter_step(const HmmModel& model, const PosteriorState& prev,
                                   const LobFrame& x);

std::vector<PosteriorState> filter_sequence(const HmmModel& model, const Eigen::MatrixXd& obs);

// Offline forward-backward state marginals (K x T). Uses the whole sequence.
Eigen::MatrixXd smoothed_posteriors(const HmmModel& model, const Eigen::MatrixXd& obs);

// perm[i] is the reference index assigned to model state i; minimizes the
// summed Euclidean distance between matched means.
using StatePermutation = std::array<int, kNumRegimes>;
StatePermutation align_states(const HmmModel& model,
                              const std::array<Eigen::VectorXd, kNumRegimes>& reference_means);

// Reorders states so that new state perm[i] is old state i.
HmmModel permute_states(const HmmModel& model, const StatePermutation& perm);

}  // namespace lobregime
