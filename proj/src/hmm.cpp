#include "lobregime/hmm.hpp"

#include "lobregime/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace lobregime {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const Eigen::Vector3d& a) {
    const double m = a.maxCoeff();
    if (!std::isfinite(m)) return m;
    return m + std::log((a.array() - m).exp().sum());
}

// Scaled forward-backward on precomputed log emissions (K x T).
struct ForwardBackward {
    Eigen::MatrixXd gamma;      // K x T
    Eigen::Matrix3d xi_sum;     // expected transition counts
    double log_likelihood = 0.0;
};

ForwardBackward forward_backward(const HmmModel& m, const Eigen::MatrixXd& log_b) {
    const Eigen::Index T = log_b.cols();
    Eigen::MatrixXd b(3, T);
    Eigen::VectorXd shift(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        shift(t) = log_b.col(t).maxCoeff();
        b.col(t) = (log_b.col(t).array() - shift(t)).exp();
    }

    Eigen::MatrixXd alpha(3, T), beta(3, T);
    Eigen::VectorXd c(T);
    Eigen::Vector3d a = m.init.cwiseProduct(b.col(0));
    c(0) = a.sum();
    alpha.col(0) = a / c(0);
    for (Eigen::Index t = 1; t < T; ++t) {
        a = (m.trans.transpose() * alpha.col(t - 1)).cwiseProduct(b.col(t));
        c(t) = a.sum();
        alpha.col(t) = a / c(t);
    }
    beta.col(T - 1).setOnes();
    for (Eigen::Index t = T - 1; t > 0; --t) {
        beta.col(t - 1) = m.trans * b.col(t).cwiseProduct(beta.col(t)) / c(t);
    }

    ForwardBackward fb;
    fb.gamma = alpha.cwiseProduct(beta);
    for (Eigen::Index t = 0; t < T; ++t) fb.gamma.col(t) /= fb.gamma.col(t).sum();
    fb.xi_sum.setZero();
    for (Eigen::Index t = 1; t < T; ++t) {
        const Eigen::Vector3d rhs = b.col(t).cwiseProduct(beta.col(t)) / c(t);
        fb.xi_sum += (alpha.col(t - 1) * rhs.transpose()).cwiseProduct(m.trans);
    }
    fb.log_likelihood = c.array().log().sum() + shift.sum();
    return fb;
}

Eigen::MatrixXd log_emissions(const HmmModel& m, const Eigen::MatrixXd& obs) {
    Eigen::MatrixXd out(3, obs.cols());
    for (Eigen::Index t = 0; t < obs.cols(); ++t) out.col(t) = m.log_emission(obs.col(t));
    return out;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& obs) {
    const Eigen::VectorXd mean = obs.rowwise().mean();
    const Eigen::MatrixXd centered = obs.colwise() - mean;
    return centered * centered.transpose() / static_cast<double>(obs.cols());
}

// k-means++ seeding on a random subset followed by a few Lloyd passes.
HmmModel initial_model(const Eigen::MatrixXd& obs, Rng& rng, double floor) {
    const Eigen::Index T = obs.cols();
    const Eigen::Index d = obs.rows();
    const Eigen::Index subset = std::min<Eigen::Index>(T, 500);
    std::vector<Eigen::Index> idx(subset);
    for (auto& i : idx) i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(T)));

    std::array<Eigen::VectorXd, 3> centers;
    centers[0] = obs.col(idx[rng.below(idx.size())]);
    for (int k = 1; k < 3; ++k) {
        std::vector<double> d2(idx.size());
        double total = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            double best = std::numeric_limits<double>::max();
            for (int c = 0; c < k; ++c) best = std::min(best, (obs.col(idx[j]) - centers[c]).squaredNorm());
            d2[j] = best;
            total += best;
        }
        double u = rng.uniform() * total;
        std::size_t pick = idx.size() - 1;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            u -= d2[j];
            if (u <= 0.0) {
                pick = j;
                break;
            }
        }
        centers[k] = obs.col(idx[pick]);
    }

    std::vector<int> assign(static_cast<std::size_t>(T), 0);
    for (int iter = 0; iter < 5; ++iter) {
        for (Eigen::Index t = 0; t < T; ++t) {
            double best = std::numeric_limits<double>::max();
            for (int c = 0; c < 3; ++c) {
                const double dist = (obs.col(t) - centers[c]).squaredNorm();
                if (dist < best) {
                    best = dist;
                    assign[t] = c;
                }
            }
        }
        for (int c = 0; c < 3; ++c) {
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
            int n = 0;
            for (Eigen::Index t = 0; t < T; ++t) {
                if (assign[t] == c) {
                    sum += obs.col(t);
                    ++n;
                }
            }
            if (n > 0) centers[c] = sum / n;
        }
    }

    HmmModel m;
    const Eigen::MatrixXd global = covariance(obs) + floor * Eigen::MatrixXd::Identity(d, d);
    for (int k = 0; k < 3; ++k) {
        m.means[k] = centers[k];
        m.covs[k] = global;
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) m.trans(i, j) = 1.0 / 3.0 + 0.1 * (rng.uniform() - 0.5);
        m.trans.row(i) /= m.trans.row(i).sum();
    }
    m.init = Eigen::Vector3d::Constant(1.0 / 3.0);
    m.prepare();
    return m;
}

void m_step(HmmModel& m, const Eigen::MatrixXd& obs, const ForwardBackward& fb, double floor) {
    const Eigen::Index d = obs.rows();
    for (int k = 0; k < 3; ++k) {
        const Eigen::VectorXd w = fb.gamma.row(k).transpose();
        const double wsum = w.sum();
        if (wsum < 1e-10) continue;  // empty state keeps its parameters
        m.means[k] = obs * w / wsum;
        const Eigen::MatrixXd centered = obs.colwise() - m.means[k];
        Eigen::MatrixXd cov = centered * w.asDiagonal() * centered.transpose() / wsum;
        cov = 0.5 * (cov + cov.transpose());
        cov.diagonal().array() += floor;
        m.covs[k] = cov;
        (void)d;
    }
    for (int i = 0; i < 3; ++i) {
        const double row = fb.xi_sum.row(i).sum();
        if (row > 0.0) m.trans.row(i) = fb.xi_sum.row(i) / row;
    }
    m.init = fb.gamma.col(0);
    m.prepare();
}

}  // namespace

void HmmModel::prepare() {
    const auto d = static_cast<double>(dim());
    for (std::size_t k = 0; k < n_states; ++k) {
        Eigen::LLT<Eigen::MatrixXd> llt(covs[k]);
        if (llt.info() != Eigen::Success) {
            throw ParameterError("HMM covariance is not positive definite");
        }
        chol_l_[k] = llt.matrixL();
        const double log_det = 2.0 * chol_l_[k].diagonal().array().log().sum();
        log_norm_[k] = -0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
    }
    prepared_ = true;
}

void HmmModel::validate() const {
    for (int i = 0; i < 3; ++i) {
        if ((trans.row(i).array() < 0.0).any() || std::abs(trans.row(i).sum() - 1.0) > 1e-9) {
            throw ParameterError("HMM transition rows must be stochastic");
        }
    }
    if ((init.array() < 0.0).any() || std::abs(init.sum() - 1.0) > 1e-9) {
        throw ParameterError("HMM initial distribution must sum to one");
    }
    for (std::size_t k = 0; k < n_states; ++k) {
        if (means[k].size() != means[0].size() || covs[k].rows() != means[0].size() ||
            covs[k].cols() != means[0].size()) {
            throw ParameterError("HMM mean/covariance dimensions disagree");
        }
        if ((covs[k] - covs[k].transpose()).cwiseAbs().maxCoeff() > 1e-9) {
            throw ParameterError("HMM covariance must be symmetric");
        }
        if (Eigen::LLT<Eigen::MatrixXd>(covs[k]).info() != Eigen::Success) {
            throw ParameterError("HMM covariance must be positive definite");
        }
    }
}

Eigen::Vector3d HmmModel::log_emission(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (!prepared_) throw ParameterError("HmmModel::prepare() not called");
    Eigen::Vector3d out;
    for (std::size_t k = 0; k < n_states; ++k) {
        const Eigen::VectorXd z =
            chol_l_[k].triangularView<Eigen::Lower>().solve(x - means[k]);
        out(static_cast<Eigen::Index>(k)) = log_norm_[k] - 0.5 * z.squaredNorm();
    }
    return out;
}

double posterior_entropy(const Eigen::Vector3d& pi) {
    double h = 0.0;
    for (int k = 0; k < 3; ++k) {
        if (pi(k) > 0.0) h -= pi(k) * std::log(pi(k));
    }
    return std::clamp(h, 0.0, std::log(3.0));
}

Eigen::MatrixXd frames_to_matrix(std::span<const LobFrame> frames) {
    Eigen::MatrixXd obs(static_cast<Eigen::Index>(kFeatureDim), static_cast<Eigen::Index>(frames.size()));
    for (std::size_t t = 0; t < frames.size(); ++t) obs.col(static_cast<Eigen::Index>(t)) = frames[t].vector();
    return obs;
}

HmmFitResult fit_hmm_detailed(const Eigen::MatrixXd& obs, const HmmFitOptions& opts) {
    if (opts.n_restarts < 1) throw ParameterError("fit_hmm: n_restarts must be >= 1");
    const auto min_frames = 10 * HmmModel::n_states * static_cast<std::size_t>(obs.rows());
    if (static_cast<std::size_t>(obs.cols()) < min_frames) {
        throw ParameterError("fit_hmm: insufficient data");
    }

    HmmFitResult best;
    double best_ll = kNegInf;
    Rng rng(opts.seed);
    for (std::size_t r = 0; r < opts.n_restarts; ++r) {
        HmmModel m = initial_model(obs, rng, opts.variance_floor);
        std::vector<double> trace;
        double prev = kNegInf;
        for (std::size_t iter = 0; iter < opts.max_iters; ++iter) {
            const ForwardBackward fb = forward_backward(m, log_emissions(m, obs));
            trace.push_back(fb.log_likelihood);
            const bool converged = std::isfinite(prev) &&
                                   std::abs(fb.log_likelihood - prev) < opts.tol * std::abs(prev);
            if (converged) break;
            prev = fb.log_likelihood;
            m_step(m, obs, fb, opts.variance_floor);
        }
        m.log_likelihood = log_likelihood(m, obs);
        best.restart_scores.push_back(m.log_likelihood);
        if (m.log_likelihood > best_ll) {
            best_ll = m.log_likelihood;
            best.model = m;
            best.trace = std::move(trace);
        }
    }
    return best;
}

HmmModel fit_hmm(std::span<const LobFrame> frames, std::size_t n_restarts, std::size_t max_iters,
                 std::uint64_t seed) {
    HmmFitOptions opts;
    opts.n_restarts = n_restarts;
    opts.max_iters = max_iters;
    opts.seed = seed;
    return fit_hmm_detailed(frames_to_matrix(frames), opts).model;
}

Eigen::MatrixXd smoothed_posteriors(const HmmModel& model, const Eigen::MatrixXd& obs) {
    if (obs.cols() == 0) return Eigen::MatrixXd(3, 0);
    return forward_backward(model, log_emissions(model, obs)).gamma;
}

double log_likelihood(const HmmModel& model, const Eigen::MatrixXd& obs) {
    if (obs.cols() == 0) return 0.0;
    Eigen::Vector3d la = model.init.array().log().matrix() + model.log_emission(obs.col(0));
    double ll = log_sum_exp(la);
    la.array() -= ll;
    const Eigen::Matrix3d log_trans = model.trans.array().log().matrix();
    for (Eigen::Index t = 1; t < obs.cols(); ++t) {
        Eigen::Vector3d next;
        for (int j = 0; j < 3; ++j) next(j) = log_sum_exp(la + log_trans.col(j));
        next += model.log_emission(obs.col(t));
        const double c = log_sum_exp(next);
        ll += c;
        la = next.array() - c;
    }
    return ll;
}

namespace {

PosteriorState normalize_log(const Eigen::Vector3d& log_unnorm, Timestep t) {
    PosteriorState out;
    out.t = t;
    const double z = log_sum_exp(log_unnorm);
    if (!std::isfinite(z)) {
        out.pi = Eigen::Vector3d::Constant(1.0 / 3.0);
        out.degenerate = true;
    } else {
        // std::exp keeps exp(-inf) == 0; the vectorised path clamps to a denormal.
        out.pi = (log_unnorm.array() - z).unaryExpr([](double v) { return std::exp(v); });
        out.pi /= out.pi.sum();
    }
    out.entropy = posterior_entropy(out.pi);
    return out;
}

}  // namespace

PosteriorState initial_posterior(const HmmModel& model, const Eigen::Ref<const Eigen::VectorXd>& x,
                                 Timestep t) {
    return normalize_log(model.init.array().log().matrix() + model.log_emission(x), t);
}

PosteriorState forward_filter_step(const HmmModel& model, const PosteriorState& prev,
                                   const Eigen::Ref<const Eigen::VectorXd>& x) {
    const Eigen::Vector3d predicted = model.trans.transpose() * prev.pi;
    return normalize_log(predicted.array().log().matrix() + model.log_emission(x), prev.t + 1);
}

PosteriorState forward_filter_step(const HmmModel& model, const PosteriorState& prev,
                                   const LobFrame& x) {
    const Eigen::VectorXd v = x.vector();
    return forward_filter_step(model, prev, v);
}

std::vector<PosteriorState> filter_sequence(const HmmModel& model, const Eigen::MatrixXd& obs) {
    std::vector<PosteriorState> out;
    out.reserve(static_cast<std::size_t>(obs.cols()));
    for (Eigen::Index t = 0; t < obs.cols(); ++t) {
        out.push_back(t == 0 ? initial_posterior(model, obs.col(0), 0)
                             : forward_filter_step(model, out.back(), obs.col(t)));
    }
    return out;
}

StatePermutation align_states(const HmmModel& model,
                              const std::array<Eigen::VectorXd, kNumRegimes>& reference_means) {
    StatePermutation perm{0, 1, 2};
    StatePermutation best = perm;
    double best_cost = std::numeric_limits<double>::max();
    do {
        double cost = 0.0;
        for (int i = 0; i < 3; ++i) cost += (model.means[i] - reference_means[perm[i]]).norm();
        if (cost < best_cost - 1e-12) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

HmmModel permute_states(const HmmModel& model, const StatePermutation& perm) {
    HmmModel out = model;
    for (int i = 0; i < 3; ++i) {
        out.means[perm[i]] = model.means[i];
        out.covs[perm[i]] = model.covs[i];
        out.init(perm[i]) = model.init(i);
        for (int j = 0; j < 3; ++j) out.trans(perm[i], perm[j]) = model.trans(i, j);
    }
    out.prepare();
    return out;
}

}  // namespace lobregime
