#include "lobregime/dgp.hpp"

#include "lobregime/rng.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace lobregime {

DgpParams DgpParams::defaults() {
    DgpParams p;
    // (spread, depth, imbalance, volatility-proxy)
    p.mu[0] = Eigen::Vector4d(1.0, 50.0, 0.0, 1.0);
    p.mu[1] = p.mu[0];
    p.mu[2] = Eigen::Vector4d(8.0, 15.0, -0.9, 4.0);
    p.v = Eigen::Vector4d(0.5, -0.85, 0.0, 0.0).normalized();
    p.set_noise(0.5);
    return p;
}

void DgpParams::set_noise(double sigma_eps) {
    sigma = Eigen::Matrix4d::Identity() * (sigma_eps * sigma_eps);
}

void DgpParams::validate() const {
    auto open_unit = [](double x) { return x > 0.0 && x < 1.0; };
    if (!open_unit(p01) || !open_unit(p12) || !open_unit(p20)) {
        throw ParameterError("transition probabilities must lie in (0,1)");
    }
    if (std::abs(v.norm() - 1.0) > 1e-9) {
        throw ParameterError("drift direction must have unit norm");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw ParameterError("drift magnitude must be finite and non-negative");
    }
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
        throw ParameterError("noise covariance must be symmetric");
    }
    Eigen::LLT<Eigen::Matrix4d> llt(sigma);
    if (llt.info() != Eigen::Success) {
        throw ParameterError("noise covariance must be positive definite");
    }
    for (const auto& m : mu) {
        if (!m.allFinite()) throw ParameterError("regime means must be finite");
    }
}

Eigen::Matrix3d DgpParams::transition_matrix() const {
    Eigen::Matrix3d P;
    P << 1.0 - p01, p01, 0.0,
         0.0, 1.0 - p12, p12,
         p20, 0.0, 1.0 - p20;
    return P;
}

double DgpParams::eta() const { return alpha / std::sqrt(v.dot(sigma * v)); }

std::vector<RegimeLabel> sample_regime_path(const DgpParams& params, std::uint64_t seed) {
    params.validate();
    std::vector<RegimeLabel> labels;
    labels.reserve(params.T);
    if (params.T == 0) return labels;

    Rng rng(seed);
    RegimeLabel z = RegimeLabel::Stable;
    labels.push_back(z);
    for (std::size_t t = 1; t < params.T; ++t) {
        const double u = rng.uniform();
        switch (z) {
            case RegimeLabel::Stable:
                if (u < params.p01) z = RegimeLabel::BuildUp;
                break;
            case RegimeLabel::BuildUp:
                if (u < params.p12) z = RegimeLabel::Stress;
                break;
            case RegimeLabel::Stress:
                if (u < params.p20) z = RegimeLabel::Stable;
                break;
        }
        labels.push_back(z);
    }
    return labels;
}

std::vector<LobFrame> emit_observations(std::span<const RegimeLabel> labels,
                                        const DgpParams& params, std::uint64_t seed) {
    params.validate();
    if (labels.size() != params.T) {
        throw ParameterError("label sequence length does not match params.T");
    }
    const Eigen::Matrix4d L = Eigen::LLT<Eigen::Matrix4d>(params.sigma).matrixL();

    Rng rng(seed);
    std::vector<LobFrame> frames;
    frames.reserve(labels.size());
    std::size_t entry = 0;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        const RegimeLabel z = labels[t];
        if (z == RegimeLabel::BuildUp && (t == 0 || labels[t - 1] != RegimeLabel::BuildUp)) {
            entry = t;
        }
        Eigen::Vector4d eps;
        for (int i = 0; i < 4; ++i) eps(i) = rng.normal();
        Eigen::Vector4d x = params.mu[to_int(z)] + L * eps;
        if (z == RegimeLabel::BuildUp) {
            x += params.alpha * static_cast<double>(t - entry) * params.v;
        }
        frames.push_back(LobFrame::from_vector(x));
    }
    return frames;
}

SimRun simulate_run(const DgpParams& params, std::uint64_t seed) {
    SimRun run;
    run.seed = seed;
    run.labels = sample_regime_path(params, derive_seed(seed, 0));
    run.frames = emit_observations(run.labels, params, derive_seed(seed, 1));
    return run;
}

std::vector<Episode> extract_episodes(std::span<const RegimeLabel> labels) {
    std::vector<Episode> out;
    const auto n = static_cast<Timestep>(labels.size());
    Timestep t = 0;
    while (t < n) {
        if (labels[t] != RegimeLabel::BuildUp) {
            ++t;
            continue;
        }
        const Timestep start = t;
        while (t < n && labels[t] == RegimeLabel::BuildUp) ++t;
        if (t >= n || labels[t] != RegimeLabel::Stress) continue;
        const Timestep onset = t;
        while (t < n && labels[t] == RegimeLabel::Stress) ++t;
        out.push_back({start, onset, t - 1, onset - start});
    }
    return out;
}

void write_run_csv(const SimRun& run, std::ostream& out) {
    out << "t,label,spread,depth,imbalance,vol\n";
    out << std::setprecision(17);
    for (std::size_t t = 0; t < run.frames.size(); ++t) {
        const auto& f = run.frames[t];
        out << t << ',' << to_int(run.labels[t]) << ',' << f.spread << ',' << f.depth << ','
            << f.imbalance << ',' << f.vol << '\n';
    }
}

SimRun read_run_csv(std::istream& in) {
    SimRun run;
    std::string line;
    if (!std::getline(in, line) || line != "t,label,spread,depth,imbalance,vol") {
        throw InputError("run CSV: missing or unexpected header");
    }
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::array<double, 6> v{};
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::getline(ss, cell, ',')) {
                throw InputError("run CSV: short row " + std::to_string(row));
            }
            v[i] = std::stod(cell);
        }
        const int label = static_cast<int>(v[1]);
        if (label < 0 || label > 2) throw InputError("run CSV: bad label");
        run.labels.push_back(static_cast<RegimeLabel>(label));
        run.frames.push_back({v[2], v[3], v[4], v[5]});
        ++row;
    }
    return run;
}

}  // namespace lobregime
