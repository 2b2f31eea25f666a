#pragma once

#include "lobregime/types.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace lobregime {

// Three-regime chain with drift-structured Gaussian emissions.
struct DgpParams {
    double p01 = 0.02;
    double p12 = 0.05;
    double p20 = 0.10;
    std::array<Eigen::Vector4d, kNumRegimes> mu;
    Eigen::Matrix4d sigma;
    double alpha = 0.03;
    Eigen::Vector4d v;
    std::size_t T = 3000;
    static constexpr std::size_t d = kFeatureDim;

    // Defaults used by every simulation experiment.
    static DgpParams defaults();

    // Isotropic noise sigma_eps^2 * I.
    void set_noise(double sigma_eps);

    // Throws ParameterError.
    void validate() const;

    Eigen::Matrix3d transition_matrix() const;

    // Per-step drift-to-noise ratio alpha / sqrt(v' Sigma v).
    double eta() const;
};

struct SimRun {
    std::vector<LobFrame> frames;
    std::vector<RegimeLabel> labels;
    std::uint64_t seed = 0;
};

// A build-up segment that ends in stress.
struct Episode {
    Timestep buildup_start = 0;
    Timestep stress_onset = 0;
    Timestep stress_end = 0;  // inclusive
    Timestep t1_obs = 0;
};

std::vector<RegimeLabel> sample_regime_path(const DgpParams& params, std::uint64_t seed);

std::vector<LobFrame> emit_observations(std::span<const RegimeLabel> labels,
                                        const DgpParams& params, std::uint64_t seed);

// Bit-reproducible for a given (params, seed).
SimRun simulate_run(const DgpParams& params, std::uint64_t seed);

std::vector<Episode> extract_episodes(std::span<const RegimeLabel> labels);

inline double project(const LobFrame& x, const Eigen::Vector4d& v) { return v.dot(x.vector()); }

// CSV with header "t,label,spread,depth,imbalance,vol".
void write_run_csv(const SimRun& run, std::ostream& out);
SimRun read_run_csv(std::istream& in);

}  // namespace lobregime
