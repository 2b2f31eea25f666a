#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lobregime {

inline constexpr std::size_t kNumRegimes = 3;
inline constexpr std::size_t kFeatureDim = 4;

enum class RegimeLabel : std::uint8_t { Stable = 0, BuildUp = 1, Stress = 2 };

inline constexpr int to_int(RegimeLabel z) { return static_cast<int>(z); }

// One timestep of book features, in feature units.
struct LobFrame {
    double spread = 0.0;
    double depth = 0.0;
    double imbalance = 0.0;
    double vol = 0.0;

    Eigen::Vector4d vector() const { return {spread, depth, imbalance, vol}; }

    static LobFrame from_vector(const Eigen::Vector4d& x) {
        return {x(0), x(1), x(2), x(3)};
    }
};

using Timestep = std::int64_t;

class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace lobregime
