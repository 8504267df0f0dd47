#pragma once

#include <Eigen/Dense>

#include <cstdint>

namespace fedcof {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using ClassIndex = std::uint32_t;
using ClientId = std::uint32_t;

/// Bytes per transmitted scalar; every uplink value is an IEEE-754 float.
inline constexpr std::uint64_t kBytesPerValue = 4;

}  // namespace fedcof
