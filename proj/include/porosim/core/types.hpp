#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace porosim {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat66 = Eigen::Matrix<double, 6, 6>;
using Mat612 = Eigen::Matrix<double, 6, 12>;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using Vec12 = Eigen::Matrix<double, 12, 1>;
using VecX = Eigen::VectorXd;

using Tet = std::array<int, 4>;
using Tri = std::array<int, 3>;

// Eigen fixed-size members need the aligned allocator inside std::vector
// only for the 16-byte vectorizable sizes; Vec3 is not one of them.
using Vec3List = std::vector<Vec3>;

}  // namespace porosim
