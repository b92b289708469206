#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace spare {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Index = std::size_t;
using Points = std::vector<Vec3>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or inconsistent user input (files, indices, configuration values).
class InputError : public Error {
public:
    using Error::Error;
};

/// Numerical failure inside a solver stage.
class SolverError : public Error {
public:
    using Error::Error;
};

inline Eigen::VectorXd stack_points(const Points& points) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(3 * points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
        out.segment<3>(static_cast<Eigen::Index>(3 * i)) = points[i];
    }
    return out;
}

inline Points unstack_points(const Eigen::VectorXd& stacked) {
    Points out(static_cast<std::size_t>(stacked.size() / 3));
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = stacked.segment<3>(static_cast<Eigen::Index>(3 * i));
    }
    return out;
}

/// ||a - b|| / sqrt(n) over two equally sized point lists.
inline double rms_displacement(const Points& a, const Points& b) {
    if (a.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(a.size()));
}

}  // namespace spare
