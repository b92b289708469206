#pragma once

#include <Eigen/SVD>

#include "spare/core.hpp"

namespace spare {

/// Rotation R maximizing trace(R * S): with S = U Sigma V^T, R = V diag(1, 1, det(V U^T)) U^T.
inline Mat3 rotation_maximizing_trace(const Mat3& s) {
    Eigen::JacobiSVD<Mat3> svd(s, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    Eigen::Vector3d diag(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
    return v * diag.asDiagonal() * u.transpose();
}

/// Nearest rotation to A in Frobenius norm: U diag(1, 1, det(U V^T)) V^T from A = U Sigma V^T.
inline Mat3 project_rotation(const Mat3& a) {
    Eigen::JacobiSVD<Mat3> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    Eigen::Vector3d diag(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
    return u * diag.asDiagonal() * v.transpose();
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
    return (r.transpose() * r - Mat3::Identity()).norm() < tol && std::abs(r.determinant() - 1.0) <= tol;
}

/// Closest point to `rotated_normal` on the plane {h : (h + target_normal) . d = 0}.
/// Requires d != 0.
inline Vec3 project_to_constraint_plane(const Vec3& rotated_normal, const Vec3& target_normal, const Vec3& d) {
    return rotated_normal - d * ((target_normal + rotated_normal).dot(d) / d.squaredNorm());
}

/// f(R) = [(R n + n_t) . d]^2, the rotation-dependent part of one SP2P residual.
inline double sp2p_rotation_term(const Mat3& r, const Vec3& normal, const Vec3& target_normal, const Vec3& d) {
    const double x = (r * normal + target_normal).dot(d);
    return x * x;
}

/// Majorizer of sp2p_rotation_term built at the previous rotation:
/// ||d||^2 * ||R n - h*||^2 with h* the plane projection of R_prev n.
inline double sp2p_rotation_surrogate(const Mat3& r, const Mat3& r_prev, const Vec3& normal,
                                      const Vec3& target_normal, const Vec3& d) {
    if (d.squaredNorm() == 0.0) return 0.0;
    const Vec3 h = project_to_constraint_plane(r_prev * normal, target_normal, d);
    return d.squaredNorm() * (r * normal - h).squaredNorm();
}

}  // namespace spare
