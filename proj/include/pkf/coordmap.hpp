#pragma once

#include "pkf/common.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <stdexcept>

namespace pkf {

/// Full measurement-space point for the planar polar sensor model:
/// range, bearing, range rate and cross-range rate (velocity across the
/// line of sight). Bearing is kept on the principal interval (-pi, pi].
struct PolarState {
    double range = 0.0;
    double bearing = 0.0;
    double range_rate = 0.0;
    double cross_range_rate = 0.0;

    Vec4 vec() const { return Vec4(range, bearing, range_rate, cross_range_rate); }

    static PolarState from_vec(const Vec4& z)
    {
        return PolarState{z[0], wrap_angle(z[1]), z[2], z[3]};
    }
};

/// Planar Cartesian state: position and velocity.
struct CartesianState {
    double x = 0.0;
    double y = 0.0;
    double xdot = 0.0;
    double ydot = 0.0;

    Vec4 vec() const { return Vec4(x, y, xdot, ydot); }

    static CartesianState from_vec(const Vec4& v) { return CartesianState{v[0], v[1], v[2], v[3]}; }
};

/// A bijective pair of mappings between the state space and the measurement
/// space, with the analytic Jacobian of the measurement-to-state direction
/// and its inverse. Only the first `observed_count` measurement coordinates
/// are physically observed; the rest are filled in from predictions.
///
/// Any bijection satisfying g(h(x)) = x can plug in; this library ships the
/// polar pair and callers may provide others (tests use an identity map).
struct CoordinateMapPair {
    int dimension = 4;
    int observed_count = 4;
    std::function<Vec4(const Vec4&)> to_measurement;        // h: state -> measurement
    std::function<Vec4(const Vec4&)> to_state;              // g: measurement -> state
    std::function<Mat4(const Vec4&)> jacobian_g;            // J_g at a measurement point
    std::function<Mat4(const Vec4&)> jacobian_g_inverse;    // J_g^{-1} at a measurement point
    std::array<bool, 4> angular{false, false, false, false};  // angle coordinates, for residual wrapping

    /// Residual a - b in measurement coordinates with angle entries wrapped.
    Eigen::VectorXd residual(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const
    {
        Eigen::VectorXd r = a - b;
        for (Eigen::Index i = 0; i < r.size(); ++i) {
            if (angular[static_cast<std::size_t>(i)]) {
                r[i] = wrap_angle(r[i]);
            }
        }
        return r;
    }
};

/// g of the polar pair, valid on the double cover: a point with negative
/// range maps to the same plane point as (-r, bearing + pi) with negated
/// rates, so no clamping is ever needed for sigma points that wander
/// across r = 0.
inline Vec4 polar_to_cartesian_raw(const Vec4& z)
{
    const double r = z[0];
    const double ca = std::cos(z[1]);
    const double sa = std::sin(z[1]);
    const double rdot = z[2];
    const double cdot = z[3];
    return Vec4(r * ca, r * sa, rdot * ca - cdot * sa, rdot * sa + cdot * ca);
}

inline CartesianState polar_to_cartesian(const PolarState& z)
{
    if (!(z.range > 0.0)) {
        throw std::domain_error("polar_to_cartesian: range must be positive");
    }
    return CartesianState::from_vec(polar_to_cartesian_raw(z.vec()));
}

inline Vec4 cartesian_to_polar_raw(const Vec4& x)
{
    const double r = std::hypot(x[0], x[1]);
    if (r == 0.0) {
        throw SingularityError("cartesian_to_polar: zero position");
    }
    return Vec4(r,
                std::atan2(x[1], x[0]),
                (x[0] * x[2] + x[1] * x[3]) / r,
                (x[0] * x[3] - x[1] * x[2]) / r);
}

inline PolarState cartesian_to_polar(const CartesianState& x)
{
    return PolarState::from_vec(cartesian_to_polar_raw(x.vec()));
}

/// Jacobian of g with respect to (r, bearing, rdot, cdot).
inline Mat4 polar_jacobian_g(const Vec4& z)
{
    const double r = z[0];
    const double ca = std::cos(z[1]);
    const double sa = std::sin(z[1]);
    const double rdot = z[2];
    const double cdot = z[3];
    Mat4 j;
    j << ca, -r * sa, 0.0, 0.0,
         sa, r * ca, 0.0, 0.0,
         0.0, -rdot * sa - cdot * ca, ca, -sa,
         0.0, rdot * ca - cdot * sa, sa, ca;
    return j;
}

/// Analytic inverse of polar_jacobian_g. |J_g| = r, so the inverse exists
/// away from r = 0.
inline Mat4 polar_jacobian_g_inverse(const Vec4& z)
{
    const double r = z[0];
    if (r == 0.0) {
        throw SingularityError("polar_jacobian_g_inverse: zero range");
    }
    const double ca = std::cos(z[1]);
    const double sa = std::sin(z[1]);
    const double rdot = z[2];
    const double cdot = z[3];
    Mat4 j;
    j << ca, sa, 0.0, 0.0,
         -sa / r, ca / r, 0.0, 0.0,
         -cdot * sa / r, cdot * ca / r, ca, sa,
         rdot * sa / r, -rdot * ca / r, -sa, ca;
    return j;
}

/// The polar <-> Cartesian pair with the given number of observed
/// coordinates in the fixed ordering (range, bearing, range rate,
/// cross-range rate).
inline CoordinateMapPair polar_cartesian_map(int observed_count)
{
    if (observed_count < 1 || observed_count > 4) {
        throw std::domain_error("polar_cartesian_map: observed_count must be in [1, 4]");
    }
    CoordinateMapPair map;
    map.dimension = 4;
    map.observed_count = observed_count;
    map.to_measurement = [](const Vec4& x) { return cartesian_to_polar_raw(x); };
    map.to_state = [](const Vec4& z) { return polar_to_cartesian_raw(z); };
    map.jacobian_g = [](const Vec4& z) { return polar_jacobian_g(z); };
    map.jacobian_g_inverse = [](const Vec4& z) { return polar_jacobian_g_inverse(z); };
    map.angular = {false, true, false, false};
    return map;
}

/// The four blocks of J_g^{-t} partitioned by observed/unobserved
/// coordinates. Reassembling [observed, observed_unobserved;
/// unobserved_observed, unobserved] reproduces J_g^{-t}.
struct PartitionedInverseTranspose {
    Eigen::MatrixXd observed;              // M x M
    Eigen::MatrixXd observed_unobserved;   // M x (N-M)
    Eigen::MatrixXd unobserved_observed;   // (N-M) x M
    Eigen::MatrixXd unobserved;            // (N-M) x (N-M)
};

inline PartitionedInverseTranspose partition_inverse_transpose(const Mat4& jacobian_g_inverse,
                                                               int observed_count)
{
    if (observed_count < 1 || observed_count > 4) {
        throw std::domain_error("partition_inverse_transpose: observed_count must be in [1, 4]");
    }
    const int m = observed_count;
    const int u = 4 - observed_count;
    const Mat4 t = jacobian_g_inverse.transpose();
    PartitionedInverseTranspose p;
    p.observed = t.topLeftCorner(m, m);
    p.observed_unobserved = t.topRightCorner(m, u);
    p.unobserved_observed = t.bottomLeftCorner(u, m);
    p.unobserved = t.bottomRightCorner(u, u);
    return p;
}

}  // namespace pkf
