#pragma once

#include "pkf/common.hpp"
#include "pkf/coordmap.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <utility>

namespace pkf {

/// A cubature rule for expectations against the standard Gaussian:
/// E[f(u)] ~= sum_i w_i f(p_i) with u ~ N(0, I_n). Points are stored as
/// columns in unit-Gaussian coordinates. Weights may be negative for
/// n > 4; they always sum to 1.
struct SigmaRule {
    int dimension = 0;
    Eigen::MatrixXd points;    // dimension x count
    Eigen::VectorXd weights;   // count

    Eigen::Index count() const { return weights.size(); }
};

/// Fully symmetric rule exact for all standard-Gaussian monomials of total
/// degree <= 5, with 2n^2 + 1 points. The point set is the origin, the axial
/// points +-lambda e_i, and the pair points (+-lambda, +-lambda) on each
/// coordinate plane. Matching the moments 1, E[u_i^2] = 1, E[u_i^4] = 3 and
/// E[u_i^2 u_j^2] = 1 fixes
///   lambda  = sqrt(3)
///   w_axial = (4 - n) / 18
///   w_pair  = 1 / 36
///   w_0     = (n^2 - 7n + 18) / 18.
/// All odd moments vanish by symmetry.
inline SigmaRule degree5_rule(int dimension)
{
    if (dimension < 1) {
        throw std::domain_error("degree5_rule: dimension must be >= 1");
    }
    const int n = dimension;
    const Eigen::Index count = 2 * n * n + 1;
    const double lambda = std::sqrt(3.0);
    const double w_center = (n * n - 7.0 * n + 18.0) / 18.0;
    const double w_axial = (4.0 - n) / 18.0;
    const double w_pair = 1.0 / 36.0;

    SigmaRule rule;
    rule.dimension = n;
    rule.points = Eigen::MatrixXd::Zero(n, count);
    rule.weights = Eigen::VectorXd::Zero(count);

    Eigen::Index idx = 0;
    rule.weights[idx++] = w_center;
    for (int i = 0; i < n; ++i) {
        for (double sign : {1.0, -1.0}) {
            rule.points(i, idx) = sign * lambda;
            rule.weights[idx++] = w_axial;
        }
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            for (double si : {1.0, -1.0}) {
                for (double sj : {1.0, -1.0}) {
                    rule.points(i, idx) = si * lambda;
                    rule.points(j, idx) = sj * lambda;
                    rule.weights[idx++] = w_pair;
                }
            }
        }
    }
    return rule;
}

/// Weighted sample mean and covariance of a transformed Gaussian.
struct TransformedStats {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

/// Propagates N(mean, covariance) through y and returns the weighted sample
/// mean and covariance of the transformed sigma points. The covariance is
/// scaled into the rule's unit coordinates by its lower Cholesky factor and
/// the result is symmetrized; indefiniteness from negative weights is left
/// for callers to check, never clamped here.
template <typename Fn>
TransformedStats transform(const SigmaRule& rule,
                           const Eigen::VectorXd& mean,
                           const Eigen::MatrixXd& covariance,
                           Fn&& y)
{
    if (mean.size() != rule.dimension || covariance.rows() != rule.dimension) {
        throw std::domain_error("transform: dimension mismatch with rule");
    }
    const Eigen::MatrixXd factor = cholesky_factor(covariance);
    const Eigen::Index count = rule.count();

    Eigen::MatrixXd outputs;
    for (Eigen::Index i = 0; i < count; ++i) {
        const Eigen::VectorXd u = mean + factor * rule.points.col(i);
        const Eigen::VectorXd yi = y(u);
        if (outputs.size() == 0) {
            outputs.resize(yi.size(), count);
        }
        outputs.col(i) = yi;
    }

    TransformedStats stats;
    stats.mean = outputs * rule.weights;
    const Eigen::MatrixXd centered = outputs.colwise() - stats.mean;
    stats.covariance =
        symmetrize(centered * rule.weights.asDiagonal() * centered.transpose());
    return stats;
}

/// Moments of the converted-measurement integrand y(u) = g(h(x_pred) - u)
/// for a zero-mean Gaussian u with the given covariance. Used with the
/// predicted measurement covariance for the predicted-state error, and with
/// that plus the measurement noise covariance for the combined error.
inline TransformedStats expectations_of_converted(const Vec4& predicted_state,
                                                  const Mat4& cov_u,
                                                  const CoordinateMapPair& map,
                                                  const SigmaRule& rule)
{
    const Vec4 predicted_meas = map.to_measurement(predicted_state);
    auto integrand = [&](const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return map.to_state(predicted_meas - Vec4(u));
    };
    return transform(rule, Eigen::VectorXd::Zero(4), cov_u, integrand);
}

}  // namespace pkf
