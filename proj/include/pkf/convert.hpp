#pragma once

#include "pkf/common.hpp"
#include "pkf/coordmap.hpp"
#include "pkf/sigma.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace pkf {

/// Polar measurement-noise description. Range and range-rate noise may be
/// correlated; bearing and cross-range-rate noise are independent of the
/// rest. Unobserved coordinates still carry assumed standard deviations:
/// they shape the converted covariance even though information zeroing
/// removes their direct contribution.
struct MeasurementNoise {
    double sigma_range = 30.0;
    double sigma_bearing = 0.0873;
    double sigma_range_rate = 10.0;
    double sigma_cross_range_rate = 10.0;
    double range_rate_correlation = -0.2;  // rho, |rho| < 1

    /// Full 4x4 covariance of the (range, bearing, range rate,
    /// cross-range rate) noise vector.
    Mat4 full_covariance() const
    {
        Mat4 r = Mat4::Zero();
        r(0, 0) = sigma_range * sigma_range;
        r(1, 1) = sigma_bearing * sigma_bearing;
        r(2, 2) = sigma_range_rate * sigma_range_rate;
        r(3, 3) = sigma_cross_range_rate * sigma_cross_range_rate;
        r(0, 2) = r(2, 0) = range_rate_correlation * sigma_range * sigma_range_rate;
        return r;
    }

    /// Leading M x M block, the covariance of the observed coordinates.
    Eigen::MatrixXd observed_covariance(int observed_count) const
    {
        return full_covariance().topLeftCorner(observed_count, observed_count);
    }
};

/// A complete measurement vector: observed entries from the sensor,
/// unobserved entries filled from the predicted state, together with the
/// observed coordinate count and the full noise covariance.
struct MeasurementFrame {
    Vec4 measurement = Vec4::Zero();   // full z in measurement coordinates
    int observed_count = 4;
    Mat4 noise_covariance = Mat4::Zero();
};

/// Debiased converted measurement in state coordinates together with its
/// precision (inverse covariance) matrix; the precision has rank equal to
/// the number of observed coordinates.
struct ConvertedMeasurement {
    Vec4 value = Vec4::Zero();         // z_bar in state coordinates
    Mat4 precision = Mat4::Zero();     // R_bar^{-1}, PSD, rank M
};

enum class DebiasMode {
    closed_form,               // analytic multiplicative factor exp(sigma_bearing^2 / 2)
    numerical_multiplicative,  // diagonal ratio of cubature means
    numerical_additive,        // difference of cubature means
};

/// Fills the unobserved tail of the measurement vector with the predicted
/// measurement of those coordinates.
inline Vec4 augment_unobserved(const Eigen::VectorXd& observed,
                               const Vec4& predicted_state,
                               const CoordinateMapPair& map)
{
    const int m = static_cast<int>(observed.size());
    if (m < 1 || m > map.dimension) {
        throw std::domain_error("augment_unobserved: bad observed length");
    }
    Vec4 full = map.to_measurement(predicted_state);
    full.head(m) = observed;
    return full;
}

/// Predicted state covariance mapped into measurement coordinates:
/// P_z = J_h P_x J_h^t with J_h = J_g^{-1} at the predicted measurement.
inline Mat4 predicted_measurement_covariance(const Mat4& state_covariance,
                                             const Vec4& predicted_state,
                                             const CoordinateMapPair& map)
{
    const Vec4 predicted_meas = map.to_measurement(predicted_state);
    const Mat4 jac_h = map.jacobian_g_inverse(predicted_meas);
    return symmetrize4(jac_h * state_covariance * jac_h.transpose());
}

/// Diagonal multiplicative debias matrix: the elementwise ratio of the
/// predicted-state-error mean to the combined-error mean. A near-zero
/// denominator entry means the correction is ill-defined for that
/// coordinate, so the no-correction ratio 1 is substituted.
inline Mat4 debias_multiplicative(const Vec4& mean_x, const Vec4& mean_v)
{
    const double floor = 1e-12 * mean_v.norm();
    Mat4 b = Mat4::Zero();
    for (int i = 0; i < 4; ++i) {
        b(i, i) = std::abs(mean_v[i]) <= floor ? 1.0 : mean_x[i] / mean_v[i];
    }
    return b;
}

/// Additive debias vector: difference of the two cubature means.
inline Vec4 debias_additive(const Vec4& mean_x, const Vec4& mean_v)
{
    return mean_x - mean_v;
}

namespace detail {

/// Symmetrizes and conditions a converted covariance estimate. Eigenvalues
/// below -1e-9 * trace fail the trial (clamping would silently corrupt the
/// consistency statistics); small negatives within that tolerance are
/// lifted to 1e-12 * trace.
inline Mat4 condition_converted_covariance(Mat4 r_hat)
{
    r_hat = symmetrize4(r_hat);
    const double tr = r_hat.trace();
    if (!(tr > 0.0)) {
        throw ConditioningError("converted covariance has non-positive trace");
    }
    Eigen::SelfAdjointEigenSolver<Mat4> es(r_hat);
    const Eigen::Vector4d ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-9 * tr) {
        std::ostringstream msg;
        msg << "converted covariance is indefinite: min eigenvalue " << ev.minCoeff()
            << " with trace " << tr;
        throw ConditioningError(msg.str());
    }
    if (ev.minCoeff() >= 0.0) {
        return r_hat;
    }
    Eigen::Vector4d clamped = ev.cwiseMax(1e-12 * tr);
    return symmetrize4(es.eigenvectors() * clamped.asDiagonal() *
                       es.eigenvectors().transpose());
}

}  // namespace detail

/// Converted measurement covariance for a multiplicative debias:
/// R_hat = B C_v B - C_x.
inline Mat4 converted_covariance(const TransformedStats& stats_x,
                                 const TransformedStats& stats_v,
                                 const Mat4& debias_matrix)
{
    return detail::condition_converted_covariance(
        debias_matrix * stats_v.covariance * debias_matrix - stats_x.covariance);
}

/// Converted measurement covariance for an additive debias:
/// R_hat = C_v - C_x (the debias vector cancels).
inline Mat4 converted_covariance(const TransformedStats& stats_x,
                                 const TransformedStats& stats_v)
{
    return detail::condition_converted_covariance(
        Mat4(stats_v.covariance - stats_x.covariance));
}

/// Transforms the converted covariance estimate into measurement
/// coordinates, zeros the rows and columns of the unobserved coordinates,
/// and maps back:
///   R_bar^{-1} = J_g^{-t} [ W (J_h^{-t} R_hat^{-1} J_h^{-1}) W^t ] J_g^{-1},
/// with all Jacobians at the predicted point and J_h^{-1} = J_g there. The
/// result is symmetric PSD of rank equal to the observed count; for a fully
/// observed measurement it reduces to R_hat^{-1} itself.
inline Mat4 zero_information(const Mat4& converted_cov,
                             const CoordinateMapPair& map,
                             const Vec4& predicted_state,
                             int observed_count)
{
    if (observed_count < 1 || observed_count > map.dimension) {
        throw std::domain_error("zero_information: bad observed count");
    }
    const Mat4 precision = invert4(converted_cov, "zero_information");
    const Vec4 predicted_meas = map.to_measurement(predicted_state);
    const Mat4 jac_g = map.jacobian_g(predicted_meas);
    const Mat4 jac_g_inv = map.jacobian_g_inverse(predicted_meas);

    // J_h^{-t} R_hat^{-1} J_h^{-1} = J_g^t R_hat^{-1} J_g.
    const Mat4 in_meas = jac_g.transpose() * precision * jac_g;
    Mat4 zeroed = Mat4::Zero();
    zeroed.topLeftCorner(observed_count, observed_count) =
        in_meas.topLeftCorner(observed_count, observed_count);

    return symmetrize4(jac_g_inv.transpose() * zeroed * jac_g_inv);
}

/// Full conversion pipeline for one measurement: augments the unobserved
/// coordinates, evaluates the cubature expectations of the predicted-state
/// error and of the combined error, applies the selected debias form, and
/// information-zeros the resulting precision matrix.
inline ConvertedMeasurement convert_measurement(const Vec4& predicted_mean,
                                                const Mat4& predicted_covariance,
                                                const Eigen::VectorXd& observed,
                                                const MeasurementNoise& noise,
                                                const CoordinateMapPair& map,
                                                const SigmaRule& rule,
                                                DebiasMode mode)
{
    const int m = map.observed_count;
    if (observed.size() != m) {
        throw std::domain_error("convert_measurement: observed size != map.observed_count");
    }
    const Vec4 full_meas = augment_unobserved(observed, predicted_mean, map);
    const Mat4 meas_cov = predicted_measurement_covariance(predicted_covariance,
                                                           predicted_mean, map);
    const Mat4 noise_cov = noise.full_covariance();

    const TransformedStats stats_x =
        expectations_of_converted(predicted_mean, meas_cov, map, rule);
    const TransformedStats stats_v =
        expectations_of_converted(predicted_mean, Mat4(meas_cov + noise_cov), map, rule);

    ConvertedMeasurement out;
    Mat4 r_hat;
    switch (mode) {
    case DebiasMode::closed_form: {
        const double factor = std::exp(0.5 * noise.sigma_bearing * noise.sigma_bearing);
        const Mat4 debias = factor * Mat4::Identity();
        out.value = debias * map.to_state(full_meas);
        r_hat = converted_covariance(stats_x, stats_v, debias);
        break;
    }
    case DebiasMode::numerical_multiplicative: {
        const Mat4 debias = debias_multiplicative(stats_x.mean, stats_v.mean);
        out.value = debias * map.to_state(full_meas);
        r_hat = converted_covariance(stats_x, stats_v, debias);
        break;
    }
    case DebiasMode::numerical_additive: {
        out.value = map.to_state(full_meas) + debias_additive(stats_x.mean, stats_v.mean);
        r_hat = converted_covariance(stats_x, stats_v);
        break;
    }
    }
    out.precision = zero_information(r_hat, map, predicted_mean, m);
    return out;
}

}  // namespace pkf
