#pragma once

#include "pkf/common.hpp"
#include "pkf/convert.hpp"
#include "pkf/coordmap.hpp"
#include "pkf/sigma.hpp"

#include <Eigen/Dense>

namespace pkf {

/// Recursive filter state: mean and covariance in state coordinates plus
/// the update index. A value type; every step is a pure transition.
struct StateEstimate {
    Vec4 mean = Vec4::Zero();
    Mat4 covariance = Mat4::Identity();
    int time_index = 0;
};

/// Linear motion model x(k) = A x(k-1) + w, w ~ N(0, Q).
struct MotionModel {
    Mat4 transition = Mat4::Identity();
    Mat4 process_noise = Mat4::Zero();
};

inline StateEstimate predict(const StateEstimate& est, const MotionModel& model)
{
    StateEstimate out;
    out.mean = model.transition * est.mean;
    out.covariance = symmetrize4(model.transition * est.covariance *
                                     model.transition.transpose() +
                                 model.process_noise);
    out.time_index = est.time_index + 1;
    return out;
}

/// Information-form measurement update on a debiased converted measurement:
///   P(k|k)   = [P(k|k-1)^{-1} + R_bar^{-1}]^{-1}
///   G(k)     = P(k|k) R_bar^{-1}
///   x(k|k)   = x(k|k-1) + G(k) [z_bar - x(k|k-1)].
/// A zero-information measurement leaves the estimate unchanged; a singular
/// precision matrix is fine, only the predicted covariance must invert.
inline StateEstimate pkf_update(const StateEstimate& predicted, const ConvertedMeasurement& cm)
{
    const Mat4 predicted_info = invert4(predicted.covariance, "pkf_update: predicted covariance");
    StateEstimate out;
    out.covariance = symmetrize4(invert4(Mat4(predicted_info + cm.precision),
                                         "pkf_update: posterior information"));
    const Mat4 gain = out.covariance * cm.precision;
    out.mean = predicted.mean + gain * (cm.value - predicted.mean);
    out.time_index = predicted.time_index;
    return out;
}

/// One full cycle of the converted-measurement filter: predict, convert the
/// observed measurement (augment, debias, information-zero), update.
inline StateEstimate pkf_step(const StateEstimate& est,
                              const Eigen::VectorXd& observed,
                              const MeasurementNoise& noise,
                              const MotionModel& model,
                              const CoordinateMapPair& map,
                              const SigmaRule& rule,
                              DebiasMode mode = DebiasMode::closed_form)
{
    const StateEstimate predicted = predict(est, model);
    const ConvertedMeasurement cm = convert_measurement(
        predicted.mean, predicted.covariance, observed, noise, map, rule, mode);
    return pkf_update(predicted, cm);
}

/// Extended Kalman filter baseline operating directly on the observed
/// measurement. The measurement Jacobian is the first M rows of J_g^{-1} at
/// the predicted measurement point, the innovation has its angular entries
/// wrapped to (-pi, pi], and the covariance update uses the Joseph form.
inline StateEstimate ekf_step(const StateEstimate& est,
                              const Eigen::VectorXd& observed,
                              const Eigen::MatrixXd& observed_noise_cov,
                              const MotionModel& model,
                              const CoordinateMapPair& map)
{
    const int m = map.observed_count;
    const StateEstimate predicted = predict(est, model);

    const Vec4 predicted_meas = map.to_measurement(predicted.mean);
    const Eigen::MatrixXd jac = map.jacobian_g_inverse(predicted_meas).topRows(m);
    const Eigen::VectorXd innovation =
        map.residual(observed, predicted_meas.head(m));

    const Eigen::MatrixXd innovation_cov = symmetrize(
        jac * predicted.covariance * jac.transpose() + observed_noise_cov);
    const Eigen::MatrixXd gain =
        predicted.covariance * jac.transpose() *
        invert(innovation_cov, "ekf_step: innovation covariance");

    StateEstimate out;
    out.mean = predicted.mean + gain * innovation;
    const Mat4 complement = Mat4::Identity() - gain * jac;
    out.covariance = symmetrize4(complement * predicted.covariance * complement.transpose() +
                                 gain * observed_noise_cov * gain.transpose());
    out.time_index = predicted.time_index;
    return out;
}

/// Sigma-point Gaussian filter baseline: the measurement moments are
/// evaluated by the cubature rule instead of linearization. Angular sigma
/// outputs are re-expressed relative to the center point before averaging
/// so the weighted mean is well defined across the angle seam.
inline StateEstimate spkf_step(const StateEstimate& est,
                               const Eigen::VectorXd& observed,
                               const Eigen::MatrixXd& observed_noise_cov,
                               const MotionModel& model,
                               const CoordinateMapPair& map,
                               const SigmaRule& rule)
{
    const int m = map.observed_count;
    const StateEstimate predicted = predict(est, model);

    const Eigen::MatrixXd factor = cholesky_factor(predicted.covariance);
    const Eigen::Index count = rule.count();

    Eigen::MatrixXd states(4, count);
    Eigen::MatrixXd meas(m, count);
    for (Eigen::Index i = 0; i < count; ++i) {
        const Vec4 xi = predicted.mean + factor * rule.points.col(i);
        states.col(i) = xi;
        meas.col(i) = map.to_measurement(xi).head(m);
    }
    for (int r = 0; r < m; ++r) {
        if (map.angular[static_cast<std::size_t>(r)]) {
            const double center = meas(r, 0);
            for (Eigen::Index i = 0; i < count; ++i) {
                meas(r, i) = center + wrap_angle(meas(r, i) - center);
            }
        }
    }

    const Eigen::VectorXd meas_mean = meas * rule.weights;
    const Eigen::MatrixXd meas_centered = meas.colwise() - meas_mean;
    const Eigen::MatrixXd state_centered = states.colwise() - predicted.mean;

    const Eigen::MatrixXd innovation_cov = symmetrize(
        meas_centered * rule.weights.asDiagonal() * meas_centered.transpose() +
        observed_noise_cov);
    const Eigen::MatrixXd cross_cov =
        state_centered * rule.weights.asDiagonal() * meas_centered.transpose();
    const Eigen::MatrixXd gain =
        cross_cov * invert(innovation_cov, "spkf_step: innovation covariance");

    StateEstimate out;
    out.mean = predicted.mean + gain * map.residual(observed, meas_mean);
    out.covariance = symmetrize4(predicted.covariance -
                                 gain * innovation_cov * gain.transpose());
    out.time_index = predicted.time_index;
    return out;
}

}  // namespace pkf
