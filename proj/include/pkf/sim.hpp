#pragma once

#include "pkf/common.hpp"
#include "pkf/convert.hpp"
#include "pkf/coordmap.hpp"
#include "pkf/filters.hpp"
#include "pkf/rng.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pkf {

enum class ObservedSet {
    range_bearing,             // M = 2
    range_bearing_range_rate,  // M = 3
};

/// Scenario description for the constant-velocity polar tracking
/// experiments: update timing, noise levels, process-noise intensity and
/// the initial-state distribution.
struct ScenarioParams {
    double update_period = 2.0;  // seconds
    int n_updates = 100;
    double sigma_range = 30.0;             // meters
    double sigma_bearing = 0.0873;         // radians
    double sigma_range_rate = 10.0;        // meters/second
    double sigma_cross_range_rate = 10.0;  // meters/second
    double range_rate_correlation = -0.2;
    double process_noise_intensity = 0.44 * 0.44;  // m^2/s^3
    double init_range_mean = 4000.0;  // meters
    double init_range_std = 30.0;     // meters
    double speed_scale = 10.0;        // meters/second per chi-square unit
    ObservedSet observed = ObservedSet::range_bearing;

    int observed_count() const
    {
        return observed == ObservedSet::range_bearing ? 2 : 3;
    }

    MeasurementNoise noise() const
    {
        return MeasurementNoise{sigma_range, sigma_bearing, sigma_range_rate,
                                sigma_cross_range_rate, range_rate_correlation};
    }

    void validate() const
    {
        if (!(update_period > 0.0)) throw std::domain_error("update_period must be > 0");
        if (n_updates < 1) throw std::domain_error("n_updates must be >= 1");
        if (!(sigma_range > 0.0 && sigma_bearing > 0.0 && sigma_range_rate > 0.0 &&
              sigma_cross_range_rate > 0.0)) {
            throw std::domain_error("noise standard deviations must be > 0");
        }
        if (!(std::abs(range_rate_correlation) < 1.0)) {
            throw std::domain_error("|rho| must be < 1");
        }
        if (!(process_noise_intensity >= 0.0)) {
            throw std::domain_error("process noise intensity must be >= 0");
        }
        if (!(init_range_mean > 0.0 && init_range_std >= 0.0 && speed_scale >= 0.0)) {
            throw std::domain_error("initial-state parameters out of range");
        }
    }
};

/// Initial truth draw: range ~ N(mean, std^2), bearing and heading uniform
/// on (0, 2pi), speed chi-square with 2 dof scaled by speed_scale.
inline Vec4 sample_initial_truth(Rng& rng, const ScenarioParams& params)
{
    const double range = rng.normal(params.init_range_mean, params.init_range_std);
    const double bearing = rng.uniform(0.0, 2.0 * kPi);
    const double heading = rng.uniform(0.0, 2.0 * kPi);
    const double speed = params.speed_scale * rng.chi_square_2();
    return Vec4(range * std::cos(bearing), range * std::sin(bearing),
                speed * std::cos(heading), speed * std::sin(heading));
}

/// Constant-velocity transition with a white-noise-acceleration process
/// noise block q * [[T^3/3, T^2/2], [T^2/2, T]] per axis, expanded to the
/// (x, y, xdot, ydot) ordering with independent axes.
inline MotionModel build_motion_model(const ScenarioParams& params)
{
    const double t = params.update_period;
    if (!(t > 0.0)) {
        throw std::domain_error("build_motion_model: update period must be > 0");
    }
    const double q = params.process_noise_intensity;

    MotionModel model;
    model.transition = Mat4::Identity();
    model.transition(0, 2) = t;
    model.transition(1, 3) = t;

    Mat4& noise = model.process_noise;
    noise = Mat4::Zero();
    const double q_pp = q * t * t * t / 3.0;
    const double q_pv = q * t * t / 2.0;
    const double q_vv = q * t;
    for (int axis = 0; axis < 2; ++axis) {
        noise(axis, axis) = q_pp;
        noise(axis, axis + 2) = q_pv;
        noise(axis + 2, axis) = q_pv;
        noise(axis + 2, axis + 2) = q_vv;
    }
    return model;
}

inline Vec4 propagate_truth(const Vec4& state, const MotionModel& model, Rng& rng)
{
    if (model.process_noise.isZero(0.0)) {
        return model.transition * state;
    }
    const Eigen::MatrixXd factor = cholesky_factor(model.process_noise);
    return rng.gaussian(model.transition * state, factor);
}

/// Observed measurement: the first M entries of h(truth) plus correlated
/// Gaussian noise from the leading M x M block of the noise covariance.
/// Unobserved coordinates are never corrupted with sampled noise; they are
/// filter-internal predictions.
inline Eigen::VectorXd synthesize_measurement(const Vec4& truth,
                                              const ScenarioParams& params,
                                              Rng& rng)
{
    const int m = params.observed_count();
    const Eigen::VectorXd ideal = cartesian_to_polar_raw(truth).head(m);
    const Eigen::MatrixXd factor = cholesky_factor(params.noise().observed_covariance(m));
    return rng.gaussian(ideal, factor);
}

/// Initial covariance diag(30^2, 30^2, 10^2, 10^2) shared by all filters.
inline Mat4 initial_covariance()
{
    return Vec4(900.0, 900.0, 100.0, 100.0).asDiagonal();
}

inline StateEstimate initialize_filter(const Vec4& truth0, Rng& rng)
{
    StateEstimate est;
    est.covariance = initial_covariance();
    est.mean = rng.gaussian(truth0, cholesky_factor(est.covariance));
    est.time_index = 0;
    return est;
}

/// Position/velocity error bounds per update (k = 0 is the initial state).
struct PcrlbSeries {
    std::vector<double> position;
    std::vector<double> velocity;
};

/// Recursive information-matrix bound for the additive-Gaussian model,
/// linearized at the true trajectory (exact for the linear state equation):
///   J(k) = [Q + A J(k-1)^{-1} A^t]^{-1} + H(k)^t R^{-1} H(k),
/// J(0) = P0^{-1}, with H(k) the measurement Jacobian at the true state.
/// Bounds are the traces of the position and velocity blocks of J(k)^{-1}.
template <typename JacobianFn>
PcrlbSeries pcrlb_general(const std::vector<Vec4>& truth,
                          const MotionModel& model,
                          const Mat4& initial_cov,
                          JacobianFn&& measurement_jacobian,
                          const Eigen::MatrixXd& observed_noise_cov)
{
    if (truth.empty()) {
        throw std::domain_error("pcrlb: empty trajectory");
    }
    const Eigen::MatrixXd noise_info = invert(observed_noise_cov, "pcrlb: measurement noise");
    Mat4 info = invert4(initial_cov, "pcrlb: initial covariance");

    PcrlbSeries series;
    series.position.reserve(truth.size());
    series.velocity.reserve(truth.size());
    auto record = [&series](const Mat4& j) {
        const Mat4 bound = invert4(j, "pcrlb: information matrix");
        series.position.push_back(bound(0, 0) + bound(1, 1));
        series.velocity.push_back(bound(2, 2) + bound(3, 3));
    };
    record(info);

    for (std::size_t k = 1; k < truth.size(); ++k) {
        const Mat4 predicted_cov = model.process_noise +
                                   model.transition * invert4(info, "pcrlb: information matrix") *
                                       model.transition.transpose();
        const Eigen::MatrixXd jac = measurement_jacobian(truth[k]);
        info = symmetrize4(invert4(predicted_cov, "pcrlb: predicted covariance") +
                           jac.transpose() * noise_info * jac);
        record(info);
    }
    return series;
}

/// Bound for the polar scenario: H(k) is the first M rows of J_g^{-1} at
/// the true state.
inline PcrlbSeries pcrlb(const std::vector<Vec4>& truth,
                         const ScenarioParams& params,
                         const MotionModel& model)
{
    const int m = params.observed_count();
    auto jacobian = [m](const Vec4& x) -> Eigen::MatrixXd {
        return polar_jacobian_g_inverse(cartesian_to_polar_raw(x)).topRows(m);
    };
    return pcrlb_general(truth, model, initial_covariance(), jacobian,
                         params.noise().observed_covariance(m));
}

enum class FilterKind { pkf = 0, spkf = 1, ekf = 2 };

inline const char* filter_name(FilterKind kind)
{
    switch (kind) {
    case FilterKind::pkf: return "pkf";
    case FilterKind::spkf: return "spkf";
    case FilterKind::ekf: return "ekf";
    }
    return "?";
}

/// One filter's trajectory through a trial. Estimates cover k = 0..n; after
/// a numerical failure the remaining entries repeat the last valid estimate
/// and `failed` records the step, so sequences keep their full length but
/// frozen entries never enter the metrics.
struct FilterTrack {
    std::vector<StateEstimate> estimates;
    bool failed = false;
    int failure_step = -1;
    std::string failure_reason;
};

/// Everything one Monte Carlo trial produces: the truth trajectory, each
/// filter's track, and the trial's lower-bound series.
struct TrialRecord {
    std::uint64_t trial_index = 0;
    std::vector<Vec4> truth;                 // length n_updates + 1
    std::array<FilterTrack, 3> tracks;       // indexed by FilterKind
    PcrlbSeries bounds;

    const FilterTrack& track(FilterKind kind) const
    {
        return tracks[static_cast<std::size_t>(kind)];
    }
    FilterTrack& track(FilterKind kind)
    {
        return tracks[static_cast<std::size_t>(kind)];
    }
};

}  // namespace pkf
