#include "pkf/filters.hpp"

#include "pkf/convert.hpp"
#include "pkf/coordmap.hpp"
#include "pkf/rng.hpp"
#include "pkf/sigma.hpp"
#include "pkf/sim.hpp"

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

using namespace pkf;

namespace {

MotionModel constant_velocity(double t, double q)
{
    ScenarioParams params;
    params.update_period = t;
    params.process_noise_intensity = q;
    return build_motion_model(params);
}

}  // namespace

TEST_CASE("predict", "[filters]")
{
    SECTION("identity model leaves the estimate unchanged")
    {
        StateEstimate est;
        est.mean = Vec4(1.0, 2.0, 3.0, 4.0);
        est.covariance = 2.0 * Mat4::Identity();
        MotionModel model;  // A = I, Q = 0
        const StateEstimate out = predict(est, model);
        CHECK((out.mean - est.mean).cwiseAbs().maxCoeff() == 0.0);
        CHECK((out.covariance - est.covariance).cwiseAbs().maxCoeff() == 0.0);
        CHECK(out.time_index == 1);
    }

    SECTION("constant-velocity transition moves the position")
    {
        MotionModel model = constant_velocity(2.0, 0.0);
        StateEstimate est;
        est.mean = Vec4(0.0, 0.0, 1.0, 2.0);
        const StateEstimate out = predict(est, model);
        CHECK(out.mean[0] == Catch::Approx(2.0));
        CHECK(out.mean[1] == Catch::Approx(4.0));
    }

    SECTION("identity transition adds process noise")
    {
        StateEstimate est;
        est.covariance = Mat4::Identity();
        MotionModel model;
        model.process_noise = Mat4::Identity();
        const StateEstimate out = predict(est, model);
        CHECK((out.covariance - 2.0 * Mat4::Identity()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("pkf_update special cases", "[filters]")
{
    StateEstimate pred;
    pred.mean = Vec4(1.0, -2.0, 3.0, 4.0);
    pred.covariance = Mat4::Identity();
    pred.time_index = 5;

    SECTION("zero information leaves the estimate unchanged")
    {
        ConvertedMeasurement cm;
        cm.value = Vec4(100.0, 100.0, 100.0, 100.0);
        cm.precision = Mat4::Zero();
        const StateEstimate out = pkf_update(pred, cm);
        CHECK((out.mean - pred.mean).cwiseAbs().maxCoeff() == 0.0);
        CHECK((out.covariance - pred.covariance).cwiseAbs().maxCoeff() < 1e-14);
    }

    SECTION("matched information moves halfway")
    {
        ConvertedMeasurement cm;
        cm.value = Vec4(3.0, 0.0, 5.0, 6.0);
        cm.precision = Mat4::Identity();
        const StateEstimate out = pkf_update(pred, cm);
        CHECK((out.covariance - 0.5 * Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((out.mean - 0.5 * (pred.mean + cm.value)).cwiseAbs().maxCoeff() < 1e-12);
    }

    SECTION("diffuse prior snaps to the measurement")
    {
        StateEstimate diffuse = pred;
        diffuse.covariance = 1e12 * Mat4::Identity();
        ConvertedMeasurement cm;
        cm.value = Vec4(7.0, 8.0, 9.0, 10.0);
        cm.precision = Mat4::Identity();
        const StateEstimate out = pkf_update(diffuse, cm);
        CHECK((out.mean - cm.value).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((out.covariance - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-6);
    }

    SECTION("singular predicted covariance is an error")
    {
        StateEstimate bad = pred;
        bad.covariance = Mat4::Zero();
        ConvertedMeasurement cm;
        cm.precision = Mat4::Identity();
        CHECK_THROWS_AS(pkf_update(bad, cm), SingularityError);
    }
}

TEST_CASE("pkf_update information additivity and monotonicity", "[filters]")
{
    Rng rng(70);
    for (int i = 0; i < 100; ++i) {
        StateEstimate pred;
        pred.mean = rng.normal_vector(4);
        pred.covariance = oracle::random_spd(rng, 4, 0.5, 4.0);
        ConvertedMeasurement cm;
        cm.value = rng.normal_vector(4);
        // Rank-deficient precision, as information zeroing produces.
        const int m = 1 + static_cast<int>(rng.uniform01() * 3.999);
        Eigen::MatrixXd root(4, m);
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < m; ++c) {
                root(r, c) = rng.normal();
            }
        }
        cm.precision = symmetrize4(root * root.transpose());

        const StateEstimate out = pkf_update(pred, cm);

        // P_upd^{-1} = P_pred^{-1} + R_bar^{-1}.
        const Mat4 info_out = invert4(out.covariance, "test");
        const Mat4 info_sum = invert4(pred.covariance, "test") + cm.precision;
        CHECK((info_out - info_sum).cwiseAbs().maxCoeff() < 1e-9 * info_sum.norm());

        // P_upd <= P_pred in the Loewner order.
        const Mat4 gap = pred.covariance - out.covariance;
        CHECK(symmetric_eigenvalues(gap).minCoeff() > -1e-10 * pred.covariance.trace());

        CHECK((out.covariance - out.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("all filters match the exact Kalman filter on a linear problem", "[filters]")
{
    // Identity measurement map, all four coordinates observed: the PKF
    // conversion becomes exact and all three filters reduce to the linear
    // Kalman filter.
    const CoordinateMapPair map = oracle::identity_map(4);
    const SigmaRule rule = degree5_rule(4);
    MotionModel model = constant_velocity(1.0, 0.01);

    MeasurementNoise noise;
    noise.sigma_range = 2.0;
    noise.sigma_bearing = 1.5;
    noise.sigma_range_rate = 0.8;
    noise.sigma_cross_range_rate = 1.2;
    noise.range_rate_correlation = 0.3;
    const Mat4 r = noise.full_covariance();

    Rng rng(71);
    Vec4 truth(10.0, -5.0, 1.0, 0.5);
    const Eigen::MatrixXd r_factor = cholesky_factor(r);
    const Eigen::MatrixXd q_factor = cholesky_factor(model.process_noise);

    StateEstimate pkf_est, spkf_est, ekf_est;
    pkf_est.mean = truth + Vec4(1.0, -1.0, 0.2, -0.2);
    pkf_est.covariance = 4.0 * Mat4::Identity();
    spkf_est = pkf_est;
    ekf_est = pkf_est;
    oracle::LinearKalman exact{pkf_est.mean, pkf_est.covariance};

    double worst_mean = 0.0;
    double worst_cov = 0.0;
    for (int k = 0; k < 100; ++k) {
        truth = rng.gaussian(model.transition * truth, q_factor);
        const Eigen::VectorXd z = rng.gaussian(truth, r_factor);

        pkf_est = pkf_step(pkf_est, z, noise, model, map, rule,
                           DebiasMode::numerical_multiplicative);
        spkf_est = spkf_step(spkf_est, z, r, model, map, rule);
        ekf_est = ekf_step(ekf_est, z, r, model, map);
        exact.predict(model.transition, model.process_noise);
        exact.update(z, Mat4::Identity(), r);

        for (const StateEstimate* est : {&pkf_est, &spkf_est, &ekf_est}) {
            worst_mean = std::max(worst_mean,
                                  (est->mean - Vec4(exact.mean)).cwiseAbs().maxCoeff());
            worst_cov = std::max(
                worst_cov,
                (est->covariance - Mat4(exact.covariance)).cwiseAbs().maxCoeff());
        }
    }
    CHECK(worst_mean < 1e-8);
    CHECK(worst_cov < 1e-8);
}

TEST_CASE("pkf_step zero-noise regression tracks the truth", "[filters]")
{
    // No process or measurement noise and exact initialization: the
    // estimate follows the truth to numerical precision.
    const CoordinateMapPair map = polar_cartesian_map(2);
    const SigmaRule rule = degree5_rule(4);
    MotionModel model = constant_velocity(2.0, 0.0);

    MeasurementNoise noise;
    noise.sigma_range = 1e-6;
    noise.sigma_bearing = 1e-9;
    noise.sigma_range_rate = 1e-6;
    noise.sigma_cross_range_rate = 1e-6;
    noise.range_rate_correlation = 0.0;

    Vec4 truth(4000.0, 1000.0, -8.0, 5.0);
    StateEstimate est;
    est.mean = truth;
    est.covariance = initial_covariance();

    for (int k = 0; k < 100; ++k) {
        truth = model.transition * truth;
        const Eigen::VectorXd z = cartesian_to_polar_raw(truth).head(2);
        est = pkf_step(est, z, noise, model, map, rule);
    }
    CHECK((est.mean - truth).norm() < 1e-6 * truth.norm());
}

TEST_CASE("range/bearing gain ignores the filled-in rate entries", "[filters]")
{
    // With M = 2 the last two columns of the PKF gain vanish, so the
    // predicted rate entries of the converted measurement cannot move the
    // state: perturbing them changes nothing.
    const CoordinateMapPair map = polar_cartesian_map(2);
    const SigmaRule rule = degree5_rule(4);
    Rng rng(72);

    StateEstimate pred;
    pred.mean = Vec4(3000.0, -2000.0, 9.0, 4.0);
    pred.covariance = oracle::random_spd(rng, 4, 10.0, 200.0);

    MeasurementNoise noise;
    const ConvertedMeasurement cm = convert_measurement(
        pred.mean, pred.covariance, Eigen::Vector2d(3606.0, -0.59), noise, map, rule,
        DebiasMode::closed_form);

    const StateEstimate base = pkf_update(pred, cm);

    ConvertedMeasurement perturbed = cm;
    perturbed.value[2] += 1000.0;
    perturbed.value[3] -= 1000.0;
    const StateEstimate shifted = pkf_update(pred, perturbed);

    CHECK((base.mean - shifted.mean).cwiseAbs().maxCoeff() < 1e-12 * base.mean.norm());

    // Equivalent statement: the gain's last two columns are zero, which is
    // the same as precision columns 3 and 4 vanishing.
    CHECK(cm.precision.rightCols(2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("range/bearing/range-rate precision is fully populated", "[filters]")
{
    // On a generic geometry the rank-3 precision still couples every state
    // coordinate, including the cross-range-rate direction.
    const CoordinateMapPair map = polar_cartesian_map(3);
    const SigmaRule rule = degree5_rule(4);
    Rng rng(73);

    StateEstimate pred;
    pred.mean = Vec4(2800.0, 2100.0, -11.0, 7.0);  // bearing well off the axes
    pred.covariance = oracle::random_spd(rng, 4, 10.0, 100.0);

    MeasurementNoise noise;
    noise.sigma_range_rate = 0.1;
    const Vec4 meas = cartesian_to_polar_raw(pred.mean);
    const ConvertedMeasurement cm = convert_measurement(
        pred.mean, pred.covariance, meas.head(3), noise, map, rule,
        DebiasMode::closed_form);

    CHECK(numerical_rank(cm.precision) == 3);
    // Every row has some nonzero entry; in particular the last row/column.
    const double scale = cm.precision.cwiseAbs().maxCoeff();
    CHECK(cm.precision.row(3).cwiseAbs().maxCoeff() > 1e-8 * scale);
    CHECK(cm.precision.col(3).cwiseAbs().maxCoeff() > 1e-8 * scale);
}

TEST_CASE("ekf_step basics", "[filters]")
{
    const CoordinateMapPair map = polar_cartesian_map(2);
    MotionModel model = constant_velocity(2.0, 0.0);

    SECTION("noiseless innovations vanish once converged")
    {
        MeasurementNoise noise;
        noise.sigma_range = 1e-3;
        noise.sigma_bearing = 1e-6;
        const Eigen::MatrixXd r = noise.observed_covariance(2);
        Vec4 truth(4000.0, 1000.0, -8.0, 5.0);
        StateEstimate est;
        est.mean = truth;
        est.covariance = initial_covariance();
        for (int k = 0; k < 50; ++k) {
            truth = model.transition * truth;
            est = ekf_step(est, cartesian_to_polar_raw(truth).head(2), r, model, map);
        }
        CHECK((est.mean - truth).norm() < 1e-3);
    }

    SECTION("diffuse prior lands on the converted measurement position")
    {
        MeasurementNoise noise;
        const Eigen::MatrixXd r = noise.observed_covariance(2);
        StateEstimate est;
        est.mean = Vec4(3900.0, 300.0, 0.0, 0.0);
        est.covariance = Vec4(1e8, 1e8, 100.0, 100.0).asDiagonal();
        MotionModel still;  // A = I, Q = 0 keeps the prior where it is

        Eigen::Vector2d z(4100.0, 0.13);
        const StateEstimate out = ekf_step(est, z, r, still, map);
        const Vec4 converted = polar_to_cartesian_raw(Vec4(z[0], z[1], 0.0, 0.0));
        CHECK((out.mean.head<2>() - converted.head<2>()).norm() < 0.01 * z[0]);
    }

    SECTION("bearing innovation is wrapped across the seam")
    {
        MeasurementNoise noise;
        const Eigen::MatrixXd r = noise.observed_covariance(2);
        StateEstimate est;
        est.mean = Vec4(-4000.0, -20.0, 0.0, 0.0);  // bearing just below +pi... actually -pi side
        est.covariance = initial_covariance();
        MotionModel still;
        // Measurement on the other side of the seam.
        Eigen::Vector2d z(4000.0, kPi - 0.001);
        const StateEstimate out = ekf_step(est, z, r, still, map);
        // An unwrapped filter would jump by thousands of meters; the wrapped
        // innovation keeps the update local.
        CHECK((out.mean.head<2>() - est.mean.head<2>()).norm() < 100.0);
    }
}

TEST_CASE("spkf_step matches an independent Gaussian-filter update", "[filters]")
{
    const SigmaRule rule = degree5_rule(4);
    Rng rng(74);

    for (int trial = 0; trial < 100; ++trial) {
        const int m = 2 + static_cast<int>(rng.uniform01() * 1.999);
        const CoordinateMapPair map = polar_cartesian_map(m);
        MotionModel still;  // isolate the measurement update

        StateEstimate est;
        est.mean = Vec4(rng.uniform(1000.0, 6000.0), rng.uniform(-3000.0, 3000.0),
                        rng.uniform(-25.0, 25.0), rng.uniform(-25.0, 25.0));
        est.covariance = oracle::random_spd(rng, 4, 5.0, 100.0);

        MeasurementNoise noise;
        const Eigen::MatrixXd r = noise.observed_covariance(m);
        const Vec4 meas = cartesian_to_polar_raw(est.mean);
        Eigen::VectorXd z = meas.head(m);
        z[0] += rng.normal(0.0, 30.0);
        z[1] += rng.normal(0.0, 0.05);

        const StateEstimate out = spkf_step(est, z, r, still, map, rule);

        auto h_m = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd {
            return cartesian_to_polar_raw(Vec4(x)).head(m);
        };
        const auto ref = oracle::gaussian_filter_update(est.mean, est.covariance, z, r,
                                                        rule.points, rule.weights, h_m);
        CHECK((out.mean - Vec4(ref.mean)).cwiseAbs().maxCoeff() <
              1e-8 * (1.0 + ref.mean.cwiseAbs().maxCoeff()));
        CHECK((out.covariance - Mat4(ref.covariance)).cwiseAbs().maxCoeff() <
              1e-8 * (1.0 + ref.covariance.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("spkf_step stays finite over a nominal run", "[filters]")
{
    const CoordinateMapPair map = polar_cartesian_map(2);
    const SigmaRule rule = degree5_rule(4);
    MotionModel model = constant_velocity(2.0, 0.44 * 0.44);

    MeasurementNoise noise;
    const Eigen::MatrixXd r = noise.observed_covariance(2);
    const Eigen::MatrixXd r_factor = cholesky_factor(r);
    const Eigen::MatrixXd q_factor = cholesky_factor(model.process_noise);

    Rng rng(75);
    Vec4 truth(4000.0, 0.0, 5.0, 15.0);
    StateEstimate est = initialize_filter(truth, rng);
    double nees_total = 0.0;
    for (int k = 0; k < 100; ++k) {
        truth = rng.gaussian(model.transition * truth, q_factor);
        Eigen::VectorXd z = cartesian_to_polar_raw(truth).head(2);
        z = rng.gaussian(z, r_factor);
        est = spkf_step(est, z, r, model, map, rule);
        const Vec4 err = est.mean - truth;
        nees_total += err.dot(invert4(est.covariance, "test") * err);
    }
    CHECK(std::isfinite(nees_total));
    CHECK(nees_total / (4.0 * 100.0) < 10.0);
    CHECK((est.mean.head<2>() - truth.head<2>()).norm() < 1000.0);
}

TEST_CASE("covariance symmetry is maintained over long runs", "[filters]")
{
    const CoordinateMapPair map = polar_cartesian_map(2);
    const SigmaRule rule = degree5_rule(4);
    MotionModel model = constant_velocity(2.0, 0.44 * 0.44);
    MeasurementNoise noise;
    const Eigen::MatrixXd r = noise.observed_covariance(2);
    const Eigen::MatrixXd r_factor = cholesky_factor(r);
    const Eigen::MatrixXd q_factor = cholesky_factor(model.process_noise);

    Rng rng(76);
    Vec4 truth(4000.0, -1500.0, 12.0, -7.0);
    StateEstimate pkf_est = initialize_filter(truth, rng);
    StateEstimate spkf_est = pkf_est;
    StateEstimate ekf_est = pkf_est;

    for (int k = 0; k < 100; ++k) {
        truth = rng.gaussian(model.transition * truth, q_factor);
        Eigen::VectorXd z = cartesian_to_polar_raw(truth).head(2);
        z = rng.gaussian(z, r_factor);
        pkf_est = pkf_step(pkf_est, z, noise, model, map, rule);
        spkf_est = spkf_step(spkf_est, z, r, model, map, rule);
        ekf_est = ekf_step(ekf_est, z, r, model, map);
        for (const StateEstimate* est : {&pkf_est, &spkf_est, &ekf_est}) {
            CHECK((est->covariance - est->covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
            CHECK(symmetric_eigenvalues(est->covariance).minCoeff() >
                  -1e-12 * est->covariance.trace());
        }
    }
}
