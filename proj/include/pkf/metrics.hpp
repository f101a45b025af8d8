#pragma once

#include "pkf/common.hpp"
#include "pkf/sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pkf {

/// Inverse standard-normal CDF (Acklam's rational approximation,
/// |error| < 1.2e-9).
inline double normal_quantile(double p)
{
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("normal_quantile: p must be in (0, 1)");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    static constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - p_low) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

/// Chi-square quantile via the Wilson-Hilferty cube approximation; at the
/// degrees of freedom used here (hundreds to thousands) the relative error
/// is below 1e-5.
inline double chi_square_quantile(double p, double dof)
{
    if (!(dof > 0.0)) {
        throw std::domain_error("chi_square_quantile: dof must be > 0");
    }
    const double z = normal_quantile(p);
    const double t = 2.0 / (9.0 * dof);
    const double cube = 1.0 - t + z * std::sqrt(t);
    return dof * cube * cube * cube;
}

/// Average normalized estimation error squared over a set of (error,
/// covariance) samples: (1 / (N L)) sum e^t P^{-1} e.
inline double anees(const std::vector<Vec4>& errors, const std::vector<Mat4>& covariances)
{
    if (errors.empty() || errors.size() != covariances.size()) {
        throw std::domain_error("anees: need equal-length nonempty samples");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        Eigen::PartialPivLU<Mat4> lu(covariances[i]);
        const Vec4 solved = lu.solve(errors[i]);
        if (!solved.allFinite()) {
            std::ostringstream msg;
            msg << "anees: singular covariance at sample " << i;
            throw SingularityError(msg.str());
        }
        total += errors[i].dot(solved);
    }
    return total / (4.0 * static_cast<double>(errors.size()));
}

/// Two-sided chi-square band for the ANEES of a consistent filter:
/// N L psi is chi-square with N L degrees of freedom.
inline std::pair<double, double> anees_confidence(int state_dim, int trial_count, double level)
{
    const double dof = static_cast<double>(state_dim) * trial_count;
    if (!(dof >= 1.0)) {
        throw std::domain_error("anees_confidence: N * L must be >= 1");
    }
    if (!(level > 0.0 && level < 1.0)) {
        if (level == 0.0) {
            const double median = chi_square_quantile(0.5, dof) / dof;
            return {median, median};
        }
        throw std::domain_error("anees_confidence: level must be in [0, 1)");
    }
    return {chi_square_quantile((1.0 - level) / 2.0, dof) / dof,
            chi_square_quantile((1.0 + level) / 2.0, dof) / dof};
}

/// Mean squared error over the selected state components (0-based indices).
inline double mse(const std::vector<Vec4>& errors, const std::vector<int>& components)
{
    if (components.empty()) {
        throw std::domain_error("mse: component selection must be nonempty");
    }
    if (errors.empty()) {
        throw std::domain_error("mse: need at least one error sample");
    }
    double total = 0.0;
    for (const Vec4& e : errors) {
        for (int c : components) {
            total += e[c] * e[c];
        }
    }
    return total / static_cast<double>(errors.size());
}

/// A track is lost if the filter failed numerically, or if its position
/// error exceeds the threshold at every one of the final ten updates.
inline bool track_lost(const TrialRecord& trial, FilterKind kind, double threshold_m)
{
    const FilterTrack& track = trial.track(kind);
    if (track.failed) {
        return true;
    }
    const int n = static_cast<int>(trial.truth.size()) - 1;
    const int first = std::max(1, n - 9);
    for (int k = first; k <= n; ++k) {
        const Eigen::Vector2d pos_err =
            track.estimates[static_cast<std::size_t>(k)].mean.head<2>() -
            trial.truth[static_cast<std::size_t>(k)].head<2>();
        if (pos_err.norm() <= threshold_m) {
            return false;
        }
    }
    return true;
}

/// Normal-approximation binomial interval on the lost-track count, rounded
/// to integers. No interval exists when no track was lost.
inline std::optional<std::pair<int, int>> loss_confidence(int losses, int trial_count)
{
    if (losses < 0 || trial_count < 1 || losses > trial_count) {
        throw std::domain_error("loss_confidence: need 0 <= losses <= trials");
    }
    if (losses == 0) {
        return std::nullopt;
    }
    const double p_hat = static_cast<double>(losses) / trial_count;
    const double half_width = 1.96 * std::sqrt(p_hat * (1.0 - p_hat) / trial_count);
    const double lo = trial_count * (p_hat - half_width);
    const double hi = trial_count * (p_hat + half_width);
    return std::make_pair(static_cast<int>(std::lround(lo)),
                          static_cast<int>(std::lround(hi)));
}

/// Normal-approximation interval on the mean of the squared errors.
inline std::optional<std::pair<double, double>> mse_confidence(
    const std::vector<double>& squared_errors, double level)
{
    if (squared_errors.empty()) {
        return std::nullopt;
    }
    const double n = static_cast<double>(squared_errors.size());
    double mean = 0.0;
    for (double v : squared_errors) {
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    if (squared_errors.size() > 1) {
        for (double v : squared_errors) {
            var += (v - mean) * (v - mean);
        }
        var /= (n - 1.0);
    }
    const double z = normal_quantile(0.5 * (1.0 + level));
    const double half_width = z * std::sqrt(var / n);
    return std::make_pair(mean - half_width, mean + half_width);
}

/// Per-update series for one filter plus its track-loss summary. Array
/// index 0 corresponds to update k = 1.
struct FilterMetrics {
    std::vector<double> anees, anees_lo, anees_hi;
    std::vector<double> mse_pos, mse_pos_lo, mse_pos_hi;
    std::vector<double> mse_vel, mse_vel_lo, mse_vel_hi;
    int trials = 0;
    int lost = 0;
    std::optional<std::pair<int, int>> loss_ci;
};

struct MetricsSeries {
    std::vector<double> pcrlb_pos, pcrlb_vel;  // averaged over trials, k = 1..n
    std::map<FilterKind, FilterMetrics> per_filter;
};

/// Reduces trial records to the reported series. Lost trials are excluded
/// from the MSE averages and intervals; ANEES keeps them unless configured
/// otherwise, but numerically failed trials can contribute nothing and are
/// always dropped from ANEES.
inline MetricsSeries aggregate_metrics(const std::vector<TrialRecord>& records,
                                       const std::vector<FilterKind>& filters,
                                       double track_loss_threshold,
                                       bool anees_excludes_lost,
                                       double level = 0.95)
{
    if (records.empty()) {
        throw std::domain_error("aggregate_metrics: no trials");
    }
    const int n = static_cast<int>(records.front().truth.size()) - 1;

    MetricsSeries series;
    series.pcrlb_pos.assign(n, 0.0);
    series.pcrlb_vel.assign(n, 0.0);
    for (const TrialRecord& rec : records) {
        for (int k = 1; k <= n; ++k) {
            series.pcrlb_pos[k - 1] += rec.bounds.position[static_cast<std::size_t>(k)];
            series.pcrlb_vel[k - 1] += rec.bounds.velocity[static_cast<std::size_t>(k)];
        }
    }
    const double inv_trials = 1.0 / static_cast<double>(records.size());
    for (int k = 0; k < n; ++k) {
        series.pcrlb_pos[k] *= inv_trials;
        series.pcrlb_vel[k] *= inv_trials;
    }

    for (FilterKind kind : filters) {
        FilterMetrics fm;
        fm.trials = static_cast<int>(records.size());

        std::vector<bool> lost(records.size());
        for (std::size_t l = 0; l < records.size(); ++l) {
            lost[l] = track_lost(records[l], kind, track_loss_threshold);
            fm.lost += lost[l] ? 1 : 0;
        }
        fm.loss_ci = loss_confidence(fm.lost, fm.trials);

        for (int k = 1; k <= n; ++k) {
            std::vector<Vec4> anees_errors;
            std::vector<Mat4> anees_covs;
            std::vector<double> sq_pos, sq_vel;
            for (std::size_t l = 0; l < records.size(); ++l) {
                const FilterTrack& track = records[l].track(kind);
                if (track.failed && track.failure_step <= k) {
                    continue;
                }
                const Vec4 err = track.estimates[static_cast<std::size_t>(k)].mean -
                                 records[l].truth[static_cast<std::size_t>(k)];
                if (!(anees_excludes_lost && lost[l])) {
                    anees_errors.push_back(err);
                    anees_covs.push_back(
                        track.estimates[static_cast<std::size_t>(k)].covariance);
                }
                if (!lost[l]) {
                    sq_pos.push_back(err.head<2>().squaredNorm());
                    sq_vel.push_back(err.tail<2>().squaredNorm());
                }
            }

            if (anees_errors.empty()) {
                fm.anees.push_back(std::numeric_limits<double>::quiet_NaN());
                fm.anees_lo.push_back(std::numeric_limits<double>::quiet_NaN());
                fm.anees_hi.push_back(std::numeric_limits<double>::quiet_NaN());
            } else {
                fm.anees.push_back(anees(anees_errors, anees_covs));
                const auto band = anees_confidence(
                    4, static_cast<int>(anees_errors.size()), level);
                fm.anees_lo.push_back(band.first);
                fm.anees_hi.push_back(band.second);
            }

            auto record_mse = [&](const std::vector<double>& sq, std::vector<double>& out,
                                  std::vector<double>& out_lo, std::vector<double>& out_hi) {
                const auto ci = mse_confidence(sq, level);
                if (!ci) {
                    out.push_back(std::numeric_limits<double>::quiet_NaN());
                    out_lo.push_back(std::numeric_limits<double>::quiet_NaN());
                    out_hi.push_back(std::numeric_limits<double>::quiet_NaN());
                    return;
                }
                double mean = 0.0;
                for (double v : sq) {
                    mean += v;
                }
                out.push_back(mean / static_cast<double>(sq.size()));
                out_lo.push_back(ci->first);
                out_hi.push_back(ci->second);
            };
            record_mse(sq_pos, fm.mse_pos, fm.mse_pos_lo, fm.mse_pos_hi);
            record_mse(sq_vel, fm.mse_vel, fm.mse_vel_lo, fm.mse_vel_hi);
        }
        series.per_filter.emplace(kind, std::move(fm));
    }
    return series;
}

}  // namespace pkf
