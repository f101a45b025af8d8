#pragma once

#include "pkf/common.hpp"
#include "pkf/convert.hpp"
#include "pkf/filters.hpp"
#include "pkf/metrics.hpp"
#include "pkf/rng.hpp"
#include "pkf/sim.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace pkf {

/// Raised for malformed or out-of-range configuration input.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Full experiment description: scenario, trial count, seeding, filter
/// selection, debias form, loss criterion and output location.
struct ExperimentConfig {
    ScenarioParams scenario;
    int trials = 1000;
    std::uint64_t seed = 1;
    std::vector<FilterKind> filters = {FilterKind::pkf, FilterKind::spkf, FilterKind::ekf};
    DebiasMode debias = DebiasMode::closed_form;
    double track_loss_threshold = 1000.0;  // meters
    bool anees_excludes_lost = false;
    std::string output_dir = ".";

    void validate() const
    {
        scenario.validate();
        if (trials < 1) {
            throw ConfigError("trials must be >= 1");
        }
        if (filters.empty()) {
            throw ConfigError("at least one filter must be selected");
        }
        if (!(track_loss_threshold > 0.0)) {
            throw ConfigError("track_loss_threshold must be > 0");
        }
    }
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) {
        return "";
    }
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& key, const std::string& value)
{
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid numeric value for '" + key + "': " + value);
    }
}

inline long long parse_int(const std::string& key, const std::string& value)
{
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError("invalid integer value for '" + key + "': " + value);
    }
}

inline bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("invalid boolean value for '" + key + "': " + value);
}

}  // namespace detail

inline ObservedSet parse_case(const std::string& value)
{
    if (value == "rb") return ObservedSet::range_bearing;
    if (value == "rbd") return ObservedSet::range_bearing_range_rate;
    throw ConfigError("unknown case '" + value + "' (expected rb or rbd)");
}

inline DebiasMode parse_debias(const std::string& value)
{
    if (value == "closed") return DebiasMode::closed_form;
    if (value == "mult") return DebiasMode::numerical_multiplicative;
    if (value == "add") return DebiasMode::numerical_additive;
    throw ConfigError("unknown debias mode '" + value + "' (expected closed, mult or add)");
}

inline std::vector<FilterKind> parse_filters(const std::string& value)
{
    std::vector<FilterKind> filters;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = detail::trim(item);
        if (item == "pkf") filters.push_back(FilterKind::pkf);
        else if (item == "spkf") filters.push_back(FilterKind::spkf);
        else if (item == "ekf") filters.push_back(FilterKind::ekf);
        else throw ConfigError("unknown filter '" + item + "'");
    }
    if (filters.empty()) {
        throw ConfigError("empty filter list");
    }
    return filters;
}

/// Applies one key/value setting. Keys mirror the config-file syntax; the
/// CLI funnels through the same path so file and flags cannot drift.
inline void apply_config_entry(ExperimentConfig& config,
                               const std::string& key,
                               const std::string& value)
{
    using detail::parse_bool;
    using detail::parse_double;
    using detail::parse_int;

    if (key == "trials") config.trials = static_cast<int>(parse_int(key, value));
    else if (key == "seed") config.seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "case") config.scenario.observed = parse_case(value);
    else if (key == "filters") config.filters = parse_filters(value);
    else if (key == "debias") config.debias = parse_debias(value);
    else if (key == "n_updates") config.scenario.n_updates = static_cast<int>(parse_int(key, value));
    else if (key == "update_period") config.scenario.update_period = parse_double(key, value);
    else if (key == "sigma_r") config.scenario.sigma_range = parse_double(key, value);
    else if (key == "sigma_alpha") config.scenario.sigma_bearing = parse_double(key, value);
    else if (key == "sigma_rdot") config.scenario.sigma_range_rate = parse_double(key, value);
    else if (key == "sigma_cdot") config.scenario.sigma_cross_range_rate = parse_double(key, value);
    else if (key == "rho") config.scenario.range_rate_correlation = parse_double(key, value);
    else if (key == "q") config.scenario.process_noise_intensity = parse_double(key, value);
    else if (key == "init_range_mean") config.scenario.init_range_mean = parse_double(key, value);
    else if (key == "init_range_std") config.scenario.init_range_std = parse_double(key, value);
    else if (key == "speed_scale") config.scenario.speed_scale = parse_double(key, value);
    else if (key == "track_loss_threshold") config.track_loss_threshold = parse_double(key, value);
    else if (key == "anees_excludes_lost") config.anees_excludes_lost = parse_bool(key, value);
    else if (key == "output_dir") config.output_dir = value;
    else throw ConfigError("unknown configuration key '" + key + "'");
}

/// Parses a flat `key = value` configuration file (UTF-8, '#' comments)
/// on top of the paper-default case-one configuration.
inline ExperimentConfig parse_config_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    ExperimentConfig config;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.erase(hash);
        }
        line = detail::trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        }
        apply_config_entry(config, detail::trim(line.substr(0, eq)),
                           detail::trim(line.substr(eq + 1)));
    }
    return config;
}

/// Runs a single trial: shared truth and measurement stream for all
/// filters, each consuming identical realizations. A filter failure is
/// recorded on its track and never aborts the trial.
inline TrialRecord run_single_trial(const ExperimentConfig& config,
                                    std::uint64_t trial_index,
                                    const MotionModel& model,
                                    const CoordinateMapPair& map,
                                    const SigmaRule& rule)
{
    const ScenarioParams& sc = config.scenario;
    const int n = sc.n_updates;
    const int m = sc.observed_count();
    const MeasurementNoise noise = sc.noise();
    const Eigen::MatrixXd observed_cov = noise.observed_covariance(m);

    Rng rng = Rng::substream(config.seed, trial_index);

    TrialRecord record;
    record.trial_index = trial_index;
    record.truth.reserve(static_cast<std::size_t>(n) + 1);
    record.truth.push_back(sample_initial_truth(rng, sc));

    const StateEstimate init = initialize_filter(record.truth.front(), rng);
    for (FilterKind kind : config.filters) {
        FilterTrack& track = record.track(kind);
        track.estimates.reserve(static_cast<std::size_t>(n) + 1);
        track.estimates.push_back(init);
    }

    for (int k = 1; k <= n; ++k) {
        record.truth.push_back(propagate_truth(record.truth.back(), model, rng));
        const Eigen::VectorXd z = synthesize_measurement(record.truth.back(), sc, rng);

        for (FilterKind kind : config.filters) {
            FilterTrack& track = record.track(kind);
            if (track.failed) {
                track.estimates.push_back(track.estimates.back());
                continue;
            }
            try {
                switch (kind) {
                case FilterKind::pkf:
                    track.estimates.push_back(pkf_step(track.estimates.back(), z, noise,
                                                       model, map, rule, config.debias));
                    break;
                case FilterKind::spkf:
                    track.estimates.push_back(spkf_step(track.estimates.back(), z,
                                                        observed_cov, model, map, rule));
                    break;
                case FilterKind::ekf:
                    track.estimates.push_back(ekf_step(track.estimates.back(), z,
                                                       observed_cov, model, map));
                    break;
                }
            } catch (const NumericalError& err) {
                track.failed = true;
                track.failure_step = k;
                track.failure_reason = err.what();
                track.estimates.push_back(track.estimates.back());
            }
        }
    }

    record.bounds = pcrlb(record.truth, sc, model);
    return record;
}

/// Worker count: the PKF_THREADS environment variable caps it, otherwise
/// hardware concurrency.
inline int worker_count(int trials)
{
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers < 1) {
        workers = 1;
    }
    if (const char* env = std::getenv("PKF_THREADS")) {
        int requested = 0;
        const auto [ptr, ec] = std::from_chars(env, env + std::string(env).size(), requested);
        if (ec == std::errc() && requested >= 1) {
            workers = requested;
        }
    }
    return std::min(workers, trials);
}

/// Runs all trials (trial-parallel) and returns the per-trial records in
/// trial-index order, so downstream aggregation is independent of worker
/// scheduling.
inline std::vector<TrialRecord> run_trials(const ExperimentConfig& config)
{
    config.validate();
    const MotionModel model = build_motion_model(config.scenario);
    const CoordinateMapPair map = polar_cartesian_map(config.scenario.observed_count());
    const SigmaRule rule = degree5_rule(4);

    std::vector<TrialRecord> records(static_cast<std::size_t>(config.trials));
    std::atomic<int> next{0};
    auto work = [&]() {
        for (;;) {
            const int index = next.fetch_add(1);
            if (index >= config.trials) {
                return;
            }
            records[static_cast<std::size_t>(index)] = run_single_trial(
                config, static_cast<std::uint64_t>(index), model, map, rule);
        }
    };

    const int workers = worker_count(config.trials);
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int i = 0; i < workers; ++i) {
            pool.emplace_back(work);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }
    return records;
}

namespace detail {

/// Fixed 9-significant-digit, locale-independent formatting; byte-stable
/// across runs and thread counts.
inline std::string format_number(double value)
{
    char buf[64];
    const int written = std::snprintf(buf, sizeof(buf), "%.9g", value);
    return std::string(buf, static_cast<std::size_t>(written));
}

}  // namespace detail

inline void write_metrics_csv(const std::string& path,
                              const MetricsSeries& series,
                              const std::vector<FilterKind>& filters)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "k,filter,anees,anees_lo,anees_hi,mse_pos,mse_pos_lo,mse_pos_hi,"
           "mse_vel,mse_vel_lo,mse_vel_hi,pcrlb_pos,pcrlb_vel\n";
    const std::size_t n = series.pcrlb_pos.size();
    for (std::size_t k = 0; k < n; ++k) {
        for (FilterKind kind : filters) {
            const FilterMetrics& fm = series.per_filter.at(kind);
            out << (k + 1) << ',' << filter_name(kind) << ','
                << detail::format_number(fm.anees[k]) << ','
                << detail::format_number(fm.anees_lo[k]) << ','
                << detail::format_number(fm.anees_hi[k]) << ','
                << detail::format_number(fm.mse_pos[k]) << ','
                << detail::format_number(fm.mse_pos_lo[k]) << ','
                << detail::format_number(fm.mse_pos_hi[k]) << ','
                << detail::format_number(fm.mse_vel[k]) << ','
                << detail::format_number(fm.mse_vel_lo[k]) << ','
                << detail::format_number(fm.mse_vel_hi[k]) << ','
                << detail::format_number(series.pcrlb_pos[k]) << ','
                << detail::format_number(series.pcrlb_vel[k]) << '\n';
        }
    }
}

inline void write_summary_csv(const std::string& path,
                              const MetricsSeries& series,
                              const std::vector<FilterKind>& filters)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    out << "filter,trials,lost,loss_ci_lo,loss_ci_hi\n";
    for (FilterKind kind : filters) {
        const FilterMetrics& fm = series.per_filter.at(kind);
        out << filter_name(kind) << ',' << fm.trials << ',' << fm.lost << ',';
        if (fm.loss_ci) {
            out << fm.loss_ci->first << ',' << fm.loss_ci->second;
        } else {
            out << ',';
        }
        out << '\n';
    }
}

inline void write_config_echo(const std::string& path, const ExperimentConfig& config)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path);
    }
    const ScenarioParams& sc = config.scenario;
    out << "case = " << (sc.observed == ObservedSet::range_bearing ? "rb" : "rbd") << '\n'
        << "trials = " << config.trials << '\n'
        << "seed = " << config.seed << '\n';
    out << "filters = ";
    for (std::size_t i = 0; i < config.filters.size(); ++i) {
        out << (i ? "," : "") << filter_name(config.filters[i]);
    }
    out << '\n';
    const char* debias = config.debias == DebiasMode::closed_form            ? "closed"
                         : config.debias == DebiasMode::numerical_multiplicative ? "mult"
                                                                                 : "add";
    out << "debias = " << debias << '\n'
        << "n_updates = " << sc.n_updates << '\n'
        << "update_period = " << detail::format_number(sc.update_period) << '\n'
        << "sigma_r = " << detail::format_number(sc.sigma_range) << '\n'
        << "sigma_alpha = " << detail::format_number(sc.sigma_bearing) << '\n'
        << "sigma_rdot = " << detail::format_number(sc.sigma_range_rate) << '\n'
        << "sigma_cdot = " << detail::format_number(sc.sigma_cross_range_rate) << '\n'
        << "rho = " << detail::format_number(sc.range_rate_correlation) << '\n'
        << "q = " << detail::format_number(sc.process_noise_intensity) << '\n'
        << "init_range_mean = " << detail::format_number(sc.init_range_mean) << '\n'
        << "init_range_std = " << detail::format_number(sc.init_range_std) << '\n'
        << "speed_scale = " << detail::format_number(sc.speed_scale) << '\n'
        << "track_loss_threshold = " << detail::format_number(config.track_loss_threshold) << '\n'
        << "anees_excludes_lost = " << (config.anees_excludes_lost ? "true" : "false") << '\n'
        << "output_dir = " << config.output_dir << '\n';
}

/// Runs the full Monte Carlo experiment and writes metrics.csv, summary.csv
/// and config.txt into the output directory.
inline MetricsSeries run_experiment(const ExperimentConfig& config)
{
    const std::vector<TrialRecord> records = run_trials(config);
    MetricsSeries series = aggregate_metrics(records, config.filters,
                                             config.track_loss_threshold,
                                             config.anees_excludes_lost);
    const std::filesystem::path dir(config.output_dir);
    std::filesystem::create_directories(dir);
    write_metrics_csv((dir / "metrics.csv").string(), series, config.filters);
    write_summary_csv((dir / "summary.csv").string(), series, config.filters);
    write_config_echo((dir / "config.txt").string(), config);
    return series;
}

}  // namespace pkf
