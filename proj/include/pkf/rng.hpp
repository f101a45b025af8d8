#pragma once

#include "pkf/common.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace pkf {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic random stream. The generator is mt19937_64 (bit-exact output
/// is pinned by the standard); all variate transforms are implemented here so
/// sequences are reproducible across platforms and library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(splitmix64(seed)) {}

    /// Independent substream for a trial index, derived from the root seed.
    /// Trials draw from their own stream, so results do not depend on worker
    /// scheduling.
    static Rng substream(std::uint64_t root_seed, std::uint64_t index)
    {
        return Rng(splitmix64(root_seed ^ (0x9E3779B97F4A7C15ULL * (index + 1))));
    }

    /// Uniform on the open interval (0, 1).
    double uniform01()
    {
        return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Standard normal via Box-Muller; pairs are cached.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * kPi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Chi-square with 2 degrees of freedom (an exponential with mean 2).
    double chi_square_2() { return -2.0 * std::log(uniform01()); }

    Eigen::VectorXd normal_vector(Eigen::Index n)
    {
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            v[i] = normal();
        }
        return v;
    }

    /// Sample from N(mean, L L^t) given the lower Cholesky factor L.
    Eigen::VectorXd gaussian(const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol_lower)
    {
        return mean + chol_lower * normal_vector(mean.size());
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pkf
