#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "varnet/rng.hpp"

namespace varnet {

/// Bandwidth distribution known only through five percentiles. Sampling
/// draws u ~ U(0,1), clamps it to [0.01, 0.99] and interpolates linearly
/// between the bracketing anchors.
struct QuantileDistribution {
    static constexpr std::array<double, 5> kProbabilities{0.01, 0.25, 0.50, 0.75, 0.99};

    std::string name;
    std::array<double, 5> values{};  // Gbps at kProbabilities

    /// Strictly positive, finite, nondecreasing.
    void validate() const;

    double min() const { return values.front(); }
    double max() const { return values.back(); }
};

struct SamplingSchedule {
    double resample_interval = 5.0;
    bool per_node_independent = true;

    void validate() const;
};

double inverse_cdf(const QuantileDistribution& dist, double u);

/// Piecewise-constant bandwidth over [0, horizon]; segment k covers
/// [k * interval, min((k + 1) * interval, horizon)).
struct BandwidthPath {
    double interval = 0.0;
    double horizon = 0.0;
    std::vector<double> values;

    double at(double t) const;
};

/// Lazily draws one value per resample tick, tick 0 at t = 0. Produces the
/// same sequence as sample_path for the same seed.
class BandwidthSampler {
public:
    BandwidthSampler(QuantileDistribution dist, SamplingSchedule schedule, std::uint64_t seed);

    double value() const { return value_; }
    std::uint64_t tick() const { return tick_; }
    double next_tick_time() const { return static_cast<double>(tick_ + 1) * schedule_.resample_interval; }
    void step();

private:
    QuantileDistribution dist_;
    SamplingSchedule schedule_;
    Rng rng_;
    std::uint64_t tick_ = 0;
    double value_ = 0.0;
};

BandwidthPath sample_path(const QuantileDistribution& dist, const SamplingSchedule& schedule, double horizon,
                          std::uint64_t seed);

/// Bundled examples: 7.7-10.4 Gbps and 13-15.8 Gbps ranges with
/// illustrative interior anchors.
QuantileDistribution hpc_like();
QuantileDistribution gce_like();

}  // namespace varnet
