#include "varnet/distmodel.hpp"

#include <algorithm>
#include <cmath>

#include "varnet/errors.hpp"

namespace varnet {

void QuantileDistribution::validate() const {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i]) || values[i] <= 0.0) {
            throw ParameterError("quantile anchors must be finite and > 0");
        }
        if (i > 0 && values[i] < values[i - 1]) {
            throw ParameterError("quantile anchors must be nondecreasing");
        }
    }
}

void SamplingSchedule::validate() const {
    if (!std::isfinite(resample_interval) || resample_interval <= 0.0) {
        throw ParameterError("resample_interval must be finite and > 0");
    }
}

double inverse_cdf(const QuantileDistribution& dist, double u) {
    dist.validate();
    if (std::isnan(u) || u < 0.0 || u > 1.0) throw ParameterError("u must lie in [0, 1]");
    const auto& p = QuantileDistribution::kProbabilities;
    u = std::clamp(u, p.front(), p.back());
    std::size_t k = 1;
    while (k + 1 < p.size() && u > p[k]) ++k;
    if (u == p[k]) return dist.values[k];
    const double w = (u - p[k - 1]) / (p[k] - p[k - 1]);
    return dist.values[k - 1] + w * (dist.values[k] - dist.values[k - 1]);
}

double BandwidthPath::at(double t) const {
    if (values.empty()) throw ParameterError("empty bandwidth path");
    if (t < 0.0 || t > horizon) throw ParameterError("time outside path horizon");
    const auto k = static_cast<std::size_t>(std::floor(t / interval));
    return values[std::min(k, values.size() - 1)];
}

BandwidthSampler::BandwidthSampler(QuantileDistribution dist, SamplingSchedule schedule, std::uint64_t seed)
    : dist_(std::move(dist)), schedule_(schedule), rng_(seed) {
    dist_.validate();
    schedule_.validate();
    value_ = inverse_cdf(dist_, rng_.uniform());
}

void BandwidthSampler::step() {
    ++tick_;
    value_ = inverse_cdf(dist_, rng_.uniform());
}

BandwidthPath sample_path(const QuantileDistribution& dist, const SamplingSchedule& schedule, double horizon,
                          std::uint64_t seed) {
    if (!std::isfinite(horizon) || horizon <= 0.0) throw ParameterError("horizon must be finite and > 0");
    BandwidthSampler sampler(dist, schedule, seed);
    BandwidthPath path{schedule.resample_interval, horizon, {}};
    const auto ticks = static_cast<std::size_t>(std::ceil(horizon / schedule.resample_interval));
    path.values.reserve(ticks);
    for (std::size_t k = 0; k < ticks; ++k) {
        if (k > 0) sampler.step();
        path.values.push_back(sampler.value());
    }
    return path;
}

QuantileDistribution hpc_like() { return {"HPC-like", {7.7, 8.6, 9.1, 9.6, 10.4}}; }

QuantileDistribution gce_like() { return {"GCE-like", {13.0, 14.2, 14.8, 15.3, 15.8}}; }

}  // namespace varnet
