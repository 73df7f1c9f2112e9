#include "varnet/bucket.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "varnet/errors.hpp"

namespace varnet {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool ok, const char* what) {
    if (!ok) throw ParameterError(what);
}

double median_of(std::vector<double> v) {
    const std::size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    const double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + n / 2));
}

double median_range(std::span<const TraceSample> trace, std::size_t from, std::size_t to) {
    std::vector<double> v;
    v.reserve(to - from);
    for (std::size_t i = from; i < to; ++i) v.push_back(trace[i].gbps);
    return median_of(std::move(v));
}

// First index starting >= 3 consecutive samples below `threshold`, or n.
std::size_t first_sustained_drop(std::span<const TraceSample> trace, double threshold) {
    const std::size_t n = trace.size();
    for (std::size_t i = 0; i + 3 <= n; ++i) {
        if (trace[i].gbps < threshold && trace[i + 1].gbps < threshold && trace[i + 2].gbps < threshold) {
            return i;
        }
    }
    return n;
}

}  // namespace

void TokenBucketConfig::validate() const {
    require(std::isfinite(capacity) && std::isfinite(initial_budget) && std::isfinite(refill_rate) &&
                std::isfinite(high_rate) && std::isfinite(low_rate),
            "token bucket parameters must be finite");
    require(capacity >= 0.0, "capacity must be >= 0");
    require(initial_budget >= 0.0 && initial_budget <= capacity, "initial_budget must lie in [0, capacity]");
    require(low_rate > 0.0, "low_rate must be > 0");
    require(low_rate <= high_rate, "low_rate must be <= high_rate");
    require(refill_rate >= 0.0, "refill_rate must be >= 0");
    require(refill_rate <= low_rate, "refill_rate must be <= low_rate");
}

TokenBucketState reset(const TokenBucketConfig& config) {
    config.validate();
    return {config.initial_budget, 0.0};
}

double admitted_rate(const TokenBucketState& state, const TokenBucketConfig& config, double demand) {
    const double high = std::min(demand, config.high_rate);
    if (state.budget > 0.0 || high <= config.refill_rate) return high;
    return std::min(demand, config.low_rate);
}

double time_to_empty(const TokenBucketState& state, const TokenBucketConfig& config, double demand) {
    if (state.budget <= 0.0) return kInf;
    const double drain = std::min(demand, config.high_rate) - config.refill_rate;
    if (drain <= 0.0) return kInf;
    return state.budget / drain;
}

AdvanceResult advance(const TokenBucketState& state, const TokenBucketConfig& config, double demand,
                      double dt) {
    config.validate();
    require(!std::isnan(demand) && demand >= 0.0, "demand must be >= 0 and not NaN");
    require(std::isfinite(dt) && dt > 0.0, "dt must be finite and > 0");
    require(std::isfinite(state.budget) && state.budget >= 0.0 && state.budget <= config.capacity,
            "bucket budget must lie in [0, capacity]");
    require(std::isfinite(state.clock), "bucket clock must be finite");

    AdvanceResult out;
    const double t0 = state.clock;
    const double t1 = t0 + dt;
    const double high = std::min(demand, config.high_rate);
    double budget = state.budget;

    if (budget > 0.0 || high <= config.refill_rate) {
        // Non-empty bucket (or one that a sub-refill demand keeps non-empty).
        const double net = config.refill_rate - high;
        if (net >= 0.0) {
            out.segments.push_back({t0, t1, high});
            out.bits_sent = high * dt;
            out.state = {std::min(config.capacity, budget + net * dt), t1};
            return out;
        }
        const double empty_after = budget / -net;
        if (empty_after >= dt) {
            double left = budget + net * dt;
            // Snap the residue left by rounding when dt was computed as the
            // depletion instant itself.
            if (left <= 0.0 || empty_after - dt <= 1e-12 * empty_after) left = 0.0;
            out.segments.push_back({t0, t1, high});
            out.bits_sent = high * dt;
            out.state = {left, t1};
            return out;
        }
        out.segments.push_back({t0, t0 + empty_after, high});
        out.bits_sent = high * empty_after;
        budget = 0.0;
        const double rest = dt - empty_after;
        const double low = std::min(demand, config.low_rate);
        out.segments.push_back({t0 + empty_after, t1, low});
        out.bits_sent += low * rest;
        out.state = {0.0, t1};
        return out;
    }

    // Empty bucket with demand above refill: capped, budget pinned at zero.
    const double low = std::min(demand, config.low_rate);
    out.segments.push_back({t0, t1, low});
    out.bits_sent = low * dt;
    out.state = {0.0, t1};
    return out;
}

FitReport fit_token_bucket(std::span<const TraceSample> trace) {
    const std::size_t n = trace.size();
    if (n < 10) {
        throw TraceTooShort("trace has " + std::to_string(n) + " samples; at least 10 are required");
    }
    for (const auto& s : trace) {
        require(std::isfinite(s.time_s) && std::isfinite(s.gbps) && s.gbps >= 0.0,
                "trace samples must be finite with non-negative bandwidth");
    }
    const double bin = trace[1].time_s - trace[0].time_s;
    require(bin > 0.0, "trace times must be increasing");
    for (std::size_t i = 1; i < n; ++i) {
        const double step = trace[i].time_s - trace[i - 1].time_s;
        require(std::abs(step - bin) <= 1e-6 * bin, "trace must have a uniform sampling interval");
    }

    // Seed the threshold with the split of maximal plateau-median contrast.
    double best_contrast = -kInf;
    double threshold = 0.0;
    for (std::size_t c = 1; c < n; ++c) {
        const double before = median_range(trace, 0, c);
        const double after = median_range(trace, c, n);
        if (before - after > best_contrast) {
            best_contrast = before - after;
            threshold = 0.5 * (before + after);
        }
    }
    if (best_contrast <= 0.0) throw NoThrottleDetected("bandwidth never drops");

    std::size_t cp = n;
    double high = 0.0;
    double low = 0.0;
    for (int iter = 0; iter < 16; ++iter) {
        const std::size_t next = first_sustained_drop(trace, threshold);
        if (next == 0 || next == n) throw NoThrottleDetected("no sustained drop below the plateau midpoint");
        if (next == cp) break;
        cp = next;
        high = median_range(trace, 0, cp);
        low = median_range(trace, cp, n);
        threshold = 0.5 * (high + low);
    }
    if (!(low > 0.0) || high / low < 1.5) {
        throw NoThrottleDetected("plateau ratio below 1.5");
    }

    // The changepoint bin mixes both plateaus when the bucket empties mid-bin.
    const double fraction_high = std::clamp((trace[cp].gbps - low) / (high - low), 0.0, 1.0);

    FitReport report;
    report.high_rate = high;
    report.low_rate = low;
    report.depletion_time = trace[cp].time_s - trace[0].time_s + fraction_high * bin;
    report.refill_assumption = low;
    report.inferred_budget = (high - report.refill_assumption) * report.depletion_time;
    report.changepoint_index = cp;
    return report;
}

}  // namespace varnet
