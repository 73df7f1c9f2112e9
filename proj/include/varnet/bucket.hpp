#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace varnet {

/// Parameters of a per-VM token-bucket shaper. Budgets are in Gbit, rates in
/// Gbps (refill in Gbit/s). One token is one Gbit sent.
struct TokenBucketConfig {
    double capacity = 0.0;
    double initial_budget = 0.0;
    double refill_rate = 0.0;
    double high_rate = 0.0;
    double low_rate = 0.0;

    /// Throws ParameterError unless 0 <= initial <= capacity,
    /// 0 < low <= high and 0 <= refill <= low, all finite.
    void validate() const;
};

struct TokenBucketState {
    double budget = 0.0;
    double clock = 0.0;
};

/// Constant-rate piece of a bandwidth trace over [start, end).
struct RateSegment {
    double start = 0.0;
    double end = 0.0;
    double gbps = 0.0;
};

struct AdvanceResult {
    std::vector<RateSegment> segments;  // one or two pieces covering the step
    double bits_sent = 0.0;
    TokenBucketState state;
};

TokenBucketState reset(const TokenBucketConfig& config);

/// Moves the bucket forward by `dt` seconds under a constant `demand` (Gbps,
/// +inf means "as fast as allowed"). The depletion instant is solved in
/// closed form, so the result carries no discretization error.
AdvanceResult advance(const TokenBucketState& state, const TokenBucketConfig& config, double demand,
                      double dt);

/// Rate the shaper currently admits for `demand`.
double admitted_rate(const TokenBucketState& state, const TokenBucketConfig& config, double demand);

/// Seconds until the budget reaches zero under constant `demand`; +inf when
/// the budget is not draining.
double time_to_empty(const TokenBucketState& state, const TokenBucketConfig& config, double demand);

struct TraceSample {
    double time_s = 0.0;
    double gbps = 0.0;
};

/// Result of fitting a token bucket to a throughput trace. The budget is
/// inferred assuming the refill rate equals the low rate.
struct FitReport {
    double high_rate = 0.0;
    double low_rate = 0.0;
    double depletion_time = 0.0;
    double inferred_budget = 0.0;
    std::size_t changepoint_index = 0;
    double refill_assumption = 0.0;
};

/// Locates the throttle changepoint in a uniformly sampled trace of
/// per-bin average bandwidths.
///
/// The changepoint is the first sample that starts a run of at least three
/// samples below the midpoint of the before/after plateau medians. The
/// depletion instant is refined inside the changepoint bin by linear
/// interpolation of that bin's average between the two plateaus, so a bucket
/// emptying mid-bin is located to sub-bin accuracy.
///
/// Throws TraceTooShort for fewer than 10 samples, NoThrottleDetected when
/// no sustained drop exists or the plateau ratio is below 1.5, and
/// ParameterError for a non-uniform or non-finite trace.
FitReport fit_token_bucket(std::span<const TraceSample> trace);

}  // namespace varnet
