#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "varnet/bucket.hpp"
#include "varnet/distmodel.hpp"

namespace varnet {

struct StaticLink {
    double rate = 0.0;
};

struct QuantileLink {
    QuantileDistribution distribution;
    SamplingSchedule schedule;
};

/// Multiplicative contention factor applied to what a shaper admits. Tokens
/// are still debited at the admitted rate.
struct RateNoise {
    QuantileDistribution factor;
    SamplingSchedule schedule;
};

struct BucketLink {
    TokenBucketConfig config;
    std::optional<RateNoise> noise;
};

using LinkModel = std::variant<StaticLink, QuantileLink, BucketLink>;

void validate(const LinkModel& link);

struct ComputePhase {
    double duration = 0.0;
};

struct TransferPhase {
    double volume = 0.0;  // Gbit per node
    double cap = 0.0;     // Gbps demand
};

struct Phase {
    std::variant<ComputePhase, TransferPhase> work;
    bool barrier = true;
};

struct WorkloadSpec {
    std::size_t nodes = 1;
    std::vector<Phase> phases;

    void validate() const;
};

struct NodeResult {
    double finish = 0.0;  // end of the node's own last phase
    std::vector<RateSegment> trace;  // gap-free over [0, finish]
    std::optional<double> final_budget;
    double transferred = 0.0;
};

struct RunResult {
    double makespan = 0.0;
    std::vector<NodeResult> nodes;
    std::uint64_t seed = 0;
};

struct RunOptions {
    /// Per-node starting budgets overriding config.initial_budget (carried
    /// state from a previous run). Empty, or one entry per node.
    std::vector<std::optional<double>> initial_budgets;
};

/// A named workload bound to its per-node links.
struct Scenario {
    std::string name;
    WorkloadSpec workload;
    std::vector<LinkModel> links;
    std::uint64_t seed = 0;
    double bin_s = 10.0;

    void validate() const;
};

/// Event-driven run of `workload` over `links`. Events are phase
/// completions, resample ticks and bucket depletion instants; between events
/// every rate is constant, so the integration is exact. Final budgets are
/// reported at the makespan.
RunResult run_experiment(const WorkloadSpec& workload, std::span<const LinkModel> links, std::uint64_t seed,
                         const RunOptions& options = {});

/// Time-based probe demand: on for `on_s` at full speed, then idle for
/// `off_s`. off_s == 0 means continuous sending.
struct DutyCycle {
    std::string name;
    double on_s = 0.0;
    double off_s = 0.0;
};

DutyCycle full_speed();
DutyCycle duty_10_30();
DutyCycle duty_5_30();

/// Drives a single link with a duty-cycle demand for `horizon` seconds and
/// returns its achieved-rate trace.
std::vector<RateSegment> drive_link(const LinkModel& link, const DutyCycle& pattern, double horizon,
                                    std::uint64_t seed);

/// Time-weighted bin averages of a piecewise-constant trace. Bin k covers
/// [k * bin_s, (k + 1) * bin_s); a trailing partial bin is averaged over the
/// part the trace covers.
std::vector<TraceSample> bin_trace(std::span<const RateSegment> trace, double bin_s);

/// Integral of the trace in Gbit.
double integrate(std::span<const RateSegment> trace);

double slowdown(const RunResult& result, const RunResult& baseline);

struct Straggler {
    std::size_t node = 0;
    double average_gbps = 0.0;
    double peer_median_gbps = 0.0;
    double severity = 0.0;
};

/// Nodes whose time-averaged bandwidth over [0, finish] is strictly below
/// half the median of the other nodes' averages.
std::vector<Straggler> detect_stragglers(const RunResult& result);

}  // namespace varnet
