#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "varnet/bucket.hpp"
#include "varnet/simcore.hpp"
#include "varnet/stats.hpp"

namespace varnet {

struct PlanEntry {
    std::string config;
    std::size_t repetition = 0;
    double rest_before = 0.0;
    bool reset_state = true;
};

struct ExperimentPlan {
    std::vector<PlanEntry> entries;
    std::uint64_t seed = 0;
};

/// Configs x repetitions, shuffled with a seeded Fisher-Yates permutation.
/// Every entry but the first rests `rest_s` seconds beforehand.
ExperimentPlan plan_experiments(std::span<const std::string> config_ids, std::size_t repetitions, double rest_s,
                                bool reset_each, std::uint64_t seed);

struct EntryResult {
    std::size_t index = 0;  // position in the plan
    PlanEntry entry;
    std::uint64_t run_seed = 0;
    std::vector<std::optional<double>> budgets_before;  // after any rest
    RunResult result;
};

struct ExecuteOptions {
    /// Replace each rest with the time the previous entry's drained budget
    /// needs to refill: max over nodes of drained / refill_rate.
    bool auto_rest = false;
};

/// Runs every entry in plan order on one persistent set of VMs. Bucket
/// state is carried between entries unless the entry resets it, and rests
/// refill buckets with zero demand. Each entry runs on its own RNG substream
/// of the plan seed. `on_result` sees results as they are produced.
std::vector<EntryResult> execute_plan(const ExperimentPlan& plan, const std::map<std::string, Scenario>& bindings,
                                      const ExecuteOptions& options = {},
                                      const std::function<void(const EntryResult&)>& on_result = {});

/// Makespans of one config's entries, in plan order.
std::vector<double> makespans_for(std::span<const EntryResult> results, const std::string& config);

struct PlateauSummary {
    std::string pattern;
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
};

struct Fingerprint {
    std::optional<FitReport> bucket_fit;
    std::vector<PlateauSummary> plateaus;
    double probe_duration = 0.0;
    std::string created_at;
};

/// Probes a link with the full-speed, 10-30 and 5-30 patterns, fits a token
/// bucket to the 10 s-binned full-speed trace and summarizes the average
/// rate of each sending period (10 s bins for full speed).
Fingerprint fingerprint(const LinkModel& link, double probe_duration, std::uint64_t seed, double bin_s = 10.0);

struct FingerprintDrift {
    std::string field;
    double reference = 0.0;
    double observed = 0.0;
    double relative_difference = 0.0;
};

struct FingerprintComparison {
    bool match = true;
    std::vector<FingerprintDrift> drift;
};

/// Match iff every rate (and depletion time) of `b` lies within `tolerance`
/// relative to `a`. Throws ParameterError for different probe sets.
FingerprintComparison compare_fingerprints(const Fingerprint& a, const Fingerprint& b, double tolerance = 0.10);

struct CouplingReport {
    std::size_t repetitions = 0;
    MannKendallResult trend;
    bool degenerate = false;  // constant sequence; trend reported as None
    std::size_t early_n = 0;
    std::optional<double> early_half_width;
    std::optional<double> late_half_width;
    bool widening = false;
    double widening_threshold = 0.20;
};

/// Checks a config's repetition sequence for budget coupling: Mann-Kendall
/// trend plus median-CI widening between the first half (at least the
/// smallest feasible n) and the full sequence.
CouplingReport coupling_check(std::span<const double> makespans, double confidence = 0.95,
                              double widening_threshold = 0.20);

struct TimedSample {
    double time_s = 0.0;
    double value = 0.0;
};

/// Per-window medians over half-open windows [k w, (k + 1) w), in time order.
SampleSet discretize(std::span<const TimedSample> samples, double window);

}  // namespace varnet
