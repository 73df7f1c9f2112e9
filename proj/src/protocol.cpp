#include "varnet/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "varnet/errors.hpp"
#include "varnet/rng.hpp"

namespace varnet {
namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Integral of a piecewise-constant trace over [a, b).
double integrate_window(std::span<const RateSegment> trace, double a, double b) {
    double total = 0.0;
    for (const auto& s : trace) {
        const double lo = std::max(a, s.start);
        const double hi = std::min(b, s.end);
        if (hi > lo) total += s.gbps * (hi - lo);
    }
    return total;
}

const BucketLink* bucket_at(const Scenario& s, std::size_t node) {
    if (node >= s.links.size()) return nullptr;
    return std::get_if<BucketLink>(&s.links[node]);
}

double relative_difference(double reference, double observed) {
    if (reference == 0.0) return observed == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(observed - reference) / std::abs(reference);
}

}  // namespace

ExperimentPlan plan_experiments(std::span<const std::string> config_ids, std::size_t repetitions, double rest_s,
                                bool reset_each, std::uint64_t seed) {
    if (config_ids.empty()) throw ParameterError("plan needs at least one config id");
    if (repetitions < 1) throw ParameterError("repetitions must be >= 1");
    if (!std::isfinite(rest_s) || rest_s < 0.0) throw ParameterError("rest must be finite and >= 0");

    ExperimentPlan plan;
    plan.seed = seed;
    for (const auto& id : config_ids) {
        for (std::size_t r = 0; r < repetitions; ++r) plan.entries.push_back({id, r, rest_s, reset_each});
    }
    Rng rng(derive_seed(seed, 0x706c616eULL));
    for (std::size_t i = plan.entries.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.index(i));
        std::swap(plan.entries[i - 1], plan.entries[j]);
    }
    plan.entries.front().rest_before = 0.0;
    return plan;
}

std::vector<EntryResult> execute_plan(const ExperimentPlan& plan, const std::map<std::string, Scenario>& bindings,
                                      const ExecuteOptions& options,
                                      const std::function<void(const EntryResult&)>& on_result) {
    std::size_t max_nodes = 0;
    for (const auto& entry : plan.entries) {
        const auto it = bindings.find(entry.config);
        if (it == bindings.end()) throw ParameterError("unbound config id '" + entry.config + "'");
        it->second.validate();
        max_nodes = std::max(max_nodes, it->second.workload.nodes);
    }

    // Bucket budget of each VM slot; empty until a bucket link has run there.
    std::vector<std::optional<double>> carried(max_nodes);
    std::vector<EntryResult> results;
    results.reserve(plan.entries.size());
    double previous_auto_rest = 0.0;

    for (std::size_t idx = 0; idx < plan.entries.size(); ++idx) {
        const PlanEntry& entry = plan.entries[idx];
        const Scenario& scenario = bindings.at(entry.config);
        const std::size_t nodes = scenario.workload.nodes;

        EntryResult er;
        er.index = idx;
        er.entry = entry;
        er.run_seed = derive_seed(plan.seed, idx);
        er.budgets_before.assign(nodes, std::nullopt);

        const double rest = options.auto_rest ? (idx == 0 ? 0.0 : previous_auto_rest) : entry.rest_before;
        for (std::size_t i = 0; i < nodes; ++i) {
            const BucketLink* b = bucket_at(scenario, i);
            if (b == nullptr) continue;
            if (entry.reset_state || !carried[i]) {
                er.budgets_before[i] = b->config.initial_budget;
                continue;
            }
            double budget = std::min(*carried[i], b->config.capacity);
            if (rest > 0.0) {
                budget = advance({budget, 0.0}, b->config, 0.0, rest).state.budget;
            }
            er.budgets_before[i] = budget;
        }

        er.result = run_experiment(scenario.workload, scenario.links, er.run_seed, RunOptions{er.budgets_before});

        previous_auto_rest = 0.0;
        for (std::size_t i = 0; i < nodes; ++i) {
            const auto& final_budget = er.result.nodes[i].final_budget;
            if (!final_budget) continue;
            carried[i] = final_budget;
            const BucketLink* b = bucket_at(scenario, i);
            const double drained = *er.budgets_before[i] - *final_budget;
            if (b != nullptr && drained > 0.0 && b->config.refill_rate > 0.0) {
                previous_auto_rest = std::max(previous_auto_rest, drained / b->config.refill_rate);
            }
        }
        if (options.auto_rest) er.entry.rest_before = rest;

        if (on_result) on_result(er);
        results.push_back(std::move(er));
    }
    return results;
}

std::vector<double> makespans_for(std::span<const EntryResult> results, const std::string& config) {
    std::vector<double> out;
    for (const auto& r : results) {
        if (r.entry.config == config) out.push_back(r.result.makespan);
    }
    return out;
}

Fingerprint fingerprint(const LinkModel& link, double probe_duration, std::uint64_t seed, double bin_s) {
    if (!std::isfinite(probe_duration) || probe_duration < 300.0) {
        throw ParameterError("probe_duration must be >= 300 s");
    }
    validate(link);
    Fingerprint fp;
    fp.probe_duration = probe_duration;

    const DutyCycle patterns[] = {full_speed(), duty_10_30(), duty_5_30()};
    for (std::size_t k = 0; k < std::size(patterns); ++k) {
        const auto& pattern = patterns[k];
        const auto trace = drive_link(link, pattern, probe_duration, derive_seed(seed, k));
        std::vector<double> rates;
        if (pattern.off_s <= 0.0) {
            const auto bins = bin_trace(trace, bin_s);
            for (const auto& b : bins) rates.push_back(b.gbps);
            try {
                fp.bucket_fit = fit_token_bucket(bins);
            } catch (const NoThrottleDetected&) {
                fp.bucket_fit.reset();
            }
        } else {
            const double period = pattern.on_s + pattern.off_s;
            for (double start = 0.0; start < probe_duration; start += period) {
                const double end = std::min(start + pattern.on_s, probe_duration);
                rates.push_back(integrate_window(trace, start, end) / (end - start));
            }
        }
        const auto [lo, hi] = std::minmax_element(rates.begin(), rates.end());
        fp.plateaus.push_back({pattern.name, *lo, median_of(rates), *hi});
    }
    return fp;
}

FingerprintComparison compare_fingerprints(const Fingerprint& a, const Fingerprint& b, double tolerance) {
    if (!(tolerance >= 0.0) || !std::isfinite(tolerance)) throw ParameterError("tolerance must be >= 0");
    if (a.plateaus.size() != b.plateaus.size()) throw ParameterError("fingerprints have different probe sets");
    for (std::size_t i = 0; i < a.plateaus.size(); ++i) {
        if (a.plateaus[i].pattern != b.plateaus[i].pattern) {
            throw ParameterError("fingerprints have different probe sets");
        }
    }

    FingerprintComparison out;
    auto check = [&](std::string field, double ref, double obs) {
        const double rel = relative_difference(ref, obs);
        if (rel > tolerance + 1e-12) {
            out.match = false;
            out.drift.push_back({std::move(field), ref, obs, rel});
        }
    };
    for (std::size_t i = 0; i < a.plateaus.size(); ++i) {
        const auto& pa = a.plateaus[i];
        const auto& pb = b.plateaus[i];
        check("plateau." + pa.pattern + ".min", pa.min, pb.min);
        check("plateau." + pa.pattern + ".median", pa.median, pb.median);
        check("plateau." + pa.pattern + ".max", pa.max, pb.max);
    }
    if (a.bucket_fit.has_value() != b.bucket_fit.has_value()) {
        out.match = false;
        out.drift.push_back({"bucket_fit", a.bucket_fit ? 1.0 : 0.0, b.bucket_fit ? 1.0 : 0.0, 1.0});
    } else if (a.bucket_fit) {
        check("bucket_fit.high_rate", a.bucket_fit->high_rate, b.bucket_fit->high_rate);
        check("bucket_fit.low_rate", a.bucket_fit->low_rate, b.bucket_fit->low_rate);
        check("bucket_fit.depletion_time", a.bucket_fit->depletion_time, b.bucket_fit->depletion_time);
    }
    return out;
}

CouplingReport coupling_check(std::span<const double> makespans, double confidence, double widening_threshold) {
    const std::size_t m = makespans.size();
    if (m < 8) throw InsufficientSamples("coupling check needs at least 8 repetitions");
    CouplingReport report;
    report.repetitions = m;
    report.widening_threshold = widening_threshold;
    try {
        report.trend = mann_kendall(makespans);
    } catch (const DegenerateSample&) {
        report.degenerate = true;
        report.trend = {};
    }

    report.early_n = std::max((m + 1) / 2, minimum_feasible_n(0.5, confidence));
    if (report.early_n <= m) {
        report.early_half_width = quantile_ci(makespans.first(report.early_n), 0.5, confidence).relative_half_width();
        report.late_half_width = quantile_ci(makespans, 0.5, confidence).relative_half_width();
        const double early = *report.early_half_width;
        const double late = *report.late_half_width;
        report.widening = early > 0.0 ? late > early * (1.0 + widening_threshold) : late > 0.0;
    }
    return report;
}

SampleSet discretize(std::span<const TimedSample> samples, double window) {
    if (!std::isfinite(window) || window <= 0.0) throw ParameterError("window must be > 0");
    std::map<long long, std::vector<double>> groups;
    for (const auto& s : samples) {
        if (!std::isfinite(s.time_s)) throw ParameterError("sample timestamps must be finite");
        groups[static_cast<long long>(std::floor(s.time_s / window))].push_back(s.value);
    }
    SampleSet out;
    out.values.reserve(groups.size());
    for (auto& [k, values] : groups) out.values.push_back(median_of(std::move(values)));
    return out;
}

}  // namespace varnet
