#include "varnet/simcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "varnet/errors.hpp"
#include "varnet/rng.hpp"

namespace varnet {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kTickSlack = 1e-9;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void append(std::vector<RateSegment>& trace, const RateSegment& seg) {
    if (!(seg.end > seg.start)) return;
    if (!trace.empty() && trace.back().gbps == seg.gbps && trace.back().end == seg.start) {
        trace.back().end = seg.end;
        return;
    }
    trace.push_back(seg);
}

struct Step {
    std::vector<RateSegment> segments;
    double bits = 0.0;
};

// Mutable per-run state of one link.
class LinkRuntime {
public:
    LinkRuntime(const LinkModel& model, std::uint64_t seed, std::optional<double> budget)
        : model_(&model) {
        std::visit(overloaded{
                       [](const StaticLink&) {},
                       [&](const QuantileLink& q) { sampler_.emplace(q.distribution, q.schedule, seed); },
                       [&](const BucketLink& b) {
                           bucket_ = reset(b.config);
                           if (budget) {
                               if (!std::isfinite(*budget) || *budget < 0.0) {
                                   throw ParameterError("carried bucket budget must be finite and >= 0");
                               }
                               bucket_.budget = std::min(*budget, b.config.capacity);
                           }
                           if (b.noise) sampler_.emplace(b.noise->factor, b.noise->schedule, derive_seed(seed, 1));
                       },
                   },
                   model);
    }

    // Consumes resample ticks that are due at the current time.
    void settle() {
        while (sampler_ && sampler_->next_tick_time() - now_ <= kTickSlack) sampler_->step();
    }

    double rate(double demand) const {
        return std::visit(overloaded{
                              [&](const StaticLink& s) { return std::min(demand, s.rate); },
                              [&](const QuantileLink&) { return std::min(demand, sampler_->value()); },
                              [&](const BucketLink& b) {
                                  return factor() * admitted_rate(bucket_, b.config, demand);
                              },
                          },
                          *model_);
    }

    double time_to_change(double demand) const {
        double t = sampler_ ? sampler_->next_tick_time() - now_ : kInf;
        if (const auto* b = std::get_if<BucketLink>(model_)) {
            t = std::min(t, time_to_empty(bucket_, b->config, demand));
        }
        return t;
    }

    Step advance(double demand, double dt) {
        Step step;
        if (const auto* b = std::get_if<BucketLink>(model_)) {
            auto r = varnet::advance(bucket_, b->config, demand, dt);
            const double f = factor();
            for (auto& seg : r.segments) seg.gbps *= f;
            step.segments = std::move(r.segments);
            step.bits = f * r.bits_sent;
            bucket_ = r.state;
        } else {
            const double g = rate(demand);
            step.segments.push_back({now_, now_ + dt, g});
            step.bits = g * dt;
        }
        now_ += dt;
        return step;
    }

    std::optional<double> budget() const {
        if (std::holds_alternative<BucketLink>(*model_)) return bucket_.budget;
        return std::nullopt;
    }

private:
    double factor() const { return sampler_ && std::holds_alternative<BucketLink>(*model_) ? sampler_->value() : 1.0; }

    const LinkModel* model_;
    std::optional<BandwidthSampler> sampler_;
    TokenBucketState bucket_;
    double now_ = 0.0;
};

std::uint64_t link_seed(const LinkModel& link, std::uint64_t seed, std::size_t node) {
    bool independent = true;
    if (const auto* q = std::get_if<QuantileLink>(&link)) independent = q->schedule.per_node_independent;
    if (const auto* b = std::get_if<BucketLink>(&link); b && b->noise) {
        independent = b->noise->schedule.per_node_independent;
    }
    return derive_seed(seed, independent ? node : 0);
}

enum class Activity { Transfer, Compute, Waiting, Done };

struct NodeRun {
    std::size_t phase = 0;
    std::size_t completed = 0;
    double remaining = 0.0;
    double size = 0.0;
    Activity activity = Activity::Compute;
    NodeResult result;
};

}  // namespace

void validate(const LinkModel& link) {
    std::visit(overloaded{
                   [](const StaticLink& s) {
                       if (!std::isfinite(s.rate) || s.rate <= 0.0) throw ParameterError("static rate must be > 0");
                   },
                   [](const QuantileLink& q) {
                       q.distribution.validate();
                       q.schedule.validate();
                   },
                   [](const BucketLink& b) {
                       b.config.validate();
                       if (b.noise) {
                           b.noise->factor.validate();
                           b.noise->schedule.validate();
                       }
                   },
               },
               link);
}

void WorkloadSpec::validate() const {
    if (nodes < 1) throw ParameterError("workload needs at least one node");
    if (phases.empty()) throw ParameterError("workload needs at least one phase");
    for (const auto& phase : phases) {
        std::visit(overloaded{
                       [](const ComputePhase& c) {
                           if (!std::isfinite(c.duration) || c.duration <= 0.0) {
                               throw ParameterError("compute duration must be > 0");
                           }
                       },
                       [](const TransferPhase& t) {
                           if (!std::isfinite(t.volume) || t.volume <= 0.0) {
                               throw ParameterError("transfer volume must be > 0");
                           }
                           if (std::isnan(t.cap) || t.cap <= 0.0) throw ParameterError("transfer cap must be > 0");
                       },
                   },
                   phase.work);
    }
}

void Scenario::validate() const {
    workload.validate();
    if (links.size() != workload.nodes) {
        throw ParameterError("scenario has " + std::to_string(links.size()) + " links for " +
                             std::to_string(workload.nodes) + " nodes");
    }
    for (const auto& l : links) varnet::validate(l);
    if (!std::isfinite(bin_s) || bin_s <= 0.0) throw ParameterError("bin_s must be > 0");
}

RunResult run_experiment(const WorkloadSpec& workload, std::span<const LinkModel> links, std::uint64_t seed,
                         const RunOptions& options) {
    workload.validate();
    if (links.size() != workload.nodes) {
        throw ParameterError("dimension mismatch: " + std::to_string(links.size()) + " links for " +
                             std::to_string(workload.nodes) + " nodes");
    }
    if (!options.initial_budgets.empty() && options.initial_budgets.size() != workload.nodes) {
        throw ParameterError("initial_budgets must have one entry per node");
    }
    for (const auto& l : links) validate(l);

    const std::size_t n = workload.nodes;
    const auto& phases = workload.phases;
    std::vector<LinkRuntime> rt;
    rt.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto budget = options.initial_budgets.empty() ? std::nullopt : options.initial_budgets[i];
        rt.emplace_back(links[i], link_seed(links[i], seed, i), budget);
    }

    double now = 0.0;
    std::vector<NodeRun> runs(n);

    auto enter = [&](NodeRun& r, std::size_t k) {
        r.phase = k;
        if (k == phases.size()) {
            r.activity = Activity::Done;
            r.result.finish = now;
            return;
        }
        if (const auto* t = std::get_if<TransferPhase>(&phases[k].work)) {
            r.activity = Activity::Transfer;
            r.remaining = r.size = t->volume;
        } else {
            r.activity = Activity::Compute;
            r.remaining = r.size = std::get<ComputePhase>(phases[k].work).duration;
        }
    };
    auto release_barriers = [&] {
        for (auto& r : runs) {
            if (r.activity != Activity::Waiting) continue;
            const bool all = std::all_of(runs.begin(), runs.end(),
                                         [&](const NodeRun& o) { return o.completed >= r.phase + 1; });
            if (all) enter(r, r.phase + 1);
        }
    };
    auto complete = [&](NodeRun& r) {
        r.completed = r.phase + 1;
        r.remaining = 0.0;
        // A barrier after the last phase releases nothing, so the node's own
        // finish time is kept; the makespan is still the latest finish.
        if (phases[r.phase].barrier && r.completed < phases.size()) {
            r.activity = Activity::Waiting;
        } else {
            enter(r, r.phase + 1);
        }
    };

    for (auto& r : runs) enter(r, 0);

    auto demand_of = [&](const NodeRun& r) {
        return r.activity == Activity::Transfer ? std::get<TransferPhase>(phases[r.phase].work).cap : 0.0;
    };

    std::vector<double> own(n);
    while (std::any_of(runs.begin(), runs.end(), [](const NodeRun& r) { return r.activity != Activity::Done; })) {
        double dt = kInf;
        for (std::size_t i = 0; i < n; ++i) {
            rt[i].settle();
            const double demand = demand_of(runs[i]);
            own[i] = kInf;
            if (runs[i].activity == Activity::Transfer) {
                const double rate = rt[i].rate(demand);
                if (rate > 0.0) own[i] = runs[i].remaining / rate;
            } else if (runs[i].activity == Activity::Compute) {
                own[i] = runs[i].remaining;
            }
            dt = std::min({dt, own[i], rt[i].time_to_change(demand)});
        }
        if (!std::isfinite(dt)) throw std::logic_error("simulation stalled: no pending event");

        for (std::size_t i = 0; i < n; ++i) {
            auto& r = runs[i];
            auto step = rt[i].advance(demand_of(r), dt);
            if (r.activity != Activity::Done) {
                for (const auto& seg : step.segments) append(r.result.trace, seg);
            }
            if (r.activity == Activity::Transfer) {
                r.remaining -= step.bits;
                r.result.transferred += step.bits;
            } else if (r.activity == Activity::Compute) {
                r.remaining -= dt;
            }
        }
        now += dt;

        for (std::size_t i = 0; i < n; ++i) {
            auto& r = runs[i];
            const bool working = r.activity == Activity::Transfer || r.activity == Activity::Compute;
            if (working && (own[i] <= dt || r.remaining <= 1e-12 * r.size)) complete(r);
        }
        release_barriers();
    }

    RunResult out;
    out.seed = seed;
    out.nodes.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        runs[i].result.final_budget = rt[i].budget();
        out.makespan = std::max(out.makespan, runs[i].result.finish);
        out.nodes.push_back(std::move(runs[i].result));
    }
    return out;
}

DutyCycle full_speed() { return {"full-speed", 0.0, 0.0}; }
DutyCycle duty_10_30() { return {"10-30", 10.0, 30.0}; }
DutyCycle duty_5_30() { return {"5-30", 5.0, 30.0}; }

std::vector<RateSegment> drive_link(const LinkModel& link, const DutyCycle& pattern, double horizon,
                                    std::uint64_t seed) {
    validate(link);
    if (!std::isfinite(horizon) || horizon <= 0.0) throw ParameterError("horizon must be > 0");
    const bool continuous = pattern.off_s <= 0.0;
    if (!continuous && !(pattern.on_s > 0.0)) throw ParameterError("duty cycle on time must be > 0");

    LinkRuntime rt(link, derive_seed(seed, 0), std::nullopt);
    std::vector<RateSegment> trace;
    double now = 0.0;
    const double period = pattern.on_s + pattern.off_s;
    std::uint64_t cycle = 0;
    while (horizon - now > kTickSlack) {
        rt.settle();
        bool on = true;
        double boundary = horizon;
        if (!continuous) {
            const double cycle_start = static_cast<double>(cycle) * period;
            const double on_end = cycle_start + pattern.on_s;
            const double cycle_end = cycle_start + period;
            if (now < on_end - kTickSlack) {
                boundary = std::min(horizon, on_end);
            } else {
                on = false;
                boundary = std::min(horizon, cycle_end);
            }
        }
        const double demand = on ? kInf : 0.0;
        const double dt = std::min(boundary - now, rt.time_to_change(demand));
        if (dt <= 0.0) {
            ++cycle;
            continue;
        }
        auto step = rt.advance(demand, dt);
        for (const auto& seg : step.segments) append(trace, seg);
        now += dt;
        if (!continuous && !on && now >= static_cast<double>(cycle + 1) * period - kTickSlack) ++cycle;
    }
    return trace;
}

std::vector<TraceSample> bin_trace(std::span<const RateSegment> trace, double bin_s) {
    if (!std::isfinite(bin_s) || bin_s <= 0.0) throw ParameterError("bin width must be > 0");
    std::vector<TraceSample> out;
    if (trace.empty()) return out;
    const double end = trace.back().end;
    const auto bins = static_cast<std::size_t>(std::ceil(end / bin_s - 1e-9));
    std::vector<double> bits(bins, 0.0);
    std::vector<double> covered(bins, 0.0);
    for (const auto& seg : trace) {
        double t = seg.start;
        while (t < seg.end) {
            auto k = static_cast<std::size_t>(std::floor(t / bin_s));
            if (k >= bins) k = bins - 1;
            const double bin_end = static_cast<double>(k + 1) * bin_s;
            const double upto = (k + 1 == bins) ? seg.end : std::min(seg.end, bin_end);
            bits[k] += seg.gbps * (upto - t);
            covered[k] += upto - t;
            t = upto;
        }
    }
    out.reserve(bins);
    for (std::size_t k = 0; k < bins; ++k) {
        out.push_back({static_cast<double>(k) * bin_s, covered[k] > 0.0 ? bits[k] / covered[k] : 0.0});
    }
    return out;
}

double integrate(std::span<const RateSegment> trace) {
    double total = 0.0;
    for (const auto& s : trace) total += s.gbps * (s.end - s.start);
    return total;
}

double slowdown(const RunResult& result, const RunResult& baseline) {
    if (!(baseline.makespan > 0.0)) throw ParameterError("baseline makespan must be > 0");
    if (result.nodes.size() != baseline.nodes.size()) {
        throw ParameterError("slowdown needs results from the same workload");
    }
    return result.makespan / baseline.makespan;
}

std::vector<Straggler> detect_stragglers(const RunResult& result) {
    const std::size_t n = result.nodes.size();
    if (n < 2) throw ParameterError("straggler detection needs at least two nodes");
    std::vector<double> avg(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& node = result.nodes[i];
        avg[i] = node.finish > 0.0 ? integrate(node.trace) / node.finish : 0.0;
    }
    std::vector<Straggler> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> peers;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) peers.push_back(avg[j]);
        }
        std::sort(peers.begin(), peers.end());
        const std::size_t m = peers.size();
        const double med = m % 2 ? peers[m / 2] : 0.5 * (peers[m / 2 - 1] + peers[m / 2]);
        if (avg[i] < 0.5 * med) {
            out.push_back({i, avg[i], med, avg[i] > 0.0 ? med / avg[i] : kInf});
        }
    }
    return out;
}

}  // namespace varnet
