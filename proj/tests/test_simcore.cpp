#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "varnet/errors.hpp"
#include "varnet/rng.hpp"
#include "varnet/simcore.hpp"

using namespace varnet;

namespace {

Phase transfer(double volume, double cap, bool barrier = true) { return {TransferPhase{volume, cap}, barrier}; }
Phase compute(double duration, bool barrier = true) { return {ComputePhase{duration}, barrier}; }

LinkModel bucket(double budget, double capacity = 5000.0) {
    return BucketLink{{capacity, budget, 1.0, 10.0, 1.0}, std::nullopt};
}

std::vector<LinkModel> straggler_links() { return {bucket(5000), bucket(5000), bucket(5000), bucket(10)}; }

WorkloadSpec straggler_workload() { return {4, {transfer(300.0, 10.0)}}; }

double transferred_volume(const WorkloadSpec& w) {
    double v = 0.0;
    for (const auto& p : w.phases) {
        if (const auto* t = std::get_if<TransferPhase>(&p.work)) v += t->volume;
    }
    return v;
}

// Random BSP workload for property checks.
WorkloadSpec random_workload(Rng& rng, std::size_t nodes, bool all_barriers) {
    WorkloadSpec w{nodes, {}};
    const int phases = 2 + static_cast<int>(rng.index(5));
    for (int i = 0; i < phases; ++i) {
        const bool barrier = all_barriers || rng.uniform() < 0.5;
        if (rng.uniform() < 0.4) {
            w.phases.push_back(compute(rng.uniform(1.0, 30.0), barrier));
        } else {
            w.phases.push_back(transfer(rng.uniform(10.0, 400.0), rng.uniform(2.0, 15.0), barrier));
        }
    }
    w.phases.back().barrier = true;
    return w;
}

std::vector<LinkModel> random_links(Rng& rng, std::size_t nodes) {
    std::vector<LinkModel> links;
    for (std::size_t i = 0; i < nodes; ++i) {
        switch (rng.index(3)) {
            case 0: links.emplace_back(StaticLink{rng.uniform(1.0, 12.0)}); break;
            case 1: links.emplace_back(QuantileLink{hpc_like(), {5.0, true}}); break;
            default: links.push_back(bucket(rng.uniform(0.0, 800.0), 800.0)); break;
        }
    }
    return links;
}

}  // namespace

TEST_CASE("run: one node over a static link") {
    const std::vector<LinkModel> links{StaticLink{10.0}};
    const auto r = run_experiment({1, {transfer(100.0, 10.0)}}, links, 1);
    CHECK(r.makespan == 10.0);
    CHECK(r.nodes[0].transferred == 100.0);
    CHECK_FALSE(r.nodes[0].final_budget.has_value());
}

TEST_CASE("run: static links match the closed form") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const double rate = rng.uniform(1.0, 12.0);
        auto w = random_workload(rng, 3, true);
        const std::vector<LinkModel> links(3, StaticLink{rate});
        double expected = 0.0;
        for (const auto& p : w.phases) {
            if (const auto* c = std::get_if<ComputePhase>(&p.work)) expected += c->duration;
            if (const auto* t = std::get_if<TransferPhase>(&p.work)) expected += t->volume / std::min(t->cap, rate);
        }
        CHECK(run_experiment(w, links, 1).makespan == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("run: heterogeneous budgets make a straggler") {
    const auto links = straggler_links();
    const auto r = run_experiment(straggler_workload(), links, 7);
    for (int i = 0; i < 3; ++i) CHECK(r.nodes[i].finish == doctest::Approx(30.0).epsilon(1e-12));
    // Node 4 drains 10 Gbit at 9 Gbit/s, sending 100/9 Gbit, then the rest at 1 Gbps.
    const double t_empty = 10.0 / 9.0;
    const double expected = t_empty + (300.0 - 10.0 * t_empty);
    CHECK(expected == doctest::Approx(290.0).epsilon(1e-12));
    CHECK(r.nodes[3].finish == doctest::Approx(expected).epsilon(1e-12));
    CHECK(r.makespan == doctest::Approx(expected).epsilon(1e-12));

    const auto s = detect_stragglers(r);
    REQUIRE(s.size() == 1);
    CHECK(s[0].node == 3);
    CHECK(s[0].severity >= 9.0);
    CHECK(s[0].severity <= 10.0);

    const std::vector<LinkModel> uniform(4, bucket(5000));
    const auto base = run_experiment(straggler_workload(), uniform, 7);
    CHECK(base.makespan == doctest::Approx(30.0));
    CHECK(slowdown(r, base) == doctest::Approx(expected / 30.0).epsilon(1e-12));
    CHECK(slowdown(r, r) == 1.0);
    CHECK(detect_stragglers(base).empty());
}

TEST_CASE("detect_stragglers: exactly half the peer median is not flagged") {
    const std::vector<LinkModel> links{StaticLink{10.0}, StaticLink{5.0}};
    const auto r = run_experiment({2, {transfer(100.0, 20.0, false)}}, links, 1);
    CHECK(detect_stragglers(r).empty());
    const std::vector<LinkModel> slower{StaticLink{10.0}, StaticLink{4.99}};
    CHECK(detect_stragglers(run_experiment({2, {transfer(100.0, 20.0, false)}}, slower, 1)).size() == 1);
}

TEST_CASE("drive_link: 5-on/30-off against a 100 Gbit budget") {
    const LinkModel link = bucket(100.0);
    const auto trace = drive_link(link, duty_5_30(), 35.0 * 12, 1);
    // Oracle: replay the cycle arithmetic. Each on-phase drains 9 Gbit/s,
    // each off-phase refills 30 Gbit.
    double budget = 100.0;
    int empty_cycle = -1;
    double empty_at = 0.0;
    for (int k = 0; k < 12 && empty_cycle < 0; ++k) {
        if (budget < 45.0) {
            empty_cycle = k;
            empty_at = budget / 9.0;
        }
        budget = std::min(5000.0, budget - 45.0 + 30.0);
    }
    CHECK(empty_cycle == 4);  // fifth on-phase, 0-based
    CHECK(empty_at == doctest::Approx(40.0 / 9.0));

    auto rate_at = [&](double t) {
        for (const auto& s : trace) {
            if (s.start <= t && t < s.end) return s.gbps;
        }
        return -1.0;
    };
    for (int k = 0; k < 12; ++k) {
        const double on = 35.0 * k;
        CHECK(rate_at(on + 0.01) == 10.0);
        CHECK(rate_at(on + 20.0) == 0.0);
        if (k < empty_cycle) CHECK(rate_at(on + 4.99) == 10.0);
        if (k >= empty_cycle) CHECK(rate_at(on + 4.99) == 1.0);
    }
    CHECK(rate_at(35.0 * empty_cycle + empty_at - 1e-6) == 10.0);
    CHECK(rate_at(35.0 * empty_cycle + empty_at + 1e-6) == 1.0);
}

TEST_CASE("bin_trace: time-weighted averages") {
    const std::vector<RateSegment> trace{{0.0, 5.0, 10.0}, {5.0, 15.0, 2.0}, {15.0, 25.0, 4.0}};
    const auto bins = bin_trace(trace, 10.0);
    REQUIRE(bins.size() == 3);
    CHECK(bins[0].time_s == 0.0);
    CHECK(bins[0].gbps == doctest::Approx(6.0));
    CHECK(bins[1].gbps == doctest::Approx(3.0));
    CHECK(bins[2].gbps == doctest::Approx(4.0));
    CHECK(integrate(trace) == doctest::Approx(110.0));
}

TEST_CASE("property: work conservation, gap-free traces and barrier sums") {
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
        Rng rng(seed);
        const std::size_t nodes = 1 + rng.index(5);
        const bool barriers = seed % 2 == 0;
        const auto w = random_workload(rng, nodes, barriers);
        const auto links = random_links(rng, nodes);
        const auto r = run_experiment(w, links, seed);
        const double volume = transferred_volume(w);
        double max_finish = 0.0;
        for (const auto& n : r.nodes) {
            CHECK(std::abs(integrate(n.trace) - volume) <= 1e-6 * std::max(1.0, volume));
            CHECK(std::abs(n.transferred - volume) <= 1e-6 * std::max(1.0, volume));
            REQUIRE_FALSE(n.trace.empty());
            CHECK(n.trace.front().start == 0.0);
            CHECK(n.trace.back().end == doctest::Approx(n.finish));
            for (std::size_t i = 1; i < n.trace.size(); ++i) CHECK(n.trace[i].start == n.trace[i - 1].end);
            max_finish = std::max(max_finish, n.finish);
        }
        CHECK(r.makespan == max_finish);

        if (barriers) {
            // Replay each phase alone on the same links: with every phase
            // behind a barrier the makespan is the sum of phase maxima. Only
            // meaningful for memoryless links, so use static rates here.
            std::vector<LinkModel> fixed;
            for (std::size_t i = 0; i < nodes; ++i) fixed.emplace_back(StaticLink{1.0 + i});
            double sum = 0.0;
            for (const auto& p : w.phases) sum += run_experiment({nodes, {p}}, fixed, seed).makespan;
            CHECK(run_experiment(w, fixed, seed).makespan == doctest::Approx(sum).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: deterministic for a fixed seed") {
    Rng rng(77);
    const auto w = random_workload(rng, 4, false);
    const auto links = random_links(rng, 4);
    const auto a = run_experiment(w, links, 1234);
    const auto b = run_experiment(w, links, 1234);
    CHECK(a.makespan == b.makespan);
    for (std::size_t i = 0; i < a.nodes.size(); ++i) {
        REQUIRE(a.nodes[i].trace.size() == b.nodes[i].trace.size());
        for (std::size_t k = 0; k < a.nodes[i].trace.size(); ++k) {
            CHECK(a.nodes[i].trace[k].end == b.nodes[i].trace[k].end);
            CHECK(a.nodes[i].trace[k].gbps == b.nodes[i].trace[k].gbps);
        }
    }
}

TEST_CASE("property: larger budgets never lengthen the makespan") {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        Rng rng(seed + 500);
        const std::size_t nodes = 1 + rng.index(4);
        const auto w = random_workload(rng, nodes, seed % 2 == 0);
        double prev = std::numeric_limits<double>::infinity();
        for (double budget : {0.0, 10.0, 100.0, 1000.0, 5000.0}) {
            const std::vector<LinkModel> links(nodes, bucket(budget));
            const double m = run_experiment(w, links, seed).makespan;
            CHECK(m <= prev * (1.0 + 1e-12));
            prev = m;
        }
    }
}

TEST_CASE("run: final budgets and carried initial budgets") {
    const std::vector<LinkModel> links{bucket(5000)};
    const WorkloadSpec w{1, {transfer(400.0, 10.0), compute(20.0)}};
    const auto r = run_experiment(w, links, 1);
    REQUIRE(r.nodes[0].final_budget);
    CHECK(*r.nodes[0].final_budget == doctest::Approx(5000.0 - 360.0 + 20.0));
    const auto carried = run_experiment(w, links, 1, RunOptions{{0.0}});
    CHECK(carried.makespan == doctest::Approx(400.0 + 20.0));
}

TEST_CASE("run: validation") {
    const std::vector<LinkModel> one{StaticLink{10.0}};
    CHECK_THROWS_AS(run_experiment({2, {transfer(1.0, 1.0)}}, one, 1), ParameterError);
    CHECK_THROWS_AS(run_experiment({1, {transfer(-1.0, 1.0)}}, one, 1), ParameterError);
    CHECK_THROWS_AS(run_experiment({1, {}}, one, 1), ParameterError);
    const std::vector<LinkModel> bad{StaticLink{0.0}};
    CHECK_THROWS_AS(run_experiment({1, {transfer(1.0, 1.0)}}, bad, 1), ParameterError);
}
