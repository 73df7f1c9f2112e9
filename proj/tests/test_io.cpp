#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "varnet/errors.hpp"
#include "varnet/io.hpp"

using namespace varnet;
namespace fs = std::filesystem;

namespace {

const fs::path kData = VARNET_DATA_DIR;

Scenario load(const std::string& name) {
    const auto path = kData / "scenarios" / name;
    return io::scenario_from_json(io::parse_json(io::read_file(path), path.string()), path.parent_path());
}

std::string validation_field(const std::string& text) {
    try {
        io::scenario_from_json(io::parse_json(text, "inline"));
    } catch (const ValidationError& e) {
        return e.field();
    }
    return "<accepted>";
}

const char* kMinimal = R"({
  "schema_version": 1, "name": "m", "seed": 3,
  "workload": {"nodes": 1, "phases": [{"kind": "transfer", "volume_gbit": 100, "cap_gbps": 10}]},
  "links": [{"kind": "static", "rate_gbps": 10}]
})";

std::string with(std::string text, const std::string& from, const std::string& to) {
    text.replace(text.find(from), from.size(), to);
    return text;
}

}  // namespace

TEST_CASE("format_number round-trips doubles") {
    for (double v : {0.0, 1.0, 0.1, 1e-300, 123456789.125, 290.0, 1.0 / 3.0}) {
        CHECK(std::stod(io::format_number(v)) == v);
    }
    CHECK(io::format_number(290.0) == "290");
}

TEST_CASE("trace CSV round trip") {
    const std::vector<TraceSample> t{{0.0, 10.0}, {10.0, 9.876543210123}, {20.0, 1.0 / 3.0}};
    std::stringstream ss;
    io::write_trace_csv(ss, t);
    const auto back = io::read_trace_csv(ss);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].time_s == t[i].time_s);
        CHECK(back[i].gbps == t[i].gbps);
    }
    std::istringstream bad("time,gbps\n0,1\n");
    CHECK_THROWS_AS(io::read_trace_csv(bad), ValidationError);
    std::istringstream garbage("time_s,gbps\n0,abc\n");
    CHECK_THROWS_AS(io::read_trace_csv(garbage), ValidationError);
}

TEST_CASE("samples and summary CSV round trip") {
    SampleSet s{{1.5, 2.25, 1.0 / 7.0}, "kmeans"};
    std::stringstream ss;
    io::write_samples_csv(ss, s);
    const auto back = io::read_samples_csv(ss);
    CHECK(back.values == s.values);
    CHECK(back.label == "kmeans");

    SampleSet plain{{3.0, 4.0}, ""};
    std::stringstream ps;
    io::write_samples_csv(ps, plain);
    CHECK(ps.str() == "runtime_s\n3\n4\n");
    CHECK(io::read_samples_csv(ps).values == plain.values);

    const std::vector<io::SummaryRow> rows{{"a", 0, 120.0}, {"b", 3, 507.77777777777777}};
    std::stringstream rs;
    io::write_summary_csv(rs, rows);
    const auto rb = io::read_summary_csv(rs);
    REQUIRE(rb.size() == 2);
    CHECK(rb[1].config == "b");
    CHECK(rb[1].rep == 3);
    CHECK(rb[1].makespan_s == rows[1].makespan_s);

    std::istringstream neg("runtime_s\n-1\n");
    CHECK_THROWS_AS(io::read_samples_csv(neg), ValidationError);
}

TEST_CASE("scenario JSON: minimal document") {
    const auto s = io::scenario_from_json(io::parse_json(kMinimal, "inline"));
    CHECK(s.name == "m");
    CHECK(s.seed == 3);
    CHECK(s.bin_s == 10.0);
    CHECK(s.workload.nodes == 1);
    CHECK(std::get<StaticLink>(s.links[0]).rate == 10.0);
}

TEST_CASE("scenario JSON: diagnostics name the offending field") {
    CHECK(validation_field(with(kMinimal, "\"rate_gbps\": 10", "\"rate_gbps\": -10")) == "links[0].rate_gbps");
    CHECK(validation_field(with(kMinimal, "\"rate_gbps\": 10", "\"rate_gbps\": 10, \"bogus\": 1")) == "links[0].bogus");
    CHECK(validation_field(with(kMinimal, "\"volume_gbit\": 100", "\"volume_gbit\": 0")) ==
          "workload.phases[0].volume_gbit");
    CHECK(validation_field(with(kMinimal, "\"schema_version\": 1, ", "")) == "schema_version");
    CHECK(validation_field(with(kMinimal, "\"schema_version\": 1", "\"schema_version\": 2")) == "schema_version");
    CHECK(validation_field(with(kMinimal, "\"nodes\": 1", "\"nodes\": 2")) == "links");
    CHECK(validation_field(with(kMinimal, "\"kind\": \"static\"", "\"kind\": \"fast\"")) == "links[0].kind");
    CHECK(validation_field("{ not json") == "inline");
}

TEST_CASE("scenario JSON: bucket and quantile links, repeat blocks, counts") {
    const auto d = load("draining.json");
    CHECK(d.workload.nodes == 4);
    CHECK(d.workload.phases.size() == 4);
    REQUIRE(d.links.size() == 4);
    const auto& b = std::get<BucketLink>(d.links[3]);
    CHECK(b.config.initial_budget == 5000.0);
    CHECK_FALSE(b.noise);

    const auto q = load("quantile_hpc.json");
    CHECK(std::get<QuantileLink>(q.links[0]).distribution.values == hpc_like().values);

    const auto n = load("network_heavy.json");
    REQUIRE(std::get<BucketLink>(n.links[0]).noise);
    CHECK(std::get<BucketLink>(n.links[0]).noise->factor.name == "noise_factor");
}

TEST_CASE("every bundled scenario and distribution validates") {
    for (const auto& e : fs::directory_iterator(kData / "scenarios")) {
        CAPTURE(e.path().string());
        CHECK_NOTHROW(load(e.path().filename().string()));
    }
    for (const auto& e : fs::directory_iterator(kData / "distributions")) {
        CAPTURE(e.path().string());
        const auto d = io::distribution_from_json(io::parse_json(io::read_file(e.path()), e.path().string()));
        CHECK_NOTHROW(d.validate());
    }
    const auto hpc = io::distribution_from_json(
        io::parse_json(io::read_file(kData / "distributions" / "hpc_like.json"), "hpc"));
    CHECK(hpc.values == hpc_like().values);
    const auto gce = io::distribution_from_json(
        io::parse_json(io::read_file(kData / "distributions" / "gce_like.json"), "gce"));
    CHECK(gce.values == gce_like().values);
}

TEST_CASE("distribution JSON: probabilities are fixed") {
    const auto good = io::parse_json(R"({"name": "x", "anchors": [[0.01,1],[0.25,2],[0.5,3],[0.75,4],[0.99,5]]})", "x");
    const auto d = io::distribution_from_json(good);
    CHECK(io::distribution_from_json(io::parse_json(io::to_json(d).dump(), "rt")).values == d.values);
    const auto bad = io::parse_json(R"({"name": "x", "anchors": [[0.02,1],[0.25,2],[0.5,3],[0.75,4],[0.99,5]]})", "x");
    CHECK_THROWS_AS(io::distribution_from_json(bad), ValidationError);
    const auto desc = io::parse_json(R"({"name": "x", "anchors": [[0.01,5],[0.25,2],[0.5,3],[0.75,4],[0.99,5]]})", "x");
    CHECK_THROWS_AS(io::distribution_from_json(desc), ValidationError);
}

TEST_CASE("plan and fingerprint JSON round trip") {
    const std::vector<std::string> ids{"a", "b"};
    const auto plan = plan_experiments(ids, 3, 12.5, false, 8);
    const auto back = io::plan_from_json(io::parse_json(io::to_json(plan).dump(), "plan"));
    CHECK(io::to_json(back).dump() == io::to_json(plan).dump());

    auto fp = fingerprint(BucketLink{{1000.0, 1000.0, 1.0, 10.0, 1.0}, std::nullopt}, 600.0, 2);
    fp.created_at = "2026-01-01T00:00:00Z";
    const auto fb = io::fingerprint_from_json(io::parse_json(io::to_json(fp).dump(), "fp"));
    CHECK(io::to_json(fb).dump() == io::to_json(fp).dump());

    const auto flat = fingerprint(StaticLink{10.0}, 300.0, 2);
    CHECK_FALSE(io::to_json(flat).contains("bucket_fit"));
    CHECK_FALSE(io::fingerprint_from_json(io::parse_json(io::to_json(flat).dump(), "fp")).bucket_fit);
}

TEST_CASE("sha256 known answers") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
