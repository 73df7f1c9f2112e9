#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "varnet/cli.hpp"
#include "varnet/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = VARNET_DATA_DIR;

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "varnet");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = varnet::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("varnet_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) { return varnet::io::read_file(p); }

void spit(const fs::path& p, const std::string& s) { varnet::io::write_file(p, s); }

std::string scenario(const std::string& name) { return (kData / "scenarios" / name).string(); }

// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return files;
}

}  // namespace

TEST_CASE("simulate: static scenario, closed-form summary") {
    const auto dir = scratch("sim_static");
    const auto r = run({"simulate", scenario("static_single.json"), "--out", dir.string()});
    REQUIRE(r.code == 0);
    CHECK(slurp(dir / "summary.csv") == "config,rep,makespan_s\nstatic_single,0,10\n");
    const auto j = json::parse(slurp(dir / "run_rep0.json"));
    CHECK(j["makespan_s"] == 10.0);
    CHECK(j["provenance"]["inputs"][0]["sha256"].get<std::string>().size() == 64);
    CHECK(fs::exists(dir / "trace_rep0_node0.csv"));
}

TEST_CASE("simulate: reruns and parallel runs are byte-identical") {
    const auto a = scratch("sim_a"), b = scratch("sim_b"), c = scratch("sim_c");
    const auto s = scenario("network_heavy.json");
    REQUIRE(run({"simulate", s, "--reps", "4", "--seed", "5", "--out", a.string()}).code == 0);
    REQUIRE(run({"simulate", s, "--reps", "4", "--seed", "5", "--out", b.string()}).code == 0);
    REQUIRE(run({"simulate", s, "--reps", "4", "--seed", "5", "--parallel", "3", "--out", c.string()}).code == 0);
    CHECK(tree(a) == tree(b));
    CHECK(tree(a) == tree(c));
    const auto d = scratch("sim_d");
    REQUIRE(run({"simulate", s, "--reps", "4", "--seed", "6", "--out", d.string()}).code == 0);
    CHECK(slurp(a / "summary.csv") != slurp(d / "summary.csv"));
}

TEST_CASE("simulate: seed precedence") {
    const auto s = scenario("network_heavy.json");
    const auto flag = scratch("seed_flag"), env = scratch("seed_env"), file = scratch("seed_file");
    REQUIRE(run({"simulate", s, "--seed", "21", "--out", flag.string()}).code == 0);
    setenv("VARNET_SEED", "21", 1);
    REQUIRE(run({"simulate", s, "--out", env.string()}).code == 0);
    unsetenv("VARNET_SEED");
    REQUIRE(run({"simulate", s, "--out", file.string()}).code == 0);
    CHECK(slurp(flag / "summary.csv") == slurp(env / "summary.csv"));
    CHECK(slurp(flag / "summary.csv") != slurp(file / "summary.csv"));
    CHECK(json::parse(slurp(file / "run_rep0.json"))["provenance"]["seed"] == 13);
}

TEST_CASE("simulate: validation and I/O exit codes") {
    const auto dir = scratch("sim_bad");
    auto text = slurp(scenario("static_single.json"));
    text.replace(text.find("\"rate_gbps\": 10"), 15, "\"rate_gbps\": -10");
    spit(dir / "bad.json", text);
    const auto r = run({"simulate", (dir / "bad.json").string(), "--out", (dir / "o").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("links[0].rate_gbps") != std::string::npos);
    CHECK(run({"simulate", (dir / "missing.json").string()}).code == 1);
    CHECK(run({"simulate"}).code == 2);
    CHECK(run({"no-such-command"}).code == 2);
}

TEST_CASE("simulate: straggler slowdowns") {
    const auto dir = scratch("sim_straggler");
    REQUIRE(run({"simulate", scenario("straggler.json"), "--out", dir.string()}).code == 0);
    const auto j = json::parse(slurp(dir / "run_rep0.json"));
    REQUIRE(j["stragglers"].size() == 1);
    CHECK(j["stragglers"][0]["node"] == 3);
    CHECK(slurp(dir / "slowdowns.csv").find("straggler,0,9.66") != std::string::npos);
}

TEST_CASE("fit-bucket") {
    const auto dir = scratch("fit");
    std::string trace = "time_s,gbps\n";
    for (int k = 0; k < 120; ++k) trace += std::to_string(10 * k) + "," + (k < 60 ? "10" : "1") + "\n";
    spit(dir / "trace.csv", trace);
    const auto r = run({"fit-bucket", (dir / "trace.csv").string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["inferred_budget"].get<double>() == doctest::Approx(5400.0));
    CHECK(j["depletion_time"].get<double>() == doctest::Approx(600.0));

    std::string flat = "time_s,gbps\n";
    for (int k = 0; k < 60; ++k) flat += std::to_string(10 * k) + ",9.5\n";
    spit(dir / "flat.csv", flat);
    CHECK(run({"fit-bucket", (dir / "flat.csv").string()}).code == 3);

    spit(dir / "short.csv", "time_s,gbps\n0,10\n10,10\n20,10\n30,1\n40,1\n");
    const auto s = run({"fit-bucket", (dir / "short.csv").string()});
    CHECK(s.code == 2);
    CHECK(s.err.find("TraceTooShort") != std::string::npos);
}

TEST_CASE("fit-bucket consumes simulated trace exports") {
    const auto dir = scratch("fit_sim");
    REQUIRE(run({"simulate", scenario("bucket_c5.json"), "--out", dir.string()}).code == 0);
    const auto r = run({"fit-bucket", (dir / "trace_rep0_node0.csv").string()});
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["depletion_time"].get<double>() == doctest::Approx(600.0));
}

TEST_CASE("analyze") {
    const auto dir = scratch("analyze");
    spit(dir / "ten.csv", "runtime_s\n5\n3\n9\n1\n7\n2\n8\n10\n4\n6\n");
    const auto r = run({"analyze", (dir / "ten.csv").string(), "--tests", "jb,runs,mk", "--out", dir.string()});
    REQUIRE(r.code == 0);
    const auto j = json::parse(slurp(dir / "analysis.json"));
    CHECK(j["interval"]["lower_index"] == 2);
    CHECK(j["interval"]["upper_index"] == 9);
    CHECK(j["interval"]["achieved_coverage"].get<double>() == doctest::Approx(0.978515625));
    CHECK(j["tests"].contains("jarque_bera"));
    CHECK(j["tests"].contains("runs"));
    CHECK(j["tests"].contains("mann_kendall"));
    CHECK(slurp(dir / "confirm.csv").rfind("n,point,lower,upper\n6,", 0) == 0);

    std::string constant = "runtime_s\n";
    for (int i = 0; i < 12; ++i) constant += "7\n";
    spit(dir / "const.csv", constant);
    const auto c = scratch("analyze_const");
    REQUIRE(run({"analyze", (dir / "const.csv").string(), "--tests", "mk", "--out", c.string()}).code == 0);
    const auto cj = json::parse(slurp(c / "analysis.json"));
    CHECK(cj["repetitions"]["required_n"] == 6);
    CHECK(cj["tests"]["mann_kendall"].is_null());
    CHECK(cj["warnings"].size() == 1);
    std::istringstream curve(slurp(c / "confirm.csv"));
    std::string line;
    std::getline(curve, line);
    int rows = 0;
    while (std::getline(curve, line)) {
        ++rows;
        CHECK(line.substr(line.find(',')) == ",7,7,7");
    }
    CHECK(rows == 7);

    spit(dir / "few.csv", "runtime_s\n1\n2\n3\n");
    const auto few = scratch("analyze_few");
    REQUIRE(run({"analyze", (dir / "few.csv").string(), "--out", few.string()}).code == 0);
    const auto fj = json::parse(slurp(few / "analysis.json"));
    CHECK(fj["interval"].is_null());
    CHECK(fj["warnings"][0]["kind"] == "InsufficientSamples");

    spit(dir / "empty.csv", "");
    CHECK(run({"analyze", (dir / "empty.csv").string(), "--out", dir.string()}).code == 2);
    spit(dir / "header.csv", "runtime_s\n");
    CHECK(run({"analyze", (dir / "header.csv").string(), "--out", dir.string()}).code == 2);
    CHECK(run({"analyze", (dir / "ten.csv").string(), "--tests", "xx", "--out", dir.string()}).code == 2);
}

TEST_CASE("plan, run-plan and coupling") {
    const auto dir = scratch("plan");
    const auto p1 = (dir / "p1.json").string(), p2 = (dir / "p2.json").string();
    REQUIRE(run({"plan", "--configs", "draining,light", "--reps", "10", "--no-reset", "--seed", "4", "--out", p1})
                .code == 0);
    REQUIRE(run({"plan", "--configs", "draining,light", "--reps", "10", "--no-reset", "--seed", "4", "--out", p2})
                .code == 0);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(json::parse(slurp(p1))["provenance"]["command"] == "plan");

    const auto out = dir / "run";
    const auto rp = run({"run-plan", p1, "--bind", "draining=" + scenario("draining.json"), "--bind",
                         "light=" + scenario("light.json"), "--out", out.string()});
    REQUIRE(rp.code == 0);
    const auto results = json::parse(slurp(out / "results.json"));
    CHECK(results["entries"].size() == 20);

    const auto c = run({"coupling", (out / "summary.csv").string(), "--config", "draining"});
    REQUIRE(c.code == 0);
    const auto cj = json::parse(c.out);
    CHECK(cj["configs"]["draining"]["trend"]["trend"] == "Increasing");
    CHECK(cj["configs"]["draining"]["widening"] == true);

    CHECK(run({"run-plan", p1, "--bind", "draining=" + scenario("draining.json"), "--out", out.string()}).code == 2);
    CHECK(run({"run-plan", p1, "--bind", "oops", "--out", out.string()}).code == 2);
    CHECK(run({"plan", "--configs", "a", "--reps", "0"}).code == 2);
}

TEST_CASE("fingerprint and compare") {
    const auto dir = scratch("fp");
    const auto a = (dir / "a.json").string(), b = (dir / "b.json").string(), s = (dir / "s.json").string();
    REQUIRE(run({"fingerprint", scenario("bucket_c5.json"), "--created-at", "T0", "--out", a}).code == 0);
    REQUIRE(run({"fingerprint", scenario("bucket_c5.json"), "--created-at", "T0", "--out", b}).code == 0);
    CHECK(slurp(a) == slurp(b));
    REQUIRE(run({"fingerprint", scenario("static_single.json"), "--probe-s", "300", "--out", s}).code == 0);
    const auto sj = json::parse(slurp(s));
    CHECK_FALSE(sj["nodes"][0].contains("bucket_fit"));
    CHECK_FALSE(sj["nodes"][0]["created_at"].get<std::string>().empty());

    const auto same = run({"compare", a, b});
    CHECK(same.code == 0);
    CHECK(json::parse(same.out)["result"] == "Match");

    auto capped = slurp(scenario("bucket_c5.json"));
    capped.replace(capped.find("\"high_gbps\": 10"), 15, "\"high_gbps\": 5");
    spit(dir / "capped.json", capped);
    const auto c1200 = (dir / "c1200.json").string();
    REQUIRE(run({"fingerprint", (dir / "capped.json").string(), "--created-at", "T1", "--out", c1200}).code == 0);
    const auto drift = run({"compare", a, c1200});
    CHECK(drift.code == 3);
    CHECK(json::parse(drift.out)["result"] == "Drift");
    CHECK(run({"fingerprint", scenario("bucket_c5.json"), "--probe-s", "100"}).code == 2);
    CHECK(run({"compare", a, (dir / "nope.json").string()}).code == 1);
}
