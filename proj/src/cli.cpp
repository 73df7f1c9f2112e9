#include "varnet/cli.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "varnet/errors.hpp"
#include "varnet/io.hpp"
#include "varnet/protocol.hpp"
#include "varnet/rng.hpp"

namespace varnet::cli {
namespace {

namespace fs = std::filesystem;
using io::Json;

struct IoFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_input(const std::string& path, std::vector<io::InputDigest>& digests) {
    std::string text;
    try {
        text = io::read_file(path);
    } catch (const std::exception& e) {
        throw IoFailure(e.what());
    }
    digests.push_back({path, io::sha256_hex(text)});
    return text;
}

void write_output(const fs::path& path, const std::string& content) {
    try {
        io::write_file(path, content);
    } catch (const std::exception& e) {
        throw IoFailure(e.what());
    }
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoFailure("cannot create " + dir.string() + ": " + ec.message());
}

std::uint64_t parse_seed_text(const std::string& text, const std::string& source) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw ValidationError(source, "not an unsigned integer: '" + text + "'");
    }
    return v;
}

// --seed, then VARNET_SEED, then the file's own seed (or 0).
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::optional<std::uint64_t> file_seed) {
    if (flag) return *flag;
    if (const char* env = std::getenv("VARNET_SEED"); env != nullptr && *env != '\0') {
        return parse_seed_text(env, "VARNET_SEED");
    }
    return file_seed.value_or(0);
}

Scenario load_scenario(const std::string& path, std::vector<io::InputDigest>& digests) {
    const auto text = read_input(path, digests);
    return io::scenario_from_json(io::parse_json(text, path), fs::path(path).parent_path());
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream ss;
    ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return ss.str();
}

// Bucket links become Static(high); other links are kept.
std::vector<LinkModel> baseline_links(const std::vector<LinkModel>& links) {
    std::vector<LinkModel> out;
    for (const auto& l : links) {
        if (const auto* b = std::get_if<BucketLink>(&l)) {
            out.emplace_back(StaticLink{b->config.high_rate});
        } else {
            out.push_back(l);
        }
    }
    return out;
}

template <class Fn>
void parallel_for(std::size_t count, std::size_t workers, Fn&& fn) {
    workers = std::max<std::size_t>(1, std::min(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < count; i = next++) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
    std::string scenario;
    std::size_t reps = 1;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::size_t parallel = 1;
    std::optional<double> bin_s;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
    std::vector<io::InputDigest> digests;
    const Scenario scenario = load_scenario(a.scenario, digests);
    const std::uint64_t seed = resolve_seed(a.seed, scenario.seed);
    const double bin_s = a.bin_s.value_or(scenario.bin_s);
    if (!(bin_s > 0.0)) throw ValidationError("--bin-s", "must be > 0");
    if (a.reps < 1) throw ValidationError("--reps", "must be >= 1");
    const fs::path dir(a.out);
    ensure_dir(dir);

    const auto base_links = baseline_links(scenario.links);
    std::vector<RunResult> runs(a.reps);
    std::vector<RunResult> baselines(a.reps);
    parallel_for(a.reps, a.parallel, [&](std::size_t r) {
        const auto run_seed = derive_seed(seed, r);
        runs[r] = run_experiment(scenario.workload, scenario.links, run_seed);
        baselines[r] = run_experiment(scenario.workload, base_links, run_seed);
    });

    std::vector<io::SummaryRow> summary;
    std::ostringstream slow;
    slow << "config,rep,slowdown\n";
    for (std::size_t r = 0; r < a.reps; ++r) {
        Json j{{"schema_version", io::kSchemaVersion}, {"config", scenario.name}, {"rep", r}};
        const Json run = io::to_json(runs[r]);
        for (const auto& [k, v] : run.items()) j[k] = v;
        j["provenance"] = io::provenance("simulate", seed, digests);
        write_output(dir / ("run_rep" + std::to_string(r) + ".json"), io::dump(j));
        for (std::size_t i = 0; i < runs[r].nodes.size(); ++i) {
            std::ostringstream csv;
            io::write_trace_csv(csv, bin_trace(runs[r].nodes[i].trace, bin_s));
            write_output(dir / ("trace_rep" + std::to_string(r) + "_node" + std::to_string(i) + ".csv"), csv.str());
        }
        summary.push_back({scenario.name, r, runs[r].makespan});
        slow << scenario.name << ',' << r << ',' << io::format_number(slowdown(runs[r], baselines[r])) << '\n';
    }
    std::ostringstream csv;
    io::write_summary_csv(csv, summary);
    write_output(dir / "summary.csv", csv.str());
    write_output(dir / "slowdowns.csv", slow.str());
    out << "wrote " << a.reps << " repetition(s) of '" << scenario.name << "' to " << dir.string() << "\n";
    return kOk;
}

// fit-bucket ----------------------------------------------------------------

int cmd_fit_bucket(const std::string& path, std::ostream& out, std::ostream& err) {
    std::vector<io::InputDigest> digests;
    std::istringstream in(read_input(path, digests));
    const auto trace = io::read_trace_csv(in);
    try {
        const auto fit = io::to_json(fit_token_bucket(trace));
        out << io::dump(fit);
        return kOk;
    } catch (const TraceTooShort& e) {
        err << "TraceTooShort: " << e.what() << "\n";
        return kValidationError;
    } catch (const NoThrottleDetected& e) {
        err << "NoThrottleDetected: " << e.what() << "\n";
        return kAnalysisCondition;
    }
}

// analyze -------------------------------------------------------------------

struct AnalyzeArgs {
    std::string samples;
    double quantile = 0.5;
    double confidence = 0.95;
    double epsilon = 0.01;
    std::vector<std::string> tests;
    std::string out = "out";
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
    std::vector<io::InputDigest> digests;
    std::istringstream in(read_input(a.samples, digests));
    const SampleSet samples = io::read_samples_csv(in);
    if (samples.values.empty()) throw ValidationError(a.samples, "no samples");
    if (!(a.quantile > 0.0 && a.quantile < 1.0)) throw ValidationError("--quantile", "must lie in (0, 1)");
    if (!(a.confidence > 0.0 && a.confidence < 1.0)) throw ValidationError("--confidence", "must lie in (0, 1)");
    if (!(a.epsilon > 0.0)) throw ValidationError("--epsilon", "must be > 0");

    Json warnings = Json::array();
    Json j{{"schema_version", io::kSchemaVersion},
           {"label", samples.label},
           {"n", samples.values.size()},
           {"quantile", a.quantile},
           {"confidence", a.confidence},
           {"epsilon", a.epsilon}};
    try {
        j["interval"] = io::to_json(quantile_ci(samples, a.quantile, a.confidence));
    } catch (const InsufficientSamples& e) {
        j["interval"] = nullptr;
        warnings.push_back(Json{{"kind", "InsufficientSamples"}, {"message", e.what()}});
    }
    const auto reps = required_repetitions(samples, a.quantile, a.confidence, a.epsilon);
    j["repetitions"] = io::to_json(reps);

    Json tests = Json::object();
    auto run_test = [&](const std::string& name, auto&& fn) {
        try {
            tests[name] = fn();
        } catch (const AnalysisError& e) {
            tests[name] = nullptr;
            warnings.push_back(Json{{"kind", name}, {"message", e.what()}});
        }
    };
    for (const auto& t : a.tests) {
        if (t == "jb") {
            run_test("jarque_bera", [&] { return io::to_json(jarque_bera(samples.values)); });
        } else if (t == "runs") {
            run_test("runs", [&] { return io::to_json(runs_test(samples.values)); });
        } else if (t == "mk") {
            run_test("mann_kendall", [&] { return io::to_json(mann_kendall(samples.values)); });
        } else {
            throw ValidationError("--tests", "unknown test '" + t + "' (expected jb, runs, mk)");
        }
    }
    j["tests"] = tests;
    j["warnings"] = warnings;
    j["provenance"] = io::provenance("analyze", 0, digests);

    const fs::path dir(a.out);
    ensure_dir(dir);
    write_output(dir / "analysis.json", io::dump(j));
    std::ostringstream csv;
    io::write_curve_csv(csv, reps);
    write_output(dir / "confirm.csv", csv.str());
    out << "wrote analysis of " << samples.values.size() << " sample(s) to " << dir.string() << "\n";
    return kOk;
}

// plan ----------------------------------------------------------------------

struct PlanArgs {
    std::vector<std::string> configs;
    std::size_t reps = 1;
    double rest_s = 0.0;
    bool reset = true;
    std::optional<std::uint64_t> seed;
    std::string out;
};

int cmd_plan(const PlanArgs& a, std::ostream& out) {
    const std::uint64_t seed = resolve_seed(a.seed, std::nullopt);
    ExperimentPlan plan;
    try {
        plan = plan_experiments(a.configs, a.reps, a.rest_s, a.reset, seed);
    } catch (const ParameterError& e) {
        throw ValidationError("plan", e.what());
    }
    auto j = io::to_json(plan);
    j["provenance"] = io::provenance("plan", seed, {});
    if (a.out.empty()) {
        out << io::dump(j);
    } else {
        write_output(a.out, io::dump(j));
    }
    return kOk;
}

// run-plan ------------------------------------------------------------------

struct RunPlanArgs {
    std::string plan;
    std::vector<std::string> bindings;
    std::string out = "out";
    bool auto_rest = false;
};

int cmd_run_plan(const RunPlanArgs& a, std::ostream& out) {
    std::vector<io::InputDigest> digests;
    const auto plan = io::plan_from_json(io::parse_json(read_input(a.plan, digests), a.plan));
    std::map<std::string, Scenario> bound;
    for (const auto& b : a.bindings) {
        const auto eq = b.find('=');
        if (eq == std::string::npos || eq == 0) throw ValidationError("--bind", "expected id=path, got '" + b + "'");
        bound[b.substr(0, eq)] = load_scenario(b.substr(eq + 1), digests);
    }
    for (const auto& e : plan.entries) {
        if (!bound.count(e.config)) throw ValidationError("--bind", "unbound config id '" + e.config + "'");
    }

    const auto results = execute_plan(plan, bound, ExecuteOptions{a.auto_rest});
    Json entries = Json::array();
    std::vector<io::SummaryRow> summary;
    for (const auto& r : results) {
        Json budgets = Json::array();
        for (const auto& b : r.budgets_before) budgets.push_back(b ? Json(*b) : Json(nullptr));
        Json e{{"index", r.index},
               {"config", r.entry.config},
               {"rep", r.entry.repetition},
               {"rest_before_s", r.entry.rest_before},
               {"reset_state", r.entry.reset_state},
               {"run_seed", r.run_seed},
               {"budgets_before_gbit", budgets}};
        e["result"] = io::to_json(r.result);
        entries.push_back(e);
        summary.push_back({r.entry.config, r.entry.repetition, r.result.makespan});
    }
    Json j{{"schema_version", io::kSchemaVersion}, {"entries", entries}};
    j["provenance"] = io::provenance("run-plan", plan.seed, digests);

    const fs::path dir(a.out);
    ensure_dir(dir);
    write_output(dir / "results.json", io::dump(j));
    std::ostringstream csv;
    io::write_summary_csv(csv, summary);
    write_output(dir / "summary.csv", csv.str());
    out << "executed " << results.size() << " plan entries into " << dir.string() << "\n";
    return kOk;
}

// fingerprint / compare -----------------------------------------------------

struct FingerprintArgs {
    std::string scenario;
    double probe_s = 1200.0;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string created_at;
    double bin_s = 10.0;
};

int cmd_fingerprint(const FingerprintArgs& a, std::ostream& out) {
    std::vector<io::InputDigest> digests;
    const Scenario scenario = load_scenario(a.scenario, digests);
    const std::uint64_t seed = resolve_seed(a.seed, scenario.seed);
    if (!(a.probe_s >= 300.0)) throw ValidationError("--probe-s", "must be >= 300");
    const std::string created = a.created_at.empty() ? utc_now() : a.created_at;

    std::vector<Fingerprint> fps(scenario.links.size());
    for (std::size_t i = 0; i < fps.size(); ++i) {
        fps[i] = fingerprint(scenario.links[i], a.probe_s, derive_seed(seed, i), a.bin_s);
        fps[i].created_at = created;
    }
    Json nodes = Json::array();
    for (const auto& fp : fps) nodes.push_back(io::to_json(fp));
    Json j{{"schema_version", io::kSchemaVersion}, {"scenario", scenario.name}, {"nodes", nodes}};
    j["provenance"] = io::provenance("fingerprint", seed, digests);
    if (a.out.empty()) {
        out << io::dump(j);
    } else {
        write_output(a.out, io::dump(j));
    }
    return kOk;
}

std::vector<Fingerprint> load_fingerprints(const std::string& path, std::vector<io::InputDigest>& digests) {
    const auto j = io::parse_json(read_input(path, digests), path);
    if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_array()) {
        throw ValidationError(path, "expected a fingerprint file with a 'nodes' array");
    }
    std::vector<Fingerprint> out;
    for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
        out.push_back(io::fingerprint_from_json(j["nodes"][i], "nodes[" + std::to_string(i) + "]"));
    }
    return out;
}

int cmd_compare(const std::string& ref, const std::string& obs, double tolerance, std::ostream& out) {
    std::vector<io::InputDigest> digests;
    const auto a = load_fingerprints(ref, digests);
    const auto b = load_fingerprints(obs, digests);
    if (a.size() != b.size()) throw ValidationError("nodes", "fingerprint files cover different node counts");
    bool all = true;
    Json nodes = Json::array();
    for (std::size_t i = 0; i < a.size(); ++i) {
        FingerprintComparison cmp;
        try {
            cmp = compare_fingerprints(a[i], b[i], tolerance);
        } catch (const ParameterError& e) {
            throw ValidationError("nodes[" + std::to_string(i) + "]", e.what());
        }
        all = all && cmp.match;
        nodes.push_back(io::to_json(cmp));
    }
    Json j{{"schema_version", io::kSchemaVersion}, {"result", all ? "Match" : "Drift"}, {"tolerance", tolerance}, {"nodes", nodes}};
    j["provenance"] = io::provenance("compare", 0, digests);
    out << io::dump(j);
    return all ? kOk : kAnalysisCondition;
}

// coupling ------------------------------------------------------------------

struct CouplingArgs {
    std::string summary;
    std::string config;
    double confidence = 0.95;
    double widening = 0.20;
    std::string out;
};

int cmd_coupling(const CouplingArgs& a, std::ostream& out) {
    std::vector<io::InputDigest> digests;
    std::istringstream in(read_input(a.summary, digests));
    const auto rows = io::read_summary_csv(in);
    std::vector<std::string> configs;
    std::map<std::string, std::vector<double>> series;
    for (const auto& r : rows) {
        if (!series.count(r.config)) configs.push_back(r.config);
        series[r.config].push_back(r.makespan_s);
    }
    if (!a.config.empty()) {
        if (!series.count(a.config)) throw ValidationError("--config", "no rows for config '" + a.config + "'");
        configs = {a.config};
    }
    Json reports = Json::object();
    Json warnings = Json::array();
    for (const auto& c : configs) {
        try {
            reports[c] = io::to_json(coupling_check(series[c], a.confidence, a.widening));
        } catch (const InsufficientSamples& e) {
            reports[c] = nullptr;
            warnings.push_back(Json{{"config", c}, {"kind", "InsufficientSamples"}, {"message", e.what()}});
        }
    }
    Json j{{"schema_version", io::kSchemaVersion}, {"configs", reports}, {"warnings", warnings}};
    j["provenance"] = io::provenance("coupling", 0, digests);
    if (a.out.empty()) {
        out << io::dump(j);
    } else {
        write_output(a.out, io::dump(j));
    }
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"varnet: cloud network variability simulator and experiment-protocol toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", io::kToolVersion);

    std::optional<std::uint64_t> seed;

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "Run a scenario for a number of repetitions");
    simulate->add_option("scenario", sim.scenario, "Scenario JSON")->required();
    simulate->add_option("--reps", sim.reps, "Repetitions");
    simulate->add_option("--seed", seed, "Master seed (default: VARNET_SEED, then the scenario seed)");
    simulate->add_option("--out", sim.out, "Output directory");
    simulate->add_option("--parallel", sim.parallel, "Worker threads");
    simulate->add_option("--bin-s", sim.bin_s, "Trace bin width in seconds (default: scenario bin_s)");

    std::string fit_path;
    auto* fit = app.add_subcommand("fit-bucket", "Fit token-bucket parameters to a time_s,gbps trace");
    fit->add_option("trace", fit_path, "Trace CSV")->required();

    AnalyzeArgs an;
    std::string tests_flag;
    auto* analyze = app.add_subcommand("analyze", "Nonparametric CI, repetition curve and hypothesis tests");
    analyze->add_option("samples", an.samples, "Samples CSV (runtime_s[,label])")->required();
    analyze->add_option("--quantile", an.quantile, "Quantile probability");
    analyze->add_option("--confidence", an.confidence, "Confidence level");
    analyze->add_option("--epsilon", an.epsilon, "Target relative CI half-width");
    analyze->add_option("--tests", tests_flag, "Comma-separated subset of jb,runs,mk");
    analyze->add_option("--out", an.out, "Output directory");

    PlanArgs pl;
    std::string configs_flag;
    bool no_reset = false;
    auto* plan = app.add_subcommand("plan", "Build a randomized, rest-aware experiment plan");
    plan->add_option("--configs", configs_flag, "Comma-separated config ids")->required();
    plan->add_option("--reps", pl.reps, "Repetitions per config");
    plan->add_option("--rest-s", pl.rest_s, "Rest before each entry in seconds");
    plan->add_flag("--no-reset", no_reset, "Carry bucket state across entries instead of resetting it");
    plan->add_option("--seed", seed, "Plan seed (default: VARNET_SEED, then 0)");
    plan->add_option("--out", pl.out, "Output file (default: stdout)");

    RunPlanArgs rp;
    auto* run_plan = app.add_subcommand("run-plan", "Execute a plan against bound scenarios");
    run_plan->add_option("plan", rp.plan, "Plan JSON")->required();
    run_plan->add_option("--bind", rp.bindings, "Binding id=scenario.json (repeatable)")->required();
    run_plan->add_option("--out", rp.out, "Output directory");
    run_plan->add_flag("--auto-rest", rp.auto_rest, "Rest long enough to refill what the previous entry drained");

    FingerprintArgs fa;
    auto* fpcmd = app.add_subcommand("fingerprint", "Probe every link of a scenario and record a fingerprint");
    fpcmd->add_option("scenario", fa.scenario, "Scenario JSON")->required();
    fpcmd->add_option("--probe-s", fa.probe_s, "Probe duration per pattern in seconds");
    fpcmd->add_option("--seed", seed, "Seed (default: VARNET_SEED, then the scenario seed)");
    fpcmd->add_option("--bin-s", fa.bin_s, "Bin width for the full-speed trace");
    fpcmd->add_option("--created-at", fa.created_at, "Timestamp to record (default: now, UTC)");
    fpcmd->add_option("--out", fa.out, "Output file (default: stdout)");

    std::string cmp_a, cmp_b;
    double tolerance = 0.10;
    auto* compare = app.add_subcommand("compare", "Compare two fingerprint files");
    compare->add_option("reference", cmp_a, "Reference fingerprint JSON")->required();
    compare->add_option("observed", cmp_b, "Observed fingerprint JSON")->required();
    compare->add_option("--tolerance", tolerance, "Relative tolerance");

    CouplingArgs cp;
    auto* coupling = app.add_subcommand("coupling", "Trend and CI-widening check on a summary CSV");
    coupling->add_option("summary", cp.summary, "Summary CSV (config,rep,makespan_s) in plan order")->required();
    coupling->add_option("--config", cp.config, "Only this config");
    coupling->add_option("--confidence", cp.confidence, "Confidence level");
    coupling->add_option("--widening", cp.widening, "Relative widening threshold");
    coupling->add_option("--out", cp.out, "Output file (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidationError;
    }

    auto split = [](const std::string& s) {
        std::vector<std::string> parts;
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) parts.push_back(item);
        }
        return parts;
    };

    try {
        if (simulate->parsed()) {
            sim.seed = seed;
            return cmd_simulate(sim, out);
        }
        if (fit->parsed()) return cmd_fit_bucket(fit_path, out, err);
        if (analyze->parsed()) {
            an.tests = split(tests_flag);
            return cmd_analyze(an, out);
        }
        if (plan->parsed()) {
            pl.configs = split(configs_flag);
            pl.reset = !no_reset;
            pl.seed = seed;
            return cmd_plan(pl, out);
        }
        if (run_plan->parsed()) return cmd_run_plan(rp, out);
        if (fpcmd->parsed()) {
            fa.seed = seed;
            return cmd_fingerprint(fa, out);
        }
        if (compare->parsed()) return cmd_compare(cmp_a, cmp_b, tolerance, out);
        if (coupling->parsed()) return cmd_coupling(cp, out);
    } catch (const IoFailure& e) {
        err << "error: " << e.what() << "\n";
        return kIoError;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidationError;
    } catch (const ParameterError& e) {
        err << "validation error: " << e.what() << "\n";
        return kValidationError;
    } catch (const AnalysisError& e) {
        err << "analysis: " << e.what() << "\n";
        return kAnalysisCondition;
    }
    return kValidationError;
}

}  // namespace varnet::cli
