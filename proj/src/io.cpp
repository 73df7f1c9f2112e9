#include "varnet/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "varnet/errors.hpp"

namespace varnet::io {
namespace {

using nlohmann::json;

std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

// Strict view of a JSON object: every key must be consumed before finish().
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ValidationError(path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& at(const std::string& key) {
        if (!j_.contains(key)) throw ValidationError(field(key), "missing required field");
        used_.insert(key);
        return j_.at(key);
    }

    double number(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number()) throw ValidationError(field(key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(field(key), "must be finite");
        return d;
    }

    double number(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    double positive(const std::string& key) {
        const double d = number(key);
        if (!(d > 0.0)) throw ValidationError(field(key), "must be > 0");
        return d;
    }

    double non_negative(const std::string& key) {
        const double d = number(key);
        if (d < 0.0) throw ValidationError(field(key), "must be >= 0");
        return d;
    }

    std::uint64_t unsigned_integer(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ValidationError(field(key), "expected a non-negative integer");
        }
        return v.get<std::uint64_t>();
    }

    std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
        return has(key) ? unsigned_integer(key) : fallback;
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const auto& v = at(key);
        if (!v.is_boolean()) throw ValidationError(field(key), "expected true or false");
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_string()) throw ValidationError(field(key), "expected a string");
        return v.get<std::string>();
    }

    std::string string(const std::string& key, const std::string& fallback) {
        return has(key) ? string(key) : fallback;
    }

    const json& array(const std::string& key) {
        const auto& v = at(key);
        if (!v.is_array()) throw ValidationError(field(key), "expected an array");
        return v;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!used_.count(key)) throw ValidationError(field(key), "unknown field");
        }
    }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

void check_schema_version(Fields& f) {
    const auto v = f.unsigned_integer("schema_version");
    if (v != kSchemaVersion) {
        throw ValidationError(f.field("schema_version"), "unsupported version " + std::to_string(v));
    }
}

template <class Fn>
void rethrow_as_validation(const std::string& path, Fn&& fn) {
    try {
        fn();
    } catch (const ParameterError& e) {
        throw ValidationError(path, e.what());
    }
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::string trim(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    return s.substr(i);
}

double parse_double(const std::string& text, const std::string& where) {
    double v = 0.0;
    const std::string t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
        throw ValidationError(where, "not a number: '" + t + "'");
    }
    return v;
}

// Reads header + rows; lines are numbered from 1 for diagnostics.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
};

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        for (auto& c : cells) c = trim(c);
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            t.rows.emplace_back(line_no, std::move(cells));
        }
    }
    if (t.header.empty()) throw ValidationError("csv", "empty file");
    return t;
}

std::string line_ref(std::size_t line_no) { return "line " + std::to_string(line_no); }

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::vector<Phase> phases_from_json(const json& arr, const std::string& path) {
    std::vector<Phase> phases;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        Fields f(arr[i], index_path(path, i));
        if (f.has("repeat")) {
            const auto times = f.unsigned_integer("repeat");
            if (times < 1) throw ValidationError(f.field("repeat"), "must be >= 1");
            const auto inner = phases_from_json(f.array("phases"), f.field("phases"));
            f.finish();
            for (std::uint64_t k = 0; k < times; ++k) phases.insert(phases.end(), inner.begin(), inner.end());
            continue;
        }
        Phase phase;
        const std::string kind = f.string("kind");
        if (kind == "transfer") {
            phase.work = TransferPhase{f.positive("volume_gbit"), f.positive("cap_gbps")};
        } else if (kind == "compute") {
            phase.work = ComputePhase{f.positive("duration_s")};
        } else {
            throw ValidationError(f.field("kind"), "expected \"transfer\" or \"compute\"");
        }
        phase.barrier = f.boolean("barrier", true);
        f.finish();
        phases.push_back(phase);
    }
    return phases;
}

QuantileDistribution distribution_ref(Fields& f, const std::filesystem::path& base_dir) {
    if (f.has("distribution") == f.has("distribution_file")) {
        throw ValidationError(f.field("distribution"), "give exactly one of distribution, distribution_file");
    }
    if (f.has("distribution")) return distribution_from_json(f.at("distribution"), f.field("distribution"));
    const auto file = base_dir / f.string("distribution_file");
    std::string text;
    try {
        text = read_file(file);
    } catch (const std::exception& e) {
        throw ValidationError(f.field("distribution_file"), e.what());
    }
    return distribution_from_json(parse_json(text, file.string()), f.field("distribution_file"));
}

SamplingSchedule schedule_from(Fields& f) {
    SamplingSchedule s;
    s.resample_interval = f.positive("resample_s");
    s.per_node_independent = f.boolean("per_node_independent", true);
    return s;
}

LinkModel link_from_json(Fields& f, const std::filesystem::path& base_dir) {
    const std::string kind = f.string("kind");
    if (kind == "static") return StaticLink{f.positive("rate_gbps")};
    if (kind == "quantile") {
        QuantileLink q;
        q.distribution = distribution_ref(f, base_dir);
        q.schedule = schedule_from(f);
        return q;
    }
    if (kind == "bucket") {
        BucketLink b;
        b.config.capacity = f.non_negative("capacity_gbit");
        b.config.initial_budget = f.non_negative("initial_budget_gbit");
        b.config.refill_rate = f.non_negative("refill_gbps");
        b.config.high_rate = f.positive("high_gbps");
        b.config.low_rate = f.positive("low_gbps");
        if (f.has("noise")) {
            Fields nf(f.at("noise"), f.field("noise"));
            RateNoise noise;
            noise.factor = distribution_ref(nf, base_dir);
            noise.schedule = schedule_from(nf);
            nf.finish();
            b.noise = noise;
        }
        rethrow_as_validation(f.path(), [&] { b.config.validate(); });
        return b;
    }
    throw ValidationError(f.field("kind"), "expected \"static\", \"quantile\" or \"bucket\"");
}

Json plateau_json(const PlateauSummary& p) {
    return Json{{"pattern", p.pattern}, {"min_gbps", p.min}, {"median_gbps", p.median}, {"max_gbps", p.max}};
}

}  // namespace

std::string format_number(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_trace_csv(std::ostream& out, std::span<const TraceSample> trace) {
    out << "time_s,gbps\n";
    for (const auto& s : trace) out << format_number(s.time_s) << ',' << format_number(s.gbps) << '\n';
}

std::vector<TraceSample> read_trace_csv(std::istream& in) {
    const auto t = read_csv(in);
    if (t.header != std::vector<std::string>{"time_s", "gbps"}) {
        throw ValidationError("header", "expected 'time_s,gbps'");
    }
    std::vector<TraceSample> out;
    for (const auto& [line_no, cells] : t.rows) {
        if (cells.size() != 2) throw ValidationError(line_ref(line_no), "expected 2 columns");
        out.push_back({parse_double(cells[0], line_ref(line_no) + ".time_s"),
                       parse_double(cells[1], line_ref(line_no) + ".gbps")});
    }
    return out;
}

void write_samples_csv(std::ostream& out, const SampleSet& samples) {
    if (samples.label.empty()) {
        out << "runtime_s\n";
        for (double v : samples.values) out << format_number(v) << '\n';
        return;
    }
    out << "runtime_s,label\n";
    for (double v : samples.values) out << format_number(v) << ',' << samples.label << '\n';
}

SampleSet read_samples_csv(std::istream& in) {
    const auto t = read_csv(in);
    const bool labelled = t.header == std::vector<std::string>{"runtime_s", "label"};
    if (!labelled && t.header != std::vector<std::string>{"runtime_s"}) {
        throw ValidationError("header", "expected 'runtime_s' or 'runtime_s,label'");
    }
    SampleSet s;
    for (const auto& [line_no, cells] : t.rows) {
        if (cells.size() != (labelled ? 2u : 1u)) throw ValidationError(line_ref(line_no), "wrong column count");
        const double v = parse_double(cells[0], line_ref(line_no) + ".runtime_s");
        if (!std::isfinite(v) || v <= 0.0) throw ValidationError(line_ref(line_no) + ".runtime_s", "must be > 0");
        s.values.push_back(v);
        if (labelled && s.label.empty()) s.label = cells[1];
    }
    return s;
}

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows) {
    out << "config,rep,makespan_s\n";
    for (const auto& r : rows) out << r.config << ',' << r.rep << ',' << format_number(r.makespan_s) << '\n';
}

std::vector<SummaryRow> read_summary_csv(std::istream& in) {
    const auto t = read_csv(in);
    if (t.header != std::vector<std::string>{"config", "rep", "makespan_s"}) {
        throw ValidationError("header", "expected 'config,rep,makespan_s'");
    }
    std::vector<SummaryRow> rows;
    for (const auto& [line_no, cells] : t.rows) {
        if (cells.size() != 3) throw ValidationError(line_ref(line_no), "expected 3 columns");
        const double rep = parse_double(cells[1], line_ref(line_no) + ".rep");
        if (rep < 0 || rep != std::floor(rep)) throw ValidationError(line_ref(line_no) + ".rep", "not an index");
        rows.push_back({cells[0], static_cast<std::size_t>(rep), parse_double(cells[2], line_ref(line_no) + ".makespan_s")});
    }
    return rows;
}

void write_curve_csv(std::ostream& out, const RepetitionAnalysis& analysis) {
    out << "n,point,lower,upper\n";
    for (const auto& p : analysis.curve) {
        out << p.n << ',' << format_number(p.point) << ',' << format_number(p.lower) << ',' << format_number(p.upper)
            << '\n';
    }
}

QuantileDistribution distribution_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    QuantileDistribution d;
    d.name = f.string("name", "");
    const auto& anchors = f.array("anchors");
    if (anchors.size() != 5) throw ValidationError(f.field("anchors"), "expected 5 [probability, gbps] pairs");
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& a = anchors[i];
        const std::string where = index_path(f.field("anchors"), i);
        if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
            throw ValidationError(where, "expected [probability, gbps]");
        }
        const double p = a[0].get<double>();
        if (std::abs(p - QuantileDistribution::kProbabilities[i]) > 1e-12) {
            throw ValidationError(where, "probability must be " + format_number(QuantileDistribution::kProbabilities[i]));
        }
        d.values[i] = a[1].get<double>();
    }
    f.finish();
    rethrow_as_validation(f.field("anchors"), [&] { d.validate(); });
    return d;
}

Json to_json(const QuantileDistribution& dist) {
    Json anchors = Json::array();
    for (std::size_t i = 0; i < 5; ++i) anchors.push_back({QuantileDistribution::kProbabilities[i], dist.values[i]});
    return Json{{"name", dist.name}, {"anchors", anchors}};
}

Scenario scenario_from_json(const json& j, const std::filesystem::path& base_dir) {
    Fields f(j, "");
    check_schema_version(f);
    Scenario s;
    s.name = f.string("name", "scenario");
    s.seed = f.unsigned_integer("seed");
    s.bin_s = f.has("bin_s") ? f.positive("bin_s") : 10.0;

    Fields wf(f.at("workload"), "workload");
    const auto nodes = wf.unsigned_integer("nodes");
    if (nodes < 1) throw ValidationError("workload.nodes", "must be >= 1");
    s.workload.nodes = static_cast<std::size_t>(nodes);
    s.workload.phases = phases_from_json(wf.array("phases"), "workload.phases");
    if (s.workload.phases.empty()) throw ValidationError("workload.phases", "must not be empty");
    wf.finish();

    const auto& links = f.array("links");
    for (std::size_t i = 0; i < links.size(); ++i) {
        Fields lf(links[i], index_path("links", i));
        const auto count = lf.unsigned_integer("count", 1);
        if (count < 1) throw ValidationError(lf.field("count"), "must be >= 1");
        const LinkModel link = link_from_json(lf, base_dir);
        lf.finish();
        s.links.insert(s.links.end(), count, link);
    }
    if (s.links.size() != s.workload.nodes) {
        throw ValidationError("links", "describes " + std::to_string(s.links.size()) + " links for " +
                                           std::to_string(s.workload.nodes) + " nodes");
    }
    f.finish();
    rethrow_as_validation("scenario", [&] { s.validate(); });
    return s;
}

Json to_json(const FitReport& fit) {
    return Json{{"high_rate", fit.high_rate},
                {"low_rate", fit.low_rate},
                {"depletion_time", fit.depletion_time},
                {"inferred_budget", fit.inferred_budget},
                {"changepoint_index", fit.changepoint_index},
                {"refill_assumption", fit.refill_assumption},
                {"refill_assumption_rule", "refill_rate = low_rate"}};
}

FitReport fit_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    FitReport r;
    r.high_rate = f.number("high_rate");
    r.low_rate = f.number("low_rate");
    r.depletion_time = f.number("depletion_time");
    r.inferred_budget = f.number("inferred_budget");
    r.changepoint_index = static_cast<std::size_t>(f.unsigned_integer("changepoint_index"));
    r.refill_assumption = f.number("refill_assumption");
    f.string("refill_assumption_rule", "");
    f.finish();
    return r;
}

Json to_json(const Straggler& s) {
    return Json{{"node", s.node},
                {"average_gbps", s.average_gbps},
                {"peer_median_gbps", s.peer_median_gbps},
                {"severity", s.severity}};
}

Json to_json(const RunResult& run) {
    Json nodes = Json::array();
    for (std::size_t i = 0; i < run.nodes.size(); ++i) {
        const auto& n = run.nodes[i];
        nodes.push_back(Json{{"node", i},
                             {"finish_s", n.finish},
                             {"transferred_gbit", n.transferred},
                             {"final_budget_gbit", optional_number(n.final_budget)}});
    }
    Json j{{"seed", run.seed}, {"makespan_s", run.makespan}, {"nodes", nodes}};
    if (run.nodes.size() >= 2) {
        Json stragglers = Json::array();
        for (const auto& s : detect_stragglers(run)) stragglers.push_back(to_json(s));
        j["stragglers"] = stragglers;
    }
    return j;
}

Json to_json(const ConfidenceInterval& ci) {
    return Json{{"statistic", ci.statistic},
                {"n", ci.n},
                {"point_estimate", ci.point_estimate},
                {"lower", ci.lower},
                {"upper", ci.upper},
                {"lower_index", ci.lower_index},
                {"upper_index", ci.upper_index},
                {"achieved_coverage", ci.achieved_coverage},
                {"nominal_confidence", ci.nominal_confidence},
                {"relative_half_width", ci.relative_half_width()}};
}

Json to_json(const RepetitionAnalysis& analysis) {
    Json curve = Json::array();
    for (const auto& p : analysis.curve) {
        curve.push_back(Json{{"n", p.n},
                             {"point", p.point},
                             {"lower", p.lower},
                             {"upper", p.upper},
                             {"relative_half_width", p.relative_half_width}});
    }
    Json j{{"n_max", analysis.n_max}};
    if (analysis.required) {
        j["required_n"] = *analysis.required;
        j["reached"] = true;
    } else {
        j["required_n"] = nullptr;
        j["reached"] = false;
    }
    j["curve"] = curve;
    return j;
}

Json to_json(const JarqueBeraResult& r) {
    return Json{{"statistic", r.statistic},
                {"skewness", r.skewness},
                {"excess_kurtosis", r.excess_kurtosis},
                {"p_value", r.p_value},
                {"reject", r.reject}};
}

Json to_json(const RunsTestResult& r) {
    return Json{{"runs", r.runs},         {"above", r.above},     {"below", r.below},  {"expected_runs", r.expected_runs},
                {"z", r.z},               {"p_value", r.p_value}, {"reject", r.reject}};
}

Json to_json(const MannKendallResult& r) {
    return Json{{"s", r.s}, {"variance", r.variance}, {"z", r.z}, {"p_value", r.p_value}, {"trend", to_string(r.trend)}};
}

Json to_json(const CouplingReport& r) {
    return Json{{"repetitions", r.repetitions},
                {"trend", to_json(r.trend)},
                {"degenerate", r.degenerate},
                {"early_n", r.early_n},
                {"early_half_width", optional_number(r.early_half_width)},
                {"late_half_width", optional_number(r.late_half_width)},
                {"widening_threshold", r.widening_threshold},
                {"widening", r.widening}};
}

Json to_json(const ExperimentPlan& plan) {
    Json entries = Json::array();
    for (const auto& e : plan.entries) {
        entries.push_back(Json{{"config", e.config},
                               {"rep", e.repetition},
                               {"rest_before_s", e.rest_before},
                               {"reset_state", e.reset_state}});
    }
    return Json{{"schema_version", kSchemaVersion}, {"seed", plan.seed}, {"entries", entries}};
}

ExperimentPlan plan_from_json(const json& j) {
    Fields f(j, "");
    check_schema_version(f);
    ExperimentPlan plan;
    plan.seed = f.unsigned_integer("seed");
    if (f.has("provenance")) f.at("provenance");
    const auto& entries = f.array("entries");
    if (entries.empty()) throw ValidationError("entries", "must not be empty");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Fields ef(entries[i], index_path("entries", i));
        PlanEntry e;
        e.config = ef.string("config");
        e.repetition = static_cast<std::size_t>(ef.unsigned_integer("rep"));
        e.rest_before = ef.non_negative("rest_before_s");
        e.reset_state = ef.boolean("reset_state", true);
        ef.finish();
        plan.entries.push_back(e);
    }
    f.finish();
    return plan;
}

Json to_json(const Fingerprint& fp) {
    Json plateaus = Json::array();
    for (const auto& p : fp.plateaus) plateaus.push_back(plateau_json(p));
    Json j{{"probe_duration_s", fp.probe_duration}, {"created_at", fp.created_at}};
    if (fp.bucket_fit) j["bucket_fit"] = to_json(*fp.bucket_fit);
    j["plateaus"] = plateaus;
    return j;
}

Fingerprint fingerprint_from_json(const json& j, const std::string& path) {
    Fields f(j, path);
    Fingerprint fp;
    fp.probe_duration = f.positive("probe_duration_s");
    fp.created_at = f.string("created_at", "");
    if (f.has("bucket_fit") && !f.at("bucket_fit").is_null()) {
        fp.bucket_fit = fit_from_json(f.at("bucket_fit"), f.field("bucket_fit"));
    }
    const auto& plateaus = f.array("plateaus");
    for (std::size_t i = 0; i < plateaus.size(); ++i) {
        Fields pf(plateaus[i], index_path(f.field("plateaus"), i));
        PlateauSummary p;
        p.pattern = pf.string("pattern");
        p.min = pf.number("min_gbps");
        p.median = pf.number("median_gbps");
        p.max = pf.number("max_gbps");
        pf.finish();
        if (!(p.min <= p.median && p.median <= p.max)) {
            throw ValidationError(pf.path(), "plateau summary must satisfy min <= median <= max");
        }
        fp.plateaus.push_back(p);
    }
    f.finish();
    return fp;
}

Json to_json(const FingerprintComparison& cmp) {
    Json drift = Json::array();
    for (const auto& d : cmp.drift) {
        drift.push_back(Json{{"field", d.field},
                             {"reference", d.reference},
                             {"observed", d.observed},
                             {"relative_difference", std::isfinite(d.relative_difference) ? Json(d.relative_difference)
                                                                                           : Json(nullptr)}});
    }
    return Json{{"result", cmp.match ? "Match" : "Drift"}, {"drift", drift}};
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

json parse_json(const std::string& text, const std::string& source) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(source, std::string("invalid JSON: ") + e.what());
    }
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    std::ostringstream ss;
    ss << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) ss << std::setw(2) << static_cast<int>(digest[i]);
    return ss.str();
}

Json provenance(const std::string& command, std::uint64_t seed, std::span<const InputDigest> inputs) {
    Json in = Json::array();
    for (const auto& d : inputs) in.push_back(Json{{"path", d.path}, {"sha256", d.sha256}});
    return Json{{"tool", "varnet"}, {"version", kToolVersion}, {"command", command}, {"seed", seed}, {"inputs", in}};
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace varnet::io
