#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "varnet/bucket.hpp"
#include "varnet/distmodel.hpp"
#include "varnet/protocol.hpp"
#include "varnet/simcore.hpp"
#include "varnet/stats.hpp"

namespace varnet::io {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Shortest decimal text that parses back to the same double.
std::string format_number(double v);

// CSV -----------------------------------------------------------------------

void write_trace_csv(std::ostream& out, std::span<const TraceSample> trace);
std::vector<TraceSample> read_trace_csv(std::istream& in);

void write_samples_csv(std::ostream& out, const SampleSet& samples);
SampleSet read_samples_csv(std::istream& in);

struct SummaryRow {
    std::string config;
    std::size_t rep = 0;
    double makespan_s = 0.0;
};

void write_summary_csv(std::ostream& out, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_summary_csv(std::istream& in);

/// `n,point,lower,upper` rows of a repetition curve.
void write_curve_csv(std::ostream& out, const RepetitionAnalysis& analysis);

// JSON ----------------------------------------------------------------------

/// Strict readers: unknown fields, missing fields and violated invariants
/// raise ValidationError naming the offending field.
QuantileDistribution distribution_from_json(const nlohmann::json& j, const std::string& path = "distribution");
Json to_json(const QuantileDistribution& dist);

/// `base_dir` resolves "distribution_file" references.
Scenario scenario_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

Json to_json(const FitReport& fit);
FitReport fit_from_json(const nlohmann::json& j, const std::string& path = "bucket_fit");

Json to_json(const RunResult& run);
Json to_json(const ConfidenceInterval& ci);
Json to_json(const RepetitionAnalysis& analysis);
Json to_json(const JarqueBeraResult& r);
Json to_json(const RunsTestResult& r);
Json to_json(const MannKendallResult& r);
Json to_json(const CouplingReport& r);
Json to_json(const Straggler& s);

Json to_json(const ExperimentPlan& plan);
ExperimentPlan plan_from_json(const nlohmann::json& j);

Json to_json(const Fingerprint& fp);
Fingerprint fingerprint_from_json(const nlohmann::json& j, const std::string& path = "fingerprint");

Json to_json(const FingerprintComparison& cmp);

// Files ---------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Parses JSON, reporting syntax errors as ValidationError.
nlohmann::json parse_json(const std::string& text, const std::string& source);

std::string sha256_hex(const std::string& bytes);

struct InputDigest {
    std::string path;
    std::string sha256;
};

Json provenance(const std::string& command, std::uint64_t seed, std::span<const InputDigest> inputs);

/// JSON text as written to disk: two-space indent, trailing newline.
std::string dump(const Json& j);

}  // namespace varnet::io
