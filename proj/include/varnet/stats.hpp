#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace varnet {

/// Runtimes in collection order. Order matters for the independence and
/// trend tests and for prefix-based repetition analysis.
struct SampleSet {
    std::vector<double> values;
    std::string label;

    /// All values finite and > 0.
    void validate() const;
};

/// Order-statistic ranks for a nonparametric p-quantile interval
/// [X(lower), X(upper)] and its exact binomial coverage.
struct OrderStatisticRanks {
    std::size_t lower = 0;  // 1-based
    std::size_t upper = 0;
    std::size_t point = 0;
    double coverage = 0.0;
};

struct ConfidenceInterval {
    double statistic = 0.5;
    double lower = 0.0;
    double upper = 0.0;
    double point_estimate = 0.0;
    std::size_t lower_index = 0;
    std::size_t upper_index = 0;
    double achieved_coverage = 0.0;
    double nominal_confidence = 0.0;
    std::size_t n = 0;

    /// max(point - lower, upper - point) / point
    double relative_half_width() const;
};

/// P(lower <= Binomial(n, p) <= upper), inclusive, computed exactly by
/// enumeration in log space.
double binomial_interval_probability(std::size_t n, double p, std::size_t lower, std::size_t upper);

/// Narrowest ranks (r, s), 1 <= r <= ceil(np) <= s <= n, with
/// P(X(r) <= q_p <= X(s)) = sum_{i=r}^{s-1} C(n,i) p^i (1-p)^(n-i) >= confidence.
/// Width ties go to the pair centred closest to np, then to the smaller r.
/// Exact enumeration up to n = 10^4; above that the search starts from
/// normal-approximation ranks and widens until the exact coverage holds.
/// Throws InsufficientSamples when no pair reaches the confidence.
OrderStatisticRanks order_statistic_ranks(std::size_t n, double p, double confidence);

/// Smallest n for which order_statistic_ranks succeeds.
std::size_t minimum_feasible_n(double p, double confidence);

/// Empirical quantile at rank max(1, ceil(n p)), no interpolation.
double empirical_quantile(std::span<const double> values, double p);

ConfidenceInterval quantile_ci(const SampleSet& samples, double p, double confidence);
ConfidenceInterval quantile_ci(std::span<const double> values, double p, double confidence);

struct RepetitionPoint {
    std::size_t n = 0;
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double relative_half_width = 0.0;
};

/// CONFIRM-style curve of CI width against the number of repetitions, with
/// prefixes taken in collection order. `required` is empty when the target
/// half-width is never reached within the available samples.
struct RepetitionAnalysis {
    std::optional<std::size_t> required;
    std::size_t n_max = 0;
    std::vector<RepetitionPoint> curve;
};

RepetitionAnalysis required_repetitions(const SampleSet& samples, double p, double confidence, double epsilon);

enum class Containment { Inside, Outside };

Containment classify_estimate(const ConfidenceInterval& gold, double estimate);

struct JarqueBeraResult {
    double statistic = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

/// JB = n/6 (S^2 + K^2/4) against chi-square(2); needs n >= 8.
JarqueBeraResult jarque_bera(std::span<const double> values, double alpha = 0.05);

struct RunsTestResult {
    std::size_t runs = 0;
    std::size_t above = 0;
    std::size_t below = 0;
    double expected_runs = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    bool reject = false;
};

/// Wald-Wolfowitz runs test about the median (values equal to the median
/// are dropped); needs n >= 10.
RunsTestResult runs_test(std::span<const double> values, double alpha = 0.05);

enum class Trend { None, Increasing, Decreasing };

struct MannKendallResult {
    long long s = 0;
    double variance = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    Trend trend = Trend::None;
};

/// Mann-Kendall trend test with tie-corrected variance and continuity
/// correction; needs n >= 8.
MannKendallResult mann_kendall(std::span<const double> values, double alpha = 0.05);

const char* to_string(Trend trend);
const char* to_string(Containment c);

/// Two-sided critical value of the standard normal for `alpha`.
double normal_critical(double alpha);

}  // namespace varnet
