#include "varnet/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "varnet/errors.hpp"

namespace varnet {
namespace {

constexpr std::size_t kExactRankLimit = 10000;

void check_probability(double p, const char* what) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError(std::string(what) + " must lie in (0, 1)");
}

void check_values(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v) || v <= 0.0) throw ParameterError("samples must be finite and > 0");
    }
}

std::size_t point_rank(std::size_t n, double p) {
    const double np = static_cast<double>(n) * p;
    const auto r = static_cast<std::size_t>(std::ceil(np - 1e-9 * std::max(1.0, np)));
    return std::clamp<std::size_t>(r, 1, n);
}

// cdf[k] = P(B < k) for B ~ Binomial(n, p), k = 0..n+1.
std::vector<long double> binomial_cdf_table(std::size_t n, double p) {
    const long double lp = std::log(static_cast<long double>(p));
    const long double lq = std::log1p(-static_cast<long double>(p));
    const long double ln = std::lgamma(static_cast<long double>(n) + 1.0L);
    std::vector<long double> cdf(n + 2, 0.0L);
    for (std::size_t i = 0; i <= n; ++i) {
        const long double k = static_cast<long double>(i);
        const long double logpmf = ln - std::lgamma(k + 1.0L) - std::lgamma(static_cast<long double>(n - i) + 1.0L) +
                                   k * lp + static_cast<long double>(n - i) * lq;
        cdf[i + 1] = cdf[i] + std::exp(logpmf);
    }
    return cdf;
}

double median_sorted(const std::vector<double>& sorted) {
    const std::size_t n = sorted.size();
    return n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

}  // namespace

void SampleSet::validate() const { check_values(values); }

double ConfidenceInterval::relative_half_width() const {
    return std::max(point_estimate - lower, upper - point_estimate) / point_estimate;
}

double binomial_interval_probability(std::size_t n, double p, std::size_t lower, std::size_t upper) {
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("p must lie in [0, 1]");
    if (lower > upper || upper > n) return 0.0;
    if (p == 0.0) return lower == 0 ? 1.0 : 0.0;
    if (p == 1.0) return upper == n ? 1.0 : 0.0;
    const auto cdf = binomial_cdf_table(n, p);
    return static_cast<double>(cdf[upper + 1] - cdf[lower]);
}

OrderStatisticRanks order_statistic_ranks(std::size_t n, double p, double confidence) {
    check_probability(p, "quantile");
    check_probability(confidence, "confidence");
    if (n < 2) throw InsufficientSamples("need at least 2 samples for an order-statistic interval");

    const auto cdf = binomial_cdf_table(n, p);
    auto coverage = [&](std::size_t r, std::size_t s) { return static_cast<double>(cdf[s] - cdf[r]); };
    const std::size_t point = point_rank(n, p);
    const double np = static_cast<double>(n) * p;

    if (coverage(1, n) < confidence) {
        throw InsufficientSamples("n = " + std::to_string(n) + " cannot reach " + std::to_string(confidence) +
                                  " coverage for the " + std::to_string(p) + " quantile");
    }

    if (n <= kExactRankLimit) {
        for (std::size_t w = 1; w < n; ++w) {
            bool found = false;
            OrderStatisticRanks best;
            double best_offset = std::numeric_limits<double>::infinity();
            const std::size_t r_lo = point > w ? point - w : 1;
            const std::size_t r_hi = std::min(point, n - w);
            for (std::size_t r = r_lo; r <= r_hi; ++r) {
                const std::size_t s = r + w;
                const double c = coverage(r, s);
                if (c < confidence) continue;
                const double offset = std::abs(0.5 * static_cast<double>(r - 1 + s) - np);
                if (!found || offset < best_offset) {
                    found = true;
                    best_offset = offset;
                    best = {r, s, point, c};
                }
            }
            if (found) return best;
        }
        throw InsufficientSamples("no rank pair reaches the requested coverage");
    }

    const double z = normal_critical(1.0 - confidence);
    const double spread = z * std::sqrt(np * (1.0 - p));
    auto r = static_cast<std::size_t>(std::clamp(std::floor(np - spread), 1.0, static_cast<double>(point)));
    auto s = static_cast<std::size_t>(
        std::clamp(std::ceil(np + spread) + 1.0, static_cast<double>(point), static_cast<double>(n)));
    bool widen_low = true;
    while (coverage(r, s) < confidence) {
        if ((widen_low && r > 1) || s == n) {
            --r;
        } else {
            ++s;
        }
        widen_low = !widen_low;
    }
    return {r, s, point, coverage(r, s)};
}

std::size_t minimum_feasible_n(double p, double confidence) {
    check_probability(p, "quantile");
    check_probability(confidence, "confidence");
    for (std::size_t n = 2; n <= 1'000'000; ++n) {
        const double pn = std::pow(p, static_cast<double>(n));
        const double qn = std::pow(1.0 - p, static_cast<double>(n));
        if (1.0 - pn - qn + 1e-12 < confidence) continue;
        try {
            order_statistic_ranks(n, p, confidence);
            return n;
        } catch (const InsufficientSamples&) {
        }
    }
    throw InsufficientSamples("no feasible sample size below 10^6");
}

double empirical_quantile(std::span<const double> values, double p) {
    check_probability(p, "quantile");
    if (values.empty()) throw InsufficientSamples("empty sample");
    std::vector<double> v(values.begin(), values.end());
    const std::size_t k = point_rank(v.size(), p) - 1;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
}

ConfidenceInterval quantile_ci(std::span<const double> values, double p, double confidence) {
    check_values(values);
    const auto ranks = order_statistic_ranks(values.size(), p, confidence);
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    ConfidenceInterval ci;
    ci.statistic = p;
    ci.n = sorted.size();
    ci.lower_index = ranks.lower;
    ci.upper_index = ranks.upper;
    ci.lower = sorted[ranks.lower - 1];
    ci.upper = sorted[ranks.upper - 1];
    ci.point_estimate = sorted[ranks.point - 1];
    ci.achieved_coverage = ranks.coverage;
    ci.nominal_confidence = confidence;
    return ci;
}

ConfidenceInterval quantile_ci(const SampleSet& samples, double p, double confidence) {
    return quantile_ci(std::span<const double>(samples.values), p, confidence);
}

RepetitionAnalysis required_repetitions(const SampleSet& samples, double p, double confidence, double epsilon) {
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be > 0");
    samples.validate();
    RepetitionAnalysis out;
    const std::size_t total = samples.values.size();
    out.n_max = total;
    const std::size_t start = minimum_feasible_n(p, confidence);

    std::vector<double> sorted;
    sorted.reserve(total);
    for (std::size_t n = 1; n <= total; ++n) {
        const double v = samples.values[n - 1];
        sorted.insert(std::upper_bound(sorted.begin(), sorted.end(), v), v);
        if (n < start) continue;
        const auto ranks = order_statistic_ranks(n, p, confidence);
        RepetitionPoint pt;
        pt.n = n;
        pt.point = sorted[ranks.point - 1];
        pt.lower = sorted[ranks.lower - 1];
        pt.upper = sorted[ranks.upper - 1];
        pt.relative_half_width = std::max(pt.point - pt.lower, pt.upper - pt.point) / pt.point;
        if (!out.required && pt.relative_half_width <= epsilon) out.required = n;
        out.curve.push_back(pt);
    }
    return out;
}

Containment classify_estimate(const ConfidenceInterval& gold, double estimate) {
    return (gold.lower <= estimate && estimate <= gold.upper) ? Containment::Inside : Containment::Outside;
}

JarqueBeraResult jarque_bera(std::span<const double> values, double alpha) {
    const std::size_t n = values.size();
    if (n < 8) throw InsufficientSamples("Jarque-Bera needs at least 8 samples");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - mean;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= static_cast<double>(n);
    m3 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    if (!(m2 > 0.0)) throw DegenerateSample("zero-variance sample");

    JarqueBeraResult out;
    out.skewness = m3 / std::pow(m2, 1.5);
    out.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    out.statistic = static_cast<double>(n) / 6.0 *
                    (out.skewness * out.skewness + 0.25 * out.excess_kurtosis * out.excess_kurtosis);
    // chi-square(2) survival function is exp(-x/2).
    out.p_value = std::exp(-0.5 * out.statistic);
    out.reject = out.statistic > -2.0 * std::log(alpha);
    return out;
}

RunsTestResult runs_test(std::span<const double> values, double alpha) {
    if (values.size() < 10) throw InsufficientSamples("runs test needs at least 10 samples");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back()) throw DegenerateSample("all values equal");
    const double median = median_sorted(sorted);

    RunsTestResult out;
    int last = 0;
    for (double v : values) {
        if (v == median) continue;
        const int side = v > median ? 1 : -1;
        (side > 0 ? out.above : out.below)++;
        if (side != last) ++out.runs;
        last = side;
    }
    if (out.above < 2 || out.below < 2) throw DegenerateSample("fewer than two values on one side of the median");

    const double n1 = static_cast<double>(out.above);
    const double n2 = static_cast<double>(out.below);
    const double n = n1 + n2;
    out.expected_runs = 2.0 * n1 * n2 / n + 1.0;
    const double var = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n) / (n * n * (n - 1.0));
    out.z = (static_cast<double>(out.runs) - out.expected_runs) / std::sqrt(var);
    out.p_value = normal_two_sided_p(out.z);
    out.reject = std::abs(out.z) > normal_critical(alpha);
    return out;
}

MannKendallResult mann_kendall(std::span<const double> values, double alpha) {
    const std::size_t n = values.size();
    if (n < 8) throw InsufficientSamples("Mann-Kendall needs at least 8 samples");
    MannKendallResult out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            out.s += (values[j] > values[i]) - (values[j] < values[i]);
        }
    }
    std::map<double, std::size_t> groups;
    for (double v : values) ++groups[v];
    if (groups.size() == 1) throw DegenerateSample("constant sequence");

    const double nn = static_cast<double>(n);
    double var = nn * (nn - 1.0) * (2.0 * nn + 5.0);
    for (const auto& [value, count] : groups) {
        const double t = static_cast<double>(count);
        var -= t * (t - 1.0) * (2.0 * t + 5.0);
    }
    out.variance = var / 18.0;
    const double sd = std::sqrt(out.variance);
    if (out.s > 0) {
        out.z = (static_cast<double>(out.s) - 1.0) / sd;
    } else if (out.s < 0) {
        out.z = (static_cast<double>(out.s) + 1.0) / sd;
    }
    out.p_value = normal_two_sided_p(out.z);
    if (std::abs(out.z) > normal_critical(alpha)) out.trend = out.z > 0 ? Trend::Increasing : Trend::Decreasing;
    return out;
}

double normal_critical(double alpha) {
    check_probability(alpha, "alpha");
    return boost::math::quantile(boost::math::complement(boost::math::normal_distribution<double>(), alpha / 2.0));
}

const char* to_string(Trend trend) {
    switch (trend) {
        case Trend::Increasing: return "Increasing";
        case Trend::Decreasing: return "Decreasing";
        case Trend::None: break;
    }
    return "None";
}

const char* to_string(Containment c) { return c == Containment::Inside ? "Inside" : "Outside"; }

}  // namespace varnet
