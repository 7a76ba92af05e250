#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace glf {

/// Two-sided |z| threshold at family-wise level 0.0027 (the 3-sigma level)
/// over m simultaneous comparisons (Sidak).
double familywise_z(std::size_t m);

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
double quantile(std::vector<double> x, double q);
double median(std::vector<double> x);

/// Sample skewness and excess kurtosis (moment estimators) with their
/// normal-theory standard errors, which are the right yardstick for
/// "consistent with 0".
struct ShapeMoments {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;
    double skewness = 0.0;
    double skewness_se = 0.0;
    double excess_kurtosis = 0.0;
    double kurtosis_se = 0.0;
};
ShapeMoments shape_moments(std::span<const double> x);

/// Point estimate with bootstrap SE and bias-corrected percentile CI.
struct BootstrapResult {
    double value = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> replicates;
};

/// Statistic of a resample given as row indices into the original data.
using IndexStatistic = std::function<double(std::span<const std::size_t>)>;

/// Nonparametric bootstrap over n independent rows: `resamples` draws with
/// replacement, CI at two-sided level `level` (bias-corrected percentile).
/// Deterministic given the seed.
BootstrapResult bootstrap(std::size_t n, const IndexStatistic& stat, std::uint64_t seed, int resamples = 1000,
                          double level = 0.95);

/// Same for a statistic of one column of values.
BootstrapResult bootstrap(std::span<const double> x, const std::function<double(std::span<const double>)>& stat,
                          std::uint64_t seed, int resamples = 1000, double level = 0.95);

/// Weighted least squares y = a + b x with known variances (weights 1/var).
struct LinearFit {
    double intercept = 0.0;
    double slope = 0.0;
    double intercept_se = 0.0;
    double slope_se = 0.0;
    double chi2 = 0.0;
    int dof = 0;
};
LinearFit weighted_fit(std::span<const double> x, std::span<const double> y, std::span<const double> var);
LinearFit ordinary_fit(std::span<const double> x, std::span<const double> y);

/// log(mean(exp(t x))) with max subtraction; tail_weight is the fraction of
/// the exponential mass carried by the top 1% of samples (at least one).
struct LogMeanExp {
    double value = 0.0;
    double tail_weight = 0.0;
};
LogMeanExp log_mean_exp(std::span<const double> x, double t);

/// Kolmogorov-Smirnov statistic sup |F_n - F| against a continuous CDF.
double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf);

/// Integrated autocorrelation time of a series split into `chains`
/// interleaved chains (sample i belongs to chain i % chains); 1 for
/// independent samples, never below 1. Short or constant series give 1.
double integrated_time(std::span<const double> x, int chains = 1);

/// Pearson correlation.
double correlation(std::span<const double> x, std::span<const double> y);

} // namespace glf
