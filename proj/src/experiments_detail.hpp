#pragma once

// Helpers shared by the experiment translation units.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "glfield/experiments.hpp"

namespace glf::detail {

/// Number of interleaved chains recorded in an ensemble's provenance.
int chains_of(const json& provenance);

double tau_of(std::span<const double> x, int chains);

/// Bootstrap of a column statistic with SE and CI widened by sqrt(tau).
Quantity boot(std::span<const double> x, const std::function<double(std::span<const double>)>& stat,
              const AnalysisOptions& opt, double tau, std::uint64_t salt);
Quantity boot_rows(std::size_t n, const IndexStatistic& stat, const AnalysisOptions& opt, double tau,
                   std::uint64_t salt);

/// Binomial proportion with an autocorrelation-inflated SE.
Quantity proportion(std::size_t hits, std::size_t n, double tau);

/// Adds "ess" and marks the report invalid below min_ess.
void require_ess(ExperimentReport& r, double n, double tau, double min_ess);

std::string num(double x);

std::vector<double> collect(EnsembleSource& source, const std::function<double(const FieldState&)>& fn);

} // namespace glf::detail
