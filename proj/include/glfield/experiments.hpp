#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "glfield/ensemble.hpp"
#include "glfield/harmonic.hpp"
#include "glfield/laplace.hpp"
#include "glfield/potential.hpp"
#include "glfield/sampler.hpp"
#include "glfield/stats.hpp"

namespace glf {

/// A reported number. `exact` marks values computed without sampling error.
struct Quantity {
    double value = 0.0;
    double se = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool exact = false;
};

struct Check {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    void write(std::ostream& os) const;
};

struct ExperimentReport {
    static constexpr const char* schema = "glfield.report/1";

    std::string id;
    json parameters = json::object();
    json inputs = json::array();  // provenance of the ensembles read
    std::vector<std::pair<std::string, Quantity>> estimates;
    std::vector<Check> checks;
    std::vector<std::string> warnings;
    bool valid = true;  // false when an input was too weak to judge (e.g. low ESS)
    CsvTable table;

    void add(const std::string& name, Quantity q);
    void add_exact(const std::string& name, double value);
    const Quantity& at(const std::string& name) const;
    bool has(const std::string& name) const;
    void check(const std::string& name, bool pass, const std::string& detail);
    void warn(const std::string& message) { warnings.push_back(message); }
    /// valid and every check passed.
    bool passed() const;
    json to_json() const;
};

/// Common knobs of the sampling-based estimators.
struct AnalysisOptions {
    std::uint64_t bootstrap_seed = 7;
    int resamples = 1000;
    /// Minimum effective sample size of the primary statistic.
    double min_ess = 100.0;
};

// ---------------------------------------------------------------- stiffness

struct StiffnessEstimate {
    double g_hat = 0.0;
    double se = 0.0;
    struct Row {
        int N = 0;
        double variance = 0.0;
        double variance_se = 0.0;
        double ess = 0.0;
        std::size_t n = 0;
    };
    std::vector<Row> table;
    LinearFit fit;
    bool valid = true;
    ExperimentReport report;
};

/// g_hat = WLS slope of Var phi(0) against log N with weights from the
/// bootstrap variance of each Var estimate. Needs >= 3 sizes. With the exact
/// kernel only phi(0) is drawn (PointMarginal), which has the same law.
StiffnessEstimate estimate_stiffness(const Potential& p, const std::vector<int>& sizes, const SamplerConfig& cfg,
                                     const AnalysisOptions& opt = {});

/// Same estimator from per-size samples of phi(0) (in chain order).
StiffnessEstimate stiffness_from_samples(const std::vector<int>& sizes,
                                         const std::vector<std::vector<double>>& center_values, int chains = 1,
                                         const AnalysisOptions& opt = {});

/// Oracle: OLS slope of the exact G_N(0, 0) against log N.
double gaussian_stiffness(const std::vector<int>& sizes);

// ----------------------------------------------------------------- maxima

/// sup phi / log N: median with CI, gap to 2 sqrt(g), the gap after adding
/// back the (3/4) sqrt(g) log log N / log N correction (diagnostic only),
/// and fractions above 2 sqrt(g) + delta and below 2 sqrt(g) - delta.
ExperimentReport max_statistics(EnsembleSource& source, double g, double delta = 0.1,
                                const AnalysisOptions& opt = {});

/// Trend table over several max_statistics reports (sorted by N): checks
/// that |median - 2 sqrt(g)| is non-increasing and within 20% of 2 sqrt(g)
/// at the largest N.
ExperimentReport max_trend(const std::vector<ExperimentReport>& reports);

/// |H_N(eta)| = #{x : phi(x) >= 2 sqrt(g) eta log N}; log|H| / log N
/// against 2 (1 - eta^2), with a check that the median lies within 0.2 of
/// it. Zero counts are flagged and excluded.
ExperimentReport high_points(EnsembleSource& source, double eta, double g, const AnalysisOptions& opt = {});

/// Empirical P(phi(x) >= u) on u_grid against exp(-u^2 / (2 g log Delta)),
/// Delta = dist(x, boundary). Grid points with P < 10/n are dropped with a
/// warning. With gaussian_variance, also compares with the Gaussian tail.
ExperimentReport tail_curve(EnsembleSource& source, Site x, double g, const std::vector<double>& u_grid,
                            std::optional<double> gaussian_variance = std::nullopt,
                            const AnalysisOptions& opt = {});

// ------------------------------------------------------ Gaussian comparison

/// a^T G b on the interior of op's set (sites outside contribute nothing).
double gaussian_covariance(const DirichletOperator& op, const HarmonicWeights& a, const HarmonicWeights& b);

/// Var <phi, f> / Var_G <phi, f> <= 1/c_minus + 3 SE, plus the fourth
/// central moment against c_minus^-2 E_G (.)^4 = 3 c_minus^-2 Var_G^2.
/// Degenerate error when Var_G is zero.
ExperimentReport bl_check(EnsembleSource& source, const HarmonicWeights& f, const DirichletOperator& oracle,
                          double c_minus, const AnalysisOptions& opt = {});

/// log E exp(t X) over t_grid for X = X_{r_M,+}(v) (or X_{r_M,+} - X_{r_0,-}
/// with `difference`), its exact curvature at 0 (the sample variance), a
/// least-squares t^2/2 fit against (1 - c) g log Delta, and reliability from
/// the top-1% exponential mass (< 20%). With gaussian_variance each grid
/// value is compared with t^2 var / 2.
ExperimentReport mgf_check(EnsembleSource& source, Site v, const ScaleSchedule& schedule,
                           const std::vector<double>& t_grid, double g, bool difference = false,
                           std::optional<double> gaussian_variance = std::nullopt, const AnalysisOptions& opt = {});

/// Increments U_1..U_K at v: per-m variance against (g/K) log N, excess
/// kurtosis against 0, the covariance matrix (against rho_m^T G rho_m' when
/// an oracle is given), and the joint log-MGF on lambda_grid against
/// (1/2) sum lambda_m^2 (g/K) log N.
ExperimentReport increment_gaussianity(EnsembleSource& source, Site v, const ScaleSchedule& schedule, int K,
                                       const std::vector<std::vector<double>>& lambda_grid, double g,
                                       const DirichletOperator* oracle = nullptr, const AnalysisOptions& opt = {});

/// Two-point form: v1, v2 with N^{1-j/K} <= |v1 - v2| <= N^{1-(j-1)/K};
/// log E exp(sum_m l1_m U_m(v1) + sum_{m>j} l2_m U_m(v2)) against the
/// factorized Gaussian form, plus the cross-covariances of U(v1) with
/// U_{m>j}(v2). Each lambda entry holds 2K values (l1 then l2).
ExperimentReport increment_pair(EnsembleSource& source, Site v1, Site v2, double eps, double c, int K,
                                const std::vector<std::vector<double>>& lambda_grid, double g,
                                const AnalysisOptions& opt = {});

/// Increment kernel rho_m of U_m at v.
HarmonicWeights increment_rho(const LatticeDomain& domain, Site v, const ScaleSchedule& schedule, int K, int m);

// ----------------------------------------------------------------- coupling

struct CouplingOptions {
    std::vector<int> r_list;  // inset depths r: statistics live on D(r)
    int samples = 200;
};

/// Paired chains with common random numbers: phi with zero boundary and
/// phi^f with boundary data f. For each r: (i) max over D(r) of
/// |E phi^f - H(E phi^f | dD(r))| with per-site z-scores, (ii) the
/// distribution of max over D(r) of |(phi^f - phi) - H((phi^f - phi)|dD(r))|.
ExperimentReport coupling_experiment(const LatticeDomain& domain, const Potential& p,
                                     const std::function<double(Site)>& f, const CouplingOptions& copt,
                                     const SamplerConfig& cfg, const AnalysisOptions& opt = {});

/// Median coupling statistic per R (reports sorted by R) and the
/// non-increasing check (values below 1e-9 count as exactly zero).
ExperimentReport coupling_trend(const std::vector<ExperimentReport>& reports);

// -------------------------------------------------------------------- CLT

/// Var(N^-1 <rho, phi>) against rho^T G rho / N^2 times g_ratio, plus
/// skewness and excess kurtosis. Input error unless rho annihilates the
/// harmonic test family to 1e-8.
ExperimentReport clt_check(EnsembleSource& source, const HarmonicWeights& rho, const DirichletOperator& oracle,
                           double g_ratio = 1.0, const AnalysisOptions& opt = {});

// ------------------------------------------------------- truncated counts

struct CountOptions {
    double beta = 0.2;
    int K = 4;
    double eps = 0.1;
    double c = 0.15;
    /// 1 for the maximum; eta in (0, 1) scales the windows for eta-high points.
    double eta = 1.0;
    int stride = 1;
};

/// Z(beta) = s^2 #{v on the stride-s grid of [-0.9N, 0.9N]^2 : every U_m(v)
/// lies in [(1-beta), (1+beta)] * 2 eta sqrt(g) log N / K}, the schedule at v
/// built with Delta = dist(v, boundary). Reports E Z, E Z^2, their ratio
/// against N^{17 beta}, and the Paley-Zygmund check
/// P(Z >= 1) >= (E Z)^2 / E Z^2 - 3 SE.
ExperimentReport truncated_count(EnsembleSource& source, double g, const CountOptions& copt,
                                 const AnalysisOptions& opt = {});

/// Per-sample Z (unscaled count) for one field; exposed for tests.
std::size_t count_truncated(const FieldState& field, double g, const CountOptions& copt);

// ------------------------------------------------------------------ tiles

/// Tiles of side ~N^{1-eta_tile} (k = round(2 N^eta_tile) per axis); for
/// each tile S_i = max over the concentric half-size box of
/// phi(v) - X_{R,-}(v), R = N^{1-eta_tile}/2 (capped by dist(v, boundary)).
/// Reports correlations of non-adjacent tile pairs against 0 and
/// P(max_i S_i >= (1 - 2 beta)(1 - eta_tile) 2 sqrt(g) log N).
ExperimentReport tile_decoupling(EnsembleSource& source, double eta_tile, double beta, double g, double eps = 0.1,
                                 const AnalysisOptions& opt = {});

} // namespace glf
