#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "glfield/field.hpp"
#include "glfield/lattice.hpp"
#include "glfield/weights.hpp"

namespace glf {

/// Normalized weights f(r) over the integer radii of [(1-w)R, (1+w)R],
/// endpoints rounded inward. The taper is a raised cosine,
/// f(r) ~ 1 + cos(pi (r - R) / (wR + 1)), positive on the whole window.
struct SmoothingWindow {
    double radius = 1.0;
    double width = 0.1;
    std::vector<int> radii;
    std::vector<double> weights;
    std::string taper = "raised-cosine";

    /// Parameter error for R <= 0, w outside (0, 1), or no integer radius in
    /// the window.
    SmoothingWindow(double radius, double width);

    int inner() const noexcept { return radii.front(); }
    int outer() const noexcept { return radii.back(); }
};

/// C_r(v, phi) = sum_y a_{B_r(v)}(v, y) phi(y) with B_r(v) the open l1 ball.
/// For r <= 1 the ball is {v} and the average is phi(v). Geometry error if
/// the ball leaves the domain. Harmonic measures are solved once per
/// (domain size, ball radius) and shared across centres and threads.
double circle_average(const FieldState& field, Site v, double r);
double circle_average(const LatticeDomain& domain, std::span<const double> field, Site v, double r);

/// The measure of circle_average as explicit weights.
HarmonicWeights circle_kernel(const LatticeDomain& domain, Site v, double r);

/// X_R(v, phi) = sum_r f(r) C_r(v, phi).
double smoothed_average(const FieldState& field, Site v, const SmoothingWindow& window);
double smoothed_average(const LatticeDomain& domain, std::span<const double> field, Site v,
                        const SmoothingWindow& window);
HarmonicWeights smoothed_kernel(const LatticeDomain& domain, Site v, const SmoothingWindow& window);

/// Geometric radii r_k = (1+eps)^-k Delta, k = 0..M, with
/// M = floor((1-c) log Delta / log(1+eps)) and r_{k,+-} = (1 +- eps^3) r_k.
struct ScaleSchedule {
    double delta = 0.0;
    double eps = 0.0;
    double c = 0.0;
    int M = 0;
    std::vector<double> r;
    std::vector<double> r_plus;
    std::vector<double> r_minus;
    /// Nominal relative window width, eps^4 unless overridden.
    double width = 0.0;

    /// Window around r_{k,+} (sign > 0) or r_{k,-} (sign < 0). Its relative
    /// width is max(width, 1/r) so that it always holds an integer radius.
    SmoothingWindow window(int k, int sign) const;
};

/// Parameter error unless eps in (0, 0.2], c in (0, 1), Delta >= (1+eps)^2,
/// width in (0, 1) (0 selects eps^4), and (1+2w) r_{k+1} < (1-2w) r_k for
/// the nominal window width w.
ScaleSchedule build_schedule(double delta, double eps, double c, double width = 0.0);

/// Index into the schedule of the m-th of K blocks: floor(m M / K).
int block_index(int m, int K, int M);

/// U_m(v) = X_{r_{i(m),+}}(v) - X_{r_{i(m-1),-}}(v), m = 1..K, i(m) = floor(mM/K).
/// Parameter error for K < 2 or K > M.
std::vector<double> increments(const FieldState& field, Site v, const ScaleSchedule& s, int K);

/// X_{r_{k,+}} and X_{r_{k,-}} for k = 0..M.
struct ScaleAverages {
    std::vector<double> plus;
    std::vector<double> minus;
};
ScaleAverages scale_averages(const FieldState& field, Site v, const ScaleSchedule& s);

/// W_j = exp(t (X_{j,+} - X_{j-1,-})), Y_j = exp(t (X_{j,-} - X_{j,+})),
/// Z_j = exp(t X_{j,+}) for j = 1..M (index 0 unused). Logs are always
/// kept; exp values overflowing to inf set `overflow`.
struct Telescoping {
    double t = 0.0;
    std::vector<double> log_w, log_y, log_z;
    std::vector<double> w, y, z;
    double log_base = 0.0;  // t X_{0,-}
    bool overflow = false;

    /// log Z_M - (sum_j log W_j + sum_{j<M} log Y_j + t X_{0,-}), relative
    /// to max(1, |log Z_M|).
    double identity_residual() const;
};

/// Parameter error for |t| > 100.
Telescoping telescoping_values(const FieldState& field, Site v, const ScaleSchedule& s, double t);

/// rho with <rho, phi> = X_{R2}(v) - X_{R1}(v), where `outer` is the window
/// at R1 and `inner` the window at R2. Parameter error unless
/// (1+2w) R1 < dist(v, boundary) and (1+2w) R2 < (1-2w) R1, w the larger
/// of the two window widths.
HarmonicWeights increment_kernel(const LatticeDomain& domain, Site v, const SmoothingWindow& outer,
                                 const SmoothingWindow& inner);

/// Ten discrete harmonic fields on the whole box: 1, x1, x2, x1 x2,
/// x1^2 - x2^2, Re and Im of (x1 + i x2)^3, and five harmonic extensions of
/// standard normal boundary data (seeded).
std::vector<FieldState> harmonic_test_family(const LatticeDomain& domain, std::uint64_t seed = 1);

/// max over the family of |<rho, h>| / (|h|_inf |rho|_1).
double annihilation_error(const HarmonicWeights& rho, const std::vector<FieldState>& family);

/// Number of distinct ball radii currently cached (for tests and logging).
std::size_t harmonic_cache_size();

} // namespace glf
