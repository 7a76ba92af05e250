#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <span>
#include <string>

#include "glfield/field.hpp"
#include "glfield/lattice.hpp"
#include "glfield/potential.hpp"
#include "glfield/rng.hpp"

namespace glf {

enum class Kernel {
    metropolis,  // single-site Gaussian proposals (default)
    heat_bath,   // exact single-site conditional draws by rejection
    hmc,         // whole-field Hamiltonian moves with a spectral Gaussian reference
    exact,       // independent exact draws; quadratic V only
};

std::string to_string(Kernel k);
/// Config error for unknown names.
Kernel kernel_from_string(const std::string& name);

/// "Sweeps" count trajectories for the hmc kernel and are ignored by the
/// exact kernel, where every sample is an independent draw.
struct SamplerConfig {
    std::uint64_t sweeps_burnin = 0;  // 0 selects default_burnin()
    std::uint64_t sweeps_between_samples = 1;
    std::uint64_t n_samples = 1;
    Kernel kernel = Kernel::metropolis;
    double proposal_std = 1.0;
    bool tune_proposal = true;  // adapt proposal_std towards 0.45 acceptance during burn-in
    bool checkerboard = true;   // false: lexicographic sequential sweep
    std::uint64_t seed = 1;
    bool diagnostics = true;
    int chains = 1;   // independent chains; sample i belongs to chain i % chains
    int threads = 1;  // workers; never changes the output

    int hmc_steps = 8;
    double hmc_time = std::numbers::pi / 2;
    double hmc_kappa = 0.0;  // reference stiffness; 0 adapts it during burn-in

    /// Parameter error on non-positive counts, proposal_std outside (0, 100], etc.
    void validate() const;
};

/// O(N^2) sweeps for local kernels (scaled by c+/c-), a fixed number of
/// trajectories for hmc, 0 for exact draws.
std::uint64_t default_burnin(const LatticeDomain& domain, const Potential& p, Kernel kernel);

struct SweepStats {
    std::uint64_t proposed = 0;
    std::uint64_t accepted = 0;
    double rate() const noexcept { return proposed == 0 ? 0.0 : double(accepted) / double(proposed); }
    SweepStats& operator+=(const SweepStats& o) noexcept {
        proposed += o.proposed;
        accepted += o.accepted;
        return *this;
    }
};

/// One full sweep of the local kernel selected by cfg (metropolis or
/// heat_bath). Checkerboard mode updates all even sites (x1 + x2 even), then
/// all odd ones; the per-row random streams are derived from one draw of
/// `rng`, so the result does not depend on cfg.threads. With `region`, only
/// members strictly inside the region move. Numerical error (with the site)
/// on a non-finite energy difference.
void sweep(FieldState& state, const Potential& p, const SamplerConfig& cfg, Xoshiro256& rng,
           SweepStats* stats = nullptr, const SiteSet* region = nullptr);

/// Hybrid Monte Carlo on the interior of a full box with the boundary values
/// of the state it was built from. The energy splits as
///   sum_edges V(grad phi) = (kappa/2) q^T L q + U1(q),   phi = h + q,
/// with h the harmonic extension of the boundary data. The Gaussian part is
/// integrated exactly in whitened sine-transform coordinates and U1 by
/// leapfrog kicks, followed by a Metropolis test on the total energy. For
/// quadratic V and kappa = 1, U1 is constant and a trajectory of length pi/2
/// is an exact independent draw.
class HmcKernel {
public:
    HmcKernel(const FieldState& boundary, const Potential& p, int steps, double time, double kappa);
    ~HmcKernel();
    HmcKernel(const HmcKernel&) = delete;
    HmcKernel& operator=(const HmcKernel&) = delete;

    /// One trajectory; returns whether it was accepted.
    bool trajectory(FieldState& state, Xoshiro256& rng);

    double kappa() const noexcept { return kappa_; }
    void set_kappa(double kappa);
    const SweepStats& stats() const noexcept { return stats_; }
    double last_energy_error() const noexcept { return last_dh_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    double kappa_;
    SweepStats stats_;
    double last_dh_ = 0.0;
};

/// Mean of V''(grad phi) over all edges of the box.
double mean_curvature(const FieldState& state, const Potential& p);

/// Autocorrelation summary of one observable's trace.
struct TraceDiagnostics {
    std::size_t n = 0;
    double mean = 0.0;
    double variance = 0.0;
    double sum_autocorr = 0.0;  // sum_{t>=1} rho(t) inside the window; ~0 for iid data
    double tau_int = 1.0;       // 1 + 2 * sum_autocorr
    std::size_t window = 0;
    double ess = 0.0;  // n / tau_int, capped at n
};

/// Windowed estimator: the window is the smallest W with W >= 5 tau_int(W).
/// Input error for traces shorter than 100; degenerate error for constant traces.
TraceDiagnostics analyze_trace(std::span<const double> trace);

struct ChainDiagnostics {
    double acceptance = 1.0;
    TraceDiagnostics center;     // phi at the origin
    TraceDiagnostics maximum;    // max phi over the domain
    std::size_t n_samples = 0;
    bool flagged = false;        // some ESS below 100 (or traces too short to judge)
    double proposal_std = 0.0;   // after tuning
    double kappa = 0.0;          // hmc reference stiffness after adaptation
};

/// Receives sample `index` (0-based, global across chains). Called
/// concurrently from different chains, each index exactly once.
using FieldSink = std::function<void(std::size_t index, const FieldState& field)>;

/// Runs cfg.chains chains from `initial` (whose boundary values are the
/// Dirichlet data). Chain c uses seed derive_seed(cfg.seed, c) and produces
/// samples c, c + chains, c + 2 chains, ... For the exact kernel draw i uses
/// derive_seed(cfg.seed, i) directly.
ChainDiagnostics run_chains(const FieldState& initial, const Potential& p, const SamplerConfig& cfg,
                            const FieldSink& sink);

/// Re-equilibrates the values strictly inside `sub` from the conditional
/// law given everything else. Quadratic V with the exact kernel draws the
/// conditional field exactly (harmonic extension plus a Dirichlet GFF);
/// otherwise cfg.sweeps_burnin restricted sweeps are applied (default: the
/// O(diameter^2) rule). Sites outside the interior of `sub` are untouched.
FieldState resample_subdomain(const FieldState& state, const SiteSet& sub, const Potential& p,
                              const SamplerConfig& cfg, Xoshiro256& rng);

} // namespace glf
