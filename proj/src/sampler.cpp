#include "glfield/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <sstream>

#include "glfield/errors.hpp"
#include "glfield/laplace.hpp"
#include "glfield/parallel.hpp"
#include "glfield/simd/kernels.hpp"
#include "glfield/spectral.hpp"

namespace glf {

std::string to_string(Kernel k) {
    switch (k) {
    case Kernel::metropolis: return "metropolis";
    case Kernel::heat_bath: return "heat_bath";
    case Kernel::hmc: return "hmc";
    case Kernel::exact: return "exact";
    }
    return "metropolis";
}

Kernel kernel_from_string(const std::string& name) {
    if (name == "metropolis") return Kernel::metropolis;
    if (name == "heat_bath" || name == "heat-bath") return Kernel::heat_bath;
    if (name == "hmc") return Kernel::hmc;
    if (name == "exact") return Kernel::exact;
    fail(ErrorKind::config, "unknown sampler kernel '" + name + "'");
}

void SamplerConfig::validate() const {
    if (sweeps_between_samples == 0) fail(ErrorKind::parameter, "sweeps_between_samples must be positive");
    if (n_samples == 0) fail(ErrorKind::parameter, "n_samples must be positive");
    if (!(proposal_std > 0.0 && proposal_std <= 100.0)) {
        fail(ErrorKind::parameter, "proposal_std must lie in (0, 100]");
    }
    if (chains < 1) fail(ErrorKind::parameter, "chains must be positive");
    if (threads < 1) fail(ErrorKind::parameter, "threads must be positive");
    if (hmc_steps < 1) fail(ErrorKind::parameter, "hmc_steps must be positive");
    if (!(hmc_time > 0.0 && hmc_time < 10.0)) fail(ErrorKind::parameter, "hmc_time must lie in (0, 10)");
    if (!(hmc_kappa >= 0.0) || !std::isfinite(hmc_kappa)) fail(ErrorKind::parameter, "hmc_kappa must be >= 0");
}

std::uint64_t default_burnin(const LatticeDomain& domain, const Potential& p, Kernel kernel) {
    const double ratio = p.c_plus() / p.c_minus();
    switch (kernel) {
    case Kernel::exact: return 0;
    case Kernel::hmc: return std::uint64_t(std::ceil(40.0 * ratio));
    case Kernel::metropolis:
    case Kernel::heat_bath: break;
    }
    const double n = domain.half_width();
    return std::uint64_t(std::ceil(std::max(100.0, 2.0 * n * n) * ratio));
}

// ------------------------------------------------------------ local kernels

namespace {

std::string site_text(const LatticeDomain& d, std::int64_t i) {
    const Site s = d.site(i);
    std::ostringstream os;
    os << "(" << s.x1 << ", " << s.x2 << ")";
    return os.str();
}

template <class E>
bool metropolis_update(double* phi, std::int64_t i, std::int64_t stride, const E& v, double sigma,
                       Xoshiro256& rng, const LatticeDomain& d) {
    const double x = phi[i];
    const double nb[4] = {phi[i + stride], phi[i - stride], phi[i + 1], phi[i - 1]};
    const double y = x + sigma * standard_normal(rng);
    double de = 0.0;
    for (double n : nb) de += v.value(y - n) - v.value(x - n);
    if (!std::isfinite(de)) fail(ErrorKind::numerical, "non-finite energy difference at site " + site_text(d, i));
    if (de <= 0.0 || rng.uniform() < std::exp(-de)) {
        phi[i] = y;
        return true;
    }
    return false;
}

// Exact draw from exp(-E(t)), E(t) = sum_k V(t - n_k), E'' >= 4 c_minus.
// The envelope is the quadratic lower bound at an approximate minimizer t0:
//   E(t) >= E(t0) + E'(t0)(t - t0) + 2 c_minus (t - t0)^2,
// so the Gaussian proposal plus acceptance exp(-(E - envelope)) is exact
// whatever the accuracy of t0.
template <class E>
std::uint64_t heat_bath_update(double* phi, std::int64_t i, std::int64_t stride, const E& v, double c_minus,
                               Xoshiro256& rng, const LatticeDomain& d) {
    const double nb[4] = {phi[i + stride], phi[i - stride], phi[i + 1], phi[i - 1]};
    auto energy = [&](double t) { return v.value(t - nb[0]) + v.value(t - nb[1]) + v.value(t - nb[2]) + v.value(t - nb[3]); };
    auto slope = [&](double t) { return v.deriv(t - nb[0]) + v.deriv(t - nb[1]) + v.deriv(t - nb[2]) + v.deriv(t - nb[3]); };
    auto curve = [&](double t) { return v.second(t - nb[0]) + v.second(t - nb[1]) + v.second(t - nb[2]) + v.second(t - nb[3]); };

    const double k = 4.0 * c_minus;
    double t = 0.25 * (nb[0] + nb[1] + nb[2] + nb[3]);
    double g = slope(t);
    // Root of the increasing function E' lies within |E'(t)|/k of t.
    double lo = t - std::abs(g) / k, hi = t + std::abs(g) / k;
    for (int it = 0; it < 50 && std::abs(g) > 1e-13 * (1.0 + std::abs(t)); ++it) {
        if (g > 0) hi = t;
        else lo = t;
        double next = t - g / curve(t);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        t = next;
        g = slope(t);
    }
    const double e0 = energy(t);
    if (!std::isfinite(e0) || !std::isfinite(g)) {
        fail(ErrorKind::numerical, "non-finite conditional energy at site " + site_text(d, i));
    }
    const double centre = t - g / k, sd = 1.0 / std::sqrt(k);
    for (std::uint64_t tries = 1;; ++tries) {
        const double y = centre + sd * standard_normal(rng);
        const double dy = y - t;
        const double excess = energy(y) - (e0 + g * dy + 0.5 * k * dy * dy);
        if (!std::isfinite(excess)) fail(ErrorKind::numerical, "non-finite energy difference at site " + site_text(d, i));
        if (excess <= 0.0 || rng.uniform() < std::exp(-excess)) {
            phi[i] = y;
            return tries;
        }
        if (tries > 100000) fail(ErrorKind::numerical, "heat-bath rejection stalled at site " + site_text(d, i));
    }
}

int parity_of(int a, int b) { return ((a + b) % 2 + 2) % 2; }

} // namespace

void sweep(FieldState& state, const Potential& p, const SamplerConfig& cfg, Xoshiro256& rng, SweepStats* stats,
           const SiteSet* region) {
    const LatticeDomain& d = state.domain();
    const int n = d.half_width();
    const std::int64_t stride = d.stride_x1();
    double* phi = state.values().data();
    const bool heat = cfg.kernel == Kernel::heat_bath;
    if (cfg.kernel != Kernel::metropolis && !heat) {
        fail(ErrorKind::parameter, "sweep needs the metropolis or heat_bath kernel");
    }

    std::vector<std::uint8_t> movable;
    int row_lo = -n + 1, row_hi = n - 1;
    if (region != nullptr) {
        if (!(region->domain() == d)) fail(ErrorKind::input, "region belongs to a different domain");
        movable.assign(std::size_t(d.size()), 0);
        for (auto i : region->interior_indices()) movable[std::size_t(i)] = 1;
        row_lo = std::max(row_lo, region->lower().x1);
        row_hi = std::min(row_hi, region->upper().x1);
    }
    const auto free_site = [&](std::int64_t i) { return movable.empty() || movable[std::size_t(i)] != 0; };

    p.visit([&](auto v) {
        const auto update = [&](std::int64_t i, Xoshiro256& g, SweepStats& st) {
            if (heat) {
                st.proposed += heat_bath_update(phi, i, stride, v, p.c_minus(), g, d);
                st.accepted += 1;
            } else {
                st.proposed += 1;
                st.accepted += metropolis_update(phi, i, stride, v, cfg.proposal_std, g, d) ? 1 : 0;
            }
        };
        SweepStats total;
        if (cfg.checkerboard) {
            const std::uint64_t key = rng();
            const std::size_t rows = row_hi >= row_lo ? std::size_t(row_hi - row_lo + 1) : 0;
            std::vector<SweepStats> per_row(rows);
            for (int parity = 0; parity < 2; ++parity) {
                parallel_for(rows, cfg.threads, [&](std::size_t r) {
                    const int a = row_lo + int(r);
                    Xoshiro256 g(derive_seed(key, std::uint64_t(parity), std::uint64_t(a + n)));
                    for (int b = -n + 1 + (parity_of(a, -n + 1) == parity ? 0 : 1); b <= n - 1; b += 2) {
                        const std::int64_t i = d.index({a, b});
                        if (free_site(i)) update(i, g, per_row[r]);
                    }
                });
            }
            for (const auto& s : per_row) total += s;
        } else {
            for (int a = row_lo; a <= row_hi; ++a)
                for (int b = -n + 1; b <= n - 1; ++b) {
                    const std::int64_t i = d.index({a, b});
                    if (free_site(i)) update(i, rng, total);
                }
        }
        if (stats != nullptr) *stats += total;
    });
    state.sweeps += 1;
}

// ---------------------------------------------------------------------- HMC

struct HmcKernel::Impl {
    Impl(const FieldState& boundary, const Potential& pot, int steps_, double time_)
        : box(boundary.domain()), p(pot), steps(steps_), time(time_), side(boundary.domain().side()) {
        const std::size_t m = box.interior_side();
        h = AlignedBuffer(m * m);
        xi = AlignedBuffer(m * m);
        mom = AlignedBuffer(m * m);
        force = AlignedBuffer(m * m);
        work = AlignedBuffer(m * m);
        phi = std::vector<double>(boundary.values().begin(), boundary.values().end());
        full.assign(phi.size(), 0.0);
        diff.assign(std::size_t(side), 0.0);

        h = box.harmonic_interior(boundary);
        box.scatter_interior(h, phi);
    }

    void set_kappa(double kappa) {
        const auto eig = box.eigenvalues();
        to_q.resize(eig.size());
        to_xi.resize(eig.size());
        for (std::size_t i = 0; i < eig.size(); ++i) {
            to_xi[i] = std::sqrt(kappa * eig[i]);
            to_q[i] = 1.0 / to_xi[i];
        }
    }

    // sum over all box edges of V(phi_x - phi_y), one row of edges at a time
    template <class E>
    double energy(const double* f, const E& v) {
        const std::size_t w = std::size_t(side);
        double e = 0.0;
        for (std::size_t r = 0; r < w; ++r) {
            const double* row = f + r * w;
            for (std::size_t c = 0; c + 1 < w; ++c) diff[c] = row[c] - row[c + 1];
            v.value_array(diff.data(), diff.data(), w - 1);
            for (std::size_t c = 0; c + 1 < w; ++c) e += diff[c];
            if (r + 1 < w) {
                for (std::size_t c = 0; c < w; ++c) diff[c] = row[c] - row[c + w];
                v.value_array(diff.data(), diff.data(), w);
                for (std::size_t c = 0; c < w; ++c) e += diff[c];
            }
        }
        return e;
    }

    // full[x] = sum_{y ~ x} V'(phi_x - phi_y), with V' evaluated once per edge;
    // the interior part is copied to `out`.
    template <class E>
    void edge_force(const double* f, const E& v, AlignedBuffer& out) {
        const std::size_t w = std::size_t(side);
        std::fill(full.begin(), full.end(), 0.0);
        for (std::size_t r = 0; r < w; ++r) {
            const double* row = f + r * w;
            double* fr = full.data() + r * w;
            for (std::size_t c = 0; c + 1 < w; ++c) diff[c] = row[c] - row[c + 1];
            v.deriv_array(diff.data(), diff.data(), w - 1);
            for (std::size_t c = 0; c + 1 < w; ++c) {
                fr[c] += diff[c];
                fr[c + 1] -= diff[c];
            }
            if (r + 1 < w) {
                for (std::size_t c = 0; c < w; ++c) diff[c] = row[c] - row[c + w];
                v.deriv_array(diff.data(), diff.data(), w);
                for (std::size_t c = 0; c < w; ++c) {
                    fr[c] += diff[c];
                    fr[c + w] -= diff[c];
                }
            }
        }
        box.gather_interior(full, out);
    }

    // From xi: phi (interior) = h + S diag(to_q) xi; force = dU1/dxi.
    template <class E>
    void gradient(const E& v) {
        const std::size_t n = xi.size();
        for (std::size_t i = 0; i < n; ++i) work[i] = to_q[i] * xi[i];
        box.transform(work);
        for (std::size_t i = 0; i < n; ++i) work[i] += h[i];
        box.scatter_interior(work, phi);
        edge_force(phi.data(), v, force);
        box.transform(force);
        for (std::size_t i = 0; i < n; ++i) force[i] = to_q[i] * force[i] - xi[i];
    }

    SpectralBox box;
    Potential p;
    int steps;
    double time;
    int side;
    AlignedBuffer h, xi, mom, force, work;
    std::vector<double> to_q, to_xi;
    std::vector<double> phi;   // full-domain scratch configuration with the boundary data
    std::vector<double> full;  // full-domain force accumulator
    std::vector<double> diff;  // one row of edge differences
};

HmcKernel::HmcKernel(const FieldState& boundary, const Potential& p, int steps, double time, double kappa)
    : impl_(std::make_unique<Impl>(boundary, p, steps, time)), kappa_(kappa) {
    set_kappa(kappa);
}

HmcKernel::~HmcKernel() = default;

void HmcKernel::set_kappa(double kappa) {
    if (!(kappa > 0.0) || !std::isfinite(kappa)) fail(ErrorKind::parameter, "hmc reference stiffness must be positive");
    kappa_ = kappa;
    impl_->set_kappa(kappa);
}

bool HmcKernel::trajectory(FieldState& state, Xoshiro256& rng) {
    Impl& im = *impl_;
    if (!(state.domain() == im.box.domain())) fail(ErrorKind::input, "state belongs to a different domain");
    const std::size_t n = im.xi.size();

    // xi = diag(to_xi) S (phi - h)
    im.box.gather_interior(state.values(), im.work);
    for (std::size_t i = 0; i < n; ++i) im.work[i] -= im.h[i];
    im.box.transform(im.work);
    for (std::size_t i = 0; i < n; ++i) im.xi[i] = im.to_xi[i] * im.work[i];
    for (std::size_t i = 0; i < n; ++i) im.mom[i] = standard_normal(rng);

    bool accepted = false;
    im.p.visit([&](auto v) {
        const auto& k = simd::active();
        const double u0 = im.energy(state.values().data(), v);
        const double h0 = 0.5 * k.dot(im.mom.data(), im.mom.data(), n) + u0;

        const double dt = im.time / im.steps;
        const double c = std::cos(dt), s = std::sin(dt);
        im.gradient(v);
        k.axpy(-0.5 * dt, im.force.data(), im.mom.data(), n);
        for (int step = 1; step <= im.steps; ++step) {
            for (std::size_t i = 0; i < n; ++i) {
                const double x = im.xi[i], q = im.mom[i];
                im.xi[i] = c * x + s * q;
                im.mom[i] = c * q - s * x;
            }
            im.gradient(v);
            k.axpy(step == im.steps ? -0.5 * dt : -dt, im.force.data(), im.mom.data(), n);
        }
        const double u1 = im.energy(im.phi.data(), v);
        const double h1 = 0.5 * k.dot(im.mom.data(), im.mom.data(), n) + u1;
        last_dh_ = h1 - h0;
        const double u = rng.uniform();
        if (std::isfinite(last_dh_) && (last_dh_ <= 0.0 || u < std::exp(-last_dh_))) {
            im.box.gather_interior(im.phi, im.work);
            im.box.scatter_interior(im.work, state.values());
            accepted = true;
        }
    });
    stats_.proposed += 1;
    stats_.accepted += accepted ? 1 : 0;
    state.sweeps += 1;
    return accepted;
}

double mean_curvature(const FieldState& state, const Potential& p) {
    const int side = state.domain().side();
    const double* phi = state.values().data();
    double sum = 0.0;
    p.visit([&](auto v) {
        for (int r = 0; r < side; ++r) {
            const double* row = phi + std::size_t(r) * side;
            for (int c = 0; c + 1 < side; ++c) sum += v.second(row[c] - row[c + 1]);
            if (r + 1 < side)
                for (int c = 0; c < side; ++c) sum += v.second(row[c] - row[c + side]);
        }
    });
    return sum / (2.0 * side * (side - 1));
}

// -------------------------------------------------------------- diagnostics

TraceDiagnostics analyze_trace(std::span<const double> trace) {
    const std::size_t n = trace.size();
    if (n < 100) fail(ErrorKind::input, "trace too short for autocorrelation diagnostics (need >= 100)");
    TraceDiagnostics out;
    out.n = n;
    double mean = 0.0;
    for (double x : trace) mean += x;
    mean /= double(n);
    double var = 0.0;
    for (double x : trace) var += (x - mean) * (x - mean);
    var /= double(n);
    out.mean = mean;
    out.variance = var;
    if (!(var > 1e-300) || var <= 1e-24 * mean * mean) fail(ErrorKind::degenerate, "trace has zero variance");

    double sum = 0.0;
    std::size_t w = 1;
    for (; w < n / 2; ++w) {
        double cov = 0.0;
        for (std::size_t i = 0; i + w < n; ++i) cov += (trace[i] - mean) * (trace[i + w] - mean);
        sum += cov / (double(n) * var);
        if (double(w) >= 5.0 * (1.0 + 2.0 * sum)) break;
    }
    out.window = w;
    out.sum_autocorr = sum;
    out.tau_int = 1.0 + 2.0 * sum;
    out.ess = out.tau_int > 1.0 ? double(n) / out.tau_int : double(n);
    return out;
}

namespace {

// Pools per-chain diagnostics: ESS adds, tau is n / ESS.
TraceDiagnostics pool(const std::vector<std::vector<double>>& traces, bool& flagged) {
    TraceDiagnostics out;
    double ess = 0.0, mean = 0.0, var = 0.0;
    std::size_t total = 0, window = 0;
    for (const auto& t : traces) {
        if (t.empty()) continue;
        total += t.size();
        try {
            const auto d = analyze_trace(t);
            ess += d.ess;
            mean += d.mean * double(d.n);
            var += d.variance * double(d.n);
            window = std::max(window, d.window);
        } catch (const Error&) {
            flagged = true;
        }
    }
    out.n = total;
    out.ess = ess;
    if (total > 0) {
        out.mean = mean / double(total);
        out.variance = var / double(total);
    }
    out.window = window;
    out.tau_int = ess > 0.0 ? double(total) / ess : 0.0;
    out.sum_autocorr = ess > 0.0 ? 0.5 * (out.tau_int - 1.0) : 0.0;
    if (ess < 100.0) flagged = true;
    return out;
}

} // namespace

ChainDiagnostics run_chains(const FieldState& initial, const Potential& p, const SamplerConfig& cfg,
                            const FieldSink& sink) {
    cfg.validate();
    const LatticeDomain& d = initial.domain();
    const std::int64_t centre = d.index({0, 0});
    const auto& k = simd::active();
    ChainDiagnostics diag;
    diag.n_samples = cfg.n_samples;
    diag.proposal_std = cfg.proposal_std;

    if (cfg.kernel == Kernel::exact) {
        if (p.kind() != Potential::Kind::quadratic) {
            fail(ErrorKind::parameter, "the exact kernel needs the quadratic potential");
        }
        const SpectralBox box(d);
        const AlignedBuffer bg = box.harmonic_interior(initial);
        const std::size_t n = cfg.n_samples;
        std::vector<double> centre_trace(n), max_trace(n);
        const std::size_t blocks = std::min<std::size_t>(std::size_t(cfg.threads), n);
        parallel_for(blocks, cfg.threads, [&](std::size_t b) {
            AlignedBuffer scratch(box.interior_size());
            FieldState f = initial;
            for (std::size_t i = n * b / blocks; i < n * (b + 1) / blocks; ++i) {
                Xoshiro256 rng(derive_seed(cfg.seed, i));
                box.draw(rng, scratch);
                for (std::size_t j = 0; j < scratch.size(); ++j) scratch[j] += bg[j];
                box.scatter_interior(scratch, f.values());
                f.seed = cfg.seed;
                f.stream = i;
                centre_trace[i] = f[centre];
                max_trace[i] = k.max_value(f.values().data(), f.values().size());
                sink(i, f);
            }
        });
        if (cfg.diagnostics) {
            bool flagged = false;
            diag.center = pool({centre_trace}, flagged);
            diag.maximum = pool({max_trace}, flagged);
            diag.flagged = flagged;
        }
        diag.acceptance = 1.0;
        return diag;
    }

    const int chains = cfg.chains;
    const std::uint64_t burnin = cfg.sweeps_burnin > 0 ? cfg.sweeps_burnin : default_burnin(d, p, cfg.kernel);
    std::vector<std::vector<double>> centre_traces(static_cast<std::size_t>(chains)), max_traces(static_cast<std::size_t>(chains));
    std::vector<SweepStats> chain_stats(static_cast<std::size_t>(chains));
    std::vector<double> final_std(static_cast<std::size_t>(chains), cfg.proposal_std), final_kappa(static_cast<std::size_t>(chains), 0.0);

    parallel_for(std::size_t(chains), cfg.threads, [&](std::size_t c) {
        SamplerConfig local = cfg;
        local.threads = chains == 1 ? cfg.threads : 1;
        Xoshiro256 rng(derive_seed(cfg.seed, c));
        FieldState state = initial;
        state.seed = cfg.seed;
        state.stream = c;

        std::unique_ptr<HmcKernel> hmc;
        if (cfg.kernel == Kernel::hmc) {
            const double k0 = cfg.hmc_kappa > 0.0 ? cfg.hmc_kappa : 0.5 * (p.c_minus() + p.c_plus());
            hmc = std::make_unique<HmcKernel>(initial, p, cfg.hmc_steps, cfg.hmc_time, k0);
        }

        // Burn-in: proposal tuning for metropolis, reference-stiffness
        // adaptation for hmc (first half with the starting kappa, averaged
        // curvature over its second half, then fixed).
        double curvature_sum = 0.0;
        std::uint64_t curvature_n = 0;
        SweepStats window;
        for (std::uint64_t t = 0; t < burnin; ++t) {
            if (hmc) {
                hmc->trajectory(state, rng);
                if (cfg.hmc_kappa == 0.0 && t >= burnin / 4 && t < burnin / 2) {
                    curvature_sum += mean_curvature(state, p);
                    ++curvature_n;
                }
                if (cfg.hmc_kappa == 0.0 && t + 1 == burnin / 2 && curvature_n > 0) {
                    hmc->set_kappa(curvature_sum / double(curvature_n));
                }
            } else {
                sweep(state, p, local, rng, &window);
                if (cfg.kernel == Kernel::metropolis && cfg.tune_proposal && (t + 1) % 10 == 0) {
                    local.proposal_std = std::clamp(local.proposal_std * std::exp(window.rate() - 0.45), 1e-3, 100.0);
                    window = SweepStats{};
                }
            }
        }
        final_std[c] = local.proposal_std;
        if (hmc) final_kappa[c] = hmc->kappa();

        SweepStats sampling;
        const SweepStats hmc_before = hmc ? hmc->stats() : SweepStats{};
        for (std::size_t i = c; i < cfg.n_samples; i += std::size_t(chains)) {
            for (std::uint64_t s = 0; s < cfg.sweeps_between_samples; ++s) {
                if (hmc) hmc->trajectory(state, rng);
                else sweep(state, p, local, rng, &sampling);
            }
            if (cfg.diagnostics) {
                centre_traces[c].push_back(state[centre]);
                max_traces[c].push_back(k.max_value(state.values().data(), state.values().size()));
            }
            sink(i, state);
        }
        if (hmc) {
            sampling.proposed = hmc->stats().proposed - hmc_before.proposed;
            sampling.accepted = hmc->stats().accepted - hmc_before.accepted;
        }
        chain_stats[c] = sampling;
    });

    SweepStats all;
    for (const auto& s : chain_stats) all += s;
    diag.acceptance = all.rate();
    diag.proposal_std = final_std[0];
    diag.kappa = final_kappa[0];
    if (cfg.diagnostics) {
        bool flagged = false;
        diag.center = pool(centre_traces, flagged);
        diag.maximum = pool(max_traces, flagged);
        diag.flagged = flagged;
    }
    return diag;
}

FieldState resample_subdomain(const FieldState& state, const SiteSet& sub, const Potential& p,
                              const SamplerConfig& cfg, Xoshiro256& rng) {
    if (!(sub.domain() == state.domain())) fail(ErrorKind::input, "subdomain belongs to a different domain");
    FieldState out = state;
    if (cfg.kernel == Kernel::exact) {
        if (p.kind() != Potential::Kind::quadratic) {
            fail(ErrorKind::parameter, "the exact kernel needs the quadratic potential");
        }
        const DirichletOperator op(sub, DirichletOperator::Backend::cholesky);
        const auto h = harmonic_extension(op, state.values());
        const FieldState g = sample_exact_gff(op, rng);
        const auto idx = sub.indices();
        const auto flags = sub.boundary_flags();
        for (std::size_t k = 0; k < idx.size(); ++k)
            if (!flags[k]) out[idx[k]] = h[k] + g[idx[k]];
        out.sweeps += 1;
        return out;
    }
    SamplerConfig local = cfg;
    if (local.kernel != Kernel::heat_bath) local.kernel = Kernel::metropolis;
    std::uint64_t sweeps = cfg.sweeps_burnin;
    if (sweeps == 0) {
        const double extent = std::max(sub.upper().x1 - sub.lower().x1, sub.upper().x2 - sub.lower().x2);
        sweeps = std::uint64_t(std::ceil(std::max(100.0, 0.5 * extent * extent) * p.c_plus() / p.c_minus()));
    }
    for (std::uint64_t s = 0; s < sweeps; ++s) sweep(out, p, local, rng, nullptr, &sub);
    return out;
}

} // namespace glf
