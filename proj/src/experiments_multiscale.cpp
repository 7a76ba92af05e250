// Increments, coupling, CLT, truncated counts and tiles.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "experiments_detail.hpp"
#include "glfield/errors.hpp"
#include "glfield/experiments.hpp"
#include "glfield/parallel.hpp"
#include "glfield/spectral.hpp"

namespace glf {

using namespace detail;

namespace {

// Rows of K values per sample, flattened.
struct Rows {
    std::size_t n = 0;
    std::size_t width = 0;
    std::vector<double> data;
    double at(std::size_t i, std::size_t j) const { return data[i * width + j]; }
    std::vector<double> column(std::size_t j) const {
        std::vector<double> c(n);
        for (std::size_t i = 0; i < n; ++i) c[i] = at(i, j);
        return c;
    }
};

Rows collect_rows(EnsembleSource& source, std::size_t width,
                  const std::function<std::vector<double>(const FieldState&)>& fn) {
    Rows r;
    r.n = source.count();
    r.width = width;
    r.data.assign(r.n * width, 0.0);
    source.visit([&](std::size_t i, const FieldState& f) {
        const auto v = fn(f);
        std::copy(v.begin(), v.end(), r.data.begin() + std::ptrdiff_t(i * width));
    });
    return r;
}

double cov(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
    return s / double(a.size() - 1);
}

// log E exp(sum_j l_j x_j) over a subset of rows given by indices.
double joint_lme(const Rows& r, std::span<const std::size_t> idx, std::span<const double> l) {
    std::vector<double> y(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < l.size(); ++j) s += l[j] * r.at(idx[k], j);
        y[k] = s;
    }
    return log_mean_exp(y, 1.0).value;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

double max_tau(const Rows& r, int chains) {
    double t = 1.0;
    for (std::size_t j = 0; j < r.width; ++j) t = std::max(t, tau_of(r.column(j), chains));
    return t;
}

} // namespace

HarmonicWeights increment_rho(const LatticeDomain& domain, Site v, const ScaleSchedule& s, int K, int m) {
    if (K < 2 || K > s.M) fail(ErrorKind::parameter, "K must lie in [2, M]");
    if (m < 1 || m > K) fail(ErrorKind::parameter, "m must lie in [1, K]");
    const auto inner = smoothed_kernel(domain, v, s.window(block_index(m, K, s.M), +1));
    const auto outer = smoothed_kernel(domain, v, s.window(block_index(m - 1, K, s.M), -1));
    auto rho = combine(inner, 1.0, outer, -1.0);
    rho.construction = "increment_rho";
    return rho;
}

// ------------------------------------------------------------- increments

ExperimentReport increment_gaussianity(EnsembleSource& source, Site v, const ScaleSchedule& schedule, int K,
                                       const std::vector<std::vector<double>>& lambda_grid, double g,
                                       const DirichletOperator* oracle, const AnalysisOptions& opt) {
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    if (K < 2 || K > schedule.M) fail(ErrorKind::parameter, "K must lie in [2, M]");
    for (const auto& l : lambda_grid)
        if (l.size() != std::size_t(K)) fail(ErrorKind::parameter, "every lambda needs K entries");
    const LatticeDomain& d = source.domain();
    const int N = d.half_width();
    const double logn = std::log(double(N));
    const auto rows = collect_rows(source, std::size_t(K), [&](const FieldState& f) { return increments(f, v, schedule, K); });
    const int chains = chains_of(source.provenance());
    const double tau = max_tau(rows, chains);

    ExperimentReport r;
    r.id = "increments";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", N}, {"v", {v.x1, v.x2}}, {"Delta", schedule.delta}, {"eps", schedule.eps},
                    {"c", schedule.c}, {"M", schedule.M}, {"K", K}, {"g", g}, {"n", rows.n}};
    require_ess(r, double(rows.n), tau, std::max(200.0, opt.min_ess));
    const double target = g * logn / double(K);
    r.add_exact("variance_target", target);

    std::vector<HarmonicWeights> rho;
    if (oracle) {
        for (int m = 1; m <= K; ++m) rho.push_back(increment_rho(d, v, schedule, K, m));
    }
    const double st = std::sqrt(std::max(1.0, tau));
    r.table.columns = {"m", "variance", "variance_se", "rel_dev", "excess_kurtosis", "kurtosis_se", "variance_exact"};
    double worst_dev = 0.0;
    for (int m = 1; m <= K; ++m) {
        const auto col = rows.column(std::size_t(m - 1));
        const std::string tag = "_m" + std::to_string(m);
        const auto var = boot(col, [](std::span<const double> s) { return variance(s); }, opt, tau, 200 + std::uint64_t(m));
        const auto sm = shape_moments(col);
        const double kse = sm.kurtosis_se * st;
        const double dev = var.value / target - 1.0;
        worst_dev = std::max(worst_dev, std::abs(dev));
        r.add("variance" + tag, var);
        r.add("excess_kurtosis" + tag, Quantity{sm.excess_kurtosis, kse, sm.excess_kurtosis - 1.96 * kse,
                                                sm.excess_kurtosis + 1.96 * kse, false});
        r.check("kurtosis" + tag, std::abs(sm.excess_kurtosis) <= 3.0 * kse,
                num(sm.excess_kurtosis) + " +- " + num(kse));
        r.check("variance_within_25pct" + tag, std::abs(dev) <= 0.25,
                "Var " + num(var.value) + " vs (g/K) log N = " + num(target));
        double exact = NAN;
        if (oracle) {
            exact = gaussian_covariance(*oracle, rho[std::size_t(m - 1)], rho[std::size_t(m - 1)]);
            r.add_exact("variance_exact" + tag, exact);
        }
        r.table.rows.push_back({double(m), var.value, var.se, dev, sm.excess_kurtosis, kse, exact});
    }
    r.add_exact("max_rel_dev", worst_dev);

    if (oracle) {
        // Normal-theory SE of each sample covariance.
        double worst = 0.0;
        std::size_t pairs = 0;
        std::vector<std::vector<double>> cols;
        for (int m = 0; m < K; ++m) cols.push_back(rows.column(std::size_t(m)));
        for (int a = 0; a < K; ++a)
            for (int b = a; b < K; ++b) {
                const double c = cov(cols[std::size_t(a)], cols[std::size_t(b)]);
                const double saa = cov(cols[std::size_t(a)], cols[std::size_t(a)]);
                const double sbb = cov(cols[std::size_t(b)], cols[std::size_t(b)]);
                const double se = std::sqrt((saa * sbb + c * c) / double(rows.n - 1)) * st;
                const double ex = gaussian_covariance(*oracle, rho[std::size_t(a)], rho[std::size_t(b)]);
                const double z = (c - ex) / se;
                worst = std::max(worst, std::abs(z));
                ++pairs;
                r.add("cov_" + std::to_string(a + 1) + std::to_string(b + 1), Quantity{c, se, c - 1.96 * se, c + 1.96 * se, false});
                r.add_exact("cov_exact_" + std::to_string(a + 1) + std::to_string(b + 1), ex);
            }
        r.add_exact("cov_max_abs_z", worst);
        r.check("covariance_matches_oracle", worst <= familywise_z(pairs),
                "max |z| = " + num(worst) + " vs " + num(familywise_z(pairs)));
    }

    std::size_t gi = 0;
    for (const auto& l : lambda_grid) {
        const std::string tag = "_l" + std::to_string(gi);
        double quad = 0.0;
        bool zero = true;
        for (double x : l) {
            quad += x * x;
            zero = zero && x == 0.0;
        }
        std::vector<double> y(rows.n);
        for (std::size_t i = 0; i < rows.n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < l.size(); ++j) s += l[j] * rows.at(i, j);
            y[i] = s;
        }
        const auto lme = log_mean_exp(y, 1.0);
        const auto q = boot(y, [](std::span<const double> s) { return log_mean_exp(s, 1.0).value; }, opt, tau, 300 + gi);
        r.add("log_mgf" + tag, q);
        r.add_exact("log_mgf_theory" + tag, 0.5 * quad * target);
        r.add_exact("tail_weight" + tag, lme.tail_weight);
        if (lme.tail_weight >= 0.2) r.warn("joint log-MGF " + std::to_string(gi) + " dominated by the top 1%");
        if (zero) r.check("zero_lambda" + tag, lme.value == 0.0, "log-MGF = " + num(lme.value));
        ++gi;
    }
    return r;
}

ExperimentReport increment_pair(EnsembleSource& source, Site v1, Site v2, double eps, double c, int K,
                                const std::vector<std::vector<double>>& lambda_grid, double g,
                                const AnalysisOptions& opt) {
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    const LatticeDomain& d = source.domain();
    if (!d.contains(v1) || !d.contains(v2)) fail(ErrorKind::geometry, "pair sites outside the domain");
    const int N = d.half_width();
    const double logn = std::log(double(N));
    const double dist = std::hypot(double(v1.x1 - v2.x1), double(v1.x2 - v2.x2));
    int j = 0;
    for (int k = 1; k <= K; ++k) {
        const double lo = std::pow(double(N), 1.0 - double(k) / K), hi = std::pow(double(N), 1.0 - double(k - 1) / K);
        if (dist >= lo && dist <= hi) {
            j = k;
            break;
        }
    }
    if (j == 0) fail(ErrorKind::parameter, "|v1 - v2| = " + num(dist) + " matches no scale band N^{1-j/K}");
    for (const auto& l : lambda_grid)
        if (l.size() != 2 * std::size_t(K)) fail(ErrorKind::parameter, "every lambda needs 2K entries");
    const auto s1 = build_schedule(double(dist_to_boundary(d, v1)), eps, c);
    const auto s2 = build_schedule(double(dist_to_boundary(d, v2)), eps, c);
    const auto rows = collect_rows(source, 2 * std::size_t(K), [&](const FieldState& f) {
        auto a = increments(f, v1, s1, K);
        const auto b = increments(f, v2, s2, K);
        a.insert(a.end(), b.begin(), b.end());
        return a;
    });
    const double tau = max_tau(rows, chains_of(source.provenance()));

    ExperimentReport r;
    r.id = "increments-pair";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", N}, {"v1", {v1.x1, v1.x2}}, {"v2", {v2.x1, v2.x2}}, {"distance", dist}, {"j", j},
                    {"eps", eps}, {"c", c}, {"K", K}, {"g", g}, {"n", rows.n}};
    require_ess(r, double(rows.n), tau, std::max(200.0, opt.min_ess));
    const double target = g * logn / double(K);

    // Cross-covariances U_m(v1) with U_{m'}(v2), m' > j.
    const double st = std::sqrt(std::max(1.0, tau));
    for (int a = 0; a < K; ++a)
        for (int b = j; b < K; ++b) {
            const auto x = rows.column(std::size_t(a)), y = rows.column(std::size_t(K + b));
            const double cc = correlation(x, y);
            const double se = (1.0 - cc * cc) / std::sqrt(double(rows.n)) * st;
            r.add("corr_" + std::to_string(a + 1) + "_" + std::to_string(b + 1), Quantity{cc, se, cc - 1.96 * se, cc + 1.96 * se, false});
        }

    std::vector<double> zs;
    for (std::size_t gi = 0; gi < lambda_grid.size(); ++gi) {
        std::vector<double> l = lambda_grid[gi];
        for (int m = 0; m < j; ++m) l[std::size_t(K + m)] = 0.0;  // the v2 sum starts at m = j + 1
        std::vector<double> l1(l), l2(l);
        for (int m = 0; m < K; ++m) {
            l1[std::size_t(K + m)] = 0.0;
            l2[std::size_t(m)] = 0.0;
        }
        auto gap = [&](std::span<const std::size_t> idx) {
            return joint_lme(rows, idx, l) - joint_lme(rows, idx, l1) - joint_lme(rows, idx, l2);
        };
        const auto q = boot_rows(rows.n, gap, opt, tau, 400 + gi);
        double theory = 0.0;
        for (int m = 0; m < K; ++m) theory += l[std::size_t(m)] * l[std::size_t(m)];
        for (int m = j; m < K; ++m) theory += l[std::size_t(K + m)] * l[std::size_t(K + m)];
        const auto idx = all_rows(rows.n);
        const std::string tag = "_l" + std::to_string(gi);
        r.add("log_mgf" + tag, Quantity{joint_lme(rows, idx, l), 0.0, 0.0, 0.0, false});
        r.add_exact("log_mgf_theory" + tag, 0.5 * theory * target);
        r.add("cross_term" + tag, q);
        if (q.se > 0.0) zs.push_back(std::abs(q.value) / q.se);
    }
    if (!zs.empty()) {
        const double worst = *std::max_element(zs.begin(), zs.end());
        r.add_exact("cross_term_max_abs_z", worst);
        r.check("factorized", worst <= familywise_z(zs.size()),
                "max |z| of joint minus marginal log-MGFs = " + num(worst));
    }
    return r;
}

// --------------------------------------------------------------- coupling

namespace {

struct Accum {
    std::vector<double> sum, sumsq;
    void init(std::size_t n) {
        sum.assign(n, 0.0);
        sumsq.assign(n, 0.0);
    }
    void add(std::span<const double> d) {
        for (std::size_t i = 0; i < d.size(); ++i) {
            sum[i] += d[i];
            sumsq[i] += d[i] * d[i];
        }
    }
    void merge(const Accum& o) {
        for (std::size_t i = 0; i < sum.size(); ++i) {
            sum[i] += o.sum[i];
            sumsq[i] += o.sumsq[i];
        }
    }
};

// phi - H(phi | dD(r)) on the members of D(r).
void harmonic_residual(const DirichletOperator& op, std::span<const double> field, std::vector<double>& out) {
    const auto h = harmonic_extension(op, field);
    const auto idx = op.set().indices();
    out.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) out[k] = field[std::size_t(idx[k])] - h[k];
}

} // namespace

ExperimentReport coupling_experiment(const LatticeDomain& domain, const Potential& p,
                                     const std::function<double(Site)>& f, const CouplingOptions& copt,
                                     const SamplerConfig& cfg_in, const AnalysisOptions& opt) {
    cfg_in.validate();
    if (copt.r_list.empty()) fail(ErrorKind::parameter, "coupling needs at least one inset depth r");
    if (copt.samples < 10) fail(ErrorKind::parameter, "coupling needs at least 10 samples");
    SamplerConfig cfg = cfg_in;
    const int N = domain.half_width();
    const bool exact = cfg.kernel == Kernel::exact;
    if (exact && p.kind() != Potential::Kind::quadratic) fail(ErrorKind::parameter, "the exact kernel needs quadratic V");

    FieldState zero(domain), withf(domain);
    withf.pin_boundary(f);

    std::vector<DirichletOperator> ops;
    for (int r : copt.r_list) {
        if (r < 1) fail(ErrorKind::parameter, "inset depth r must be positive");
        ops.emplace_back(inset_domain(domain, r));
    }

    if (cfg.kernel == Kernel::hmc && cfg.hmc_kappa == 0.0) {
        // Both chains must share one reference stiffness; take it from a pilot run.
        SamplerConfig pilot = cfg;
        pilot.n_samples = std::uint64_t(pilot.chains);
        pilot.threads = cfg.threads;
        const auto diag = run_chains(withf, p, pilot, [](std::size_t, const FieldState&) {});
        cfg.hmc_kappa = diag.kappa;
    }
    const std::uint64_t burn = cfg.sweeps_burnin ? cfg.sweeps_burnin : default_burnin(domain, p, cfg.kernel);
    const std::size_t n = std::size_t(copt.samples);
    const std::size_t chains = std::size_t(cfg.chains);
    const std::size_t nr = ops.size();

    std::vector<double> hf;  // harmonic extension of f over the box (exact kernel)
    std::unique_ptr<SpectralBox> box;
    if (exact) {
        const DirichletOperator whole(whole_domain(domain));
        const auto h = harmonic_extension(whole, withf.values());
        hf.assign(std::size_t(domain.size()), 0.0);
        const auto idx = whole.set().indices();
        for (std::size_t k = 0; k < idx.size(); ++k) hf[std::size_t(idx[k])] = h[k];
        box = std::make_unique<SpectralBox>(domain);
    }

    // stat[i * nr + k]: max |(phi^f - phi) - h| over D(r_k) for sample i.
    std::vector<double> stat(n * nr, 0.0), centre(n, 0.0);
    std::vector<std::vector<Accum>> acc(chains, std::vector<Accum>(nr));
    const std::int64_t c0 = domain.index({0, 0});

    auto observe = [&](std::size_t i, std::size_t chain, const FieldState& a, const FieldState& b) {
        const auto va = a.values(), vb = b.values();
        std::vector<double> diff(va.size()), res;
        for (std::size_t k = 0; k < va.size(); ++k) diff[k] = vb[k] - va[k];
        centre[i] = vb[std::size_t(c0)];
        for (std::size_t k = 0; k < nr; ++k) {
            harmonic_residual(ops[k], vb, res);
            acc[chain][k].add(res);
            harmonic_residual(ops[k], diff, res);
            double mx = 0.0;
            for (double x : res) mx = std::max(mx, std::abs(x));
            stat[i * nr + k] = mx;
        }
    };

    for (auto& row : acc)
        for (std::size_t k = 0; k < nr; ++k) row[k].init(ops[k].set().size());

    parallel_for(chains, resolve_threads(cfg.threads), [&](std::size_t chain) {
        if (exact) {
            FieldState a(domain), b(domain);
            AlignedBuffer scratch;
            for (std::size_t i = chain; i < n; i += chains) {
                Xoshiro256 rng(derive_seed(cfg.seed, i));
                box->sample_into(rng, a, scratch);
                auto vb = b.values();
                const auto va = a.values();
                for (std::size_t k = 0; k < vb.size(); ++k) vb[k] = va[k] + hf[k];
                observe(i, chain, a, b);
            }
            return;
        }
        FieldState a = zero, b = withf;
        Xoshiro256 rng(derive_seed(cfg.seed, chain));
        SamplerConfig local = cfg;
        local.threads = 1;
        std::unique_ptr<HmcKernel> ka, kb;
        if (cfg.kernel == Kernel::hmc) {
            ka = std::make_unique<HmcKernel>(a, p, cfg.hmc_steps, cfg.hmc_time, cfg.hmc_kappa);
            kb = std::make_unique<HmcKernel>(b, p, cfg.hmc_steps, cfg.hmc_time, cfg.hmc_kappa);
        }
        auto step = [&] {
            Xoshiro256 ra = rng, rb = rng;  // common random numbers
            if (ka) {
                ka->trajectory(a, ra);
                kb->trajectory(b, rb);
            } else {
                sweep(a, p, local, ra);
                sweep(b, p, local, rb);
            }
            rng();  // advance the shared stream
            rng.reseed(rng());
        };
        for (std::uint64_t s = 0; s < burn; ++s) step();
        for (std::size_t i = chain; i < n; i += chains) {
            for (std::uint64_t s = 0; s < cfg.sweeps_between_samples; ++s) step();
            if (!a.valid() || !b.valid()) fail(ErrorKind::numerical, "coupled chain produced a non-finite field");
            observe(i, chain, a, b);
        }
    });

    ExperimentReport r;
    r.id = "coupling";
    r.parameters = {{"N", N}, {"R", N}, {"r_list", copt.r_list}, {"samples", n}, {"potential", potential_json(p)},
                    {"sampler", to_json(cfg)}, {"burnin", burn}};
    if (cfg.kernel == Kernel::hmc) r.parameters["kappa"] = cfg.hmc_kappa;
    double tau = tau_of(centre, int(chains));
    for (std::size_t k = 0; k < nr; ++k) {
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = stat[i * nr + k];
        tau = std::max(tau, tau_of(s, int(chains)));
    }
    require_ess(r, double(n), tau, std::min(opt.min_ess, 0.5 * double(n)));

    r.table.columns = {"r", "mean_discrepancy", "max_abs_z", "z_threshold", "median_stat", "median_se"};
    for (std::size_t k = 0; k < nr; ++k) {
        const std::string tag = "_r" + std::to_string(copt.r_list[k]);
        Accum total;
        total.init(ops[k].set().size());
        for (std::size_t c = 0; c < chains; ++c) total.merge(acc[c][k]);
        double worst = 0.0, worst_z = 0.0;
        std::size_t tested = 0;
        for (std::size_t s = 0; s < total.sum.size(); ++s) {
            const double m = total.sum[s] / double(n);
            const double v = std::max(0.0, (total.sumsq[s] - double(n) * m * m) / double(n - 1));
            worst = std::max(worst, std::abs(m));
            if (v > 1e-24) {
                ++tested;
                worst_z = std::max(worst_z, std::abs(m) / std::sqrt(v * std::max(1.0, tau) / double(n)));
            } else if (std::abs(m) > 1e-9) {
                worst_z = INFINITY;
            }
        }
        const double zc = familywise_z(std::max<std::size_t>(tested, 1));
        r.add_exact("mean_discrepancy" + tag, worst);
        r.add_exact("mean_discrepancy_max_abs_z" + tag, worst_z);
        r.check("mean_harmonic" + tag, worst_z <= zc, "max |z| = " + num(worst_z) + " vs " + num(zc));

        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = stat[i * nr + k];
        const auto med = boot(s, [](std::span<const double> x) { return median({x.begin(), x.end()}); }, opt, tau, 500 + k);
        r.add("median_stat" + tag, med);
        if (k == 0) r.add("median_stat", med);
        r.add("mean_stat" + tag, boot(s, [](std::span<const double> x) { return mean(x); }, opt, tau, 600 + k));
        r.table.rows.push_back({double(copt.r_list[k]), worst, worst_z, zc, med.value, med.se});
    }
    return r;
}

ExperimentReport coupling_trend(const std::vector<ExperimentReport>& reports) {
    std::vector<const ExperimentReport*> v;
    for (const auto& r : reports) v.push_back(&r);
    std::sort(v.begin(), v.end(), [](const ExperimentReport* a, const ExperimentReport* b) { return a->parameters["R"].get<int>() < b->parameters["R"].get<int>(); });
    ExperimentReport t;
    t.id = "coupling-trend";
    t.table.columns = {"R", "r", "median_stat", "median_se"};
    // Below this the statistic is solver round-off (e.g. constant boundary
    // data, where phi^f - phi is exactly constant under common randomness).
    constexpr double numerical_zero = 1e-9;
    bool mono = true;
    double prev = INFINITY;
    std::ostringstream os;
    for (const auto* r : v) {
        const double raw = r->at("median_stat").value;
        const double m = raw <= numerical_zero ? 0.0 : raw;
        t.table.rows.push_back({double(r->parameters["R"].get<int>()), double(r->parameters["r_list"][0].get<int>()), m,
                                r->at("median_stat").se});
        mono = mono && m <= prev;
        prev = m;
        os << "R=" << r->parameters["R"].get<int>() << ":" << num(raw) << " ";
        t.valid = t.valid && r->valid;
        t.inputs.push_back(r->parameters);
    }
    t.check("median_non_increasing", mono, os.str());
    return t;
}

// -------------------------------------------------------------------- CLT

ExperimentReport clt_check(EnsembleSource& source, const HarmonicWeights& rho, const DirichletOperator& oracle,
                           double g_ratio, const AnalysisOptions& opt) {
    if (!(g_ratio > 0.0)) fail(ErrorKind::parameter, "g_ratio must be positive");
    const LatticeDomain& d = source.domain();
    const double ann = annihilation_error(rho, harmonic_test_family(d));
    if (!(ann <= 1e-8)) fail(ErrorKind::input, "test function does not annihilate harmonic fields (error " + num(ann) + ")");
    const double N = double(d.half_width());
    const double vg = gaussian_covariance(oracle, rho, rho) / (N * N);
    if (!(vg > 0.0)) fail(ErrorKind::degenerate, "test function has zero Gaussian variance");
    const double expected = vg * g_ratio;
    const auto x = collect(source, [&](const FieldState& f) { return rho.apply(f) / N; });
    const double tau = tau_of(x, chains_of(source.provenance()));

    ExperimentReport r;
    r.id = "clt";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", d.half_width()}, {"g_ratio", g_ratio}, {"n", x.size()}, {"rho", rho.construction},
                    {"rho_support", rho.size()}};
    require_ess(r, double(x.size()), tau, opt.min_ess);
    r.add_exact("annihilation_error", ann);
    r.add_exact("variance_gaussian", vg);
    r.add_exact("variance_expected", expected);
    const auto ratio = boot(x, [&](std::span<const double> s) { return variance(s) / expected; }, opt, tau, 700);
    r.add("ratio", ratio);
    r.check("variance_ratio", std::abs(ratio.value - 1.0) <= 3.0 * ratio.se,
            num(ratio.value) + " +- " + num(ratio.se));
    const auto sm = shape_moments(x);
    const double st = std::sqrt(std::max(1.0, tau));
    const double sse = sm.skewness_se * st, kse = sm.kurtosis_se * st;
    r.add("skewness", Quantity{sm.skewness, sse, sm.skewness - 1.96 * sse, sm.skewness + 1.96 * sse, false});
    r.add("excess_kurtosis", Quantity{sm.excess_kurtosis, kse, sm.excess_kurtosis - 1.96 * kse,
                                      sm.excess_kurtosis + 1.96 * kse, false});
    r.check("skewness_zero", std::abs(sm.skewness) <= 3.0 * sse, num(sm.skewness) + " +- " + num(sse));
    r.check("kurtosis_zero", std::abs(sm.excess_kurtosis) <= 3.0 * kse, num(sm.excess_kurtosis) + " +- " + num(kse));
    return r;
}

// ------------------------------------------------------- truncated counts

namespace {

struct CountPlan {
    double lo = 0.0, hi = 0.0;
    int K = 0;
    std::vector<Site> grid;
    // Per grid point: index into `windows`.
    std::vector<std::size_t> plan_of;
    // For each distinct Delta: inner[m], outer[m] windows, m = 1..K at [m-1].
    struct Windows {
        std::vector<SmoothingWindow> inner, outer;
    };
    std::vector<Windows> windows;
};

CountPlan make_plan(const LatticeDomain& d, double g, const CountOptions& c) {
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    if (!(c.beta > 0.0)) fail(ErrorKind::parameter, "beta must be positive");
    if (!(c.eta > 0.0 && c.eta <= 1.0)) fail(ErrorKind::parameter, "eta must lie in (0, 1]");
    if (c.stride < 1) fail(ErrorKind::parameter, "stride must be at least 1");
    if (c.K < 2) fail(ErrorKind::parameter, "K must be at least 2");
    const int N = d.half_width();
    const double centre = 2.0 * c.eta * std::sqrt(g) * std::log(double(N)) / double(c.K);
    CountPlan p;
    p.K = c.K;
    p.lo = (1.0 - c.beta) * centre;
    p.hi = (1.0 + c.beta) * centre;
    const int L = int(std::floor(0.9 * N));
    std::map<int, std::size_t> by_delta;
    for (int a = -L; a <= L; a += c.stride)
        for (int b = -L; b <= L; b += c.stride) {
            const Site v{a, b};
            const int delta = dist_to_boundary(d, v);
            auto it = by_delta.find(delta);
            if (it == by_delta.end()) {
                const auto s = build_schedule(double(delta), c.eps, c.c);
                if (c.K > s.M) {
                    fail(ErrorKind::parameter, "K = " + std::to_string(c.K) + " exceeds M = " + std::to_string(s.M) +
                                                   " at Delta = " + std::to_string(delta));
                }
                CountPlan::Windows w;
                for (int m = 1; m <= c.K; ++m) {
                    w.inner.push_back(s.window(block_index(m, c.K, s.M), +1));
                    w.outer.push_back(s.window(block_index(m - 1, c.K, s.M), -1));
                }
                it = by_delta.emplace(delta, p.windows.size()).first;
                p.windows.push_back(std::move(w));
            }
            p.grid.push_back(v);
            p.plan_of.push_back(it->second);
        }
    return p;
}

std::size_t count_with(const FieldState& f, const CountPlan& p) {
    std::size_t z = 0;
    for (std::size_t g = 0; g < p.grid.size(); ++g) {
        const auto& w = p.windows[p.plan_of[g]];
        bool in = true;
        // Innermost increments first: they are the cheapest and most selective.
        for (int m = p.K; m >= 1 && in; --m) {
            const auto k = std::size_t(m - 1);
            const double u = smoothed_average(f, p.grid[g], w.inner[k]) - smoothed_average(f, p.grid[g], w.outer[k]);
            in = u >= p.lo && u <= p.hi;
        }
        z += in;
    }
    return z;
}

} // namespace

std::size_t count_truncated(const FieldState& field, double g, const CountOptions& copt) {
    return count_with(field, make_plan(field.domain(), g, copt));
}

ExperimentReport truncated_count(EnsembleSource& source, double g, const CountOptions& copt,
                                 const AnalysisOptions& opt) {
    const LatticeDomain& d = source.domain();
    const auto plan = make_plan(d, g, copt);
    const double s2 = double(copt.stride) * double(copt.stride);
    const auto z = collect(source, [&](const FieldState& f) { return s2 * double(count_with(f, plan)); });
    const std::size_t n = z.size();
    const double tau = tau_of(z, chains_of(source.provenance()));
    const int N = d.half_width();

    ExperimentReport r;
    r.id = "truncated-count";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", N},         {"g", g},           {"beta", copt.beta},        {"K", copt.K},
                    {"eps", copt.eps}, {"c", copt.c},      {"eta", copt.eta},          {"stride", copt.stride},
                    {"grid_points", plan.grid.size()},    {"window", {plan.lo, plan.hi}}, {"n", n}};
    require_ess(r, double(n), tau, std::min(opt.min_ess, 0.5 * double(n)));

    std::size_t positive = 0;
    for (double x : z) positive += x > 0.0;
    const auto ez = boot(z, [](std::span<const double> x) { return mean(x); }, opt, tau, 800);
    const auto ez2 = boot(z, [](std::span<const double> x) {
        double s = 0.0;
        for (double v : x) s += v * v;
        return s / double(x.size());
    }, opt, tau, 801);
    r.add("mean_Z", ez);
    r.add("mean_Z2", ez2);
    r.add("p_positive", proportion(positive, n, tau));
    const double bench = std::pow(double(N), 17.0 * copt.beta);
    r.add_exact("ratio_benchmark", bench);
    r.add_exact("first_moment_scale", std::pow(double(N), -5.0 * copt.beta));
    r.add_exact("second_moment_scale", std::pow(double(N), 2.0 / copt.K + 6.0 * copt.beta));

    if (positive == 0) {
        r.warn("all counts are zero; P(Z >= 1) <= " + num(3.0 / double(n)) + " (95% upper bound)");
        r.add_exact("p_positive_upper", 3.0 / double(n));
        r.check("paley_zygmund", true, "all counts zero; the bound is vacuous");
    } else {
        auto ratio = [&](std::span<const std::size_t> idx) {
            double a = 0.0, b = 0.0;
            for (auto i : idx) {
                a += z[i];
                b += z[i] * z[i];
            }
            return a > 0.0 ? b * double(idx.size()) / (a * a) : 0.0;
        };
        auto pz_gap = [&](std::span<const std::size_t> idx) {
            double a = 0.0, b = 0.0, pos = 0.0;
            for (auto i : idx) {
                a += z[i];
                b += z[i] * z[i];
                pos += z[i] > 0.0;
            }
            const double m = double(idx.size());
            return pos / m - (b > 0.0 ? (a / m) * (a / m) / (b / m) : 0.0);
        };
        const auto rq = boot_rows(n, ratio, opt, tau, 802);
        const auto gap = boot_rows(n, pz_gap, opt, tau, 803);
        r.add("second_moment_ratio", rq);
        r.add("pz_gap", gap);
        r.check("ratio_bound", rq.value <= bench, num(rq.value) + " vs N^{17 beta} = " + num(bench));
        r.check("paley_zygmund", gap.value >= -3.0 * gap.se,
                "P(Z>=1) - (EZ)^2/EZ^2 = " + num(gap.value) + " +- " + num(gap.se));
    }
    r.table.columns = {"index", "Z"};
    for (std::size_t i = 0; i < n; ++i) r.table.rows.push_back({double(i), z[i]});
    return r;
}

// ------------------------------------------------------------------ tiles

ExperimentReport tile_decoupling(EnsembleSource& source, double eta_tile, double beta, double g, double eps,
                                 const AnalysisOptions& opt) {
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    if (!(eta_tile < 1.0)) fail(ErrorKind::parameter, "eta_tile must be below 1");
    if (!(eps > 0.0 && eps <= 0.2)) fail(ErrorKind::parameter, "eps must lie in (0, 0.2]");
    const LatticeDomain& d = source.domain();
    const int N = d.half_width();
    const int k = std::max(1, int(std::lround(2.0 * std::pow(double(N), eta_tile))));
    const int span = 2 * N - 1;  // interior sites per axis
    if (span / k < 16) fail(ErrorKind::parameter, "tiles too small: " + std::to_string(span / k) + " sites per side");
    const double R = 0.5 * std::pow(double(N), 1.0 - eta_tile);
    const double w = std::max(std::pow(eps, 4), 1.0 / R);
    const double rm = (1.0 - eps * eps * eps) * R;

    struct Tile {
        int i, j;
        std::vector<Site> sites;
        std::vector<std::size_t> win;
    };
    std::vector<Tile> tiles;
    std::map<long, std::size_t> wkey;
    std::vector<SmoothingWindow> windows;
    auto edge = [&](int t) { return -N + 1 + int((long(t) * span) / k); };
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) {
            Tile t{a, b, {}, {}};
            const int x0 = edge(a), x1 = edge(a + 1) - 1, y0 = edge(b), y1 = edge(b + 1) - 1;
            const int cx = (x0 + x1) / 2, cy = (y0 + y1) / 2;
            const int hx = (x1 - x0 + 1) / 4, hy = (y1 - y0 + 1) / 4;
            for (int x = cx - hx; x <= cx + hx; ++x)
                for (int y = cy - hy; y <= cy + hy; ++y) {
                    const Site v{x, y};
                    // Cap the window so the annulus stays inside the box.
                    const double cap = double(dist_to_boundary(d, v) - 1) / (1.0 + 2.0 * w);
                    const double rv = std::min(rm, cap);
                    const long key = std::lround(rv * 1024.0);
                    auto it = wkey.find(key);
                    if (it == wkey.end()) {
                        it = wkey.emplace(key, windows.size()).first;
                        const double r1 = std::max(rv, 1.0);
                        windows.emplace_back(r1, std::min(0.999, std::max(w, 1.0 / r1)));
                    }
                    t.sites.push_back(v);
                    t.win.push_back(it->second);
                }
            tiles.push_back(std::move(t));
        }
    const std::size_t m = tiles.size();
    const auto rows = collect_rows(source, m, [&](const FieldState& f) {
        std::vector<double> s(m);
        for (std::size_t t = 0; t < m; ++t) {
            double best = -INFINITY;
            for (std::size_t q = 0; q < tiles[t].sites.size(); ++q) {
                const Site v = tiles[t].sites[q];
                best = std::max(best, f.at(v) - smoothed_average(f, v, windows[tiles[t].win[q]]));
            }
            s[t] = best;
        }
        return s;
    });
    const double tau = max_tau(rows, chains_of(source.provenance()));

    ExperimentReport r;
    r.id = "tiles";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", N}, {"eta_tile", eta_tile}, {"beta", beta}, {"g", g}, {"eps", eps},
                    {"tiles_per_axis", k}, {"R", R}, {"n", rows.n}};
    require_ess(r, double(rows.n), tau, std::min(opt.min_ess, 0.5 * double(rows.n)));
    const double thr = (1.0 - 2.0 * beta) * (1.0 - eta_tile) * 2.0 * std::sqrt(g) * std::log(double(N));
    r.add_exact("threshold", thr);
    std::size_t hits = 0;
    std::vector<double> maxima(rows.n);
    for (std::size_t i = 0; i < rows.n; ++i) {
        double mx = -INFINITY;
        for (std::size_t t = 0; t < m; ++t) mx = std::max(mx, rows.at(i, t));
        maxima[i] = mx;
        hits += mx >= thr;
    }
    r.add("p_max_above", proportion(hits, rows.n, tau));
    r.add("median_max", boot(maxima, [](std::span<const double> x) { return median({x.begin(), x.end()}); }, opt, tau, 900));

    std::vector<std::vector<double>> cols;
    for (std::size_t t = 0; t < m; ++t) cols.push_back(rows.column(t));
    double worst = 0.0, sum = 0.0;
    std::size_t pairs = 0;
    const double neff = double(rows.n) / std::max(1.0, tau);
    r.table.columns = {"tile_a", "tile_b", "correlation", "z"};
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a + 1; b < m; ++b) {
            if (std::max(std::abs(tiles[a].i - tiles[b].i), std::abs(tiles[a].j - tiles[b].j)) <= 1) continue;
            const double c = correlation(cols[a], cols[b]);
            const double z = std::atanh(std::clamp(c, -0.999999, 0.999999)) * std::sqrt(std::max(1.0, neff - 3.0));
            worst = std::max(worst, std::abs(z));
            sum += c;
            ++pairs;
            r.table.rows.push_back({double(a), double(b), c, z});
        }
    r.add_exact("non_adjacent_pairs", double(pairs));
    if (pairs > 0) {
        r.add_exact("mean_correlation", sum / double(pairs));
        r.add_exact("max_abs_z", worst);
        r.check("non_adjacent_uncorrelated", worst <= familywise_z(pairs),
                "max |z| = " + num(worst) + " over " + std::to_string(pairs) + " pairs vs " + num(familywise_z(pairs)));
    }
    return r;
}

} // namespace glf
