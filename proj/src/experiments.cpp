#include "glfield/experiments.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "glfield/errors.hpp"
#include "experiments_detail.hpp"
#include "glfield/parallel.hpp"
#include "glfield/simd/kernels.hpp"
#include "glfield/spectral.hpp"

namespace glf {

// ------------------------------------------------------------------ report

void CsvTable::write(std::ostream& os) const {
    for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
    os << '\n';
    os.precision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
        os << '\n';
    }
}

void ExperimentReport::add(const std::string& name, Quantity q) {
    for (auto& [k, v] : estimates)
        if (k == name) {
            v = q;
            return;
        }
    estimates.emplace_back(name, q);
}

void ExperimentReport::add_exact(const std::string& name, double value) {
    add(name, Quantity{value, 0.0, value, value, true});
}

bool ExperimentReport::has(const std::string& name) const {
    return std::any_of(estimates.begin(), estimates.end(), [&](const auto& e) { return e.first == name; });
}

const Quantity& ExperimentReport::at(const std::string& name) const {
    for (const auto& [k, v] : estimates)
        if (k == name) return v;
    fail(ErrorKind::input, "report '" + id + "' has no estimate '" + name + "'");
}

void ExperimentReport::check(const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({name, pass, detail});
}

bool ExperimentReport::passed() const {
    return valid && std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

json ExperimentReport::to_json() const {
    json est = json::object();
    for (const auto& [k, q] : estimates) {
        est[k] = q.exact ? json{{"value", q.value}, {"exact", true}}
                         : json{{"value", q.value}, {"se", q.se}, {"ci", {q.lo, q.hi}}, {"exact", false}};
    }
    json cks = json::array();
    for (const auto& c : checks) cks.push_back({{"name", c.name}, {"pass", c.pass}, {"detail", c.detail}});
    return json{{"schema", schema},   {"id", id},       {"parameters", parameters}, {"inputs", inputs},
                {"estimates", est},   {"checks", cks},  {"warnings", warnings},     {"valid", valid},
                {"passed", passed()}};
}

namespace detail {

int chains_of(const json& prov) {
    if (prov.contains("sampler") && prov["sampler"].is_object()) {
        const auto& s = prov["sampler"];
        if (s.value("kernel", std::string()) == "exact") return 1;
        if (s.contains("chains")) return std::max(1, s["chains"].get<int>());
    }
    return 1;
}

double tau_of(std::span<const double> x, int chains) { return integrated_time(x, chains); }

Quantity boot(std::span<const double> x, const std::function<double(std::span<const double>)>& stat,
              const AnalysisOptions& opt, double tau, std::uint64_t salt) {
    const auto b = bootstrap(x, stat, derive_seed(opt.bootstrap_seed, salt), opt.resamples);
    const double s = std::sqrt(std::max(1.0, tau));
    return Quantity{b.value, b.se * s, b.value - (b.value - b.lo) * s, b.value + (b.hi - b.value) * s, false};
}

Quantity boot_rows(std::size_t n, const IndexStatistic& stat, const AnalysisOptions& opt, double tau,
                   std::uint64_t salt) {
    const auto b = bootstrap(n, stat, derive_seed(opt.bootstrap_seed, salt), opt.resamples);
    const double s = std::sqrt(std::max(1.0, tau));
    return Quantity{b.value, b.se * s, b.value - (b.value - b.lo) * s, b.value + (b.hi - b.value) * s, false};
}

Quantity proportion(std::size_t hits, std::size_t n, double tau) {
    const double p = double(hits) / double(n);
    const double se = std::sqrt(std::max(p * (1.0 - p), 0.0) * std::max(1.0, tau) / double(n));
    return Quantity{p, se, std::max(0.0, p - 1.96 * se), std::min(1.0, p + 1.96 * se), false};
}

void require_ess(ExperimentReport& r, double n, double tau, double min_ess) {
    const double ess = n / std::max(1.0, tau);
    r.add("ess", Quantity{ess, 0.0, ess, ess, false});
    if (ess < min_ess) {
        r.valid = false;
        std::ostringstream os;
        os << "effective sample size " << ess << " below " << min_ess;
        r.warn(os.str());
    }
}

std::string num(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

std::vector<double> collect(EnsembleSource& source, const std::function<double(const FieldState&)>& fn) {
    return map_samples<double>(source, fn);
}

} // namespace detail

using namespace detail;

// --------------------------------------------------------------- stiffness

double gaussian_stiffness(const std::vector<int>& sizes) {
    std::vector<double> x, y;
    for (int n : sizes) {
        const SpectralBox box(build_box(n));
        x.push_back(std::log(double(n)));
        y.push_back(box.greens({0, 0}, {0, 0}));
    }
    return ordinary_fit(x, y).slope;
}

StiffnessEstimate stiffness_from_samples(const std::vector<int>& sizes,
                                         const std::vector<std::vector<double>>& center_values, int chains,
                                         const AnalysisOptions& opt) {
    if (sizes.size() < 3) fail(ErrorKind::parameter, "stiffness needs at least 3 sizes");
    if (center_values.size() != sizes.size()) fail(ErrorKind::input, "one sample vector per size is required");
    std::vector<int> sorted = sizes;
    std::sort(sorted.begin(), sorted.end());
    const double ratio = std::log(double(sorted[1]) / double(sorted[0]));
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const double r = std::log(double(sorted[i]) / double(sorted[i - 1]));
        if (!(r > 0.0) || std::abs(r - ratio) > 0.05 * ratio) {
            fail(ErrorKind::parameter, "stiffness sizes must be distinct and geometrically spaced");
        }
    }

    StiffnessEstimate est;
    ExperimentReport& rep = est.report;
    rep.id = "estimate-g";
    rep.parameters = {{"sizes", sizes}, {"chains", chains}, {"resamples", opt.resamples}};
    rep.table.columns = {"N", "log_N", "variance", "variance_se", "ess", "n"};
    std::vector<double> lx, vy, vv;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const auto& x = center_values[k];
        if (x.size() < 10) fail(ErrorKind::input, "too few samples at N = " + std::to_string(sizes[k]));
        std::vector<double> sq(x.size());
        const double m = mean(x);
        for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
        const double tau = std::max(tau_of(x, chains), tau_of(sq, chains));
        const auto q = boot(x, [](std::span<const double> s) { return variance(s); }, opt, tau, std::uint64_t(sizes[k]));
        StiffnessEstimate::Row row{sizes[k], q.value, q.se, double(x.size()) / tau, x.size()};
        if (row.ess < opt.min_ess) {
            est.valid = false;
            rep.warn("ESS " + num(row.ess) + " below " + num(opt.min_ess) + " at N = " + std::to_string(sizes[k]));
        }
        est.table.push_back(row);
        rep.table.rows.push_back({double(row.N), std::log(double(row.N)), row.variance, row.variance_se, row.ess,
                                  double(row.n)});
        rep.add("var_N" + std::to_string(sizes[k]), q);
        lx.push_back(std::log(double(sizes[k])));
        vy.push_back(q.value);
        vv.push_back(q.se * q.se);
    }
    est.fit = weighted_fit(lx, vy, vv);
    est.g_hat = est.fit.slope;
    est.se = est.fit.slope_se;
    if (!(est.g_hat > 0.0)) {
        est.valid = false;
        rep.warn("non-positive stiffness slope");
    }
    rep.valid = est.valid;
    rep.add("g_hat", Quantity{est.g_hat, est.se, est.g_hat - 1.96 * est.se, est.g_hat + 1.96 * est.se, false});
    rep.add("intercept", Quantity{est.fit.intercept, est.fit.intercept_se, est.fit.intercept - 1.96 * est.fit.intercept_se,
                                  est.fit.intercept + 1.96 * est.fit.intercept_se, false});
    rep.add_exact("chi2", est.fit.chi2);
    rep.add_exact("dof", double(est.fit.dof));
    return est;
}

StiffnessEstimate estimate_stiffness(const Potential& p, const std::vector<int>& sizes, const SamplerConfig& cfg,
                                     const AnalysisOptions& opt) {
    cfg.validate();
    std::vector<std::vector<double>> values;
    json inputs = json::array();
    for (int n : sizes) {
        const LatticeDomain d = build_box(n);
        SamplerConfig c = cfg;
        c.seed = derive_seed(cfg.seed, std::uint64_t(n));
        if (cfg.kernel == Kernel::exact) {
            if (p.kind() != Potential::Kind::quadratic) fail(ErrorKind::parameter, "the exact kernel needs quadratic V");
            const PointMarginal pm(d, {0, 0});
            std::vector<double> x(cfg.n_samples);
            parallel_for(x.size(), resolve_threads(cfg.threads), [&](std::size_t i) {
                Xoshiro256 rng(derive_seed(c.seed, i));
                x[i] = pm.draw(rng);
            });
            values.push_back(std::move(x));
            inputs.push_back({{"N", n}, {"sampler", to_json(c)}, {"potential", potential_json(p)},
                              {"route", "point marginal of phi(0)"}});
        } else {
            SamplerSource src(FieldState(d), p, c);
            const std::int64_t centre = d.index({0, 0});
            values.push_back(collect(src, [&](const FieldState& f) { return f[centre]; }));
            inputs.push_back(src.provenance());
        }
    }
    auto est = stiffness_from_samples(sizes, values, cfg.kernel == Kernel::exact ? 1 : cfg.chains, opt);
    est.report.inputs = inputs;
    est.report.parameters["potential"] = potential_json(p);
    est.report.parameters["sampler"] = to_json(cfg);
    return est;
}

// ------------------------------------------------------------------ maxima

ExperimentReport max_statistics(EnsembleSource& source, double g, double delta, const AnalysisOptions& opt) {
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    const LatticeDomain& d = source.domain();
    const int N = d.half_width();
    if (N < 2) fail(ErrorKind::parameter, "max statistics need N >= 2");
    const double logn = std::log(double(N));
    const auto& k = simd::active();
    const auto s = collect(source, [&](const FieldState& f) {
        const auto v = f.values();
        return k.max_value(v.data(), v.size()) / logn;
    });

    ExperimentReport r;
    r.id = "max-scaling";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", N}, {"g", g}, {"delta", delta}, {"n", s.size()}};
    const double tau = tau_of(s, chains_of(source.provenance()));
    require_ess(r, double(s.size()), tau, opt.min_ess);
    const double target = 2.0 * std::sqrt(g);
    const auto med = boot(s, [](std::span<const double> x) { return median({x.begin(), x.end()}); }, opt, tau, 1);
    r.add("median", med);
    r.add("mean", boot(s, [](std::span<const double> x) { return mean(x); }, opt, tau, 2));
    r.add_exact("target", target);
    r.add("gap", Quantity{med.value - target, med.se, med.lo - target, med.hi - target, false});
    r.add("abs_gap", Quantity{std::abs(med.value - target), med.se, 0.0, 0.0, false});
    const double corr = 0.75 * std::sqrt(g) * std::log(logn) / logn;
    r.add("corrected_gap", Quantity{med.value + corr - target, med.se, med.lo + corr - target,
                                    med.hi + corr - target, false});
    std::size_t above = 0, below = 0;
    bool positive = true;
    for (double x : s) {
        above += x > target + delta;
        below += x < target - delta;
        positive = positive && x > 0.0;
    }
    r.add("frac_above", proportion(above, s.size(), tau));
    r.add("frac_below", proportion(below, s.size(), tau));
    r.check("sup_positive", positive, "every sample has sup phi / log N > 0");
    r.table.columns = {"index", "sup_over_logN"};
    for (std::size_t i = 0; i < s.size(); ++i) r.table.rows.push_back({double(i), s[i]});
    return r;
}

ExperimentReport max_trend(const std::vector<ExperimentReport>& reports) {
    std::vector<const ExperimentReport*> v;
    for (const auto& r : reports) v.push_back(&r);
    std::sort(v.begin(), v.end(), [](const ExperimentReport* a, const ExperimentReport* b) { return a->parameters["N"].get<int>() < b->parameters["N"].get<int>(); });
    ExperimentReport t;
    t.id = "max-trend";
    t.table.columns = {"N", "median", "median_se", "target", "gap", "abs_gap"};
    bool mono = true;
    double prev = INFINITY;
    std::ostringstream os;
    for (const auto* r : v) {
        const double gap = r->at("abs_gap").value;
        t.table.rows.push_back({double(r->parameters["N"].get<int>()), r->at("median").value, r->at("median").se,
                                r->at("target").value, r->at("gap").value, gap});
        mono = mono && gap <= prev;
        prev = gap;
        os << "N=" << r->parameters["N"].get<int>() << ":" << num(gap) << " ";
        t.valid = t.valid && r->valid;
        t.inputs.push_back(r->parameters);
    }
    if (!v.empty()) {
        const auto* last = v.back();
        const double rel = last->at("abs_gap").value / last->at("target").value;
        t.add("gap_at_largest_N", last->at("gap"));
        t.add_exact("relative_gap_at_largest_N", rel);
        t.check("median_within_20pct_at_largest_N", rel <= 0.2,
                "|median - 2 sqrt(g)| / 2 sqrt(g) = " + num(rel) + " at N = " +
                    std::to_string(last->parameters["N"].get<int>()));
    }
    t.check("abs_gap_non_increasing", mono, os.str());
    return t;
}

ExperimentReport high_points(EnsembleSource& source, double eta, double g, const AnalysisOptions& opt) {
    if (!(eta > 0.0 && eta < 1.0)) fail(ErrorKind::parameter, "eta must lie in (0, 1)");
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    const int N = source.domain().half_width();
    const double logn = std::log(double(N));
    const double thr = 2.0 * std::sqrt(g) * eta * logn;
    const auto& k = simd::active();
    const auto counts = collect(source, [&](const FieldState& f) {
        const auto v = f.values();
        return double(k.count_at_least(v.data(), v.size(), thr));
    });
    ExperimentReport r;
    r.id = "high-points";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", N}, {"eta", eta}, {"g", g}, {"threshold", thr}, {"n", counts.size()}};
    std::vector<double> expo;
    std::size_t zeros = 0;
    for (double c : counts) {
        if (c > 0.0)
            expo.push_back(std::log(c) / logn);
        else
            ++zeros;
    }
    r.add_exact("target", 2.0 * (1.0 - eta * eta));
    const int chains = chains_of(source.provenance());
    r.add("zero_fraction", proportion(zeros, counts.size(), tau_of(counts, chains)));
    if (zeros > 0) r.warn(std::to_string(zeros) + " samples without eta-high points (excluded from the exponent)");
    if (expo.size() < 10) {
        r.valid = false;
        r.warn("too few samples with eta-high points");
    } else {
        const double tau = tau_of(expo, chains);
        require_ess(r, double(expo.size()), tau, opt.min_ess);
        r.add("median_exponent",
              boot(expo, [](std::span<const double> x) { return median({x.begin(), x.end()}); }, opt, tau, 3));
        r.add("mean_exponent", boot(expo, [](std::span<const double> x) { return mean(x); }, opt, tau, 4));
        const double med = r.at("median_exponent").value, target = 2.0 * (1.0 - eta * eta);
        r.check("median_exponent_within_0.2", std::abs(med - target) <= 0.2,
                "median " + num(med) + " vs 2 (1 - eta^2) = " + num(target));
    }
    r.table.columns = {"index", "count", "log_count_over_logN"};
    for (std::size_t i = 0; i < counts.size(); ++i)
        r.table.rows.push_back({double(i), counts[i], counts[i] > 0 ? std::log(counts[i]) / logn : NAN});
    return r;
}

ExperimentReport tail_curve(EnsembleSource& source, Site x, double g, const std::vector<double>& u_grid,
                            std::optional<double> gaussian_variance, const AnalysisOptions& opt) {
    const LatticeDomain& d = source.domain();
    if (!d.contains(x)) fail(ErrorKind::geometry, "tail site outside the domain");
    const int delta = dist_to_boundary(d, x);
    if (delta < 2) fail(ErrorKind::parameter, "tail site too close to the boundary (Delta < 2)");
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    const std::int64_t xi = d.index(x);
    const auto vals = collect(source, [&](const FieldState& f) { return f[xi]; });
    const std::size_t n = vals.size();
    const double tau = tau_of(vals, chains_of(source.provenance()));
    const double neff = double(n) / tau;

    ExperimentReport r;
    r.id = "tail";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", d.half_width()}, {"x", {x.x1, x.x2}}, {"g", g}, {"Delta", delta}, {"n", n},
                    {"u_grid", u_grid}};
    require_ess(r, double(n), tau, opt.min_ess);
    const double logd = std::log(double(delta));
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    auto frac_at_least = [&](double u) {
        const auto it = std::lower_bound(sorted.begin(), sorted.end(), u);
        return double(sorted.end() - it) / double(n);
    };
    const double p0 = frac_at_least(0.0);
    const double se0 = std::sqrt(0.25 / neff);
    r.add("p_at_zero", Quantity{p0, se0, p0 - 1.96 * se0, p0 + 1.96 * se0, false});
    r.check("symmetry_at_zero", std::abs(p0 - 0.5) <= 3.0 * se0, "P(phi >= 0) = " + num(p0) + " vs 1/2");

    r.table.columns = {"u", "p_hat", "se", "log_p_hat", "log_bound", "log_gaussian"};
    bool holds = true;
    double worst_excess = -INFINITY, worst_u = 0.0;
    std::size_t kept = 0;
    std::vector<std::pair<double, double>> gauss_z;
    const boost::math::normal nd;
    for (double u : u_grid) {
        const double p = frac_at_least(u);
        if (p < 10.0 / double(n)) {
            r.warn("grid truncated at u = " + num(u) + " (P < 10/n)");
            break;
        }
        ++kept;
        const double se = std::sqrt(p * (1.0 - p) / neff);
        const double bound = std::exp(-u * u / (2.0 * g * logd));
        if (p - 3.0 * se > bound) holds = false;
        if (p - bound > worst_excess) {
            worst_excess = p - bound;
            worst_u = u;
        }
        double lg = NAN;
        if (gaussian_variance) {
            const double q = boost::math::cdf(boost::math::complement(nd, u / std::sqrt(*gaussian_variance)));
            lg = std::log(q);
            gauss_z.emplace_back(u, se > 0.0 ? (p - q) / se : 0.0);
        }
        r.table.rows.push_back({u, p, se, std::log(p), -u * u / (2.0 * g * logd), lg});
    }
    r.add_exact("grid_points_kept", double(kept));
    r.check("bound_holds", holds && kept > 0,
            "largest P_hat - bound = " + num(worst_excess) + " at u = " + num(worst_u) + " over " +
                std::to_string(kept) + " grid points");
    if (gaussian_variance && !gauss_z.empty()) {
        double worst = 0.0;
        for (const auto& [u, z] : gauss_z) worst = std::max(worst, std::abs(z));
        const double zc = familywise_z(gauss_z.size());
        r.add_exact("gaussian_max_abs_z", worst);
        r.check("gaussian_tail", worst <= zc, "max |z| = " + num(worst) + " vs " + num(zc));
    }
    return r;
}

// ------------------------------------------------------ Gaussian comparison

double gaussian_covariance(const DirichletOperator& op, const HarmonicWeights& a, const HarmonicWeights& b) {
    if (!(a.domain == op.domain()) || !(b.domain == op.domain())) {
        fail(ErrorKind::input, "weights and operator live on different domains");
    }
    std::vector<double> rhs(op.interior_size(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto l = op.local_index(a.sites[i]);
        if (l >= 0) rhs[std::size_t(l)] += a.weights[i];
    }
    const auto x = op.solve(rhs);
    double s = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        const auto l = op.local_index(b.sites[i]);
        if (l >= 0) s += b.weights[i] * x[std::size_t(l)];
    }
    return s;
}

ExperimentReport bl_check(EnsembleSource& source, const HarmonicWeights& f, const DirichletOperator& oracle,
                          double c_minus, const AnalysisOptions& opt) {
    if (!(c_minus > 0.0)) fail(ErrorKind::parameter, "c_minus must be positive");
    const double vg = gaussian_covariance(oracle, f, f);
    if (!(vg > 1e-14)) fail(ErrorKind::degenerate, "test function has zero Gaussian variance");
    const auto x = collect(source, [&](const FieldState& s) { return f.apply(s); });
    ExperimentReport r;
    r.id = "bl-check";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", source.domain().half_width()}, {"c_minus", c_minus}, {"n", x.size()},
                    {"f", f.construction}, {"f_support", f.size()}};
    std::vector<double> sq(x.size());
    const double m = mean(x);
    for (std::size_t i = 0; i < x.size(); ++i) sq[i] = (x[i] - m) * (x[i] - m);
    const int chains = chains_of(source.provenance());
    const double tau = std::max(tau_of(x, chains), tau_of(sq, chains));
    require_ess(r, double(x.size()), tau, opt.min_ess);
    const auto var = boot(x, [](std::span<const double> s) { return variance(s); }, opt, tau, 5);
    const auto ratio = boot(x, [&](std::span<const double> s) { return variance(s) / vg; }, opt, tau, 6);
    auto m4 = [](std::span<const double> s) {
        const double mu = mean(s);
        double a = 0.0;
        for (double v : s) a += std::pow(v - mu, 4);
        return a / double(s.size());
    };
    const auto fourth = boot(x, m4, opt, tau, 7);
    const double limit = 1.0 / c_minus, limit4 = 3.0 * vg * vg / (c_minus * c_minus);
    r.add("variance", var);
    r.add_exact("variance_gaussian", vg);
    r.add("ratio", ratio);
    r.add_exact("ratio_limit", limit);
    r.add("fourth_moment", fourth);
    r.add_exact("fourth_moment_limit", limit4);
    r.check("variance_domination", ratio.value <= limit + 3.0 * ratio.se,
            "ratio " + num(ratio.value) + " +- " + num(ratio.se) + " vs " + num(limit));
    r.check("fourth_moment_domination", fourth.value <= limit4 + 3.0 * fourth.se,
            num(fourth.value) + " +- " + num(fourth.se) + " vs " + num(limit4));
    return r;
}

ExperimentReport mgf_check(EnsembleSource& source, Site v, const ScaleSchedule& schedule,
                           const std::vector<double>& t_grid, double g, bool difference,
                           std::optional<double> gaussian_variance, const AnalysisOptions& opt) {
    if (!(g > 0.0)) fail(ErrorKind::parameter, "g must be positive");
    const double tmax = 2.0 / std::sqrt(g) + 1.0;
    for (double t : t_grid)
        if (std::abs(t) > tmax) fail(ErrorKind::parameter, "|t| exceeds 2/sqrt(g) + 1 = " + num(tmax));
    const auto inner = schedule.window(schedule.M, +1);
    const auto outer = schedule.window(0, -1);
    const auto x = collect(source, [&](const FieldState& f) {
        const double a = smoothed_average(f, v, inner);
        return difference ? a - smoothed_average(f, v, outer) : a;
    });
    ExperimentReport r;
    r.id = "mgf";
    r.inputs.push_back(source.provenance());
    r.parameters = {{"N", source.domain().half_width()}, {"v", {v.x1, v.x2}}, {"Delta", schedule.delta},
                    {"eps", schedule.eps}, {"c", schedule.c}, {"M", schedule.M}, {"t_grid", t_grid},
                    {"g", g}, {"difference", difference}, {"n", x.size()}};
    const double tau = tau_of(x, chains_of(source.provenance()));
    require_ess(r, double(x.size()), tau, std::max(200.0, opt.min_ess));
    const double n = double(x.size());

    // Exact second derivative of the empirical log-MGF at 0.
    auto curv0 = [](std::span<const double> s) {
        const double mu = mean(s);
        double a = 0.0;
        for (double y : s) a += (y - mu) * (y - mu);
        return a / double(s.size());
    };
    const auto c0 = boot(x, curv0, opt, tau, 8);
    const double var_hat = variance(x);
    r.add("curvature_at_zero", c0);
    r.add("variance", Quantity{var_hat, c0.se * n / (n - 1.0), 0.0, 0.0, false});
    r.check("curvature_matches_variance", var_hat >= c0.lo && var_hat <= c0.hi,
            "Var_hat " + num(var_hat) + " in [" + num(c0.lo) + ", " + num(c0.hi) + "]");

    const double theory = (1.0 - schedule.c) * g * std::log(schedule.delta);
    r.add_exact("curvature_theory", theory);
    std::vector<double> reliable_t;
    r.table.columns = {"t", "log_mgf", "se", "tail_weight", "reliable", "theory", "gaussian"};
    std::vector<std::pair<double, double>> gz;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const double t = t_grid[k];
        const auto lme = log_mean_exp(x, t);
        const auto q = boot(x, [&](std::span<const double> s) { return log_mean_exp(s, t).value; }, opt, tau, 100 + k);
        const bool ok = lme.tail_weight < 0.2;
        if (ok && t != 0.0) reliable_t.push_back(t);
        if (!ok) r.warn("log-MGF at t = " + num(t) + " dominated by the top 1% (weight " + num(lme.tail_weight) + ")");
        const double gv = gaussian_variance ? 0.5 * t * t * *gaussian_variance : NAN;
        if (gaussian_variance && ok && t != 0.0) gz.emplace_back(t, (lme.value - gv) / q.se);
        r.table.rows.push_back({t, lme.value, q.se, lme.tail_weight, ok ? 1.0 : 0.0, 0.5 * t * t * theory, gv});
        if (t == 0.0) r.check("zero_at_t0", lme.value == 0.0, "log-MGF(0) = " + num(lme.value));
    }
    if (reliable_t.size() >= 2) {
        // y = b t + a t^2 / 2 by least squares on the reliable grid.
        auto fit = [&](std::span<const double> s) {
            double s11 = 0, s12 = 0, s22 = 0, y1 = 0, y2 = 0;
            for (double t : reliable_t) {
                const double y = log_mean_exp(s, t).value;
                const double a1 = t, a2 = 0.5 * t * t;
                s11 += a1 * a1;
                s12 += a1 * a2;
                s22 += a2 * a2;
                y1 += a1 * y;
                y2 += a2 * y;
            }
            const double det = s11 * s22 - s12 * s12;
            return (s11 * y2 - s12 * y1) / det;
        };
        const auto a = boot(x, fit, opt, tau, 9);
        r.add("fit_curvature", a);
        r.add("fit_over_theory", Quantity{a.value / theory, a.se / theory, a.lo / theory, a.hi / theory, false});
    } else {
        r.warn("fewer than two reliable nonzero t values; no quadratic fit");
    }
    if (!gz.empty()) {
        double worst = 0.0;
        for (const auto& [t, z] : gz) worst = std::max(worst, std::abs(z));
        r.add_exact("gaussian_max_abs_z", worst);
        r.add_exact("variance_gaussian", *gaussian_variance);
        r.check("gaussian_log_mgf", worst <= familywise_z(gz.size()),
                "max |z| = " + num(worst) + " vs " + num(familywise_z(gz.size())));
    }
    return r;
}

} // namespace glf
