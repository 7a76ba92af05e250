#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "cli.hpp"
#include "glfield/errors.hpp"
#include "glfield/laplace.hpp"
#include "glfield/parallel.hpp"
#include "glfield/spectral.hpp"

namespace glf::cli {

namespace {

struct Context {
    const RunConfig& c;
    Potential p;
    fs::path dir;
    json resolved = json::object();
    std::vector<ExperimentReport> extra;  // reports produced on the way (g estimation)
    std::optional<double> g;
};

SamplerConfig sampler_for(const RunConfig& c, std::uint64_t seed) {
    SamplerConfig s = c.sampler;
    s.seed = seed;
    s.threads = resolve_threads(c.threads);
    return s;
}

Site site_of(const std::array<int, 2>& a) { return {a[0], a[1]}; }

struct Source {
    std::optional<EnsembleStore> store;
    std::unique_ptr<EnsembleSource> src;
    EnsembleSource& operator*() { return *src; }
};

Source source_for(Context& ctx, int N) {
    const auto& c = ctx.c;
    Source s;
    const int threads = resolve_threads(c.threads);
    if (!c.ensemble.empty()) {
        if (c.experiment == "sample") fail(ErrorKind::config, "sample writes ensembles; it cannot read one");
        s.src = std::make_unique<FileSource>(c.ensemble, threads);
        if (s.src->domain().half_width() != N) {
            fail(ErrorKind::config, "ensemble " + c.ensemble + " has N = " + std::to_string(s.src->domain().half_width()) +
                                        ", config asks for " + std::to_string(N));
        }
        return s;
    }
    const auto cfg = sampler_for(c, derive_seed(c.seed, std::uint64_t(N)));
    if (c.save_ensemble || c.experiment == "sample") {
        s.store = sample_ensemble(build_box(N), ctx.p, cfg);
        s.store->write(ctx.dir / ("ensemble_N" + std::to_string(N) + ".glfens"));
        s.src = std::make_unique<StoreSource>(*s.store, threads);
    } else {
        s.src = std::make_unique<SamplerSource>(FieldState(build_box(N)), ctx.p, cfg);
    }
    return s;
}

double gaussian_g(const RunConfig& c) { return gaussian_stiffness(c.statistics.g_sizes); }

double resolve_g(Context& ctx) {
    if (ctx.g) return *ctx.g;
    const auto& g = ctx.c.statistics.g;
    if (g.is_number()) {
        ctx.g = g.get<double>();
    } else if (g == "gaussian") {
        ctx.g = gaussian_g(ctx.c);
    } else {
        auto est = estimate_stiffness(ctx.p, ctx.c.statistics.g_sizes, sampler_for(ctx.c, derive_seed(ctx.c.seed, 0x67ULL)),
                                      ctx.c.analysis);
        ctx.g = est.g_hat;
        ctx.resolved["g_se"] = est.se;
        ctx.extra.push_back(std::move(est.report));
    }
    ctx.resolved["g"] = *ctx.g;
    return *ctx.g;
}

bool quadratic(const Context& ctx) { return ctx.p.kind() == Potential::Kind::quadratic; }

ScaleSchedule schedule_at(const RunConfig& c, const LatticeDomain& d, Site v) {
    return build_schedule(double(dist_to_boundary(d, v)), c.schedule.eps, c.schedule.c, c.schedule.width);
}

// rho with <rho, phi> = X_{N/4}(v) - X_{N/2}(v): a macroscopic increment.
HarmonicWeights macroscopic_kernel(const LatticeDomain& d, Site v) {
    const double n = double(d.half_width());
    auto rho = increment_kernel(d, v, SmoothingWindow(n / 2.0, 0.1), SmoothingWindow(n / 4.0, 0.1));
    rho.construction = "macroscopic_increment";
    return rho;
}

HarmonicWeights test_function(const Context& ctx, const std::string& name, const LatticeDomain& d, Site v) {
    if (name == "delta") return make_weights(d, {{d.index(v), 1.0}}, "delta");
    if (name == "macroscopic") return macroscopic_kernel(d, v);
    const auto s = schedule_at(ctx.c, d, v);
    const int K = std::min(ctx.c.schedule.K, s.M);
    return increment_rho(d, v, s, K, std::max(1, K / 2));
}

std::vector<std::vector<double>> default_lambdas(int width) {
    const auto n = std::size_t(width);
    std::vector<double> zero(n, 0.0), flat(n, 0.5), alt(n);
    for (int i = 0; i < width; ++i) alt[std::size_t(i)] = i % 2 ? -0.5 : 0.5;
    return {zero, flat, alt};
}

std::vector<ExperimentReport> dispatch(Context& ctx) {
    const auto& c = ctx.c;
    const auto& st = c.statistics;
    const Site v = site_of(st.site);
    std::vector<ExperimentReport> out;
    const std::string& kind = c.experiment;

    if (kind == "estimate-g") {
        auto est = estimate_stiffness(ctx.p, c.sizes, sampler_for(c, c.seed), c.analysis);
        if (quadratic(ctx)) {
            const double gg = gaussian_stiffness(c.sizes);
            const double rel = std::abs(est.g_hat - gg) / gg;
            est.report.add_exact("g_gaussian", gg);
            est.report.add_exact("relative_error", rel);
            est.report.check("within_5pct_of_gaussian_slope", rel <= 0.05,
                             "g_hat " + std::to_string(est.g_hat) + " vs " + std::to_string(gg));
        }
        out.push_back(std::move(est.report));
        return out;
    }
    if (kind == "coupling") {
        CouplingOptions co;
        co.samples = st.coupling_samples;
        for (int R : c.sizes) {
            const LatticeDomain d = build_box(R);
            co.r_list = st.r_list;
            if (co.r_list.empty()) co.r_list = {std::max(1, int(std::lround(st.r_fraction * R)))};
            const double f = st.boundary_value;
            out.push_back(coupling_experiment(d, ctx.p, [f](Site) { return f; }, co,
                                              sampler_for(c, derive_seed(c.seed, std::uint64_t(R))), c.analysis));
        }
        if (out.size() > 1) out.push_back(coupling_trend(out));
        return out;
    }

    for (int N : c.sizes) {
        const LatticeDomain d = build_box(N);
        auto src = source_for(ctx, N);
        if (kind == "sample") {
            ExperimentReport r;
            r.id = "sample";
            r.inputs.push_back(src.src->provenance());
            r.parameters = {{"N", N}, {"count", src.src->count()}};
            const auto diag = diagnostics(*src.store);
            r.add_exact("acceptance", diag.acceptance);
            r.add_exact("center_tau", diag.center.tau_int);
            r.add_exact("center_ess", diag.center.ess);
            r.add_exact("max_ess", diag.maximum.ess);
            r.check("ess_at_least_100", !diag.flagged, "center ESS " + std::to_string(diag.center.ess));
            out.push_back(std::move(r));
        } else if (kind == "max-scaling") {
            out.push_back(max_statistics(*src, resolve_g(ctx), st.delta, c.analysis));
        } else if (kind == "high-points") {
            out.push_back(high_points(*src, st.eta, resolve_g(ctx), c.analysis));
        } else if (kind == "tail") {
            std::optional<double> gv;
            if (quadratic(ctx)) gv = SpectralBox(d).greens(v, v);
            auto grid = st.u_grid;
            if (grid.empty())
                for (int k = 0; k <= 16; ++k) grid.push_back(0.5 * k);
            out.push_back(tail_curve(*src, v, resolve_g(ctx), grid, gv, c.analysis));
        } else if (kind == "bl-check") {
            const DirichletOperator op(whole_domain(d));
            for (const auto& name : st.test_functions) {
                auto r = bl_check(*src, test_function(ctx, name, d, v), op, ctx.p.c_minus(), c.analysis);
                r.parameters["test_function"] = name;
                out.push_back(std::move(r));
            }
        } else if (kind == "mgf") {
            const auto s = schedule_at(c, d, v);
            const double g = resolve_g(ctx);
            auto grid = st.t_grid;
            if (grid.empty()) grid = {-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0};
            std::optional<double> gv;
            if (quadratic(ctx)) {
                const DirichletOperator op(whole_domain(d));
                auto rho = smoothed_kernel(d, v, s.window(s.M, +1));
                if (st.difference) rho = combine(rho, 1.0, smoothed_kernel(d, v, s.window(0, -1)), -1.0);
                gv = gaussian_covariance(op, rho, rho);
            }
            out.push_back(mgf_check(*src, v, s, grid, g, st.difference, gv, c.analysis));
        } else if (kind == "increments") {
            const double g = resolve_g(ctx);
            const int K = c.schedule.K;
            if (st.site2) {
                auto grid = st.lambda_grid.empty() ? default_lambdas(2 * K) : st.lambda_grid;
                out.push_back(increment_pair(*src, v, site_of(*st.site2), c.schedule.eps, c.schedule.c, K, grid, g, c.analysis));
            } else {
                auto grid = st.lambda_grid.empty() ? default_lambdas(K) : st.lambda_grid;
                std::unique_ptr<DirichletOperator> op;
                if (quadratic(ctx)) op = std::make_unique<DirichletOperator>(whole_domain(d));
                out.push_back(increment_gaussianity(*src, v, schedule_at(c, d, v), K, grid, g, op.get(), c.analysis));
            }
        } else if (kind == "clt") {
            const DirichletOperator op(whole_domain(d));
            double ratio = st.g_ratio;
            if (ratio == 0.0) ratio = quadratic(ctx) ? 1.0 : resolve_g(ctx) / gaussian_g(c);
            for (const auto& name : st.test_functions) {
                const auto rho = name == "delta" || name == "macroscopic" ? macroscopic_kernel(d, v) : test_function(ctx, name, d, v);
                auto r = clt_check(*src, rho, op, ratio, c.analysis);
                r.parameters["test_function"] = name == "delta" ? "macroscopic" : name;
                out.push_back(std::move(r));
            }
        } else if (kind == "truncated-count") {
            CountOptions co;
            co.beta = st.beta;
            co.K = c.schedule.K;
            co.eps = c.schedule.eps;
            co.c = c.schedule.c;
            co.eta = st.count_mode == "maximum" ? 1.0 : st.eta;
            co.stride = st.stride;
            out.push_back(truncated_count(*src, resolve_g(ctx), co, c.analysis));
        } else if (kind == "tiles") {
            out.push_back(tile_decoupling(*src, st.eta_tile, st.beta, resolve_g(ctx), c.schedule.eps, c.analysis));
        } else {
            fail(ErrorKind::config, "experiment '" + kind + "' cannot be run directly");
        }
    }
    if (kind == "max-scaling" && out.size() > 1) out.push_back(max_trend(out));
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
    if (!os) fail(ErrorKind::integrity, "cannot write " + path.string());
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::integrity, "cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json manifest_for(const fs::path& dir, const std::string& experiment, const std::string& config_hash, bool passed) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    json arts = json::array();
    for (const auto& f : files) {
        arts.push_back({{"path", f.filename().string()}, {"sha256", sha256_file(f)}, {"bytes", fs::file_size(f)}});
    }
    return json{{"schema", "glfield.manifest/1"},
                {"experiment", experiment},
                {"config_sha256", config_hash},
                {"passed", passed},
                {"artifacts", arts}};
}

} // namespace

RunResult run(const RunConfig& c) {
    if (c.experiment == "report") fail(ErrorKind::config, "use summarize() for report configs");
    // Where a run lands does not change what it computes.
    json resolved = to_json(c);
    resolved.erase("output_dir");
    const std::string config_text = resolved.dump(2) + "\n";
    const std::string hash = sha256_hex(config_text);
    const fs::path root = c.output_dir;
    const fs::path final_dir = root / (c.experiment + "-" + hash.substr(0, 12));

    RunResult result;
    result.directory = final_dir;
    result.manifest = final_dir / "manifest.json";
    if (fs::exists(result.manifest)) {
        const auto m = verify_manifest(result.manifest);
        if (m.value("config_sha256", std::string()) != hash) {
            fail(ErrorKind::integrity, result.manifest.string() + " belongs to a different config");
        }
        result.reused = true;
        result.passed = m.value("passed", false);
        return result;
    }
    if (fs::exists(final_dir)) fail(ErrorKind::integrity, final_dir.string() + " exists without a manifest");

    fs::create_directories(root);
    const fs::path tmp = root / ("." + final_dir.filename().string() + ".partial-" + std::to_string(::getpid()));
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    try {
        Context ctx{c, potential_from_json(c.potential), tmp, json::object(), {}, std::nullopt};
        write_text(tmp / "config.json", config_text);
        auto reports = dispatch(ctx);
        for (auto& r : ctx.extra) reports.insert(reports.begin(), std::move(r));

        json run_json{{"schema", "glfield.run/1"},
                      {"experiment", c.experiment},
                      {"config_sha256", hash},
                      {"resolved", ctx.resolved},
                      {"reports", json::array()}};
        bool passed = true;
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& r = reports[i];
            passed = passed && r.passed();
            json rj = r.to_json();
            if (!r.table.columns.empty()) {
                std::ostringstream name;
                name << "table_" << (i < 10 ? "0" : "") << i << "_" << r.id << ".csv";
                std::ostringstream csv;
                r.table.write(csv);
                write_text(tmp / name.str(), csv.str());
                rj["table"] = name.str();
            }
            run_json["reports"].push_back(rj);
        }
        run_json["passed"] = passed;
        write_text(tmp / "report.json", run_json.dump(2) + "\n");
        write_text(tmp / "manifest.json", manifest_for(tmp, c.experiment, hash, passed).dump(2) + "\n");
        fs::rename(tmp, final_dir);
        result.reports = std::move(reports);
        result.passed = passed;
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
    return result;
}

json verify_manifest(const fs::path& manifest) {
    json m;
    try {
        m = json::parse(read_text(manifest));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::integrity, manifest.string() + " is not valid JSON: " + e.what());
    }
    if (m.value("schema", std::string()) != "glfield.manifest/1" || !m.contains("artifacts")) {
        fail(ErrorKind::integrity, manifest.string() + " is not a glfield manifest");
    }
    const fs::path dir = manifest.parent_path();
    for (const auto& a : m["artifacts"]) {
        const std::string rel = a.value("path", std::string());
        if (rel.empty() || rel.find('/') != std::string::npos || rel == "..") {
            fail(ErrorKind::integrity, manifest.string() + " lists a bad path '" + rel + "'");
        }
        const fs::path f = dir / rel;
        if (!fs::exists(f)) fail(ErrorKind::integrity, "missing artifact " + f.string());
        if (sha256_file(f) != a.value("sha256", std::string())) {
            fail(ErrorKind::integrity, "hash mismatch for " + f.string());
        }
    }
    return m;
}

namespace {

// Headline quantities shown in the text summary when present.
constexpr const char* headline[] = {"g_hat",          "median",         "target",       "gap",
                                    "median_exponent", "target_exponent", "ratio",        "mean_Z",
                                    "p_positive",      "median_stat",    "p_max_above"};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + "\"";
}

} // namespace

Summary summarize(const std::vector<fs::path>& manifests) {
    Summary s;
    std::ostringstream csv, text;
    csv << "run,experiment,report,N,name,kind,value,se,pass\n";
    for (const auto& path : manifests) {
        const json m = verify_manifest(path);
        const fs::path dir = path.parent_path();
        json run;
        try {
            run = json::parse(read_text(dir / "report.json"));
        } catch (const json::parse_error& e) {
            fail(ErrorKind::integrity, (dir / "report.json").string() + " is not valid JSON: " + e.what());
        }
        const std::string name = dir.filename().string();
        const std::string experiment = m.value("experiment", std::string());
        const bool run_passed = m.value("passed", false);
        s.passed = s.passed && run_passed;
        text << name << "  " << (run_passed ? "PASS" : "FAIL") << "\n";
        for (const auto& r : run.value("reports", json::array())) {
            const std::string id = r.value("id", std::string());
            const auto& params = r.value("parameters", json::object());
            const std::string n = params.contains("N") ? params["N"].dump() : "";
            const std::string prefix = csv_field(name) + "," + experiment + "," + id + "," + n + ",";
            text << "  " << id << (n.empty() ? "" : " N=" + n);
            if (!r.value("valid", true)) text << " (invalid)";
            text << "\n";
            const auto& est = r.value("estimates", json::object());
            for (const auto& [k, q] : est.items()) {
                csv << prefix << k << ",estimate," << fmt(q.value("value", 0.0)) << ","
                    << (q.value("exact", false) ? "" : fmt(q.value("se", 0.0))) << ",\n";
            }
            for (const char* h : headline) {
                if (!est.contains(h)) continue;
                const auto& q = est[h];
                text << "    " << h << " = " << fmt(q.value("value", 0.0));
                if (!q.value("exact", false)) text << " +- " << fmt(q.value("se", 0.0));
                text << "\n";
            }
            for (const auto& c : r.value("checks", json::array())) {
                const bool pass = c.value("pass", false);
                csv << prefix << csv_field(c.value("name", std::string())) << ",check,,," << (pass ? 1 : 0) << "\n";
                text << "    [" << (pass ? "pass" : "FAIL") << "] " << c.value("name", std::string()) << ": "
                     << c.value("detail", std::string()) << "\n";
            }
            for (const auto& w : r.value("warnings", json::array())) text << "    warning: " << w.get<std::string>() << "\n";
        }
    }
    s.csv = csv.str();
    s.text = text.str();
    return s;
}

std::vector<RunConfig> smoke_profile(const std::string& output_dir) {
    std::vector<RunConfig> out;
    auto base = [&](const std::string& kind, std::vector<int> sizes, std::uint64_t n) {
        RunConfig c;
        c.experiment = kind;
        c.sizes = std::move(sizes);
        c.output_dir = output_dir;
        c.sampler.kernel = Kernel::exact;
        c.sampler.n_samples = n;
        c.statistics.g_sizes = {16, 32, 64};
        c.analysis.resamples = 300;
        return c;
    };
    auto dipole = [](RunConfig& c) {
        c.potential = json{{"name", "dipole_gas"}, {"params", {{"a", 0.5}}}};
        c.sampler.kernel = Kernel::hmc;
        c.statistics.g = 0.26;
    };
    out.push_back(base("estimate-g", {16, 32, 64}, 100000));
    out.push_back(base("max-scaling", {16, 32, 64}, 300));
    out.push_back(base("high-points", {64}, 200));
    {
        auto c = base("sample", {16}, 400);
        dipole(c);
        c.sampler.kernel = Kernel::heat_bath;
        c.sampler.sweeps_burnin = 200;
        c.sampler.sweeps_between_samples = 5;
        out.push_back(c);
    }
    {
        auto c = base("tail", {32}, 1500);
        dipole(c);
        c.sampler.chains = 2;
        out.push_back(c);
    }
    {
        auto c = base("bl-check", {32}, 1000);
        dipole(c);
        c.statistics.test_functions = {"delta", "increment", "macroscopic"};
        c.schedule = {0.2, 0.3, 2, 0.0};
        out.push_back(c);
    }
    {
        auto c = base("mgf", {64}, 2000);
        c.schedule = {0.2, 0.3, 2, 0.0};
        out.push_back(c);
    }
    {
        auto c = base("increments", {64}, 1000);
        c.schedule = {0.2, 0.1, 2, 0.0};
        out.push_back(c);
    }
    {
        auto c = base("coupling", {16, 32}, 1);
        dipole(c);
        c.sampler.sweeps_burnin = 40;
        c.statistics.coupling_samples = 60;
        c.analysis.min_ess = 20;
        out.push_back(c);
    }
    {
        auto c = base("clt", {32}, 1000);
        c.statistics.test_functions = {"macroscopic"};
        out.push_back(c);
    }
    {
        auto c = base("truncated-count", {64}, 100);
        c.schedule = {0.2, 0.3, 2, 0.0};
        c.statistics.beta = 0.5;
        c.statistics.stride = 4;
        out.push_back(c);
    }
    {
        auto c = base("tiles", {64}, 300);
        c.statistics.eta_tile = 0.2;
        c.schedule.eps = 0.2;
        out.push_back(c);
    }
    return out;
}

} // namespace glf::cli
