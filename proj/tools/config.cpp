#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "glfield/errors.hpp"

namespace glf::cli {

namespace {

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) fail(ErrorKind::config, where + " must be an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) fail(ErrorKind::config, "unknown key '" + k + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::config, where + "." + key + " has the wrong type");
    }
}

std::array<int, 2> read_site(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
        fail(ErrorKind::config, where + " must be [x1, x2]");
    }
    return {j[0].get<int>(), j[1].get<int>()};
}

} // namespace

bool known_experiment(const std::string& kind) {
    return std::any_of(std::begin(experiment_kinds), std::end(experiment_kinds),
                       [&](const char* k) { return kind == k; });
}

RunConfig parse_config(const json& j, const std::string& experiment) {
    only_keys(j, "config",
              {"experiment", "sizes", "potential", "sampler", "seed", "threads", "output_dir", "ensemble",
               "save_ensemble", "check", "schedule", "statistics", "analysis", "manifests"});
    RunConfig c;
    read(j, "experiment", c.experiment, "config");
    if (!experiment.empty()) {
        if (!c.experiment.empty() && c.experiment != experiment) {
            fail(ErrorKind::config, "config is for '" + c.experiment + "', not '" + experiment + "'");
        }
        c.experiment = experiment;
    }
    if (!known_experiment(c.experiment)) fail(ErrorKind::config, "unknown experiment '" + c.experiment + "'");
    read(j, "sizes", c.sizes, "config");
    if (j.contains("potential")) {
        potential_from_json(j["potential"]);  // validates
        c.potential = j["potential"];
        if (!c.potential.contains("params")) c.potential["params"] = json::object();
    }
    if (j.contains("sampler")) {
        if (j["sampler"].is_object() && (j["sampler"].contains("seed") || j["sampler"].contains("threads"))) {
            fail(ErrorKind::config, "sampler.seed and sampler.threads are set by the top-level seed and threads");
        }
        c.sampler = sampler_config_from_json(j["sampler"]);
    }
    read(j, "seed", c.seed, "config");
    read(j, "threads", c.threads, "config");
    read(j, "output_dir", c.output_dir, "config");
    read(j, "ensemble", c.ensemble, "config");
    read(j, "save_ensemble", c.save_ensemble, "config");
    read(j, "check", c.check, "config");
    read(j, "manifests", c.manifests, "config");

    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        only_keys(s, "schedule", {"eps", "c", "K", "width"});
        read(s, "eps", c.schedule.eps, "schedule");
        read(s, "c", c.schedule.c, "schedule");
        read(s, "K", c.schedule.K, "schedule");
        read(s, "width", c.schedule.width, "schedule");
    }
    if (j.contains("statistics")) {
        const auto& s = j["statistics"];
        only_keys(s, "statistics",
                  {"g", "g_sizes", "g_ratio", "delta", "eta", "beta", "count_mode", "eta_tile", "stride", "site",
                   "site2", "test_functions", "difference", "u_grid", "t_grid", "lambda_grid", "boundary_value",
                   "r_list", "r_fraction", "coupling_samples"});
        auto& t = c.statistics;
        if (s.contains("g")) {
            const auto& g = s["g"];
            if (!(g.is_number() || (g.is_string() && (g == "gaussian" || g == "estimate")))) {
                fail(ErrorKind::config, "statistics.g must be a number, \"gaussian\" or \"estimate\"");
            }
            t.g = g;
        }
        read(s, "g_sizes", t.g_sizes, "statistics");
        read(s, "g_ratio", t.g_ratio, "statistics");
        read(s, "delta", t.delta, "statistics");
        read(s, "eta", t.eta, "statistics");
        read(s, "beta", t.beta, "statistics");
        read(s, "count_mode", t.count_mode, "statistics");
        read(s, "eta_tile", t.eta_tile, "statistics");
        read(s, "stride", t.stride, "statistics");
        if (s.contains("site")) t.site = read_site(s["site"], "statistics.site");
        if (s.contains("site2") && !s["site2"].is_null()) t.site2 = read_site(s["site2"], "statistics.site2");
        read(s, "test_functions", t.test_functions, "statistics");
        read(s, "difference", t.difference, "statistics");
        read(s, "u_grid", t.u_grid, "statistics");
        read(s, "t_grid", t.t_grid, "statistics");
        read(s, "lambda_grid", t.lambda_grid, "statistics");
        read(s, "boundary_value", t.boundary_value, "statistics");
        read(s, "r_list", t.r_list, "statistics");
        read(s, "r_fraction", t.r_fraction, "statistics");
        read(s, "coupling_samples", t.coupling_samples, "statistics");
        if (t.count_mode != "maximum" && t.count_mode != "high_points") {
            fail(ErrorKind::config, "statistics.count_mode must be \"maximum\" or \"high_points\"");
        }
        for (const auto& f : t.test_functions)
            if (f != "delta" && f != "increment" && f != "macroscopic") {
                fail(ErrorKind::config, "unknown test function '" + f + "'");
            }
    }
    if (j.contains("analysis")) {
        const auto& a = j["analysis"];
        only_keys(a, "analysis", {"bootstrap_seed", "resamples", "min_ess"});
        read(a, "bootstrap_seed", c.analysis.bootstrap_seed, "analysis");
        read(a, "resamples", c.analysis.resamples, "analysis");
        read(a, "min_ess", c.analysis.min_ess, "analysis");
    }

    if (c.experiment != "report") {
        if (c.sizes.empty()) fail(ErrorKind::config, "sizes must not be empty");
        for (int n : c.sizes)
            if (n < 2 || n > LatticeDomain::max_half_width) fail(ErrorKind::config, "size " + std::to_string(n) + " out of range");
    } else if (c.manifests.empty()) {
        fail(ErrorKind::config, "report needs at least one manifest");
    }
    if (c.threads < 0) fail(ErrorKind::config, "threads must be >= 0");
    if (c.analysis.resamples < 10) fail(ErrorKind::config, "analysis.resamples must be at least 10");
    try {
        SamplerConfig s = c.sampler;
        s.seed = c.seed;
        s.threads = std::max(1, c.threads);
        s.validate();
    } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
    }
    return c;
}

RunConfig load_config(const fs::path& path, const std::string& experiment) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, path.string() + ": " + e.what());
    }
    return parse_config(j, experiment);
}

json to_json(const RunConfig& c) {
    SamplerConfig s = c.sampler;
    s.seed = c.seed;
    s.threads = c.threads;
    json sampler = glf::to_json(s);
    sampler.erase("seed");
    sampler.erase("threads");
    const auto& t = c.statistics;
    json stats{{"g", t.g},
               {"g_sizes", t.g_sizes},
               {"g_ratio", t.g_ratio},
               {"delta", t.delta},
               {"eta", t.eta},
               {"beta", t.beta},
               {"count_mode", t.count_mode},
               {"eta_tile", t.eta_tile},
               {"stride", t.stride},
               {"site", t.site},
               {"site2", t.site2 ? json(*t.site2) : json(nullptr)},
               {"test_functions", t.test_functions},
               {"difference", t.difference},
               {"u_grid", t.u_grid},
               {"t_grid", t.t_grid},
               {"lambda_grid", t.lambda_grid},
               {"boundary_value", t.boundary_value},
               {"r_list", t.r_list},
               {"r_fraction", t.r_fraction},
               {"coupling_samples", t.coupling_samples}};
    return json{{"experiment", c.experiment},
                {"sizes", c.sizes},
                {"potential", c.potential},
                {"sampler", sampler},
                {"seed", c.seed},
                {"threads", c.threads},
                {"output_dir", c.output_dir},
                {"ensemble", c.ensemble},
                {"save_ensemble", c.save_ensemble},
                {"check", c.check},
                {"schedule", {{"eps", c.schedule.eps}, {"c", c.schedule.c}, {"K", c.schedule.K}, {"width", c.schedule.width}}},
                {"statistics", stats},
                {"analysis",
                 {{"bootstrap_seed", c.analysis.bootstrap_seed},
                  {"resamples", c.analysis.resamples},
                  {"min_ess", c.analysis.min_ess}}},
                {"manifests", c.manifests}};
}

void apply_overrides(RunConfig& c, const Overrides& o) {
    if (const char* env = std::getenv("GLFIELD_THREADS"); env && *env) {
        try {
            c.threads = std::stoi(env);
        } catch (const std::exception&) {
            fail(ErrorKind::config, std::string("GLFIELD_THREADS is not an integer: ") + env);
        }
    }
    if (const char* env = std::getenv("GLFIELD_OUT_DIR"); env && *env) c.output_dir = env;
    if (o.threads) c.threads = *o.threads;
    if (o.seed) c.seed = *o.seed;
    if (o.output_dir) c.output_dir = *o.output_dir;
    if (o.check) c.check = true;
    if (c.threads < 0) fail(ErrorKind::config, "threads must be >= 0");
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorKind::numerical, "SHA-256 failed");
    }
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::integrity, "cannot read " + path.string());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 20);
    while (in) {
        in.read(buf.data(), std::streamsize(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), std::size_t(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
    return os.str();
}

int exit_code(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::config:
    case ErrorKind::parameter:
    case ErrorKind::size:
    case ErrorKind::geometry:
    case ErrorKind::input:
        return 2;
    default:
        return 3;
    }
}

} // namespace glf::cli
