#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "glfield/ensemble.hpp"
#include "glfield/experiments.hpp"

namespace glf::cli {

namespace fs = std::filesystem;

inline constexpr const char* experiment_kinds[] = {
    "sample", "estimate-g", "max-scaling", "high-points",     "tail",  "bl-check", "mgf",
    "increments", "coupling", "clt",       "truncated-count", "tiles", "report",
};

bool known_experiment(const std::string& kind);

/// Everything a run depends on. Parsed from JSON with unknown keys
/// rejected; to_json() writes every field with defaults materialized.
struct RunConfig {
    std::string experiment;
    std::vector<int> sizes{32};
    json potential = json{{"name", "quadratic"}, {"params", json::object()}};
    SamplerConfig sampler;
    std::uint64_t seed = 1;
    int threads = 1;
    std::string output_dir = "glfield-out";
    std::string ensemble;  // read this file instead of sampling
    bool save_ensemble = false;
    bool check = false;

    struct Schedule {
        double eps = 0.1;
        double c = 0.15;
        int K = 4;
        double width = 0.0;  // 0 selects eps^4
    } schedule;

    struct Statistics {
        json g = "gaussian";  // number, "gaussian" (exact slope) or "estimate"
        std::vector<int> g_sizes{32, 64, 128, 256};
        double g_ratio = 0.0;  // 0: g over the Gaussian slope
        double delta = 0.1;
        double eta = 0.5;
        double beta = 0.2;
        std::string count_mode = "maximum";  // or "high_points"
        double eta_tile = 0.25;
        int stride = 1;
        std::array<int, 2> site{0, 0};
        std::optional<std::array<int, 2>> site2;
        std::vector<std::string> test_functions{"delta"};
        bool difference = false;
        std::vector<double> u_grid;
        std::vector<double> t_grid;
        std::vector<std::vector<double>> lambda_grid;
        double boundary_value = 1.0;
        std::vector<int> r_list;
        double r_fraction = 0.25;
        int coupling_samples = 200;
    } statistics;

    AnalysisOptions analysis;
    std::vector<std::string> manifests;  // report inputs
};

/// Config error on malformed JSON (with line and column), unknown keys or
/// wrong types. `experiment` fills or must match the config's own field.
RunConfig parse_config(const json& j, const std::string& experiment = "");
RunConfig load_config(const fs::path& path, const std::string& experiment = "");
json to_json(const RunConfig& c);

/// Flag and environment overrides (GLFIELD_THREADS, GLFIELD_OUT_DIR);
/// flags win over the environment, which wins over the file.
struct Overrides {
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    bool check = false;
};
void apply_overrides(RunConfig& c, const Overrides& o);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const fs::path& path);

struct RunResult {
    fs::path directory;
    fs::path manifest;
    std::vector<ExperimentReport> reports;
    bool passed = true;
    bool reused = false;  // an identical run already existed
};

/// Runs one experiment and writes config.json, report.json, CSV tables,
/// optional ensembles and manifest.json into a directory named by the
/// hash of the resolved config (output_dir excluded). An existing identical run is verified and
/// reused, never rewritten.
RunResult run(const RunConfig& c);

/// Integrity error (naming the file) unless every artifact hashes to the
/// recorded value. Returns the manifest.
json verify_manifest(const fs::path& manifest);

struct Summary {
    std::string csv;
    std::string text;
    bool passed = true;
};
/// Cross-run summary of verified manifests.
Summary summarize(const std::vector<fs::path>& manifests);

/// The built-in smoke profile: small versions of every experiment.
std::vector<RunConfig> smoke_profile(const std::string& output_dir);

/// 0 ok, 2 config / parameter, 3 numerical / solver / integrity.
int exit_code(const Error& e);

} // namespace glf::cli
