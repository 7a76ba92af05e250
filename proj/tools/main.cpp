#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "cli.hpp"
#include "glfield/errors.hpp"

using namespace glf;
using namespace glf::cli;

namespace {

struct Flags {
    std::string config;
    std::vector<std::string> manifests;
    std::string csv;
    Overrides over;
};

void add_common(CLI::App* sub, Flags& f, bool needs_config) {
    auto* opt = sub->add_option("--config,-c", f.config, "JSON config file");
    if (needs_config) opt->required();
    sub->add_option("--threads", f.over.threads, "worker threads (0 = all cores)");
    sub->add_option("--seed", f.over.seed, "master seed");
    sub->add_option("--out", f.over.output_dir, "output directory");
    sub->add_flag("--check", f.over.check, "exit 4 when a check fails");
}

int finish(const std::vector<fs::path>& manifests, bool check, const std::string& csv_path) {
    const auto s = summarize(manifests);
    std::cout << s.text;
    if (!csv_path.empty()) {
        std::ofstream os(csv_path);
        os << s.csv;
        if (!os) fail(ErrorKind::integrity, "cannot write " + csv_path);
    }
    return check && !s.passed ? 4 : 0;
}

int run_one(RunConfig c, const Overrides& over, const std::string& csv) {
    apply_overrides(c, over);
    const auto r = run(c);
    std::cerr << (r.reused ? "reused " : "wrote ") << r.directory.string() << "\n";
    return finish({r.manifest}, c.check, csv);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Simulation and statistics for gradient lattice fields"};
    app.require_subcommand(1);
    Flags f;

    for (const char* kind : experiment_kinds) {
        const std::string k = kind;
        if (k == "report") continue;
        auto* sub = app.add_subcommand(k, "run the " + k + " experiment");
        add_common(sub, f, true);
        sub->add_option("--summary-csv", f.csv, "also write the summary as CSV");
    }
    auto* run_cmd = app.add_subcommand("run", "run the experiment named in the config");
    add_common(run_cmd, f, true);
    run_cmd->add_option("--summary-csv", f.csv, "also write the summary as CSV");

    auto* smoke = app.add_subcommand("smoke", "small runs of every experiment");
    add_common(smoke, f, false);
    smoke->add_option("--summary-csv", f.csv, "also write the summary as CSV");

    auto* report = app.add_subcommand("report", "summarize finished runs");
    report->add_option("manifests", f.manifests, "manifest.json files");
    report->add_option("--config,-c", f.config, "report config listing manifests");
    report->add_option("--csv", f.csv, "write the summary table here");
    report->add_flag("--check", f.over.check, "exit 4 when a run failed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        if (name == "report") {
            std::vector<fs::path> paths(f.manifests.begin(), f.manifests.end());
            if (!f.config.empty()) {
                const auto c = load_config(f.config, "report");
                paths.insert(paths.end(), c.manifests.begin(), c.manifests.end());
            }
            if (paths.empty()) fail(ErrorKind::config, "report needs manifest paths or --config");
            return finish(paths, f.over.check, f.csv);
        }
        if (name == "smoke") {
            RunConfig probe;
            probe.experiment = "smoke";
            apply_overrides(probe, f.over);
            std::vector<fs::path> manifests;
            for (auto c : smoke_profile(probe.output_dir)) {
                apply_overrides(c, f.over);
                if (!f.over.threads && !std::getenv("GLFIELD_THREADS")) c.threads = 0;
                std::cerr << "smoke: " << c.experiment << "\n";
                manifests.push_back(run(c).manifest);
            }
            return finish(manifests, f.over.check, f.csv);
        }
        const auto c = load_config(f.config, name == "run" ? "" : name);
        if (c.experiment == "report") {
            std::vector<fs::path> paths(c.manifests.begin(), c.manifests.end());
            return finish(paths, f.over.check || c.check, f.csv);
        }
        return run_one(c, f.over, f.csv);
    } catch (const Error& e) {
        std::cerr << "glfield: " << e.what() << "\n";
        return exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "glfield: " << e.what() << "\n";
        return 3;
    }
}
