// lowshot: batch driver for the low-shot pipeline.
//
//   lowshot [--config PATH] [--seed U64] [--jobs N] [--force] [--out DIR] <command>
//
// Exit status: 0 success, 1 runtime failure, 2 configuration error.

#include "lowshot/run.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

constexpr int kRuntimeFailure = 1;
constexpr int kConfigFailure = 2;

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw lowshot::IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Low-shot learning on feature vectors: representation learning, hallucination, benchmark, theory checks"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 1;
    bool force = false;
    std::string out = "run";
    app.add_option("--config", config_path, "Run configuration (JSON)")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "Override benchmark.master_seed");
    app.add_option("--jobs", jobs, "Worker threads for trials and verification instances")->check(CLI::Range(1, 1024));
    app.add_flag("--force", force, "Rebuild outputs even if present");
    app.add_option("--out", out, "Output directory")->capture_default_str();

    struct Cmd {
        const char* name;
        lowshot::Stage stage;
        const char* help;
    };
    const Cmd cmds[] = {
        {"synth", lowshot::Stage::synth, "Generate the synthetic world (raw stores + split manifest)"},
        {"train-repr", lowshot::Stage::train_repr, "Train each representation on the base classes"},
        {"extract", lowshot::Stage::extract, "Write feature stores for every representation"},
        {"hallucinate-prep", lowshot::Stage::hallucinate_prep, "Centroids, analogy quadruplets and generator"},
        {"lowshot", lowshot::Stage::lowshot, "Run the benchmark; writes report.json, report.csv, report.txt"},
        {"verify", lowshot::Stage::verify, "Theory suites; exits 1 on any violation"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& c : cmds) subs.push_back(app.add_subcommand(c.name, c.help));

    CLI::App* report = app.add_subcommand("report", "Render a report file");
    std::string report_path;
    std::string format = "table";
    report->add_option("path", report_path, "Report file (default <out>/report.json)");
    report->add_option("--format", format, "table, csv or json")->check(CLI::IsMember({"table", "csv", "json"}));

    CLI::App* show = app.add_subcommand("config", "Print the effective configuration and stage hashes");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kConfigFailure;
    }

    lowshot::StageOptions options;
    options.out = out;
    options.jobs = jobs;
    options.force = force;
    options.log = &std::cerr;

    try {
        if (report->parsed()) {
            const std::string path = report_path.empty() ? lowshot::RunLayout{out}.report_json().string() : report_path;
            const lowshot::BenchmarkReport r = lowshot::decode_report(read_all(path));
            if (format == "table")
                std::cout << lowshot::render_report_table(r);
            else if (format == "csv")
                std::cout << lowshot::render_report_csv(r);
            else
                std::cout << lowshot::encode_report(r);
            return 0;
        }

        lowshot::RunConfig config = config_path.empty() ? lowshot::RunConfig{} : lowshot::load_run_config(config_path);
        if (seed) config.benchmark.master_seed = *seed;

        if (show->parsed()) {
            std::cout << lowshot::encode_run_config(config);
            for (const auto& c : cmds)
                std::cout << "# " << c.name << " " << lowshot::stage_hash(config, c.stage) << "\n";
            return 0;
        }

        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) continue;
            lowshot::run_stage(config, cmds[i].stage, options);
            if (cmds[i].stage == lowshot::Stage::verify) {
                const bool ok = lowshot::verify_passed(options);
                std::cerr << "verify: " << (ok ? "all bounds hold" : "violations found") << " ("
                          << lowshot::RunLayout{out}.verify_json().string() << ")\n";
                return ok ? 0 : kRuntimeFailure;
            }
            if (cmds[i].stage == lowshot::Stage::lowshot)
                std::cout << read_all(lowshot::RunLayout{out}.report_table().string());
            return 0;
        }
    } catch (const lowshot::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kConfigFailure;
    } catch (const lowshot::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntimeFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: unexpected: " << e.what() << "\n";
        return kRuntimeFailure;
    }
    return 0;
}
