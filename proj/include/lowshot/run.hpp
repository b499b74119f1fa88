#pragma once

#include "lowshot/benchmark.hpp"
#include "lowshot/error.hpp"
#include "lowshot/theory.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lowshot {

// External raw stores. When all three are empty the synthetic world is used.
struct DataPaths {
    std::string train;
    std::string test;
    std::string split;

    bool external() const noexcept { return !train.empty(); }
    bool operator==(const DataPaths&) const = default;
};

// Everything a command needs. Precedence: flag > file > default.
struct RunConfig {
    SyntheticSpec synthetic;
    std::uint64_t world_seed = 7;
    std::uint64_t split_seed = 11;
    DataPaths data;
    PipelineConfig pipeline;
    BenchmarkConfig benchmark = default_benchmark();
    LipschitzSuiteConfig lipschitz;
    DistanceSuiteConfig distance;
    GradnormConfig gradnorm;
    double spearman_threshold = 0.9;

    static BenchmarkConfig default_benchmark() {
        BenchmarkConfig b;
        b.master_seed = 1;
        return b;
    }
    bool operator==(const RunConfig&) const = default;
};

// Strict: unknown keys, wrong types, invalid values and missing data files
// raise ConfigError with the dotted key path.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string encode_run_config(const RunConfig& config);

enum class Stage { synth, train_repr, extract, hallucinate_prep, lowshot, verify };
std::string_view stage_name(Stage s) noexcept;

// 16 hex digits over the config sections `stage` depends on, chained through
// its prerequisites.
std::string stage_hash(const RunConfig& config, Stage stage);

// Outputs exist but were produced under a different configuration.
class StaleArtifactError : public Error {
public:
    using Error::Error;
};

struct StageOptions {
    std::filesystem::path out = "run";
    std::size_t jobs = 1;
    bool force = false;     // rebuild even when outputs are current or stale
    std::ostream* log = nullptr;
};

// Output layout under StageOptions::out.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path stamp(Stage s) const;
    std::filesystem::path raw_train() const { return root / "data" / "train.lsf"; }
    std::filesystem::path raw_test() const { return root / "data" / "test.lsf"; }
    std::filesystem::path split() const { return root / "data" / "split.json"; }
    std::filesystem::path repr_dir(const std::string& key) const { return root / "repr" / key; }
    std::filesystem::path report_json() const { return root / "report.json"; }
    std::filesystem::path report_csv() const { return root / "report.csv"; }
    std::filesystem::path report_table() const { return root / "report.txt"; }
    std::filesystem::path report_partial() const { return root / "report.partial.json"; }
    std::filesystem::path verify_json() const { return root / "verify.json"; }
};

enum class StageStatus { built, up_to_date };

// Each stage first brings its prerequisites up to date, then skips its own
// work when the stamp matches. Outputs under a different stamp raise
// StaleArtifactError unless `force` is set.
StageStatus run_stage(const RunConfig& config, Stage stage, const StageOptions& options);

// Loads the verify output written by run_stage(Stage::verify).
bool verify_passed(const StageOptions& options);

}  // namespace lowshot
