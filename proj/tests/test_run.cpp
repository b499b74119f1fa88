#include "lowshot/error.hpp"
#include "lowshot/run.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

using namespace lowshot;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "synthetic": {"raw_dim": 8, "base_count": 10, "novel_count": 6, "examples_per_class": 20, "test_per_class": 5},
  "world_seed": 3,
  "split_seed": 4,
  "pipeline": {
    "hidden": [16],
    "feature_dim": 8,
    "repr": {"epochs": 2, "batch_size": 32},
    "centroids": {"max_per_class": 3},
    "generator": {"epochs": 2, "hidden": 16}
  },
  "benchmark": {
    "shots": [1, 2],
    "trials": 2,
    "methods": [
      {"name": "baseline", "representation": "none", "lambda": 0},
      {"name": "sgm", "representation": "sgm", "lambda": 0.01},
      {"name": "baseline+hallucination", "representation": "none", "lambda": 0, "hallucinate": true, "k_min": 0}
    ],
    "classifier": {"iterations": 50, "batch_size": 32},
    "grid": {"k_min": [2, 4]},
    "cv_trials": 1,
    "master_seed": 5
  },
  "verify": {
    "lipschitz": {"instances": 5},
    "distance": {"instances": 2, "samples_per_instance": 3},
    "gradnorm": {"samples": 20}
  }
})";

std::string read(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << s;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("lowshot_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string config_error_path(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const ConfigError& e) {
        return e.key_path();
    }
    return "<no error>";
}

StageOptions quiet(const fs::path& out) {
    StageOptions o;
    o.out = out;
    return o;
}

}  // namespace

TEST_CASE("config errors name the offending key") {
    CHECK(config_error_path(R"({"pipeline": {"repr": {"epoch": 3}}})") == "pipeline.repr.epoch");
    CHECK(config_error_path(R"({"benchmark": {"trials": "five"}})") == "benchmark.trials");
    CHECK(config_error_path(R"({"benchmark": {"trials": 0}})") == "benchmark.trials");
    CHECK(config_error_path(R"({"synthetic": {"noise_sigma": -1}})") == "synthetic.noise_sigma");
    CHECK(config_error_path(R"({"verify": {"lipschitz": {"max_classes": 1}}})") == "verify.lipschitz.max_classes");
    CHECK(config_error_path(R"({"verify": {"spearman_threshold": 2}})") == "verify.spearman_threshold");
    CHECK(config_error_path(R"({"benchmark": {"methods": [{"name": "x", "representation": "dropout"}]}})")
              .starts_with("benchmark.methods"));
    CHECK(config_error_path(R"({"data": {"train": "/nonexistent/a.lsf", "test": "/nonexistent/b.lsf", "split": "/nonexistent/s.json"}})") ==
          "data.train");
    CHECK(config_error_path(R"({"data": {"train": "/etc/hostname"}})") == "data.test");
    CHECK(config_error_path("{not json") == "<root>");
    CHECK(config_error_path("{}") == "<no error>");
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config encoding round-trips and defaults are stable") {
    const RunConfig tiny = parse_run_config(kTinyConfig);
    CHECK(parse_run_config(encode_run_config(tiny)) == tiny);
    CHECK(encode_run_config(parse_run_config(encode_run_config(tiny))) == encode_run_config(tiny));
    CHECK(parse_run_config("{}") == RunConfig{});
    CHECK(tiny.benchmark.methods.size() == 3);
    CHECK(tiny.pipeline.hidden == std::vector<std::size_t>{16});
}

TEST_CASE("stage hashes chain through prerequisites") {
    const RunConfig a = parse_run_config(kTinyConfig);
    RunConfig b = a;
    b.benchmark.trials = 3;
    CHECK(stage_hash(a, Stage::synth) == stage_hash(b, Stage::synth));
    CHECK(stage_hash(a, Stage::train_repr) == stage_hash(b, Stage::train_repr));
    CHECK(stage_hash(a, Stage::lowshot) != stage_hash(b, Stage::lowshot));
    RunConfig c = a;
    c.world_seed = 99;
    for (Stage s : {Stage::synth, Stage::train_repr, Stage::extract, Stage::hallucinate_prep, Stage::lowshot})
        CHECK(stage_hash(a, s) != stage_hash(c, s));
    CHECK(stage_hash(a, Stage::verify) == stage_hash(c, Stage::verify));
    CHECK(stage_hash(a, Stage::lowshot).size() == 16);
}

TEST_CASE("staged run is idempotent, detects stale outputs and matches the in-process pipeline") {
    TempDir dir("stages");
    const RunConfig config = parse_run_config(kTinyConfig);
    const StageOptions opts = quiet(dir.path);
    const RunLayout layout{dir.path};

    CHECK(run_stage(config, Stage::lowshot, opts) == StageStatus::built);
    for (Stage s : {Stage::synth, Stage::train_repr, Stage::extract, Stage::hallucinate_prep, Stage::lowshot})
        CHECK(fs::exists(layout.stamp(s)));
    const std::string report = read(layout.report_json());
    const auto mtime = fs::last_write_time(layout.report_json());
    CHECK(run_stage(config, Stage::lowshot, opts) == StageStatus::up_to_date);
    CHECK(run_stage(config, Stage::extract, opts) == StageStatus::up_to_date);
    CHECK(fs::last_write_time(layout.report_json()) == mtime);

    // Same result as the single-process pipeline.
    const SyntheticWorld world = make_synthetic(config.synthetic, config.world_seed);
    const ClassSplit split = split_classes(config.synthetic.class_count(), 10.0 / 16.0, config.split_seed);
    CHECK(encode_report(run_pipeline(world.train, world.test, split, config.pipeline, config.benchmark)) == report);
    CHECK(read(layout.report_csv()) == render_report_csv(decode_report(report)));

    // A changed config under the same output directory is refused.
    RunConfig changed = config;
    changed.benchmark.master_seed = 6;
    CHECK_THROWS_AS(run_stage(changed, Stage::lowshot, opts), StaleArtifactError);
    CHECK(run_stage(changed, Stage::synth, opts) == StageStatus::up_to_date);
    StageOptions forced = opts;
    forced.force = true;
    CHECK(run_stage(changed, Stage::lowshot, forced) == StageStatus::built);
    CHECK(read(layout.report_json()) != report);

    // A missing output triggers a rebuild; the result is byte-identical.
    fs::remove(layout.report_json());
    CHECK(run_stage(changed, Stage::lowshot, opts) == StageStatus::built);
    const std::string again = read(layout.report_json());
    fs::remove(layout.report_json());
    run_stage(changed, Stage::lowshot, opts);
    CHECK(read(layout.report_json()) == again);
}

TEST_CASE("verify stage writes a verdict") {
    TempDir dir("verify");
    RunConfig config = parse_run_config(kTinyConfig);
    const StageOptions opts = quiet(dir.path);
    CHECK(run_stage(config, Stage::verify, opts) == StageStatus::built);
    CHECK(verify_passed(opts));
    CHECK_FALSE(fs::exists(RunLayout{dir.path}.stamp(Stage::synth)));
    const auto j = nlohmann::json::parse(read(RunLayout{dir.path}.verify_json()));
    CHECK(j["passed"] == true);

    TempDir strict("verify_strict");
    config.spearman_threshold = 1.0;
    run_stage(config, Stage::verify, quiet(strict.path));
    CHECK_FALSE(verify_passed(quiet(strict.path)));
}

TEST_CASE("external data paths replace the synthetic world") {
    TempDir dir("external");
    const RunConfig base = parse_run_config(kTinyConfig);
    run_stage(base, Stage::synth, quiet(dir.path / "a"));
    const RunLayout a{dir.path / "a"};
    nlohmann::json j = nlohmann::json::parse(kTinyConfig);
    j["data"] = {{"train", a.raw_train().string()}, {"test", a.raw_test().string()}, {"split", a.split().string()}};
    const RunConfig ext = parse_run_config(j.dump());
    CHECK(ext.data.external());
    run_stage(ext, Stage::lowshot, quiet(dir.path / "b"));
    run_stage(base, Stage::lowshot, quiet(dir.path / "a"));
    CHECK(read(RunLayout{dir.path / "b"}.report_json()) == read(a.report_json()));
    CHECK_FALSE(fs::exists(RunLayout{dir.path / "b"}.raw_train()));

    // A corrupted input store fails the synth stage with a structured error.
    write(dir.path / "bad.lsf", "LSF1garbage");
    j["data"]["train"] = (dir.path / "bad.lsf").string();
    CHECK_THROWS_AS(run_stage(parse_run_config(j.dump()), Stage::synth, quiet(dir.path / "c")), ParseError);
}

#ifdef LOWSHOT_CLI
namespace {

int cli(const std::string& args) {
    const std::string cmd = std::string(LOWSHOT_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("command-line exit codes") {
    TempDir dir("cli");
    const fs::path cfg = dir.path / "tiny.json";
    write(cfg, kTinyConfig);
    write(dir.path / "bad.json", R"({"benchmark": {"trials": "x"}})");
    const std::string out = " --out " + (dir.path / "run").string();
    CHECK(cli("--config " + (dir.path / "bad.json").string() + " config") == 2);
    CHECK(cli("--bogus-flag config") == 2);
    CHECK(cli("--config " + cfg.string() + out + " lowshot") == 0);
    CHECK(cli("--config " + cfg.string() + out + " lowshot") == 0);
    CHECK(cli("--config " + cfg.string() + " --seed 9" + out + " lowshot") == 1);  // stale outputs
    CHECK(cli("--config " + cfg.string() + " --seed 9 --force" + out + " lowshot") == 0);
    CHECK(cli("report " + (dir.path / "run" / "report.json").string() + " --format csv") == 0);
    CHECK(cli("report " + (dir.path / "missing.json").string()) == 1);
    CHECK(cli("--config " + cfg.string() + out + " verify") == 0);
}
#endif
