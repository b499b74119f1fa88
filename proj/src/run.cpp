#include "lowshot/run.hpp"

#include "binary_io.hpp"
#include "config_json.hpp"
#include "parallel.hpp"
#include "lowshot/rng.hpp"

#include <cstdio>
#include <map>
#include <ostream>
#include <optional>

namespace lowshot {

using detail::Fields;
using detail::ordered_json;
namespace fs = std::filesystem;

namespace {

void check_file(const std::string& path, const std::string& key) {
    std::error_code ec;
    if (!fs::is_regular_file(path, ec)) throw ConfigError(key, "file not found: " + path);
}

void read_data_paths(Fields f, DataPaths& d) {
    f.get("train", d.train);
    f.get("test", d.test);
    f.get("split", d.split);
    f.done();
    const bool any = !d.train.empty() || !d.test.empty() || !d.split.empty();
    if (!any) return;
    if (d.train.empty()) throw ConfigError(f.path_of("train"), "missing (train, test and split go together)");
    if (d.test.empty()) throw ConfigError(f.path_of("test"), "missing (train, test and split go together)");
    if (d.split.empty()) throw ConfigError(f.path_of("split"), "missing (train, test and split go together)");
    check_file(d.train, f.path_of("train"));
    check_file(d.test, f.path_of("test"));
    check_file(d.split, f.path_of("split"));
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string hash_json(const ordered_json& j) {
    const std::string s = j.dump();
    return hex64(hash_string(s.data(), s.size()));
}

// Distinct representation keys in method order, with whether any method
// using the key hallucinates.
std::vector<std::pair<std::string, bool>> representation_keys(const BenchmarkConfig& b) {
    std::vector<std::pair<std::string, bool>> keys;
    for (const auto& m : b.methods) {
        const std::string key = representation_key(m.representation, m.lambda);
        auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.first == key; });
        if (it == keys.end())
            keys.emplace_back(key, m.hallucinate);
        else
            it->second = it->second || m.hallucinate;
    }
    return keys;
}

const MethodSpec& first_method(const BenchmarkConfig& b, const std::string& key) {
    for (const auto& m : b.methods)
        if (representation_key(m.representation, m.lambda) == key) return m;
    throw InvalidArgument("no method uses representation '" + key + "'");
}

std::vector<Stage> prerequisites(Stage s) {
    switch (s) {
        case Stage::synth:
        case Stage::verify:
            return {};
        case Stage::train_repr:
            return {Stage::synth};
        case Stage::extract:
            return {Stage::train_repr};
        case Stage::hallucinate_prep:
            return {Stage::extract};
        case Stage::lowshot:
            return {Stage::hallucinate_prep};
    }
    return {};
}

ordered_json stage_inputs(const RunConfig& c, Stage s) {
    const auto& p = c.pipeline;
    const auto& b = c.benchmark;
    switch (s) {
        case Stage::synth:
            if (c.data.external())
                return {{"train", c.data.train}, {"test", c.data.test}, {"split", c.data.split}};
            return {{"synthetic", detail::to_json(c.synthetic)},
                    {"world_seed", c.world_seed},
                    {"split_seed", c.split_seed}};
        case Stage::train_repr: {
            ordered_json keys = ordered_json::array();
            for (const auto& [k, h] : representation_keys(b)) keys.push_back(k);
            return {{"hidden", p.hidden},
                    {"feature_dim", p.feature_dim},
                    {"repr", detail::to_json(p.repr)},
                    {"representations", std::move(keys)},
                    {"master_seed", b.master_seed}};
        }
        case Stage::extract:
            return ordered_json::object();
        case Stage::hallucinate_prep: {
            ordered_json keys = ordered_json::array();
            for (const auto& [k, h] : representation_keys(b))
                if (h) keys.push_back(k);
            return {{"centroids", detail::to_json(p.centroids)},
                    {"mining", p.mining == MiningMode::best_match ? "best_match" : "all_positive"},
                    {"generator", detail::to_json(p.generator)},
                    {"representations", std::move(keys)},
                    {"master_seed", b.master_seed}};
        }
        case Stage::lowshot:
            return detail::to_json(b);
        case Stage::verify:
            return {{"lipschitz", detail::to_json(c.lipschitz)},
                    {"distance", detail::to_json(c.distance)},
                    {"gradnorm", detail::to_json(c.gradnorm)},
                    {"spearman_threshold", c.spearman_threshold}};
    }
    return {};
}

// ---- stamps ----------------------------------------------------------------

struct Stamp {
    std::string hash;
    std::vector<std::string> outputs;  // relative to the run root
};

std::optional<Stamp> read_stamp(const fs::path& path) {
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(detail::read_text_file(path));
        return Stamp{j.at("config_hash").get<std::string>(), j.at("outputs").get<std::vector<std::string>>()};
    } catch (const nlohmann::json::exception&) {
        return Stamp{};  // unreadable stamp: treated as stale
    }
}

void write_stamp(const fs::path& path, Stage s, const std::string& hash, const std::vector<std::string>& outputs) {
    ordered_json j;
    j["stage"] = std::string(stage_name(s));
    j["config_hash"] = hash;
    j["outputs"] = outputs;
    detail::write_text_file(path, j.dump(2) + "\n");
}

class Runner {
public:
    Runner(const RunConfig& config, const StageOptions& options) : c_(config), o_(options), layout_{options.out} {}

    StageStatus run(Stage s) {
        if (const auto it = done_.find(s); it != done_.end()) return it->second;
        for (Stage pre : prerequisites(s)) run(pre);

        const std::string hash = stage_hash(c_, s);
        const auto stamp = read_stamp(layout_.stamp(s));
        if (stamp && !o_.force) {
            if (stamp->hash == hash && outputs_exist(*stamp)) {
                log(s, "up to date");
                return done_[s] = StageStatus::up_to_date;
            }
            if (stamp->hash != hash)
                throw StaleArtifactError(std::string(stage_name(s)) + ": outputs in " + o_.out.string() +
                                         " were produced by a different configuration (stamp " + stamp->hash +
                                         ", expected " + hash + "); rerun with --force or choose another --out");
        }
        log(s, "building");
        std::error_code ec;
        fs::remove(layout_.stamp(s), ec);
        const std::vector<std::string> outputs = build(s);
        write_stamp(layout_.stamp(s), s, hash, outputs);
        return done_[s] = StageStatus::built;
    }

private:
    bool outputs_exist(const Stamp& stamp) const {
        std::error_code ec;
        for (const auto& o : stamp.outputs)
            if (!fs::exists(layout_.root / o, ec)) return false;
        return true;
    }

    void log(Stage s, const char* what) const {
        if (o_.log) *o_.log << stage_name(s) << ": " << what << "\n";
    }

    std::string rel(const fs::path& p) const { return fs::relative(p, layout_.root).generic_string(); }

    fs::path raw_train_path() const { return c_.data.external() ? fs::path(c_.data.train) : layout_.raw_train(); }
    fs::path raw_test_path() const { return c_.data.external() ? fs::path(c_.data.test) : layout_.raw_test(); }
    fs::path split_path() const { return c_.data.external() ? fs::path(c_.data.split) : layout_.split(); }

    std::vector<std::string> build(Stage s) {
        switch (s) {
            case Stage::synth:
                return build_synth();
            case Stage::train_repr:
                return build_train_repr();
            case Stage::extract:
                return build_extract();
            case Stage::hallucinate_prep:
                return build_hallucinate_prep();
            case Stage::lowshot:
                return build_lowshot();
            case Stage::verify:
                return build_verify();
        }
        return {};
    }

    std::vector<std::string> build_synth() {
        if (c_.data.external()) {
            // Validate the inputs once so later stages fail early on bad files.
            const auto train = load_feature_store(raw_train_path());
            const auto test = load_feature_store(raw_test_path());
            const auto split = load_split_manifest(split_path());
            if (train.dim() != test.dim()) throw InvalidArgument("data.train and data.test differ in dimension");
            split.validate(train.class_count);
            return {};
        }
        const SyntheticWorld world = make_synthetic(c_.synthetic, c_.world_seed);
        const double base_fraction =
            static_cast<double>(c_.synthetic.base_count) / static_cast<double>(c_.synthetic.class_count());
        const ClassSplit split = split_classes(c_.synthetic.class_count(), base_fraction, c_.split_seed);
        save_feature_store(world.train, layout_.raw_train());
        save_feature_store(world.test, layout_.raw_test());
        save_split_manifest(split, layout_.split());
        return {rel(layout_.raw_train()), rel(layout_.raw_test()), rel(layout_.split())};
    }

    std::vector<std::size_t> layer_sizes(std::size_t raw_dim) const {
        std::vector<std::size_t> sizes = {raw_dim};
        sizes.insert(sizes.end(), c_.pipeline.hidden.begin(), c_.pipeline.hidden.end());
        sizes.push_back(c_.pipeline.feature_dim);
        return sizes;
    }

    std::vector<std::string> build_train_repr() {
        const FeatureDataset raw = load_feature_store(raw_train_path());
        const ClassSplit split = load_split_manifest(split_path());
        const auto keys = representation_keys(c_.benchmark);
        const auto sizes = layer_sizes(raw.dim());
        detail::parallel_for(keys.size(), o_.jobs, [&](std::size_t i) {
            const std::string& key = keys[i].first;
            const auto cfg = representation_config(c_.pipeline, first_method(c_.benchmark, key), c_.benchmark.master_seed);
            const RepresentationArtifacts art = learn_representation(raw, split, sizes, cfg);
            const fs::path dir = layout_.repr_dir(key);
            save_extractor(art.extractor, dir / "extractor.lse");
            save_classifier(art.base_classifier, dir / "base_classifier.lsw");
            detail::write_text_file(dir / "loss_trace.json", ordered_json(art.loss_trace).dump() + "\n");
        });
        std::vector<std::string> out;
        for (const auto& [key, h] : keys) {
            const fs::path dir = layout_.repr_dir(key);
            for (const char* f : {"extractor.lse", "base_classifier.lsw", "loss_trace.json"}) out.push_back(rel(dir / f));
        }
        return out;
    }

    std::vector<std::string> build_extract() {
        const FeatureDataset train = load_feature_store(raw_train_path());
        const FeatureDataset test = load_feature_store(raw_test_path());
        const auto keys = representation_keys(c_.benchmark);
        detail::parallel_for(keys.size(), o_.jobs, [&](std::size_t i) {
            const fs::path dir = layout_.repr_dir(keys[i].first);
            const MlpExtractor extractor = load_extractor(dir / "extractor.lse");
            save_feature_store(extract_features(extractor, train), dir / "train.lsf");
            save_feature_store(extract_features(extractor, test), dir / "test.lsf");
        });
        std::vector<std::string> out;
        for (const auto& [key, h] : keys)
            for (const char* f : {"train.lsf", "test.lsf"}) out.push_back(rel(layout_.repr_dir(key) / f));
        return out;
    }

    std::vector<std::string> build_hallucinate_prep() {
        const ClassSplit split = load_split_manifest(split_path());
        std::vector<std::string> keys;
        for (const auto& [key, h] : representation_keys(c_.benchmark))
            if (h) keys.push_back(key);
        detail::parallel_for(keys.size(), o_.jobs, [&](std::size_t i) {
            const fs::path dir = layout_.repr_dir(keys[i]);
            const FeatureDataset features = load_feature_store(dir / "train.lsf");
            const LinearClassifier base = load_classifier(dir / "base_classifier.lsw");
            const HallucinationArtifacts art =
                learn_hallucinator(features, split, base, centroid_config(c_.pipeline, c_.benchmark.master_seed),
                                   c_.pipeline.mining, generator_config(c_.pipeline, c_.benchmark.master_seed));
            detail::write_text_file(dir / "centroids.json", encode_centroids(art.centroids));
            detail::write_text_file(dir / "quadruplets.json", encode_quadruplets(art.quadruplets));
            save_generator(art.generator, dir / "generator.lsg");
            detail::write_text_file(dir / "generator_trace.json", ordered_json(art.loss_trace).dump() + "\n");
        });
        std::vector<std::string> out;
        for (const auto& key : keys)
            for (const char* f : {"centroids.json", "quadruplets.json", "generator.lsg", "generator_trace.json"})
                out.push_back(rel(layout_.repr_dir(key) / f));
        return out;
    }

    std::vector<std::string> build_lowshot() {
        const ClassSplit split = load_split_manifest(split_path());
        std::map<std::string, PreparedRepresentation> reps;
        for (const auto& [key, h] : representation_keys(c_.benchmark)) {
            const fs::path dir = layout_.repr_dir(key);
            PreparedRepresentation p;
            p.train = load_feature_store(dir / "train.lsf");
            p.test = load_feature_store(dir / "test.lsf");
            p.base_classes = split.base;
            if (h) {
                HallucinationArtifacts art;
                art.centroids = decode_centroids(detail::read_text_file(dir / "centroids.json"));
                art.quadruplets = decode_quadruplets(detail::read_text_file(dir / "quadruplets.json"));
                art.generator = load_generator(dir / "generator.lsg");
                p.hallucinator = std::move(art);
            }
            reps.emplace(key, std::move(p));
        }
        auto lookup = [&](const std::string& key) -> const PreparedRepresentation& { return reps.at(key); };

        BenchmarkReport partial;
        BenchmarkReport report;
        try {
            report = run_benchmark(lookup, split, c_.benchmark, o_.jobs, &partial);
        } catch (...) {
            detail::write_text_file(layout_.report_partial(), encode_report(partial));
            throw;
        }
        std::error_code ec;
        fs::remove(layout_.report_partial(), ec);
        detail::write_text_file(layout_.report_json(), encode_report(report));
        detail::write_text_file(layout_.report_csv(), render_report_csv(report));
        detail::write_text_file(layout_.report_table(), render_report_table(report));
        return {rel(layout_.report_json()), rel(layout_.report_csv()), rel(layout_.report_table())};
    }

    std::vector<std::string> build_verify() {
        VerifyReport r;
        r.lipschitz = verify_lipschitz_bound(c_.lipschitz, o_.jobs);
        r.distance = verify_distance_bound(c_.distance, o_.jobs);
        r.gradnorm = gradnorm_distance_experiment(c_.gradnorm);
        r.spearman_threshold = c_.spearman_threshold;
        detail::write_text_file(layout_.verify_json(), encode_verify_report(r));
        return {rel(layout_.verify_json())};
    }

    const RunConfig& c_;
    const StageOptions& o_;
    RunLayout layout_;
    std::map<Stage, StageStatus> done_;
};

}  // namespace

std::string_view stage_name(Stage s) noexcept {
    switch (s) {
        case Stage::synth:
            return "synth";
        case Stage::train_repr:
            return "train-repr";
        case Stage::extract:
            return "extract";
        case Stage::hallucinate_prep:
            return "hallucinate-prep";
        case Stage::lowshot:
            return "lowshot";
        case Stage::verify:
            return "verify";
    }
    return "?";
}

fs::path RunLayout::stamp(Stage s) const { return root / "stamps" / (std::string(stage_name(s)) + ".json"); }

std::string stage_hash(const RunConfig& config, Stage stage) {
    ordered_json j;
    j["stage"] = std::string(stage_name(stage));
    ordered_json up = ordered_json::array();
    for (Stage pre : prerequisites(stage)) up.push_back(stage_hash(config, pre));
    j["upstream"] = std::move(up);
    j["inputs"] = stage_inputs(config, stage);
    return hash_json(j);
}

RunConfig parse_run_config(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("<root>", std::string("malformed JSON: ") + e.what());
    }
    RunConfig c;
    Fields f(doc, "");
    if (f.has("synthetic")) detail::from_json(f.sub("synthetic"), c.synthetic);
    f.get("world_seed", c.world_seed);
    f.get("split_seed", c.split_seed);
    if (f.has("data")) read_data_paths(f.sub("data"), c.data);
    if (f.has("pipeline")) detail::from_json(f.sub("pipeline"), c.pipeline);
    if (f.has("benchmark")) detail::from_json(f.sub("benchmark"), c.benchmark);
    if (f.has("verify")) {
        Fields v = f.sub("verify");
        if (v.has("lipschitz")) detail::from_json(v.sub("lipschitz"), c.lipschitz);
        if (v.has("distance")) detail::from_json(v.sub("distance"), c.distance);
        if (v.has("gradnorm")) detail::from_json(v.sub("gradnorm"), c.gradnorm);
        v.get("spearman_threshold", c.spearman_threshold);
        v.done();
        if (c.spearman_threshold < -1.0 || c.spearman_threshold > 1.0)
            throw ConfigError(v.path_of("spearman_threshold"), "must be in [-1, 1]");
    }
    f.done();
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    std::string text;
    try {
        text = detail::read_text_file(path);
    } catch (const IoError& e) {
        throw ConfigError("<file>", e.what());
    }
    return parse_run_config(text);
}

std::string encode_run_config(const RunConfig& c) {
    ordered_json j;
    j["synthetic"] = detail::to_json(c.synthetic);
    j["world_seed"] = c.world_seed;
    j["split_seed"] = c.split_seed;
    if (c.data.external()) j["data"] = {{"train", c.data.train}, {"test", c.data.test}, {"split", c.data.split}};
    j["pipeline"] = detail::to_json(c.pipeline);
    j["benchmark"] = detail::to_json(c.benchmark);
    j["verify"] = {{"lipschitz", detail::to_json(c.lipschitz)},
                   {"distance", detail::to_json(c.distance)},
                   {"gradnorm", detail::to_json(c.gradnorm)},
                   {"spearman_threshold", c.spearman_threshold}};
    return j.dump(2) + "\n";
}

StageStatus run_stage(const RunConfig& config, Stage stage, const StageOptions& options) {
    Runner runner(config, options);
    return runner.run(stage);
}

bool verify_passed(const StageOptions& options) {
    const auto j = nlohmann::json::parse(detail::read_text_file(RunLayout{options.out}.verify_json()));
    return j.at("passed").get<bool>();
}

}  // namespace lowshot
