#include "lowshot/benchmark.hpp"

#include "config_json.hpp"
#include "lowshot/error.hpp"
#include "lowshot/rng.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

namespace lowshot {

std::string representation_key(Regularizer kind, double lambda) {
    std::string key(regularizer_name(kind));
    if (kind == Regularizer::none) return key;
    char buf[64];
    std::snprintf(buf, sizeof buf, "@%.17g", lambda);
    return key + buf;
}

void BenchmarkConfig::validate() const {
    LOWSHOT_REQUIRE(!shots.empty(), "benchmark config: shot list is empty");
    for (std::size_t n : shots) LOWSHOT_REQUIRE(n >= 1, "benchmark config: shots must be >= 1");
    LOWSHOT_REQUIRE(std::set<std::size_t>(shots.begin(), shots.end()).size() == shots.size(),
                    "benchmark config: duplicate shot value");
    LOWSHOT_REQUIRE(trials >= 1, "benchmark config: trials must be >= 1");
    LOWSHOT_REQUIRE(cv_trials >= 1, "benchmark config: cv_trials must be >= 1");
    LOWSHOT_REQUIRE(classifier.iterations >= 1 && classifier.batch_size >= 1,
                    "benchmark config: classifier iterations and batch_size must be >= 1");
    LOWSHOT_REQUIRE(!grid.learning_rates.empty() && !grid.weight_decays.empty(),
                    "benchmark config: the hyperparameter grid is empty");
    for (double lr : grid.learning_rates) LOWSHOT_REQUIRE(lr > 0.0, "benchmark config: grid learning rates must be > 0");
    for (double wd : grid.weight_decays) LOWSHOT_REQUIRE(wd >= 0.0, "benchmark config: grid weight decays must be >= 0");
    for (std::size_t k : grid.k_min) LOWSHOT_REQUIRE(k >= 1, "benchmark config: grid k_min values must be >= 1");
    std::set<std::string> names;
    for (const auto& m : methods) {
        LOWSHOT_REQUIRE(!m.name.empty(), "benchmark config: method name is empty");
        LOWSHOT_REQUIRE(names.insert(m.name).second, "benchmark config: duplicate method name '" + m.name + "'");
        LOWSHOT_REQUIRE(m.lambda >= 0.0, "benchmark config: method lambda must be >= 0");
        if (m.hallucinate && m.k_min == 0)
            LOWSHOT_REQUIRE(!grid.k_min.empty(), "benchmark config: method '" + m.name +
                                                     "' cross-validates k_min but the grid has no k_min values");
    }
}

std::vector<MethodSpec> default_methods() {
    return {
        {"baseline", Regularizer::none, 0.0, false, 0},
        {"sgm", Regularizer::sgm, 0.01, false, 0},
        {"l2_feat", Regularizer::l2_feat, 0.002, false, 0},
        {"baseline+hallucination", Regularizer::none, 0.0, true, 0},
    };
}

void summarize(ShotSummary& summary) {
    const std::size_t t = summary.trials.size();
    summary.mean = {};
    summary.std = {};
    if (t == 0) return;
    auto stat = [&](double TrialResult::*field, double& mean, double& sd) {
        const double first = summary.trials.front().*field;
        bool all_equal = true;
        double sum = 0.0;
        for (const auto& r : summary.trials) {
            sum += r.*field;
            all_equal = all_equal && (r.*field == first);
        }
        if (all_equal) {
            mean = first;
            sd = 0.0;
            return;
        }
        mean = sum / static_cast<double>(t);
        double ss = 0.0;
        for (const auto& r : summary.trials) ss += (r.*field - mean) * (r.*field - mean);
        sd = std::sqrt(ss / static_cast<double>(t));
    };
    stat(&TrialResult::top1_novel, summary.mean.top1_novel, summary.std.top1_novel);
    stat(&TrialResult::top5_novel, summary.mean.top5_novel, summary.std.top5_novel);
    stat(&TrialResult::top1_all, summary.mean.top1_all, summary.std.top1_all);
    stat(&TrialResult::top5_all, summary.mean.top5_all, summary.std.top5_all);
}

RepresentationArtifacts learn_representation(const FeatureDataset& raw_train, const ClassSplit& split,
                                             const std::vector<std::size_t>& sizes, const ReprLossConfig& config) {
    split.validate(raw_train.class_count);
    const FeatureDataset base = relabel(raw_train.restricted_to(split.base), split.base);
    ReprTrainResult r = train_representation(base, sizes, config);
    return {std::move(r.extractor), std::move(r.classifier), std::move(r.loss_trace)};
}

HallucinationArtifacts learn_hallucinator(const FeatureDataset& train_features, const ClassSplit& split,
                                          const LinearClassifier& base_classifier, const CentroidConfig& centroids,
                                          MiningMode mining, const GeneratorTrainConfig& generator) {
    const FeatureDataset base = relabel(train_features.restricted_to(split.base), split.base);
    HallucinationArtifacts out;
    out.centroids = compute_centroids(base, centroids);
    out.quadruplets = mine_quadruplets(out.centroids, mining);
    GeneratorTrainResult g = train_generator(out.quadruplets, out.centroids, base_classifier, generator);
    out.generator = std::move(g.generator);
    out.loss_trace = std::move(g.loss_trace);
    return out;
}

std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t n, std::size_t trial) {
    return derive_seed({master_seed, 0x7472'6961'6cULL, n, trial});
}

namespace {

// Rows of `data` whose class is in the universe, relabeled to the joint label
// space (base first, then novel). Only the copied rows are reported to `hook`.
FeatureDataset gather_universe(const FeatureDataset& data, const std::vector<std::int64_t>& joint_of,
                               std::uint32_t joint_count, const AccessHook& hook) {
    FeatureDataset out;
    out.class_count = joint_count;
    out.features = DenseMatrix(0, data.dim());
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const std::uint32_t y = data.labels[i];
        if (y < joint_of.size() && joint_of[y] >= 0) rows.push_back(i);
    }
    std::vector<double> flat;
    flat.reserve(rows.size() * data.dim());
    for (std::size_t i : rows) {
        if (hook) hook(data.labels[i]);
        const auto r = data.features.row(i);
        flat.insert(flat.end(), r.begin(), r.end());
        out.labels.push_back(static_cast<std::uint32_t>(joint_of[data.labels[i]]));
    }
    out.features = DenseMatrix(rows.size(), data.dim(), std::move(flat));
    return out;
}

}  // namespace

TrialResult run_low_shot_phase(const PreparedRepresentation& rep, const LowShotUniverse& universe, std::size_t n,
                               std::size_t trial, std::uint64_t seed, const LowShotSettings& settings,
                               const AccessHook& hook) {
    LOWSHOT_REQUIRE(!universe.novel.empty(), "run_low_shot_phase: no novel classes");
    LOWSHOT_REQUIRE(n >= 1, "run_low_shot_phase: n must be >= 1");
    const std::uint32_t class_space = std::max(rep.train.class_count, rep.test.class_count);
    std::vector<std::int64_t> joint_of(class_space, -1);
    std::uint32_t next = 0;
    for (const auto* list : {&universe.base, &universe.novel})
        for (std::uint32_t c : *list) {
            LOWSHOT_REQUIRE(c < class_space, "run_low_shot_phase: universe class out of range");
            LOWSHOT_REQUIRE(joint_of[c] < 0, "run_low_shot_phase: class listed twice in the universe");
            joint_of[c] = next++;
        }
    const std::uint32_t k_count = next;
    const auto b_count = static_cast<std::uint32_t>(universe.base.size());
    std::vector<std::uint32_t> joint_base(b_count), joint_novel(k_count - b_count);
    for (std::uint32_t i = 0; i < b_count; ++i) joint_base[i] = i;
    for (std::uint32_t i = b_count; i < k_count; ++i) joint_novel[i - b_count] = i;

    const FeatureDataset train = gather_universe(rep.train, joint_of, k_count, hook);
    LowShotTrainSet set = sample_low_shot(train, joint_base, joint_novel, n, derive_seed({seed, 1}));

    TrialResult r;
    r.n = n;
    r.trial = trial;
    r.seed = seed;
    if (settings.hallucinate && settings.k_min > n) {
        if (!rep.hallucinator) throw InvalidArgument("run_low_shot_phase: hallucination requested without a generator");
        CentroidSet donors;
        donors.max_per_class = rep.hallucinator->centroids.max_per_class;
        for (std::uint32_t c : universe.base) {
            const auto it = std::lower_bound(rep.base_classes.begin(), rep.base_classes.end(), c);
            if (it == rep.base_classes.end() || *it != c) continue;
            const auto* found = rep.hallucinator->centroids.find(static_cast<std::uint32_t>(it - rep.base_classes.begin()));
            if (found == nullptr) continue;
            if (hook) hook(c);
            donors.classes.push_back(*found);
        }
        const std::size_t before = set.data.size();
        set = augment_low_shot(set, rep.hallucinator->generator, donors, settings.k_min, derive_seed({seed, 2}));
        r.generated_examples = set.data.size() - before;
    }
    r.train_examples = set.data.size();

    ClassifierTrainConfig cfg = settings.classifier;
    cfg.seed = derive_seed({seed, 3});
    const LinearClassifier clf = train_classifier(set.data.features, set.data.labels, k_count, cfg).classifier;

    const FeatureDataset test = gather_universe(rep.test, joint_of, k_count, hook);
    const std::size_t top = std::min<std::size_t>(5, k_count);
    const auto novel1 = count_topk(clf, test.features, test.labels, 1, std::span<const std::uint32_t>(joint_novel));
    const auto novel5 = count_topk(clf, test.features, test.labels, top, std::span<const std::uint32_t>(joint_novel));
    const auto base1 = count_topk(clf, test.features, test.labels, 1, std::span<const std::uint32_t>(joint_base));
    const auto base5 = count_topk(clf, test.features, test.labels, top, std::span<const std::uint32_t>(joint_base));
    LOWSHOT_REQUIRE(novel1.total > 0, "run_low_shot_phase: no novel-class test examples");

    r.novel_test = novel1.total;
    r.base_test = base1.total;
    r.top1_novel_hits = novel1.hits;
    r.top5_novel_hits = novel5.hits;
    r.top1_base_hits = base1.hits;
    r.top5_base_hits = base5.hits;
    r.top1_novel = novel1.accuracy();
    r.top5_novel = novel5.accuracy();
    r.top1_base = base1.accuracy();
    r.top5_base = base5.accuracy();
    const double all = static_cast<double>(r.novel_test + r.base_test);
    r.top1_all = static_cast<double>(r.top1_novel_hits + r.top1_base_hits) / all;
    r.top5_all = static_cast<double>(r.top5_novel_hits + r.top5_base_hits) / all;
    return r;
}

std::vector<HyperChoice> grid_points(const MethodSpec& method, const HyperGrid& grid) {
    std::vector<std::size_t> ks = {method.k_min};
    if (method.hallucinate && method.k_min == 0) ks = grid.k_min;
    std::vector<HyperChoice> out;
    for (double lr : grid.learning_rates)
        for (double wd : grid.weight_decays)
            for (std::size_t k : ks) out.push_back({lr, wd, method.hallucinate ? k : 0, -1.0});
    return out;
}

HyperChoice cross_validate(const PreparedRepresentation& rep, const ClassSplit& split, const MethodSpec& method,
                           std::size_t n, const BenchmarkConfig& config, std::size_t jobs, const AccessHook& hook) {
    const std::vector<HyperChoice> points = grid_points(method, config.grid);
    if (points.empty()) throw InvalidArgument("cross_validate: empty hyperparameter grid");
    if (points.size() == 1) return points.front();

    const LowShotUniverse universe{split.cv_base_1, split.cv_novel_1};
    const std::size_t t_count = config.cv_trials;
    std::vector<double> scores(points.size() * t_count, 0.0);
    std::vector<char> diverged(points.size() * t_count, 0);
    std::mutex hook_mu;
    AccessHook locked;
    if (hook) locked = [&](std::uint32_t c) {
        std::lock_guard lock(hook_mu);
        hook(c);
    };
    detail::parallel_for(scores.size(), jobs, [&](std::size_t task) {
        const std::size_t p = task / t_count, t = task % t_count;
        LowShotSettings s;
        s.classifier = config.classifier;
        s.classifier.learning_rate = points[p].learning_rate;
        s.classifier.weight_decay = points[p].weight_decay;
        s.hallucinate = method.hallucinate;
        s.k_min = points[p].k_min;
        const std::uint64_t seed = derive_seed({config.master_seed, 0x6376ULL, n, t});
        try {
            scores[task] = run_low_shot_phase(rep, universe, n, t, seed, s, locked).top5_all;
        } catch (const DivergenceError&) {
            diverged[task] = 1;
        }
    });

    std::size_t best = points.size();
    double best_score = -1.0;
    for (std::size_t p = 0; p < points.size(); ++p) {
        bool ok = true;
        double sum = 0.0;
        for (std::size_t t = 0; t < t_count; ++t) {
            ok = ok && !diverged[p * t_count + t];
            sum += scores[p * t_count + t];
        }
        if (!ok) continue;
        const double mean = sum / static_cast<double>(t_count);
        if (mean > best_score) {
            best_score = mean;
            best = p;
        }
    }
    if (best == points.size()) throw Error("cross_validate: training diverged at every grid point");
    HyperChoice choice = points[best];
    choice.cv_score = best_score;
    return choice;
}

BenchmarkReport run_benchmark(const std::function<const PreparedRepresentation&(const std::string&)>& reps,
                              const ClassSplit& split, const BenchmarkConfig& config, std::size_t jobs,
                              BenchmarkReport* partial) {
    config.validate();
    BenchmarkReport report;
    report.config = config;
    struct Task {
        std::size_t method, shot, trial;
    };
    std::vector<Task> tasks;
    for (std::size_t m = 0; m < config.methods.size(); ++m) {
        MethodReport mr;
        mr.method = config.methods[m];
        for (std::size_t s = 0; s < config.shots.size(); ++s) {
            ShotSummary ss;
            ss.n = config.shots[s];
            ss.trials.resize(config.trials);
            mr.shots.push_back(std::move(ss));
            for (std::size_t t = 0; t < config.trials; ++t) tasks.push_back({m, s, t});
        }
        report.methods.push_back(std::move(mr));
    }
    std::vector<char> done(tasks.size(), 0);
    const LowShotUniverse universe{split.cv_base_2, split.cv_novel_2};

    auto assemble_partial = [&] {
        if (partial == nullptr) return;
        *partial = report;
        std::size_t i = 0;
        for (auto& mr : partial->methods)
            for (auto& ss : mr.shots) {
                std::vector<TrialResult> kept;
                for (std::size_t t = 0; t < ss.trials.size(); ++t, ++i)
                    if (done[i]) kept.push_back(ss.trials[t]);
                ss.trials = std::move(kept);
                summarize(ss);
            }
    };

    try {
        for (auto& mr : report.methods) {
            const PreparedRepresentation& rep = reps(representation_key(mr.method.representation, mr.method.lambda));
            for (auto& ss : mr.shots) ss.chosen = cross_validate(rep, split, mr.method, ss.n, config, jobs);
        }
        detail::parallel_for(tasks.size(), jobs, [&](std::size_t i) {
            const Task& task = tasks[i];
            MethodReport& mr = report.methods[task.method];
            ShotSummary& ss = mr.shots[task.shot];
            const PreparedRepresentation& rep = reps(representation_key(mr.method.representation, mr.method.lambda));
            LowShotSettings s;
            s.classifier = config.classifier;
            s.classifier.learning_rate = ss.chosen.learning_rate;
            s.classifier.weight_decay = ss.chosen.weight_decay;
            s.hallucinate = mr.method.hallucinate;
            s.k_min = ss.chosen.k_min;
            ss.trials[task.trial] = run_low_shot_phase(rep, universe, ss.n, task.trial,
                                                       trial_seed(config.master_seed, ss.n, task.trial), s);
            done[i] = 1;
        });
    } catch (...) {
        assemble_partial();
        throw;
    }
    for (auto& mr : report.methods)
        for (auto& ss : mr.shots) summarize(ss);
    return report;
}

void PipelineConfig::validate() const {
    LOWSHOT_REQUIRE(feature_dim >= 1, "pipeline config: feature_dim must be >= 1");
    for (std::size_t h : hidden) LOWSHOT_REQUIRE(h >= 1, "pipeline config: hidden sizes must be >= 1");
    repr.validate();
    generator.validate();
    LOWSHOT_REQUIRE(centroids.max_per_class >= 1 && centroids.max_iters >= 1 && centroids.restarts >= 1,
                    "pipeline config: centroid settings must be >= 1");
}

ReprLossConfig representation_config(const PipelineConfig& pipeline, const MethodSpec& method,
                                     std::uint64_t master_seed) {
    ReprLossConfig c = pipeline.repr;
    c.kind = method.representation;
    c.lambda = method.lambda;
    c.seed = derive_seed({master_seed, 0x7265'7072ULL, pipeline.repr.seed});
    return c;
}

CentroidConfig centroid_config(const PipelineConfig& pipeline, std::uint64_t master_seed) {
    CentroidConfig c = pipeline.centroids;
    c.seed = derive_seed({master_seed, 0x6b6d'6561'6e73ULL, pipeline.centroids.seed});
    return c;
}

GeneratorTrainConfig generator_config(const PipelineConfig& pipeline, std::uint64_t master_seed) {
    GeneratorTrainConfig c = pipeline.generator;
    c.seed = derive_seed({master_seed, 0x6765'6eULL, pipeline.generator.seed});
    return c;
}

namespace {

FeatureDataset stored(const FeatureDataset& d) { return decode_feature_store(encode_feature_store(d)); }

}  // namespace

BenchmarkReport run_pipeline(const FeatureDataset& raw_train, const FeatureDataset& raw_test, const ClassSplit& split,
                             const PipelineConfig& pipeline, const BenchmarkConfig& config, std::size_t jobs) {
    pipeline.validate();
    config.validate();
    raw_train.validate();
    raw_test.validate();

    std::vector<std::string> keys;
    std::map<std::string, const MethodSpec*> first_of;
    std::map<std::string, bool> needs_generator;
    for (const auto& m : config.methods) {
        const std::string key = representation_key(m.representation, m.lambda);
        if (!first_of.count(key)) {
            keys.push_back(key);
            first_of[key] = &m;
        }
        needs_generator[key] = needs_generator[key] || m.hallucinate;
    }

    std::vector<std::size_t> sizes = {raw_train.dim()};
    sizes.insert(sizes.end(), pipeline.hidden.begin(), pipeline.hidden.end());
    sizes.push_back(pipeline.feature_dim);

    // Every artifact passes through its storage format so that a staged run
    // that saves and reloads between phases produces the same report.
    const FeatureDataset train_in = stored(raw_train);
    const FeatureDataset test_in = stored(raw_test);

    std::vector<PreparedRepresentation> prepared(keys.size());
    detail::parallel_for(keys.size(), jobs, [&](std::size_t i) {
        const MethodSpec& m = *first_of[keys[i]];
        const RepresentationArtifacts art =
            learn_representation(train_in, split, sizes, representation_config(pipeline, m, config.master_seed));
        const MlpExtractor extractor = decode_extractor(encode_extractor(art.extractor));
        PreparedRepresentation& p = prepared[i];
        p.train = stored(extract_features(extractor, train_in));
        p.test = stored(extract_features(extractor, test_in));
        p.base_classes = split.base;
        if (needs_generator[keys[i]]) {
            HallucinationArtifacts h =
                learn_hallucinator(p.train, split, decode_classifier(encode_classifier(art.base_classifier)),
                                   centroid_config(pipeline, config.master_seed), pipeline.mining,
                                   generator_config(pipeline, config.master_seed));
            h.centroids = decode_centroids(encode_centroids(h.centroids));
            h.quadruplets = decode_quadruplets(encode_quadruplets(h.quadruplets));
            h.generator = decode_generator(encode_generator(h.generator));
            p.hallucinator = std::move(h);
        }
    });

    auto lookup = [&](const std::string& key) -> const PreparedRepresentation& {
        const auto it = std::find(keys.begin(), keys.end(), key);
        if (it == keys.end()) throw InvalidArgument("no representation prepared for '" + key + "'");
        return prepared[static_cast<std::size_t>(it - keys.begin())];
    };
    return run_benchmark(lookup, split, config, jobs);
}

// ---- Report rendering ------------------------------------------------------

namespace {

using detail::Fields;
using detail::ordered_json;

ordered_json metrics_json(const MetricSet& m) {
    return {{"top1_novel", m.top1_novel}, {"top5_novel", m.top5_novel}, {"top1_all", m.top1_all}, {"top5_all", m.top5_all}};
}

MetricSet metrics_from(Fields f) {
    MetricSet m;
    f.get("top1_novel", m.top1_novel, true);
    f.get("top5_novel", m.top5_novel, true);
    f.get("top1_all", m.top1_all, true);
    f.get("top5_all", m.top5_all, true);
    f.done();
    return m;
}

ordered_json trial_json(const TrialResult& r) {
    return {{"n", r.n},
            {"trial", r.trial},
            {"seed", r.seed},
            {"novel_test", r.novel_test},
            {"base_test", r.base_test},
            {"top1_novel_hits", r.top1_novel_hits},
            {"top5_novel_hits", r.top5_novel_hits},
            {"top1_base_hits", r.top1_base_hits},
            {"top5_base_hits", r.top5_base_hits},
            {"top1_novel", r.top1_novel},
            {"top5_novel", r.top5_novel},
            {"top1_all", r.top1_all},
            {"top5_all", r.top5_all},
            {"top1_base", r.top1_base},
            {"top5_base", r.top5_base},
            {"train_examples", r.train_examples},
            {"generated_examples", r.generated_examples}};
}

TrialResult trial_from(Fields f) {
    TrialResult r;
    f.get("n", r.n, true);
    f.get("trial", r.trial, true);
    f.get("seed", r.seed, true);
    f.get("novel_test", r.novel_test, true);
    f.get("base_test", r.base_test, true);
    f.get("top1_novel_hits", r.top1_novel_hits, true);
    f.get("top5_novel_hits", r.top5_novel_hits, true);
    f.get("top1_base_hits", r.top1_base_hits, true);
    f.get("top5_base_hits", r.top5_base_hits, true);
    f.get("top1_novel", r.top1_novel, true);
    f.get("top5_novel", r.top5_novel, true);
    f.get("top1_all", r.top1_all, true);
    f.get("top5_all", r.top5_all, true);
    f.get("top1_base", r.top1_base, true);
    f.get("top5_base", r.top5_base, true);
    f.get("train_examples", r.train_examples, true);
    f.get("generated_examples", r.generated_examples, true);
    f.done();
    return r;
}

}  // namespace

std::string encode_report(const BenchmarkReport& report) {
    ordered_json doc;
    doc["config"] = detail::to_json(report.config);
    ordered_json methods = ordered_json::array();
    ordered_json results = ordered_json::object();
    for (const auto& mr : report.methods) {
        methods.push_back(detail::to_json(mr.method));
        ordered_json per_n = ordered_json::object();
        for (const auto& ss : mr.shots) {
            ordered_json trials = ordered_json::array();
            for (const auto& t : ss.trials) trials.push_back(trial_json(t));
            per_n[std::to_string(ss.n)] = {{"chosen",
                                            {{"learning_rate", ss.chosen.learning_rate},
                                             {"weight_decay", ss.chosen.weight_decay},
                                             {"k_min", ss.chosen.k_min},
                                             {"cv_score", ss.chosen.cv_score}}},
                                           {"trials", std::move(trials)},
                                           {"mean", metrics_json(ss.mean)},
                                           {"std", metrics_json(ss.std)}};
        }
        results[mr.method.name] = std::move(per_n);
    }
    doc["methods"] = std::move(methods);
    doc["results"] = std::move(results);
    return doc.dump(1) + "\n";
}

BenchmarkReport decode_report(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("report: ") + e.what(), e.byte);
    }
    try {
        BenchmarkReport report;
        Fields root(doc, "");
        detail::from_json(root.sub("config"), report.config);
        const ordered_json& methods = root.raw("methods");
        if (!methods.is_array()) throw ConfigError("methods", "expected an array");
        Fields results = root.sub("results");
        for (std::size_t i = 0; i < methods.size(); ++i) {
            MethodReport mr;
            detail::from_json(Fields(methods[i], "methods[" + std::to_string(i) + "]"), mr.method);
            Fields per_n = results.sub(mr.method.name);
            for (const auto& item : results.raw(mr.method.name).items()) {
                ShotSummary ss;
                try {
                    ss.n = std::stoul(item.key());
                } catch (const std::exception&) {
                    throw ConfigError(per_n.path_of(item.key()), "expected a shot count");
                }
                Fields shot = per_n.sub(item.key());
                Fields chosen = shot.sub("chosen");
                chosen.get("learning_rate", ss.chosen.learning_rate, true);
                chosen.get("weight_decay", ss.chosen.weight_decay, true);
                chosen.get("k_min", ss.chosen.k_min, true);
                chosen.get("cv_score", ss.chosen.cv_score, true);
                chosen.done();
                const ordered_json& trials = shot.raw("trials");
                if (!trials.is_array()) throw ConfigError(shot.path_of("trials"), "expected an array");
                for (std::size_t t = 0; t < trials.size(); ++t)
                    ss.trials.push_back(trial_from(Fields(trials[t], shot.path_of("trials") + "[" + std::to_string(t) + "]")));
                ss.mean = metrics_from(shot.sub("mean"));
                ss.std = metrics_from(shot.sub("std"));
                shot.done();
                mr.shots.push_back(std::move(ss));
            }
            per_n.done();
            report.methods.push_back(std::move(mr));
        }
        results.done();
        root.done();
        return report;
    } catch (const ConfigError& e) {
        throw ParseError(std::string("report: ") + e.what(), 0);
    }
}

std::string render_report_table(const BenchmarkReport& report) {
    std::ostringstream out;
    const std::vector<std::size_t>& shots = report.config.shots;
    std::size_t name_w = 6;
    for (const auto& mr : report.methods) name_w = std::max(name_w, mr.method.name.size());
    struct Family {
        const char* title;
        double MetricSet::*field;
    };
    const Family families[] = {{"top-1 novel", &MetricSet::top1_novel},
                               {"top-5 novel", &MetricSet::top5_novel},
                               {"top-1 all", &MetricSet::top1_all},
                               {"top-5 all", &MetricSet::top5_all}};
    char cell[64];
    for (const auto& fam : families) {
        out << fam.title << " (%, mean +- std over trials)\n";
        out << std::string(name_w, ' ');
        for (std::size_t n : shots) {
            std::snprintf(cell, sizeof cell, " %15s", ("n=" + std::to_string(n)).c_str());
            out << cell;
        }
        out << '\n';
        for (const auto& mr : report.methods) {
            out << mr.method.name << std::string(name_w - mr.method.name.size(), ' ');
            for (std::size_t n : shots) {
                const auto it = std::find_if(mr.shots.begin(), mr.shots.end(),
                                             [&](const ShotSummary& s) { return s.n == n; });
                if (it == mr.shots.end() || it->trials.empty()) {
                    std::snprintf(cell, sizeof cell, " %15s", "-");
                } else {
                    char v[48];
                    std::snprintf(v, sizeof v, "%.2f +- %.2f", 100.0 * (it->mean.*fam.field),
                                  100.0 * (it->std.*fam.field));
                    std::snprintf(cell, sizeof cell, " %15s", v);
                }
                out << cell;
            }
            out << '\n';
        }
        out << '\n';
    }
    return out.str();
}

std::string render_report_csv(const BenchmarkReport& report) {
    std::ostringstream out;
    out << "method,n,metric,subset,mean,std\n";
    auto quoted = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    };
    char buf[128];
    for (const auto& mr : report.methods)
        for (const auto& ss : mr.shots) {
            const struct {
                const char* metric;
                const char* subset;
                double MetricSet::*field;
            } rows[] = {{"top1", "novel", &MetricSet::top1_novel},
                        {"top1", "all", &MetricSet::top1_all},
                        {"top5", "novel", &MetricSet::top5_novel},
                        {"top5", "all", &MetricSet::top5_all}};
            for (const auto& r : rows) {
                std::snprintf(buf, sizeof buf, ",%zu,%s,%s,%.6f,%.6f\n", ss.n, r.metric, r.subset, ss.mean.*r.field,
                              ss.std.*r.field);
                out << quoted(mr.method.name) << buf;
            }
        }
    return out.str();
}

}  // namespace lowshot
