#include "config_json.hpp"

namespace lowshot::detail {

namespace {

// Runs `validate` and re-raises its message against the object's path.
template <class Fn>
void checked(const Fields& f, Fn&& validate) {
    try {
        validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const InvalidArgument& e) {
        throw ConfigError(f.path().empty() ? "<root>" : f.path(), e.what());
    }
}

Regularizer read_regularizer(Fields& f, const std::string& key, Regularizer current) {
    std::string name(regularizer_name(current));
    f.get(key, name);
    const auto r = parse_regularizer(name);
    if (!r) throw ConfigError(f.path_of(key), "unknown regularizer '" + name + "'");
    return *r;
}

}  // namespace

ordered_json to_json(const ClassifierTrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"iterations", c.iterations},
            {"batch_size", c.batch_size},       {"weight_decay", c.weight_decay},
            {"momentum", c.momentum},           {"seed", c.seed},
            {"convergence_grad_tol", c.convergence_grad_tol}};
}

void from_json(Fields f, ClassifierTrainConfig& c) {
    f.get("learning_rate", c.learning_rate);
    f.get("iterations", c.iterations);
    f.get("batch_size", c.batch_size);
    f.get("weight_decay", c.weight_decay);
    f.get("momentum", c.momentum);
    f.get("seed", c.seed);
    f.get("convergence_grad_tol", c.convergence_grad_tol);
    f.done();
    if (c.iterations < 1) throw ConfigError(f.path_of("iterations"), "must be >= 1");
    if (c.batch_size < 1) throw ConfigError(f.path_of("batch_size"), "must be >= 1");
    if (!(c.learning_rate > 0.0)) throw ConfigError(f.path_of("learning_rate"), "must be > 0");
    if (c.weight_decay < 0.0) throw ConfigError(f.path_of("weight_decay"), "must be >= 0");
    if (c.momentum < 0.0 || c.momentum >= 1.0) throw ConfigError(f.path_of("momentum"), "must be in [0,1)");
}

ordered_json to_json(const HyperGrid& g) {
    return {{"learning_rates", g.learning_rates}, {"weight_decays", g.weight_decays}, {"k_min", g.k_min}};
}

void from_json(Fields f, HyperGrid& g) {
    f.get("learning_rates", g.learning_rates);
    f.get("weight_decays", g.weight_decays);
    f.get("k_min", g.k_min);
    f.done();
}

ordered_json to_json(const MethodSpec& m) {
    return {{"name", m.name},
            {"representation", std::string(regularizer_name(m.representation))},
            {"lambda", m.lambda},
            {"hallucinate", m.hallucinate},
            {"k_min", m.k_min}};
}

void from_json(Fields f, MethodSpec& m) {
    f.get("name", m.name, true);
    m.representation = read_regularizer(f, "representation", m.representation);
    f.get("lambda", m.lambda);
    f.get("hallucinate", m.hallucinate);
    f.get("k_min", m.k_min);
    f.done();
    if (m.name.empty()) throw ConfigError(f.path_of("name"), "must not be empty");
    if (m.lambda < 0.0) throw ConfigError(f.path_of("lambda"), "must be >= 0");
}

ordered_json to_json(const BenchmarkConfig& c) {
    ordered_json methods = ordered_json::array();
    for (const auto& m : c.methods) methods.push_back(to_json(m));
    return {{"shots", c.shots},
            {"trials", c.trials},
            {"methods", std::move(methods)},
            {"classifier", to_json(c.classifier)},
            {"grid", to_json(c.grid)},
            {"cv_trials", c.cv_trials},
            {"master_seed", c.master_seed}};
}

void from_json(Fields f, BenchmarkConfig& c) {
    f.get("shots", c.shots);
    f.get("trials", c.trials);
    if (f.has("methods")) {
        const ordered_json& arr = f.raw("methods");
        if (!arr.is_array()) throw ConfigError(f.path_of("methods"), "expected an array");
        c.methods.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            MethodSpec m;
            from_json(Fields(arr[i], f.path_of("methods") + "[" + std::to_string(i) + "]"), m);
            c.methods.push_back(std::move(m));
        }
    }
    if (f.has("classifier")) from_json(f.sub("classifier"), c.classifier);
    if (f.has("grid")) from_json(f.sub("grid"), c.grid);
    f.get("cv_trials", c.cv_trials);
    f.get("master_seed", c.master_seed);
    f.done();
    if (c.shots.empty()) throw ConfigError(f.path_of("shots"), "must not be empty");
    if (c.trials < 1) throw ConfigError(f.path_of("trials"), "must be >= 1");
    if (c.cv_trials < 1) throw ConfigError(f.path_of("cv_trials"), "must be >= 1");
    checked(f, [&] { c.validate(); });
}

ordered_json to_json(const ReprLossConfig& c) {
    return {{"kind", std::string(regularizer_name(c.kind))},
            {"lambda", c.lambda},
            {"triplet_margin", c.triplet_margin},
            {"epochs", c.epochs},
            {"learning_rate", c.learning_rate},
            {"lr_decay", c.lr_decay},
            {"lr_decay_period", c.lr_decay_period},
            {"weight_decay", c.weight_decay},
            {"momentum", c.momentum},
            {"batch_size", c.batch_size},
            {"triplet_epochs", c.triplet_epochs},
            {"seed", c.seed}};
}

void from_json(Fields f, ReprLossConfig& c) {
    c.kind = read_regularizer(f, "kind", c.kind);
    f.get("lambda", c.lambda);
    f.get("triplet_margin", c.triplet_margin);
    f.get("epochs", c.epochs);
    f.get("learning_rate", c.learning_rate);
    f.get("lr_decay", c.lr_decay);
    f.get("lr_decay_period", c.lr_decay_period);
    f.get("weight_decay", c.weight_decay);
    f.get("momentum", c.momentum);
    f.get("batch_size", c.batch_size);
    f.get("triplet_epochs", c.triplet_epochs);
    f.get("seed", c.seed);
    f.done();
    checked(f, [&] { c.validate(); });
}

ordered_json to_json(const CentroidConfig& c) {
    return {{"max_per_class", c.max_per_class}, {"max_iters", c.max_iters}, {"restarts", c.restarts}, {"seed", c.seed}};
}

void from_json(Fields f, CentroidConfig& c) {
    f.get("max_per_class", c.max_per_class);
    f.get("max_iters", c.max_iters);
    f.get("restarts", c.restarts);
    f.get("seed", c.seed);
    f.done();
    if (c.max_per_class < 1) throw ConfigError(f.path_of("max_per_class"), "must be >= 1");
    if (c.max_iters < 1) throw ConfigError(f.path_of("max_iters"), "must be >= 1");
    if (c.restarts < 1) throw ConfigError(f.path_of("restarts"), "must be >= 1");
}

ordered_json to_json(const GeneratorTrainConfig& c) {
    return {{"lambda", c.lambda},         {"learning_rate", c.learning_rate}, {"epochs", c.epochs},
            {"batch_size", c.batch_size}, {"hidden", c.hidden},               {"seed", c.seed}};
}

void from_json(Fields f, GeneratorTrainConfig& c) {
    f.get("lambda", c.lambda);
    f.get("learning_rate", c.learning_rate);
    f.get("epochs", c.epochs);
    f.get("batch_size", c.batch_size);
    f.get("hidden", c.hidden);
    f.get("seed", c.seed);
    f.done();
    checked(f, [&] { c.validate(); });
}

ordered_json to_json(const PipelineConfig& c) {
    return {{"hidden", c.hidden},
            {"feature_dim", c.feature_dim},
            {"repr", to_json(c.repr)},
            {"centroids", to_json(c.centroids)},
            {"mining", c.mining == MiningMode::best_match ? "best_match" : "all_positive"},
            {"generator", to_json(c.generator)}};
}

void from_json(Fields f, PipelineConfig& c) {
    f.get("hidden", c.hidden);
    f.get("feature_dim", c.feature_dim);
    if (f.has("repr")) from_json(f.sub("repr"), c.repr);
    if (f.has("centroids")) from_json(f.sub("centroids"), c.centroids);
    std::string mining = c.mining == MiningMode::best_match ? "best_match" : "all_positive";
    f.get("mining", mining);
    if (mining == "best_match")
        c.mining = MiningMode::best_match;
    else if (mining == "all_positive")
        c.mining = MiningMode::all_positive;
    else
        throw ConfigError(f.path_of("mining"), "expected \"best_match\" or \"all_positive\"");
    if (f.has("generator")) from_json(f.sub("generator"), c.generator);
    f.done();
    checked(f, [&] { c.validate(); });
}

ordered_json to_json(const SyntheticSpec& s) {
    return {{"raw_dim", s.raw_dim},
            {"base_count", s.base_count},
            {"novel_count", s.novel_count},
            {"mode_count", s.mode_count},
            {"class_mean_scale", s.class_mean_scale},
            {"mode_scale", s.mode_scale},
            {"noise_sigma", s.noise_sigma},
            {"examples_per_class", s.examples_per_class},
            {"test_per_class", s.test_per_class}};
}

void from_json(Fields f, SyntheticSpec& s) {
    f.get("raw_dim", s.raw_dim);
    f.get("base_count", s.base_count);
    f.get("novel_count", s.novel_count);
    f.get("mode_count", s.mode_count);
    f.get("class_mean_scale", s.class_mean_scale);
    f.get("mode_scale", s.mode_scale);
    f.get("noise_sigma", s.noise_sigma);
    f.get("examples_per_class", s.examples_per_class);
    f.get("test_per_class", s.test_per_class);
    f.done();
    if (s.raw_dim < 1) throw ConfigError(f.path_of("raw_dim"), "must be >= 1");
    if (s.base_count < 1) throw ConfigError(f.path_of("base_count"), "must be >= 1");
    if (s.novel_count < 1) throw ConfigError(f.path_of("novel_count"), "must be >= 1");
    if (s.mode_count < 1) throw ConfigError(f.path_of("mode_count"), "must be >= 1");
    if (!(s.class_mean_scale > 0.0)) throw ConfigError(f.path_of("class_mean_scale"), "must be > 0");
    if (!(s.mode_scale > 0.0)) throw ConfigError(f.path_of("mode_scale"), "must be > 0");
    if (s.noise_sigma < 0.0) throw ConfigError(f.path_of("noise_sigma"), "must be >= 0");
    if (s.examples_per_class < 1) throw ConfigError(f.path_of("examples_per_class"), "must be >= 1");
    checked(f, [&] { s.validate(); });
}

ordered_json to_json(const LipschitzSuiteConfig& c) {
    return {{"instances", c.instances},       {"max_classes", c.max_classes}, {"max_dim", c.max_dim},
            {"max_examples", c.max_examples}, {"tolerance", c.tolerance},     {"seed", c.seed}};
}

void from_json(Fields f, LipschitzSuiteConfig& c) {
    f.get("instances", c.instances);
    f.get("max_classes", c.max_classes);
    f.get("max_dim", c.max_dim);
    f.get("max_examples", c.max_examples);
    f.get("tolerance", c.tolerance);
    f.get("seed", c.seed);
    f.done();
    if (c.max_classes < 2) throw ConfigError(f.path_of("max_classes"), "must be >= 2");
    if (c.max_dim < 1) throw ConfigError(f.path_of("max_dim"), "must be >= 1");
    if (c.max_examples < 1) throw ConfigError(f.path_of("max_examples"), "must be >= 1");
    if (c.max_classes * c.max_dim > 200) throw ConfigError(f.path_of("max_dim"), "max_classes * max_dim must be <= 200");
    if (c.tolerance < 0.0) throw ConfigError(f.path_of("tolerance"), "must be >= 0");
}

ordered_json to_json(const DistanceSuiteConfig& c) {
    return {{"instances", c.instances}, {"samples_per_instance", c.samples_per_instance}, {"grad_tol", c.grad_tol},
            {"seed", c.seed}};
}

void from_json(Fields f, DistanceSuiteConfig& c) {
    f.get("instances", c.instances);
    f.get("samples_per_instance", c.samples_per_instance);
    f.get("grad_tol", c.grad_tol);
    f.get("seed", c.seed);
    f.done();
    if (!(c.grad_tol > 0.0)) throw ConfigError(f.path_of("grad_tol"), "must be > 0");
}

ordered_json to_json(const GradnormConfig& c) {
    return {{"classes", c.classes}, {"dim", c.dim},         {"examples", c.examples}, {"samples", c.samples},
            {"decades", c.decades}, {"grad_tol", c.grad_tol}, {"seed", c.seed}};
}

void from_json(Fields f, GradnormConfig& c) {
    f.get("classes", c.classes);
    f.get("dim", c.dim);
    f.get("examples", c.examples);
    f.get("samples", c.samples);
    f.get("decades", c.decades);
    f.get("grad_tol", c.grad_tol);
    f.get("seed", c.seed);
    f.done();
    if (c.classes < 2) throw ConfigError(f.path_of("classes"), "must be >= 2");
    if (c.dim < 1) throw ConfigError(f.path_of("dim"), "must be >= 1");
    if (c.examples < 1) throw ConfigError(f.path_of("examples"), "must be >= 1");
    if (c.samples < 2) throw ConfigError(f.path_of("samples"), "must be >= 2");
    if (!(c.decades > 0.0)) throw ConfigError(f.path_of("decades"), "must be > 0");
    if (!(c.grad_tol > 0.0)) throw ConfigError(f.path_of("grad_tol"), "must be > 0");
}

}  // namespace lowshot::detail
