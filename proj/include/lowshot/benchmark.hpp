#pragma once

#include "lowshot/classifier.hpp"
#include "lowshot/dataset.hpp"
#include "lowshot/hallucinator.hpp"
#include "lowshot/repr.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace lowshot {

// One row of the comparison: which representation to use and whether to
// hallucinate novel examples up to k_min (0 = choose k_min by cross-validation).
struct MethodSpec {
    std::string name;
    Regularizer representation = Regularizer::none;
    double lambda = 0.0;
    bool hallucinate = false;
    std::size_t k_min = 0;

    bool operator==(const MethodSpec&) const = default;
};

// Key shared by every method trained with the same representation loss.
std::string representation_key(Regularizer kind, double lambda);

struct HyperGrid {
    std::vector<double> learning_rates = {0.1};
    std::vector<double> weight_decays = {1e-4};
    std::vector<std::size_t> k_min = {2, 5, 10, 20};

    bool operator==(const HyperGrid&) const = default;
};

// Default method list: baseline, SGM, L2 feature penalty, baseline + hallucination.
std::vector<MethodSpec> default_methods();

// Desk-scale low-shot classifier: 1000 minibatch steps of 256.
inline ClassifierTrainConfig desk_classifier() {
    ClassifierTrainConfig c;
    c.iterations = 1000;
    c.batch_size = 256;
    return c;
}

struct BenchmarkConfig {
    std::vector<std::size_t> shots = {1, 2, 5, 10, 20};
    std::size_t trials = 5;
    std::vector<MethodSpec> methods = default_methods();
    ClassifierTrainConfig classifier = desk_classifier();  // learning_rate / weight_decay are taken from the grid
    HyperGrid grid;
    std::size_t cv_trials = 2;
    std::uint64_t master_seed = 0;

    void validate() const;
    bool operator==(const BenchmarkConfig&) const = default;
};

struct TrialResult {
    std::size_t n = 0;
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::size_t novel_test = 0, base_test = 0;
    std::size_t top1_novel_hits = 0, top5_novel_hits = 0;
    std::size_t top1_base_hits = 0, top5_base_hits = 0;
    double top1_novel = 0.0, top5_novel = 0.0;
    double top1_all = 0.0, top5_all = 0.0;
    double top1_base = 0.0, top5_base = 0.0;
    std::size_t train_examples = 0;
    std::size_t generated_examples = 0;

    bool operator==(const TrialResult&) const = default;
};

struct MetricSet {
    double top1_novel = 0.0, top5_novel = 0.0, top1_all = 0.0, top5_all = 0.0;
    bool operator==(const MetricSet&) const = default;
};

struct HyperChoice {
    double learning_rate = 0.0;
    double weight_decay = 0.0;
    std::size_t k_min = 0;
    double cv_score = -1.0;  // mean top-5 on the C1 universe; -1 when nothing was evaluated
    bool operator==(const HyperChoice&) const = default;
};

struct ShotSummary {
    std::size_t n = 0;
    HyperChoice chosen;
    std::vector<TrialResult> trials;
    MetricSet mean;
    MetricSet std;  // population standard deviation over trials
    bool operator==(const ShotSummary&) const = default;
};

struct MethodReport {
    MethodSpec method;
    std::vector<ShotSummary> shots;
    bool operator==(const MethodReport&) const = default;
};

struct BenchmarkReport {
    BenchmarkConfig config;
    std::vector<MethodReport> methods;
    bool operator==(const BenchmarkReport&) const = default;
};

// Mean and population std of each metric over `trials`.
void summarize(ShotSummary& summary);

// ---- Phase artifacts ------------------------------------------------------

struct RepresentationArtifacts {
    MlpExtractor extractor;
    LinearClassifier base_classifier;  // over split.base in ascending order
    std::vector<double> loss_trace;
};

// Representation learning on every base class (labels remapped to
// positions in split.base).
RepresentationArtifacts learn_representation(const FeatureDataset& raw_train, const ClassSplit& split,
                                             const std::vector<std::size_t>& sizes, const ReprLossConfig& config);

struct HallucinationArtifacts {
    CentroidSet centroids;  // class ids are positions in split.base
    std::vector<AnalogyQuadruplet> quadruplets;
    GeneratorNet generator;
    std::vector<double> loss_trace;
};

HallucinationArtifacts learn_hallucinator(const FeatureDataset& train_features, const ClassSplit& split,
                                          const LinearClassifier& base_classifier, const CentroidConfig& centroids,
                                          MiningMode mining, const GeneratorTrainConfig& generator);

// Features of one representation plus its optional hallucinator.
struct PreparedRepresentation {
    FeatureDataset train;  // original class ids
    FeatureDataset test;
    std::vector<std::uint32_t> base_classes;  // split.base; positions index the centroid set
    std::optional<HallucinationArtifacts> hallucinator;
};

// ---- Low-shot phase -------------------------------------------------------

struct LowShotUniverse {
    std::vector<std::uint32_t> base;   // original ids, ascending
    std::vector<std::uint32_t> novel;  // original ids, ascending
};

struct LowShotSettings {
    ClassifierTrainConfig classifier;
    bool hallucinate = false;
    std::size_t k_min = 0;
};

// Called with the original class id of every example (train, test or
// centroid) the low-shot phase reads.
using AccessHook = std::function<void(std::uint32_t class_id)>;

// Samples n examples per novel class, optionally hallucinates up to k_min,
// trains a classifier over the joint label space (base first, then novel)
// and evaluates top-1 / top-min(5, K) on the universe's test examples.
TrialResult run_low_shot_phase(const PreparedRepresentation& rep, const LowShotUniverse& universe, std::size_t n,
                               std::size_t trial, std::uint64_t trial_seed, const LowShotSettings& settings,
                               const AccessHook& hook = {});

// Seed shared by every method for the same (n, trial), so that comparisons
// between methods see identical novel-example draws.
std::uint64_t trial_seed(std::uint64_t master_seed, std::size_t n, std::size_t trial);

// Evaluates every grid point on the C1 halves, scoring mean top-5 accuracy
// over all C1 test examples across cv_trials draws; the first maximizer wins.
HyperChoice cross_validate(const PreparedRepresentation& rep, const ClassSplit& split, const MethodSpec& method,
                           std::size_t n, const BenchmarkConfig& config, std::size_t jobs = 1,
                           const AccessHook& hook = {});

// Grid points in evaluation order for `method`.
std::vector<HyperChoice> grid_points(const MethodSpec& method, const HyperGrid& grid);

// Runs every method x shot x trial on the C2 halves. `reps` is keyed by
// representation_key. On failure the partially filled report is written to
// `partial` (when given) before rethrowing.
BenchmarkReport run_benchmark(const std::function<const PreparedRepresentation&(const std::string&)>& reps,
                              const ClassSplit& split, const BenchmarkConfig& config, std::size_t jobs = 1,
                              BenchmarkReport* partial = nullptr);

// ---- End-to-end pipeline ---------------------------------------------------

struct PipelineConfig {
    std::vector<std::size_t> hidden = {64, 64};
    std::size_t feature_dim = 32;
    ReprLossConfig repr;  // kind and lambda come from each method
    CentroidConfig centroids{.max_per_class = 10};
    MiningMode mining = MiningMode::best_match;
    GeneratorTrainConfig generator;

    void validate() const;
    bool operator==(const PipelineConfig&) const = default;
};

// Representation / generator seeds derived from the master seed.
ReprLossConfig representation_config(const PipelineConfig& pipeline, const MethodSpec& method,
                                     std::uint64_t master_seed);
CentroidConfig centroid_config(const PipelineConfig& pipeline, std::uint64_t master_seed);
GeneratorTrainConfig generator_config(const PipelineConfig& pipeline, std::uint64_t master_seed);

BenchmarkReport run_pipeline(const FeatureDataset& raw_train, const FeatureDataset& raw_test, const ClassSplit& split,
                             const PipelineConfig& pipeline, const BenchmarkConfig& config, std::size_t jobs = 1);

// ---- Report rendering ------------------------------------------------------

std::string encode_report(const BenchmarkReport& report);
BenchmarkReport decode_report(const std::string& text);
// Aligned human-readable tables, one block per metric family.
std::string render_report_table(const BenchmarkReport& report);
// method,n,metric,subset,mean,std
std::string render_report_csv(const BenchmarkReport& report);

}  // namespace lowshot
