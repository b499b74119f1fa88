#pragma once

#include "lowshot/numerics.hpp"
#include "lowshot/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lowshot {

// N examples of dimension d with labels in [0, class_count).
struct FeatureDataset {
    DenseMatrix features;
    std::vector<std::uint32_t> labels;
    std::uint32_t class_count = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const noexcept { return features.cols(); }

    // Throws InvalidArgument if shapes disagree, a label is out of range or a
    // feature is non-finite.
    void validate() const;

    // Row indices per class, each in ascending order.
    std::vector<std::vector<std::size_t>> indices_by_class() const;

    FeatureDataset subset(std::span<const std::size_t> rows) const;
    // Examples whose label is in `classes`; labels are kept as-is.
    FeatureDataset restricted_to(std::span<const std::uint32_t> classes) const;

    bool operator==(const FeatureDataset&) const = default;
};

// Label remapping: `classes[i]` becomes label i. Every example label must be
// present in `classes`; the result has class_count = classes.size().
FeatureDataset relabel(const FeatureDataset& data, std::span<const std::uint32_t> classes);

struct ClassSplit {
    std::vector<std::uint32_t> base;
    std::vector<std::uint32_t> novel;
    std::vector<std::uint32_t> cv_base_1;
    std::vector<std::uint32_t> cv_base_2;
    std::vector<std::uint32_t> cv_novel_1;
    std::vector<std::uint32_t> cv_novel_2;

    void validate(std::uint32_t class_count) const;
    bool operator==(const ClassSplit&) const = default;
};

// Random partition of [0, class_count) into base/novel with |base| =
// round(class_count * base_fraction); each side is then split again with
// `cv_fraction` going to the first half. All lists are sorted.
ClassSplit split_classes(std::uint32_t class_count, double base_fraction, std::uint64_t seed,
                         double cv_fraction = 0.5);

// The training data of one low-shot trial. Rows are base examples first
// (dataset order) then, per novel class in ascending id order, the drawn
// examples. Hallucinated rows appended later have source == kGenerated.
struct LowShotTrainSet {
    static constexpr std::size_t kGenerated = static_cast<std::size_t>(-1);

    FeatureDataset data;
    std::vector<std::size_t> source;
    std::vector<std::uint32_t> base_classes;
    std::vector<std::uint32_t> novel_classes;
    std::size_t shots = 0;
    std::uint64_t trial_seed = 0;

    std::size_t count_of(std::uint32_t cls) const;
};

LowShotTrainSet sample_low_shot(const FeatureDataset& data, std::span<const std::uint32_t> base_classes,
                                std::span<const std::uint32_t> novel_classes, std::size_t n, std::uint64_t seed);
LowShotTrainSet sample_low_shot(const FeatureDataset& data, const ClassSplit& split, std::size_t n,
                                std::uint64_t seed);

struct SyntheticSpec {
    std::uint32_t raw_dim = 32;
    std::uint32_t base_count = 40;
    std::uint32_t novel_count = 20;
    std::uint32_t mode_count = 3;
    double class_mean_scale = 1.0;
    double mode_scale = 1.5;
    double noise_sigma = 0.3;
    std::uint32_t examples_per_class = 200;
    std::uint32_t test_per_class = 50;

    std::uint32_t class_count() const noexcept { return base_count + novel_count; }
    void validate() const;
    bool operator==(const SyntheticSpec&) const = default;
};

// Train/test stores over raw inputs plus the generating parameters, so tests
// can use the exact analogy answer.
struct SyntheticWorld {
    FeatureDataset train;
    std::vector<std::uint32_t> train_modes;
    FeatureDataset test;
    std::vector<std::uint32_t> test_modes;
    DenseMatrix class_means;   // class_count x raw_dim
    DenseMatrix mode_vectors;  // mode_count x raw_dim
};

// Example = max(mu_c + t_m + sigma * eps, 0) with m uniform over modes.
SyntheticWorld make_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// Draws minibatches by picking a class uniformly, then an example uniformly
// within it. Every class in [0, class_count) must have an example.
class ClassUniformSampler {
public:
    ClassUniformSampler(std::span<const std::uint32_t> labels, std::uint32_t class_count, std::uint64_t seed);

    std::vector<std::size_t> next_batch(std::size_t batch);
    void next_batch(std::span<std::size_t> out);

private:
    std::vector<std::vector<std::size_t>> by_class_;
    SeededRng rng_;
};

// Feature-store container: "LSF1", u32 version, u32 N, u32 d, u32 classes,
// N*d float32 row-major, N u32 labels; little-endian throughout.
std::vector<std::uint8_t> encode_feature_store(const FeatureDataset& data);
FeatureDataset decode_feature_store(std::span<const std::uint8_t> bytes);
void save_feature_store(const FeatureDataset& data, const std::filesystem::path& path);
FeatureDataset load_feature_store(const std::filesystem::path& path);

// Split manifest as a JSON object of class-id lists.
std::string encode_split_manifest(const ClassSplit& split);
ClassSplit decode_split_manifest(const std::string& text);
void save_split_manifest(const ClassSplit& split, const std::filesystem::path& path);
ClassSplit load_split_manifest(const std::filesystem::path& path);

}  // namespace lowshot
