#pragma once

#include "lowshot/classifier.hpp"
#include "lowshot/dataset.hpp"
#include "lowshot/mlp.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace lowshot {

struct KMeansResult {
    DenseMatrix centroids;
    std::vector<std::size_t> assignment;
    std::vector<std::size_t> counts;
    double objective = 0.0;
    // Objective after every Lloyd iteration and refinement pass of the winning restart.
    std::vector<double> objective_trace;
};

// Lloyd's algorithm with k-means++ seeding, each converged run refined by
// single-point moves until no move lowers the objective. Runs `restarts` times
// with independent seeds; the lowest objective wins (earliest restart on ties).
// k is reduced to the number of points when larger. Empty clusters are
// re-seeded from the point farthest from its centroid. Throws logic_error if
// the objective ever increases.
KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters = 100,
                    std::size_t restarts = 10);

struct ClassCentroids {
    std::uint32_t class_id = 0;
    DenseMatrix centroids;
    std::vector<std::size_t> counts;
};

struct CentroidSet {
    std::vector<ClassCentroids> classes;  // ascending class_id
    std::size_t max_per_class = 100;

    std::size_t dim() const noexcept { return classes.empty() ? 0 : classes.front().centroids.cols(); }
    const ClassCentroids* find(std::uint32_t class_id) const noexcept;
};

struct CentroidConfig {
    std::size_t max_per_class = 100;
    std::size_t max_iters = 100;
    std::size_t restarts = 10;
    std::uint64_t seed = 0;
    bool operator==(const CentroidConfig&) const = default;
};

// Clusters each class of `data` into min(max_per_class, ceil(count / 2)) centroids.
CentroidSet compute_centroids(const FeatureDataset& data, const CentroidConfig& config);

struct AnalogyQuadruplet {
    std::uint32_t class_a = 0;
    std::size_t a1 = 0, a2 = 0;
    std::uint32_t class_b = 0;
    std::size_t b1 = 0, b2 = 0;
    double similarity = 0.0;

    bool operator==(const AnalogyQuadruplet&) const = default;
};

enum class MiningMode {
    best_match,    // one quadruplet per source pair: the best over all other classes
    all_positive,  // every candidate pair with positive similarity
};

// For each class a and ordered centroid pair (i1 != i2), searches ordered pairs
// (j1 != j2) of every other class b for the largest cosine similarity between
// c^a_i1 - c^a_i2 and c^b_j1 - c^b_j2. Ties go to the lowest (b, j1, j2).
// Only strictly positive similarities are kept.
std::vector<AnalogyQuadruplet> mine_quadruplets(const CentroidSet& centroids,
                                                MiningMode mode = MiningMode::best_match);

// Three (or more) fully connected layers with rectifiers throughout, mapping
// [seed, c1, c2] (3 * feat_dim) to feat_dim.
struct GeneratorNet {
    Mlp net;

    std::size_t feature_dim() const noexcept { return net.output_dim(); }
    bool operator==(const GeneratorNet&) const = default;
};

GeneratorNet make_generator(std::size_t feat_dim, std::size_t hidden, std::uint64_t seed);

struct GeneratorTrainConfig {
    double lambda = 10.0;  // weight on the MSE term
    double learning_rate = 1e-3;  // Adam step size
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    std::size_t hidden = 128;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const GeneratorTrainConfig&) const = default;
};

struct GeneratorTrainResult {
    GeneratorNet generator;
    std::vector<double> loss_trace;  // mean objective per epoch
    std::vector<double> mse_trace;   // mean MSE term per epoch
};

// Trains G on D_G: input [c^a1, c^b1, c^b2], target c^a2, loss
// lambda * MSE + nll(W, G(.), a). `base_classifier` is frozen; its label space
// must contain every class_a in `quadruplets`.
GeneratorTrainResult train_generator(std::span<const AnalogyQuadruplet> quadruplets, const CentroidSet& centroids,
                                     const LinearClassifier& base_classifier, const GeneratorTrainConfig& config);

// Mean squared error per dimension of G on a quadruplet list.
double generator_mse(const GeneratorNet& generator, std::span<const AnalogyQuadruplet> quadruplets,
                     const CentroidSet& centroids);

struct LabeledFeature {
    DenseVector feature;
    std::uint32_t label = 0;
};

LabeledFeature hallucinate(const GeneratorNet& generator, std::span<const double> seed_feature,
                           std::span<const double> c1, std::span<const double> c2, std::uint32_t label);

// Tops every novel class with fewer than k_min examples up to k_min using
// hallucinated examples. Generated rows are appended with source ==
// LowShotTrainSet::kGenerated.
LowShotTrainSet augment_low_shot(const LowShotTrainSet& trainset, const GeneratorNet& generator,
                                 const CentroidSet& centroids, std::size_t k_min, std::uint64_t seed);

void save_generator(const GeneratorNet& generator, const std::filesystem::path& path);
GeneratorNet load_generator(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_generator(const GeneratorNet& generator);
GeneratorNet decode_generator(std::span<const std::uint8_t> bytes);

// Structured-text dumps (JSON).
std::string encode_quadruplets(std::span<const AnalogyQuadruplet> quadruplets);
std::vector<AnalogyQuadruplet> decode_quadruplets(const std::string& text);
std::string encode_centroids(const CentroidSet& centroids);
CentroidSet decode_centroids(const std::string& text);

}  // namespace lowshot
