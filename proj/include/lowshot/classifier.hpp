#pragma once

#include "lowshot/numerics.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace lowshot {

// Multiclass logistic head without bias: scores = W x, row k is w_k.
struct LinearClassifier {
    DenseMatrix weights;

    LinearClassifier() = default;
    LinearClassifier(std::size_t classes, std::size_t dim) : weights(classes, dim) {}
    explicit LinearClassifier(DenseMatrix w) : weights(std::move(w)) {}

    std::size_t classes() const noexcept { return weights.rows(); }
    std::size_t dim() const noexcept { return weights.cols(); }

    bool operator==(const LinearClassifier&) const = default;
};

DenseVector logits(const LinearClassifier& clf, std::span<const double> x);
DenseVector class_probabilities(const LinearClassifier& clf, std::span<const double> x);

// Mean of -log p_y over rows of `features`; the probability is clamped at 1e-300.
double nll_loss(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels);

// g_k = (1/|S|) sum (p_k - delta_yk) x. Returned as a K x d matrix.
DenseMatrix grad_wrt_weights(const LinearClassifier& clf, const DenseMatrix& features,
                             std::span<const std::uint32_t> labels);

// W^T (p - delta_y) for a single example.
DenseVector grad_wrt_features(const LinearClassifier& clf, std::span<const double> x, std::uint32_t y);

// sum_k (p_k - delta_yk)^2, always in [0, 2].
double alpha_weight(const LinearClassifier& clf, std::span<const double> x, std::uint32_t y);

struct ClassifierTrainConfig {
    double learning_rate = 0.1;
    std::size_t iterations = 10000;
    std::size_t batch_size = 1000;
    double weight_decay = 0.0;
    double momentum = 0.0;
    std::uint64_t seed = 0;
    // When > 0, training stops early once the full-batch gradient norm (checked
    // every 100 iterations) falls below this value.
    double convergence_grad_tol = 0.0;
    bool operator==(const ClassifierTrainConfig&) const = default;
};

struct TrainedClassifier {
    LinearClassifier classifier;
    double grad_norm = 0.0;  // Frobenius norm of the full-batch gradient incl. weight decay
    std::size_t iterations = 0;
    std::size_t effective_batch = 0;
};

// Minibatch SGD from W = 0 with class-uniform sampling; throws
// DivergenceError on a non-finite loss.
TrainedClassifier train_classifier(const DenseMatrix& features, std::span<const std::uint32_t> labels,
                                   std::uint32_t class_count, const ClassifierTrainConfig& config);

struct OptimumResult {
    LinearClassifier classifier;
    double grad_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

// Minimizes the full-batch loss from W = 0 until |grad|_F <= grad_tol: damped
// Newton when K * d <= 200, gradient descent with backtracking otherwise.
OptimumResult train_to_optimum(const DenseMatrix& features, std::span<const std::uint32_t> labels,
                               std::uint32_t class_count, double grad_tol, std::size_t max_iterations = 500000);

struct TopkCount {
    std::size_t hits = 0;
    std::size_t total = 0;
    double accuracy() const noexcept { return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total); }
};

// Counts examples (optionally only those whose label is in `subset`) whose
// true label is among the top-k scores over the full label space.
TopkCount count_topk(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels,
                     std::size_t k, std::optional<std::span<const std::uint32_t>> subset = std::nullopt);

// Throws if the filtered set is empty.
double evaluate_topk(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels,
                     std::size_t k, std::optional<std::span<const std::uint32_t>> subset = std::nullopt);

// "LSW1", u32 K, u32 d, K*d float32 row-major.
std::vector<std::uint8_t> encode_classifier(const LinearClassifier& clf);
LinearClassifier decode_classifier(std::span<const std::uint8_t> bytes);
void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path);
LinearClassifier load_classifier(const std::filesystem::path& path);

}  // namespace lowshot
