#pragma once

#include "lowshot/classifier.hpp"
#include "lowshot/dataset.hpp"
#include "lowshot/mlp.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace lowshot {

// The feature extractor phi: an Mlp whose final rectifier makes phi(x) >= 0.
struct MlpExtractor {
    Mlp net;

    std::size_t input_dim() const noexcept { return net.input_dim(); }
    std::size_t feature_dim() const noexcept { return net.output_dim(); }
    bool operator==(const MlpExtractor&) const = default;
};

DenseVector forward(const MlpExtractor& extractor, std::span<const double> x);
DenseMatrix extract_features(const MlpExtractor& extractor, const DenseMatrix& raw);
FeatureDataset extract_features(const MlpExtractor& extractor, const FeatureDataset& raw);

enum class Regularizer { none, sgm, batch_sgm, l2_feat, l1_feat, triplet };

std::string_view regularizer_name(Regularizer r) noexcept;
std::optional<Regularizer> parse_regularizer(std::string_view name) noexcept;

struct ReprLossConfig {
    Regularizer kind = Regularizer::none;
    double lambda = 0.0;
    double triplet_margin = 1.0;
    std::size_t epochs = 30;
    double learning_rate = 0.03;
    double lr_decay = 0.1;
    std::size_t lr_decay_period = 10;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    std::size_t batch_size = 64;
    // Triplet only: epochs of the second phase, run at learning_rate / 100.
    std::size_t triplet_epochs = 10;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const ReprLossConfig&) const = default;
};

// ---- Per-batch loss values ------------------------------------------------
// Rows of `features` are phi(x) for the batch.

// mean alpha(W, phi, y) * |phi|^2
double sgm_loss(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels);
// |grad_V L_B(phi, V)|_{V=W}|^2 = sum_k |g_k(B, W)|^2
double batch_sgm_loss(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels);
double l2_feature_loss(const DenseMatrix& features);
double l1_feature_loss(const DenseMatrix& features);
double triplet_loss(std::span<const double> anchor, std::span<const double> positive, std::span<const double> negative,
                    double margin);

// ---- Loss gradients with respect to W and to each feature row -------------

struct HeadGradient {
    double value = 0.0;
    DenseMatrix grad_weights;   // K x d (zero for feature-only losses)
    DenseMatrix grad_features;  // B x d
};

HeadGradient cls_loss_grad(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels);
HeadGradient sgm_loss_grad(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels);
HeadGradient batch_sgm_loss_grad(const LinearClassifier& clf, const DenseMatrix& features,
                                 std::span<const std::uint32_t> labels);
HeadGradient l2_feature_loss_grad(const DenseMatrix& features);
HeadGradient l1_feature_loss_grad(const DenseMatrix& features);

struct Triplet {
    std::size_t anchor;
    std::size_t positive;
    std::size_t negative;
};

// For each anchor row with both a same-class partner and a different-class row
// in the batch, draws one of each uniformly.
std::vector<Triplet> sample_batch_triplets(std::span<const std::uint32_t> labels, SeededRng& rng);
// Mean hinge over `triplets` (0 if empty).
HeadGradient triplet_loss_grad(const DenseMatrix& features, std::span<const Triplet> triplets, double margin);

// Full objective for one batch of raw inputs through the extractor: cls term
// (weight `cls_weight`) plus lambda times the regularizer.
struct ReprObjective {
    Regularizer kind = Regularizer::none;
    double lambda = 0.0;
    double cls_weight = 1.0;
    double triplet_margin = 1.0;
};

struct ReprGradients {
    double value = 0.0;
    MlpGradients net;
    DenseMatrix weights;
};

ReprGradients evaluate_objective(const MlpExtractor& extractor, const LinearClassifier& clf, const DenseMatrix& inputs,
                                 std::span<const std::uint32_t> labels, const ReprObjective& objective,
                                 std::span<const Triplet> triplets = {});

struct ReprTrainResult {
    MlpExtractor extractor;
    LinearClassifier classifier;
    std::vector<double> loss_trace;  // mean objective per epoch
};

// Joint SGD on (phi, W) over `base` (labels already in [0, |C_base|)).
// `sizes` = {raw_dim, hidden..., feat_dim}.
ReprTrainResult train_representation(const FeatureDataset& base, const std::vector<std::size_t>& sizes,
                                     const ReprLossConfig& config);

// ---- Gradient checking ----------------------------------------------------

// Max over parameters of |numeric - analytic| / max(|analytic|, |numeric|, f)
// with f = max(1e-3 * largest |analytic| entry, 1e-8), using central
// differences of step h. `f` is re-evaluated after each perturbation
// of the values behind `params`; they are restored afterwards.
double max_relative_gradient_error(const std::function<double()>& f, std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic, double h);

enum class LossSelector { cls, sgm, batch_sgm, l2_feat, l1_feat, triplet };

struct GradientCheckInstance {
    MlpExtractor extractor;
    LinearClassifier classifier;
    DenseMatrix inputs;
    std::vector<std::uint32_t> labels;
    std::vector<Triplet> triplets;
};

// Random instance with a 2-hidden-layer extractor. Inputs are resampled until
// every pre-activation is at least `kink_margin` away from zero.
GradientCheckInstance make_gradient_check_instance(std::uint64_t seed, std::size_t classes, std::size_t feat_dim,
                                                   std::size_t batch = 6, double kink_margin = 1e-3);

// Checks every extractor and classifier parameter of `instance` for the
// selected loss (alone, weight 1).
double gradient_check(LossSelector loss, GradientCheckInstance instance, double h = 1e-5);

void save_extractor(const MlpExtractor& extractor, const std::filesystem::path& path);
MlpExtractor load_extractor(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_extractor(const MlpExtractor& extractor);
MlpExtractor decode_extractor(std::span<const std::uint8_t> bytes);

}  // namespace lowshot
