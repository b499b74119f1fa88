#pragma once

#include "lowshot/classifier.hpp"
#include "lowshot/numerics.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lowshot {

inline constexpr std::size_t kMaxHessianSize = 200;

// Hessian of the mean softmax loss with respect to vec(W), index k * d + a:
// H = (1/n) sum_i (diag(p_i) - p_i p_i^T) kron x_i x_i^T. Labels do not enter
// but are validated. Throws if K * d exceeds kMaxHessianSize.
DenseMatrix hessian_full(const LinearClassifier& clf, const DenseMatrix& features,
                         std::span<const std::uint32_t> labels);

// (1/n) sum_i |x_i|^2
double hessian_upper_bound(const DenseMatrix& features);

struct HessianReport {
    std::uint64_t seed = 0;
    std::size_t classes = 0, dim = 0, examples = 0;
    double lambda_max = 0.0;
    double lambda_min = 0.0;
    double bound = 0.0;
    double margin = 0.0;  // bound - lambda_max
    bool satisfied = false;
};

struct LipschitzSuiteConfig {
    std::size_t instances = 100;
    std::size_t max_classes = 4;
    std::size_t max_dim = 6;
    std::size_t max_examples = 8;
    double tolerance = 1e-9;
    std::uint64_t seed = 0;
    bool operator==(const LipschitzSuiteConfig&) const = default;
};

// One random instance per index: K, d, n uniform within the caps, W and X
// Gaussian with a log-uniform scale. lambda_max from the dense eigensolver.
HessianReport check_lipschitz_instance(std::uint64_t seed, const LipschitzSuiteConfig& config);
std::vector<HessianReport> verify_lipschitz_bound(const LipschitzSuiteConfig& config, std::size_t jobs = 1);

// |grad_W L(W*)|_F / ((1/n) sum |x_i|^2). Throws if every feature is zero.
double distance_lower_bound(const LinearClassifier& w_star, const DenseMatrix& features,
                            std::span<const std::uint32_t> labels);

struct DistanceBoundReport {
    std::uint64_t seed = 0;  // instance seed
    std::size_t sample = 0;
    double grad_norm = 0.0;  // |grad L(W*)|_F
    double bound = 0.0;
    double distance = 0.0;  // |W* - W_B|_F
    double slack = 0.0;
    bool satisfied = false;
};

struct DistanceSuiteConfig {
    std::size_t instances = 20;
    std::size_t samples_per_instance = 20;
    double grad_tol = 1e-8;
    std::uint64_t seed = 0;
    bool operator==(const DistanceSuiteConfig&) const = default;
};

struct DistanceSuiteResult {
    std::vector<DistanceBoundReport> reports;
    std::vector<std::uint64_t> skipped;  // instance seeds whose optimum did not converge
    std::size_t violations() const;
};

// Small classification problem with overlapping Gaussian classes; the last
// example repeats the first with a different label, so no direction separates
// the data and the optimum is finite.
struct TheoryInstance {
    DenseMatrix features;
    std::vector<std::uint32_t> labels;
    std::uint32_t classes = 0;
};
TheoryInstance make_overlapping_instance(std::uint32_t classes, std::size_t dim, std::size_t examples,
                                         std::uint64_t seed);

DistanceSuiteResult verify_distance_bound(const DistanceSuiteConfig& config, std::size_t jobs = 1);

struct GradnormConfig {
    std::uint32_t classes = 4;
    std::size_t dim = 4;
    std::size_t examples = 64;
    std::size_t samples = 200;
    double decades = 3.0;
    double grad_tol = 1e-8;
    std::uint64_t seed = 0;
    bool operator==(const GradnormConfig&) const = default;
};

struct GradnormRow {
    double radius = 0.0;
    double grad_norm = 0.0;
    double cosine_distance = 0.0;
};

struct GradnormResult {
    std::vector<GradnormRow> rows;
    double spearman = 0.0;
    double optimum_grad_norm = 0.0;
};

// Samples W = W_B + r U with U a unit direction orthogonal to the softmax
// shift (adding one vector to every row), r = |W_B| * 10^-u, u in [0, decades].
GradnormResult gradnorm_distance_experiment(const GradnormConfig& config);

// 1 - <a, b> / (|a| |b|) on flattened matrices.
double cosine_distance(const DenseMatrix& a, const DenseMatrix& b);

// Spearman rank correlation; tied values get their average rank.
double spearman_correlation(std::span<const double> x, std::span<const double> y);

struct VerifyReport {
    std::vector<HessianReport> lipschitz;
    DistanceSuiteResult distance;
    GradnormResult gradnorm;
    double spearman_threshold = 0.9;

    std::size_t lipschitz_violations() const;
    bool passed() const;
};

std::string encode_verify_report(const VerifyReport& report);

}  // namespace lowshot
