#include "lowshot/classifier.hpp"

#include "binary_io.hpp"
#include "lowshot/dataset.hpp"
#include "lowshot/error.hpp"
#include "lowshot/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace lowshot {

namespace {

void check_dims(const LinearClassifier& clf, std::size_t dim) {
    LOWSHOT_REQUIRE(clf.classes() >= 1, "classifier has no classes");
    if (clf.dim() != dim)
        throw InvalidArgument("classifier dimension " + std::to_string(clf.dim()) + " != input dimension " +
                              std::to_string(dim));
}

void check_labels(std::span<const std::uint32_t> labels, std::size_t rows, std::size_t classes) {
    LOWSHOT_REQUIRE(labels.size() == rows, "label count != feature rows");
    for (std::uint32_t y : labels) LOWSHOT_REQUIRE(y < classes, "label out of range for classifier");
}

// p <- softmax(W x) in place of `p`, which must have K slots.
void probabilities_into(const LinearClassifier& clf, std::span<const double> x, DenseVector& p) {
    kernels::gemv(clf.weights.flat(), clf.classes(), clf.dim(), x, p.view());
    p = softmax_stable(p);
}

// Objective used by train_to_optimum: mean nll and its gradient.
double loss_and_grad(const LinearClassifier& clf, const DenseMatrix& x, std::span<const std::uint32_t> y,
                     DenseMatrix& grad) {
    grad.fill(0.0);
    DenseVector p(clf.classes());
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        probabilities_into(clf, x.row(i), p);
        loss -= std::log(std::max(p[y[i]], 1e-300));
        p[y[i]] -= 1.0;
        kernels::rank1_update(grad.flat(), clf.classes(), clf.dim(), inv_n, p, x.row(i));
    }
    return loss * inv_n;
}

// Damped Newton for small instances. The loss is flat along W -> W + 1 v^T, so
// that subspace gets a positive penalty; the gradient has no component there,
// which keeps the iterates in the shift-free subspace.
OptimumResult newton_optimum(const DenseMatrix& features, std::span<const std::uint32_t> labels,
                             std::uint32_t class_count, double grad_tol, std::size_t max_iterations) {
    const std::size_t k_count = class_count, d = features.cols(), m = k_count * d;
    OptimumResult out;
    LinearClassifier& clf = out.classifier;
    clf = LinearClassifier(k_count, d);
    DenseMatrix grad(k_count, d), trial_grad(k_count, d);
    LinearClassifier trial = clf;
    const double inv_n = 1.0 / static_cast<double>(features.rows());
    double loss = loss_and_grad(clf, features, labels, grad);
    DenseVector p(k_count);

    for (std::size_t it = 0; it < max_iterations; ++it) {
        out.iterations = it;
        out.grad_norm = grad.frobenius_norm();
        if (out.grad_norm <= grad_tol) {
            out.converged = true;
            return out;
        }
        Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
        for (std::size_t i = 0; i < features.rows(); ++i) {
            const auto x = features.row(i);
            probabilities_into(clf, x, p);
            for (std::size_t j = 0; j < k_count; ++j)
                for (std::size_t k = 0; k < k_count; ++k) {
                    const double c = inv_n * p[j] * ((j == k ? 1.0 : 0.0) - p[k]);
                    for (std::size_t a = 0; a < d; ++a)
                        for (std::size_t b = 0; b < d; ++b)
                            h(static_cast<Eigen::Index>(j * d + a), static_cast<Eigen::Index>(k * d + b)) += c * x[a] * x[b];
                }
        }
        const double mu = h.trace() / static_cast<double>(m) + 1e-12;
        for (std::size_t j = 0; j < k_count; ++j)
            for (std::size_t k = 0; k < k_count; ++k)
                for (std::size_t a = 0; a < d; ++a)
                    h(static_cast<Eigen::Index>(j * d + a), static_cast<Eigen::Index>(k * d + a)) +=
                        mu / static_cast<double>(k_count);
        h.diagonal().array() += 1e-14 * mu;
        const Eigen::Map<const Eigen::VectorXd> g(grad.flat().data(), static_cast<Eigen::Index>(m));
        const Eigen::VectorXd dir = -h.ldlt().solve(g);
        const double slope = g.dot(dir);
        if (!(slope < 0.0)) break;

        double t = 1.0;
        bool moved = false;
        for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
            trial.weights = clf.weights;
            kernels::axpy(t, std::span<const double>(dir.data(), m), trial.weights.flat());
            const double trial_loss = loss_and_grad(trial, features, labels, trial_grad);
            // Near the optimum the loss change drops below rounding; fall back to the gradient norm.
            const bool armijo = trial_loss <= loss + 1e-4 * t * slope;
            const bool flat = std::abs(trial_loss - loss) <= 1e-13 * std::max(1.0, std::abs(loss)) &&
                              trial_grad.frobenius_norm() < out.grad_norm;
            if (armijo || flat) {
                clf.weights = trial.weights;
                std::swap(grad, trial_grad);
                loss = trial_loss;
                moved = true;
                break;
            }
        }
        if (!moved) break;
    }
    out.grad_norm = grad.frobenius_norm();
    out.converged = out.grad_norm <= grad_tol;
    return out;
}

}  // namespace

DenseVector logits(const LinearClassifier& clf, std::span<const double> x) {
    check_dims(clf, x.size());
    return matvec(clf.weights, x);
}

DenseVector class_probabilities(const LinearClassifier& clf, std::span<const double> x) {
    return softmax_stable(logits(clf, x));
}

double nll_loss(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    check_dims(clf, features.cols());
    check_labels(labels, features.rows(), clf.classes());
    LOWSHOT_REQUIRE(features.rows() >= 1, "nll_loss: empty feature set");
    double loss = 0.0;
    DenseVector p(clf.classes());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        probabilities_into(clf, features.row(i), p);
        loss -= std::log(std::max(p[labels[i]], 1e-300));
    }
    return loss / static_cast<double>(features.rows());
}

DenseMatrix grad_wrt_weights(const LinearClassifier& clf, const DenseMatrix& features,
                             std::span<const std::uint32_t> labels) {
    check_dims(clf, features.cols());
    check_labels(labels, features.rows(), clf.classes());
    LOWSHOT_REQUIRE(features.rows() >= 1, "grad_wrt_weights: empty feature set");
    DenseMatrix g(clf.classes(), clf.dim());
    loss_and_grad(clf, features, labels, g);
    return g;
}

DenseVector grad_wrt_features(const LinearClassifier& clf, std::span<const double> x, std::uint32_t y) {
    DenseVector p = class_probabilities(clf, x);
    LOWSHOT_REQUIRE(y < clf.classes(), "grad_wrt_features: label out of range");
    p[y] -= 1.0;
    DenseVector g(clf.dim());
    kernels::gemv_t_acc(clf.weights.flat(), clf.classes(), clf.dim(), p, g.view());
    return g;
}

double alpha_weight(const LinearClassifier& clf, std::span<const double> x, std::uint32_t y) {
    DenseVector p = class_probabilities(clf, x);
    LOWSHOT_REQUIRE(y < clf.classes(), "alpha_weight: label out of range");
    double a = 0.0;
    for (std::size_t k = 0; k < p.dim(); ++k) {
        const double e = p[k] - (k == y ? 1.0 : 0.0);
        a += e * e;
    }
    return a;
}

TrainedClassifier train_classifier(const DenseMatrix& features, std::span<const std::uint32_t> labels,
                                   std::uint32_t class_count, const ClassifierTrainConfig& config) {
    LOWSHOT_REQUIRE(config.learning_rate > 0.0, "train_classifier: learning_rate must be positive");
    LOWSHOT_REQUIRE(config.iterations >= 1, "train_classifier: iterations must be >= 1");
    LOWSHOT_REQUIRE(config.batch_size >= 1, "train_classifier: batch_size must be >= 1");
    LOWSHOT_REQUIRE(class_count >= 2, "train_classifier: need at least two classes");
    check_labels(labels, features.rows(), class_count);

    const std::size_t n = features.rows();
    const std::size_t d = features.cols();
    std::size_t batch = config.batch_size;
    if (n < 10 * batch) batch = std::max<std::size_t>(1, n / 10);

    ClassUniformSampler sampler(labels, class_count, config.seed);
    TrainedClassifier out;
    out.effective_batch = batch;
    LinearClassifier& clf = out.classifier;
    clf = LinearClassifier(class_count, d);

    DenseMatrix grad(class_count, d);
    DenseMatrix velocity(class_count, d);
    DenseVector p(class_count);
    std::vector<std::size_t> rows(batch);
    const double inv_b = 1.0 / static_cast<double>(batch);

    DenseMatrix full_grad(class_count, d);
    auto full_gradient_norm = [&]() {
        loss_and_grad(clf, features, labels, full_grad);
        kernels::axpy(config.weight_decay, clf.weights.flat(), full_grad.flat());
        return full_grad.frobenius_norm();
    };

    std::size_t it = 0;
    for (; it < config.iterations; ++it) {
        sampler.next_batch(rows);
        grad.fill(0.0);
        double loss = 0.0;
        for (std::size_t r : rows) {
            const auto x = features.row(r);
            kernels::gemv(clf.weights.flat(), class_count, d, x, p.view());
            if (!all_finite(p)) throw DivergenceError("classifier training diverged; lower the learning rate", it);
            p = softmax_stable(p);
            loss -= std::log(std::max(p[labels[r]], 1e-300));
            p[labels[r]] -= 1.0;
            kernels::rank1_update(grad.flat(), class_count, d, inv_b, p, x);
        }
        if (!std::isfinite(loss)) throw DivergenceError("classifier training diverged; lower the learning rate", it);
        kernels::axpy(config.weight_decay, clf.weights.flat(), grad.flat());
        if (config.momentum > 0.0) {
            kernels::scale(config.momentum, velocity.flat());
            kernels::axpy(1.0, grad.flat(), velocity.flat());
            kernels::axpy(-config.learning_rate, velocity.flat(), clf.weights.flat());
        } else {
            kernels::axpy(-config.learning_rate, grad.flat(), clf.weights.flat());
        }
        if (config.convergence_grad_tol > 0.0 && (it + 1) % 100 == 0 &&
            full_gradient_norm() <= config.convergence_grad_tol) {
            ++it;
            break;
        }
    }
    if (!clf.weights.all_finite()) throw DivergenceError("classifier training diverged; lower the learning rate", it);
    out.iterations = it;
    out.grad_norm = full_gradient_norm();
    return out;
}

OptimumResult train_to_optimum(const DenseMatrix& features, std::span<const std::uint32_t> labels,
                               std::uint32_t class_count, double grad_tol, std::size_t max_iterations) {
    LOWSHOT_REQUIRE(features.rows() >= 1, "train_to_optimum: empty feature set");
    LOWSHOT_REQUIRE(class_count * features.cols() <= 10000, "train_to_optimum: instance too large (K*d > 1e4)");
    LOWSHOT_REQUIRE(grad_tol > 0.0, "train_to_optimum: grad_tol must be positive");
    check_labels(labels, features.rows(), class_count);
    if (class_count * features.cols() <= 200)
        return newton_optimum(features, labels, class_count, grad_tol, std::min<std::size_t>(max_iterations, 1000));

    OptimumResult out;
    LinearClassifier& clf = out.classifier;
    clf = LinearClassifier(class_count, features.cols());
    DenseMatrix grad(class_count, features.cols());
    DenseMatrix trial_grad(class_count, features.cols());
    LinearClassifier trial = clf;

    double sq = 0.0;
    for (double v : features.flat()) sq += v * v;
    const double lipschitz = sq / static_cast<double>(features.rows());
    double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;

    double loss = loss_and_grad(clf, features, labels, grad);
    for (std::size_t it = 0; it < max_iterations; ++it) {
        const double gsq = kernels::squared_norm(grad.flat());
        out.grad_norm = std::sqrt(gsq);
        out.iterations = it;
        if (out.grad_norm <= grad_tol) {
            out.converged = true;
            return out;
        }
        // Armijo backtracking; the step is allowed to grow again after success.
        step *= 2.0;
        for (int bt = 0; bt < 60; ++bt) {
            trial.weights = clf.weights;
            kernels::axpy(-step, grad.flat(), trial.weights.flat());
            const double trial_loss = loss_and_grad(trial, features, labels, trial_grad);
            if (trial_loss <= loss - 0.5 * step * gsq) {
                clf.weights = trial.weights;
                std::swap(grad, trial_grad);
                loss = trial_loss;
                break;
            }
            step *= 0.5;
            if (bt == 59) {
                // No representable descent left; we are at the numerical floor.
                out.grad_norm = std::sqrt(gsq);
                out.converged = out.grad_norm <= grad_tol;
                return out;
            }
        }
    }
    out.grad_norm = grad.frobenius_norm();
    out.iterations = max_iterations;
    out.converged = out.grad_norm <= grad_tol;
    return out;
}

TopkCount count_topk(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels,
                     std::size_t k, std::optional<std::span<const std::uint32_t>> subset) {
    check_dims(clf, features.cols());
    check_labels(labels, features.rows(), clf.classes());
    LOWSHOT_REQUIRE(k >= 1 && k <= clf.classes(), "count_topk: k out of range");
    std::vector<bool> keep(clf.classes(), !subset.has_value());
    if (subset)
        for (std::uint32_t c : *subset) {
            LOWSHOT_REQUIRE(c < clf.classes(), "count_topk: subset class out of range");
            keep[c] = true;
        }
    TopkCount count;
    DenseVector scores(clf.classes());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        if (!keep[labels[i]]) continue;
        ++count.total;
        kernels::gemv(clf.weights.flat(), clf.classes(), clf.dim(), features.row(i), scores.view());
        const auto top = top_k_indices(scores, k);
        if (std::find(top.begin(), top.end(), labels[i]) != top.end()) ++count.hits;
    }
    return count;
}

double evaluate_topk(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels,
                     std::size_t k, std::optional<std::span<const std::uint32_t>> subset) {
    const TopkCount c = count_topk(clf, features, labels, k, subset);
    LOWSHOT_REQUIRE(c.total > 0, "evaluate_topk: no test examples after filtering");
    return c.accuracy();
}

std::vector<std::uint8_t> encode_classifier(const LinearClassifier& clf) {
    LOWSHOT_REQUIRE(clf.weights.all_finite(), "encode_classifier: non-finite weights");
    detail::ByteWriter w;
    w.magic("LSW1");
    w.u32(static_cast<std::uint32_t>(clf.classes()));
    w.u32(static_cast<std::uint32_t>(clf.dim()));
    for (double v : clf.weights.flat()) w.f32(v);
    return w.take();
}

LinearClassifier decode_classifier(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("LSW1");
    const std::uint32_t k = r.u32("K");
    const std::uint32_t d = r.u32("d");
    r.need(static_cast<std::size_t>(k) * d * 4, "weights");
    LinearClassifier clf(k, d);
    for (double& v : clf.weights.flat()) v = r.f32("weight");
    r.expect_end();
    return clf;
}

void save_classifier(const LinearClassifier& clf, const std::filesystem::path& path) {
    detail::write_file(path, encode_classifier(clf));
}

LinearClassifier load_classifier(const std::filesystem::path& path) {
    return decode_classifier(detail::read_file(path));
}

}  // namespace lowshot
