#include "lowshot/repr.hpp"

#include "binary_io.hpp"
#include "lowshot/error.hpp"
#include "lowshot/kernels.hpp"
#include "lowshot/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lowshot {

DenseVector forward(const MlpExtractor& extractor, std::span<const double> x) { return extractor.net.forward(x); }

DenseMatrix extract_features(const MlpExtractor& extractor, const DenseMatrix& raw) {
    DenseMatrix out(raw.rows(), extractor.feature_dim());
    constexpr std::size_t kChunk = 256;
    for (std::size_t start = 0; start < raw.rows(); start += kChunk) {
        const std::size_t end = std::min(raw.rows(), start + kChunk);
        DenseMatrix chunk(end - start, raw.cols(),
                          std::vector<double>(raw.row(start).begin(), raw.row(start).begin() +
                                                                          static_cast<std::ptrdiff_t>((end - start) * raw.cols())));
        const auto trace = extractor.net.forward_batch(chunk);
        std::copy(trace.output().flat().begin(), trace.output().flat().end(), out.row(start).begin());
    }
    return out;
}

FeatureDataset extract_features(const MlpExtractor& extractor, const FeatureDataset& raw) {
    FeatureDataset out;
    out.features = extract_features(extractor, raw.features);
    out.labels = raw.labels;
    out.class_count = raw.class_count;
    return out;
}

std::string_view regularizer_name(Regularizer r) noexcept {
    switch (r) {
        case Regularizer::none: return "none";
        case Regularizer::sgm: return "sgm";
        case Regularizer::batch_sgm: return "batch_sgm";
        case Regularizer::l2_feat: return "l2_feat";
        case Regularizer::l1_feat: return "l1_feat";
        case Regularizer::triplet: return "triplet";
    }
    return "none";
}

std::optional<Regularizer> parse_regularizer(std::string_view name) noexcept {
    for (Regularizer r : {Regularizer::none, Regularizer::sgm, Regularizer::batch_sgm, Regularizer::l2_feat,
                          Regularizer::l1_feat, Regularizer::triplet})
        if (regularizer_name(r) == name) return r;
    return std::nullopt;
}

void ReprLossConfig::validate() const {
    LOWSHOT_REQUIRE(lambda >= 0.0, "representation config: lambda must be >= 0");
    LOWSHOT_REQUIRE(kind != Regularizer::triplet || triplet_margin > 0.0, "representation config: triplet margin must be > 0");
    LOWSHOT_REQUIRE(epochs >= 1, "representation config: epochs must be >= 1");
    LOWSHOT_REQUIRE(learning_rate > 0.0, "representation config: learning_rate must be > 0");
    LOWSHOT_REQUIRE(lr_decay > 0.0 && lr_decay <= 1.0, "representation config: lr_decay must be in (0,1]");
    LOWSHOT_REQUIRE(lr_decay_period >= 1, "representation config: lr_decay_period must be >= 1");
    LOWSHOT_REQUIRE(weight_decay >= 0.0, "representation config: weight_decay must be >= 0");
    LOWSHOT_REQUIRE(momentum >= 0.0 && momentum < 1.0, "representation config: momentum must be in [0,1)");
    LOWSHOT_REQUIRE(batch_size >= 1, "representation config: batch_size must be >= 1");
}

namespace {

void check_batch(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    LOWSHOT_REQUIRE(features.rows() >= 1, "loss: empty batch");
    LOWSHOT_REQUIRE(features.rows() == labels.size(), "loss: label count != batch rows");
    LOWSHOT_REQUIRE(features.cols() == clf.dim(), "loss: feature dimension != classifier dimension");
    for (std::uint32_t y : labels) LOWSHOT_REQUIRE(y < clf.classes(), "loss: label out of range");
}

// e = softmax(W x) - delta_y, written into `e`; returns p_y.
double residual(const LinearClassifier& clf, std::span<const double> x, std::uint32_t y, DenseVector& e) {
    kernels::gemv(clf.weights.flat(), clf.classes(), clf.dim(), x, e.view());
    e = softmax_stable(e);
    const double py = e[y];
    e[y] -= 1.0;
    return py;
}

HeadGradient empty_grad(const LinearClassifier& clf, const DenseMatrix& features) {
    HeadGradient g;
    g.grad_weights = DenseMatrix(clf.classes(), clf.dim());
    g.grad_features = DenseMatrix(features.rows(), features.cols());
    return g;
}

}  // namespace

double sgm_loss(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    check_batch(clf, features, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < features.rows(); ++i)
        total += alpha_weight(clf, features.row(i), labels[i]) * kernels::squared_norm(features.row(i));
    return total / static_cast<double>(features.rows());
}

double batch_sgm_loss(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    check_batch(clf, features, labels);
    return kernels::squared_norm(grad_wrt_weights(clf, features, labels).flat());
}

double l2_feature_loss(const DenseMatrix& features) {
    LOWSHOT_REQUIRE(features.rows() >= 1, "l2_feature_loss: empty batch");
    return kernels::squared_norm(features.flat()) / static_cast<double>(features.rows());
}

double l1_feature_loss(const DenseMatrix& features) {
    LOWSHOT_REQUIRE(features.rows() >= 1, "l1_feature_loss: empty batch");
    double s = 0.0;
    for (double v : features.flat()) s += std::abs(v);
    return s / static_cast<double>(features.rows());
}

double triplet_loss(std::span<const double> anchor, std::span<const double> positive, std::span<const double> negative,
                    double margin) {
    LOWSHOT_REQUIRE(anchor.size() == positive.size() && anchor.size() == negative.size(),
                    "triplet_loss: dimension mismatch");
    LOWSHOT_REQUIRE(margin > 0.0, "triplet_loss: margin must be positive");
    const double dp = std::sqrt(kernels::squared_distance(positive, anchor));
    const double dn = std::sqrt(kernels::squared_distance(negative, anchor));
    return std::max(dp - dn + margin, 0.0);
}

HeadGradient cls_loss_grad(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    check_batch(clf, features, labels);
    HeadGradient g = empty_grad(clf, features);
    const double inv_b = 1.0 / static_cast<double>(features.rows());
    DenseVector e(clf.classes());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const double py = residual(clf, features.row(i), labels[i], e);
        g.value -= std::log(std::max(py, 1e-300));
        kernels::rank1_update(g.grad_weights.flat(), clf.classes(), clf.dim(), inv_b, e, features.row(i));
        kernels::gemv_t_acc(clf.weights.flat(), clf.classes(), clf.dim(), e, g.grad_features.row(i));
        kernels::scale(inv_b, g.grad_features.row(i));
    }
    g.value *= inv_b;
    return g;
}

HeadGradient sgm_loss_grad(const LinearClassifier& clf, const DenseMatrix& features, std::span<const std::uint32_t> labels) {
    check_batch(clf, features, labels);
    HeadGradient g = empty_grad(clf, features);
    const double inv_b = 1.0 / static_cast<double>(features.rows());
    const std::size_t k_count = clf.classes();
    DenseVector e(k_count);
    DenseVector dalpha_dz(k_count);
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto phi = features.row(i);
        residual(clf, phi, labels[i], e);
        double alpha = 0.0;
        double t = 0.0;
        for (std::size_t k = 0; k < k_count; ++k) {
            const double p = e[k] + (k == labels[i] ? 1.0 : 0.0);
            alpha += e[k] * e[k];
            t += e[k] * p;
        }
        for (std::size_t k = 0; k < k_count; ++k) {
            const double p = e[k] + (k == labels[i] ? 1.0 : 0.0);
            dalpha_dz[k] = 2.0 * p * (e[k] - t);
        }
        const double s = kernels::squared_norm(phi);
        g.value += alpha * s;
        // d/dW: s * (dalpha/dz) phi^T ; d/dphi: 2 alpha phi + s W^T dalpha/dz
        kernels::rank1_update(g.grad_weights.flat(), k_count, clf.dim(), inv_b * s, dalpha_dz, phi);
        auto gf = g.grad_features.row(i);
        kernels::gemv_t_acc(clf.weights.flat(), k_count, clf.dim(), dalpha_dz, gf);
        kernels::scale(s, gf);
        kernels::axpy(2.0 * alpha, phi, gf);
        kernels::scale(inv_b, gf);
    }
    g.value *= inv_b;
    return g;
}

HeadGradient batch_sgm_loss_grad(const LinearClassifier& clf, const DenseMatrix& features,
                                 std::span<const std::uint32_t> labels) {
    check_batch(clf, features, labels);
    HeadGradient g = empty_grad(clf, features);
    const std::size_t b = features.rows();
    const std::size_t k_count = clf.classes();
    const std::size_t d = clf.dim();
    const double inv_b = 1.0 / static_cast<double>(b);

    DenseMatrix residuals(b, k_count);
    DenseMatrix probs(b, k_count);
    DenseMatrix big_g(k_count, d);
    DenseVector e(k_count);
    for (std::size_t i = 0; i < b; ++i) {
        residual(clf, features.row(i), labels[i], e);
        std::copy(e.begin(), e.end(), residuals.row(i).begin());
        for (std::size_t k = 0; k < k_count; ++k) probs(i, k) = e[k] + (k == labels[i] ? 1.0 : 0.0);
        kernels::rank1_update(big_g.flat(), k_count, d, inv_b, e, features.row(i));
    }
    g.value = kernels::squared_norm(big_g.flat());

    DenseVector u(k_count);
    DenseVector dz(k_count);
    for (std::size_t i = 0; i < b; ++i) {
        const auto phi = features.row(i);
        auto gf = g.grad_features.row(i);
        // Direct path through phi in G: (2/B) G^T e_i.
        kernels::gemv_t_acc(big_g.flat(), k_count, d, residuals.row(i), gf);
        kernels::scale(2.0 * inv_b, gf);
        // Path through e_i: u = (2/B) G phi, dz = (diag(p) - p p^T) u.
        kernels::gemv(big_g.flat(), k_count, d, phi, u.view());
        kernels::scale(2.0 * inv_b, u.view());
        const auto p = probs.row(i);
        const double pu = kernels::dot(p, u);
        for (std::size_t k = 0; k < k_count; ++k) dz[k] = p[k] * (u[k] - pu);
        kernels::rank1_update(g.grad_weights.flat(), k_count, d, 1.0, dz, phi);
        kernels::gemv_t_acc(clf.weights.flat(), k_count, d, dz, gf);
    }
    return g;
}

HeadGradient l2_feature_loss_grad(const DenseMatrix& features) {
    HeadGradient g;
    g.value = l2_feature_loss(features);
    g.grad_features = features;
    kernels::scale(2.0 / static_cast<double>(features.rows()), g.grad_features.flat());
    return g;
}

HeadGradient l1_feature_loss_grad(const DenseMatrix& features) {
    HeadGradient g;
    g.value = l1_feature_loss(features);
    g.grad_features = DenseMatrix(features.rows(), features.cols());
    const double inv_b = 1.0 / static_cast<double>(features.rows());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const double v = features.flat()[i];
        g.grad_features.flat()[i] = v > 0.0 ? inv_b : (v < 0.0 ? -inv_b : 0.0);
    }
    return g;
}

std::vector<Triplet> sample_batch_triplets(std::span<const std::uint32_t> labels, SeededRng& rng) {
    std::vector<Triplet> out;
    std::vector<std::size_t> same;
    std::vector<std::size_t> other;
    for (std::size_t a = 0; a < labels.size(); ++a) {
        same.clear();
        other.clear();
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (j == a) continue;
            (labels[j] == labels[a] ? same : other).push_back(j);
        }
        if (same.empty() || other.empty()) continue;
        const std::size_t pos = same[rng.below(same.size())];
        const std::size_t neg = other[rng.below(other.size())];
        out.push_back({a, pos, neg});
    }
    return out;
}

HeadGradient triplet_loss_grad(const DenseMatrix& features, std::span<const Triplet> triplets, double margin) {
    LOWSHOT_REQUIRE(margin > 0.0, "triplet_loss_grad: margin must be positive");
    HeadGradient g;
    g.grad_features = DenseMatrix(features.rows(), features.cols());
    if (triplets.empty()) return g;
    const double inv_t = 1.0 / static_cast<double>(triplets.size());
    const std::size_t d = features.cols();
    std::vector<double> up(d), un(d);
    for (const Triplet& t : triplets) {
        LOWSHOT_REQUIRE(t.anchor < features.rows() && t.positive < features.rows() && t.negative < features.rows(),
                        "triplet_loss_grad: index out of range");
        const auto a = features.row(t.anchor);
        const auto p = features.row(t.positive);
        const auto n = features.row(t.negative);
        const double dp = std::sqrt(kernels::squared_distance(p, a));
        const double dn = std::sqrt(kernels::squared_distance(n, a));
        const double inner = dp - dn + margin;
        if (inner <= 0.0) continue;
        g.value += inner;
        for (std::size_t j = 0; j < d; ++j) {
            up[j] = dp > 0.0 ? (p[j] - a[j]) / dp : 0.0;
            un[j] = dn > 0.0 ? (n[j] - a[j]) / dn : 0.0;
        }
        kernels::axpy(inv_t, up, g.grad_features.row(t.positive));
        kernels::axpy(-inv_t, up, g.grad_features.row(t.anchor));
        kernels::axpy(inv_t, un, g.grad_features.row(t.anchor));
        kernels::axpy(-inv_t, un, g.grad_features.row(t.negative));
    }
    g.value *= inv_t;
    return g;
}

ReprGradients evaluate_objective(const MlpExtractor& extractor, const LinearClassifier& clf, const DenseMatrix& inputs,
                                 std::span<const std::uint32_t> labels, const ReprObjective& objective,
                                 std::span<const Triplet> triplets) {
    const auto trace = extractor.net.forward_batch(inputs);
    const DenseMatrix& phi = trace.output();

    ReprGradients out;
    out.weights = DenseMatrix(clf.classes(), clf.dim());
    DenseMatrix grad_phi(phi.rows(), phi.cols());

    auto accumulate = [&](const HeadGradient& h, double weight) {
        out.value += weight * h.value;
        if (h.grad_weights.size() > 0) kernels::axpy(weight, h.grad_weights.flat(), out.weights.flat());
        kernels::axpy(weight, h.grad_features.flat(), grad_phi.flat());
    };

    if (objective.cls_weight != 0.0) accumulate(cls_loss_grad(clf, phi, labels), objective.cls_weight);
    if (objective.lambda != 0.0) {
        switch (objective.kind) {
            case Regularizer::none: break;
            case Regularizer::sgm: accumulate(sgm_loss_grad(clf, phi, labels), objective.lambda); break;
            case Regularizer::batch_sgm: accumulate(batch_sgm_loss_grad(clf, phi, labels), objective.lambda); break;
            case Regularizer::l2_feat: accumulate(l2_feature_loss_grad(phi), objective.lambda); break;
            case Regularizer::l1_feat: accumulate(l1_feature_loss_grad(phi), objective.lambda); break;
            case Regularizer::triplet:
                accumulate(triplet_loss_grad(phi, triplets, objective.triplet_margin), objective.lambda);
                break;
        }
    }
    out.net = extractor.net.zero_gradients();
    extractor.net.backward_batch(trace, grad_phi, out.net);
    return out;
}

ReprTrainResult train_representation(const FeatureDataset& base, const std::vector<std::size_t>& sizes,
                                     const ReprLossConfig& config) {
    config.validate();
    base.validate();
    LOWSHOT_REQUIRE(sizes.size() >= 2, "train_representation: need at least input and feature sizes");
    LOWSHOT_REQUIRE(sizes.front() == base.dim(), "train_representation: first layer size != raw dimension");
    LOWSHOT_REQUIRE(base.class_count >= 2, "train_representation: need at least two base classes");

    ReprTrainResult result;
    result.extractor.net = Mlp::initialized(sizes, derive_seed({config.seed, 1}));
    result.classifier = LinearClassifier(base.class_count, sizes.back());
    SeededRng order_rng(derive_seed({config.seed, 2}));
    SeededRng triplet_rng(derive_seed({config.seed, 3}));

    Mlp& net = result.extractor.net;
    LinearClassifier& clf = result.classifier;

    std::vector<std::size_t> block_sizes;
    std::vector<bool> decay_mask;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        block_sizes.push_back(net.weights(l).size());
        block_sizes.push_back(net.bias(l).dim());
        decay_mask.push_back(true);
        decay_mask.push_back(false);
    }
    block_sizes.push_back(clf.weights.size());
    decay_mask.push_back(true);

    const std::size_t n = base.size();
    const std::size_t batch = std::min(config.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t iteration = 0;

    auto run_phase = [&](std::size_t epochs, double lr0, const ReprObjective& objective, bool update_classifier) {
        SgdOptimizer opt(block_sizes, config.momentum);
        std::vector<bool> mask = decay_mask;
        mask.back() = update_classifier;
        for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
            const double lr = lr0 * std::pow(config.lr_decay, static_cast<double>(epoch / config.lr_decay_period));
            for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
            double epoch_loss = 0.0;
            std::size_t batches = 0;
            for (std::size_t start = 0; start + batch <= n; start += batch, ++iteration) {
                DenseMatrix inputs(batch, base.dim());
                std::vector<std::uint32_t> labels(batch);
                for (std::size_t b = 0; b < batch; ++b) {
                    const auto src = base.features.row(order[start + b]);
                    std::copy(src.begin(), src.end(), inputs.row(b).begin());
                    labels[b] = base.labels[order[start + b]];
                }
                std::vector<Triplet> triplets;
                if (objective.kind == Regularizer::triplet) triplets = sample_batch_triplets(labels, triplet_rng);

                ReprGradients g = evaluate_objective(result.extractor, clf, inputs, labels, objective, triplets);
                if (!std::isfinite(g.value))
                    throw DivergenceError("representation training produced a non-finite loss", iteration);
                epoch_loss += g.value;
                ++batches;

                auto params = net.parameter_blocks();
                auto grads = gradient_blocks(g.net);
                params.push_back(clf.weights.flat());
                if (!update_classifier) g.weights.fill(0.0);
                grads.push_back(g.weights.flat());
                opt.step(params, grads, lr, config.weight_decay, mask);
            }
            result.loss_trace.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
        }
        if (!net.all_finite() || !clf.weights.all_finite())
            throw DivergenceError("representation training produced non-finite parameters", iteration);
    };

    ReprObjective main;
    main.kind = config.kind == Regularizer::triplet ? Regularizer::none : config.kind;
    main.lambda = config.kind == Regularizer::triplet ? 0.0 : config.lambda;
    main.triplet_margin = config.triplet_margin;
    run_phase(config.epochs, config.learning_rate, main, true);

    if (config.kind == Regularizer::triplet && config.triplet_epochs > 0) {
        ReprObjective metric;
        metric.kind = Regularizer::triplet;
        metric.lambda = 1.0;
        metric.cls_weight = 0.0;
        metric.triplet_margin = config.triplet_margin;
        run_phase(config.triplet_epochs, config.learning_rate / 100.0, metric, false);
    }
    return result;
}

double max_relative_gradient_error(const std::function<double()>& f, std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic, double h) {
    LOWSHOT_REQUIRE(params.size() == analytic.size(), "gradient check: block count mismatch");
    LOWSHOT_REQUIRE(h > 0.0, "gradient check: step must be positive");
    double scale = 0.0;
    for (const auto& block : analytic)
        for (double v : block) scale = std::max(scale, std::abs(v));
    const double floor = std::max(1e-3 * scale, 1e-8);
    double worst = 0.0;
    for (std::size_t b = 0; b < params.size(); ++b) {
        LOWSHOT_REQUIRE(params[b].size() == analytic[b].size(), "gradient check: block size mismatch");
        for (std::size_t i = 0; i < params[b].size(); ++i) {
            double& x = params[b][i];
            const double saved = x;
            x = saved + h;
            const double fp = f();
            x = saved - h;
            const double fm = f();
            x = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double err =
                std::abs(numeric - analytic[b][i]) / std::max({std::abs(analytic[b][i]), std::abs(numeric), floor});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

GradientCheckInstance make_gradient_check_instance(std::uint64_t seed, std::size_t classes, std::size_t feat_dim,
                                                   std::size_t batch, double kink_margin) {
    LOWSHOT_REQUIRE(classes >= 2 && feat_dim >= 1 && batch >= 2, "gradient check instance: sizes too small");
    SeededRng rng(seed);
    const std::size_t raw_dim = 3 + rng.below(4);
    const std::size_t h1 = 4 + rng.below(5);
    const std::size_t h2 = 4 + rng.below(5);

    const std::size_t distinct = std::max<std::size_t>(2, std::min(classes, batch / 2));
    GradientCheckInstance inst;
    inst.labels.resize(batch);
    for (std::size_t i = 0; i < batch; ++i) inst.labels[i] = static_cast<std::uint32_t>(i % distinct);
    inst.inputs = DenseMatrix(batch, raw_dim);

    // Draw a network, then resample each input row until no pre-activation
    // sits near a rectifier kink and some output unit is active. A network
    // that makes this hard is redrawn.
    for (int net_attempt = 0;; ++net_attempt) {
        LOWSHOT_REQUIRE(net_attempt < 100, "gradient check instance: could not avoid rectifier kinks");
        inst.extractor.net = Mlp::initialized({raw_dim, h1, h2, feat_dim}, rng.next());
        for (std::size_t l = 0; l < inst.extractor.net.layer_count(); ++l)
            for (double& b : inst.extractor.net.bias(l)) b = rng.uniform(0.0, 0.5);
        inst.classifier = LinearClassifier(classes, feat_dim);
        for (double& w : inst.classifier.weights.flat()) w = 0.5 * rng.normal();

        bool placed_all = true;
        for (std::size_t r = 0; r < batch && placed_all; ++r) {
            bool placed = false;
            for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
                for (double& v : inst.inputs.row(r)) v = rng.uniform(-1.0, 1.0);
                DenseMatrix one(1, raw_dim, std::vector<double>(inst.inputs.row(r).begin(), inst.inputs.row(r).end()));
                const auto trace = inst.extractor.net.forward_batch(one);
                bool ok = true;
                bool any_active = false;
                for (const auto& z : trace.pre)
                    for (double v : z.flat()) ok = ok && std::abs(v) > kink_margin;
                for (double v : trace.output().flat()) any_active = any_active || v > 0.0;
                placed = ok && any_active;
            }
            placed_all = placed;
        }
        if (placed_all) break;
    }

    SeededRng trng(rng.next());
    inst.triplets = sample_batch_triplets(inst.labels, trng);
    return inst;
}

namespace {

double triplet_margin_for(const GradientCheckInstance& inst, double kink_margin) {
    const DenseMatrix phi = inst.extractor.net.forward_batch(inst.inputs).output();
    // The hinge of a triplet bends where margin == dn - dp. Take the middle of
    // the widest interval between those points (and 0) so that no triplet
    // sits near its bend; past the largest point every triplet is active.
    std::vector<double> points = {0.0};
    for (const Triplet& t : inst.triplets) {
        const double dp = std::sqrt(kernels::squared_distance(phi.row(t.positive), phi.row(t.anchor)));
        const double dn = std::sqrt(kernels::squared_distance(phi.row(t.negative), phi.row(t.anchor)));
        if (dn - dp > 0.0) points.push_back(dn - dp);
    }
    std::sort(points.begin(), points.end());
    double margin = points.back() + 1.0;
    double widest = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i) {
        const double w = points[i + 1] - points[i];
        if (w > widest) {
            widest = w;
            margin = 0.5 * (points[i] + points[i + 1]);
        }
    }
    if (widest < 100.0 * kink_margin) margin = points.back() + 1.0;
    return margin;
}

}  // namespace

double gradient_check(LossSelector loss, GradientCheckInstance instance, double h) {
    ReprObjective objective;
    objective.cls_weight = loss == LossSelector::cls ? 1.0 : 0.0;
    objective.lambda = loss == LossSelector::cls ? 0.0 : 1.0;
    switch (loss) {
        case LossSelector::cls: objective.kind = Regularizer::none; break;
        case LossSelector::sgm: objective.kind = Regularizer::sgm; break;
        case LossSelector::batch_sgm: objective.kind = Regularizer::batch_sgm; break;
        case LossSelector::l2_feat: objective.kind = Regularizer::l2_feat; break;
        case LossSelector::l1_feat: objective.kind = Regularizer::l1_feat; break;
        case LossSelector::triplet:
            objective.kind = Regularizer::triplet;
            objective.triplet_margin = triplet_margin_for(instance, 1e-3);
            break;
    }

    const ReprGradients analytic = evaluate_objective(instance.extractor, instance.classifier, instance.inputs,
                                                      instance.labels, objective, instance.triplets);
    std::vector<std::span<const double>> analytic_blocks;
    for (std::size_t l = 0; l < analytic.net.weights.size(); ++l) {
        analytic_blocks.push_back(analytic.net.weights[l].flat());
        analytic_blocks.push_back(analytic.net.biases[l].view());
    }
    analytic_blocks.push_back(analytic.weights.flat());

    auto params = instance.extractor.net.parameter_blocks();
    params.push_back(instance.classifier.weights.flat());
    auto f = [&]() {
        return evaluate_objective(instance.extractor, instance.classifier, instance.inputs, instance.labels, objective,
                                  instance.triplets)
            .value;
    };
    return max_relative_gradient_error(f, params, analytic_blocks, h);
}

std::vector<std::uint8_t> encode_extractor(const MlpExtractor& extractor) { return encode_mlp("LSE1", extractor.net); }

MlpExtractor decode_extractor(std::span<const std::uint8_t> bytes) { return MlpExtractor{decode_mlp("LSE1", bytes)}; }

void save_extractor(const MlpExtractor& extractor, const std::filesystem::path& path) {
    detail::write_file(path, encode_extractor(extractor));
}

MlpExtractor load_extractor(const std::filesystem::path& path) { return decode_extractor(detail::read_file(path)); }

}  // namespace lowshot
