#include "lowshot/theory.hpp"

#include "lowshot/error.hpp"
#include "lowshot/kernels.hpp"
#include "lowshot/rng.hpp"
#include "parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace lowshot {

DenseMatrix hessian_full(const LinearClassifier& clf, const DenseMatrix& features,
                         std::span<const std::uint32_t> labels) {
    const std::size_t k_count = clf.classes();
    const std::size_t d = clf.dim();
    LOWSHOT_REQUIRE(features.cols() == d, "hessian_full: feature dimension does not match the classifier");
    LOWSHOT_REQUIRE(features.rows() == labels.size() && !labels.empty(), "hessian_full: need one label per row");
    for (std::uint32_t y : labels) LOWSHOT_REQUIRE(y < k_count, "hessian_full: label out of range");
    const std::size_t size = k_count * d;
    if (size > kMaxHessianSize)
        throw InvalidArgument("hessian_full: K*d = " + std::to_string(size) + " exceeds the dense limit of " +
                              std::to_string(kMaxHessianSize));

    DenseMatrix h(size, size);
    const double inv_n = 1.0 / static_cast<double>(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i) {
        const auto x = features.row(i);
        const DenseVector p = class_probabilities(clf, x);
        for (std::size_t j = 0; j < k_count; ++j)
            for (std::size_t k = 0; k < k_count; ++k) {
                const double coef = inv_n * p[j] * ((j == k ? 1.0 : 0.0) - p[k]);
                if (coef == 0.0) continue;
                for (std::size_t a = 0; a < d; ++a)
                    for (std::size_t b = 0; b < d; ++b) h(j * d + a, k * d + b) += coef * x[a] * x[b];
            }
    }
    return h;
}

double hessian_upper_bound(const DenseMatrix& features) {
    LOWSHOT_REQUIRE(features.rows() >= 1, "hessian_upper_bound: need at least one example");
    return kernels::squared_norm(features.flat()) / static_cast<double>(features.rows());
}

HessianReport check_lipschitz_instance(std::uint64_t seed, const LipschitzSuiteConfig& config) {
    SeededRng rng(seed);
    HessianReport r;
    r.seed = seed;
    r.classes = 2 + rng.below(config.max_classes - 1);
    r.dim = 1 + rng.below(config.max_dim);
    r.examples = 1 + rng.below(config.max_examples);
    const double w_scale = std::pow(10.0, rng.uniform(-1.0, 1.0));
    const double x_scale = std::pow(10.0, rng.uniform(-1.0, 1.0));

    LinearClassifier clf(r.classes, r.dim);
    for (double& v : clf.weights.flat()) v = w_scale * rng.normal();
    DenseMatrix x(r.examples, r.dim);
    for (double& v : x.flat()) v = x_scale * rng.normal();
    std::vector<std::uint32_t> labels(r.examples);
    for (auto& y : labels) y = static_cast<std::uint32_t>(rng.below(r.classes));

    const std::vector<double> eig = symmetric_eigenvalues(hessian_full(clf, x, labels));
    r.lambda_min = eig.front();
    r.lambda_max = eig.back();
    r.bound = hessian_upper_bound(x);
    r.margin = r.bound - r.lambda_max;
    r.satisfied = r.lambda_max <= r.bound + config.tolerance;
    return r;
}

std::vector<HessianReport> verify_lipschitz_bound(const LipschitzSuiteConfig& config, std::size_t jobs) {
    LOWSHOT_REQUIRE(config.max_classes >= 2 && config.max_dim >= 1 && config.max_examples >= 1,
                    "verify_lipschitz_bound: caps must allow K >= 2, d >= 1, n >= 1");
    LOWSHOT_REQUIRE(config.max_classes * config.max_dim <= kMaxHessianSize,
                    "verify_lipschitz_bound: caps exceed the dense Hessian limit");
    std::vector<HessianReport> out(config.instances);
    detail::parallel_for(config.instances, jobs, [&](std::size_t i) {
        out[i] = check_lipschitz_instance(derive_seed({config.seed, i}), config);
    });
    return out;
}

double distance_lower_bound(const LinearClassifier& w_star, const DenseMatrix& features,
                            std::span<const std::uint32_t> labels) {
    LOWSHOT_REQUIRE(features.rows() >= 1, "distance_lower_bound: empty example set");
    const double denom = hessian_upper_bound(features);
    if (!(denom > 0.0)) throw InvalidArgument("distance_lower_bound: all features are zero");
    return grad_wrt_weights(w_star, features, labels).frobenius_norm() / denom;
}

std::size_t DistanceSuiteResult::violations() const {
    return static_cast<std::size_t>(
        std::count_if(reports.begin(), reports.end(), [](const DistanceBoundReport& r) { return !r.satisfied; }));
}

TheoryInstance make_overlapping_instance(std::uint32_t classes, std::size_t dim, std::size_t examples,
                                         std::uint64_t seed) {
    LOWSHOT_REQUIRE(classes >= 2 && dim >= 1 && examples >= 2, "make_overlapping_instance: need K >= 2, d >= 1, n >= 2");
    SeededRng rng(seed);
    DenseMatrix means(classes, dim);
    for (double& v : means.flat()) v = rng.normal();
    TheoryInstance inst;
    inst.classes = classes;
    inst.features = DenseMatrix(examples, dim);
    inst.labels.resize(examples);
    for (std::size_t i = 0; i + 1 < examples; ++i) {
        inst.labels[i] = static_cast<std::uint32_t>(i % classes);
        for (std::size_t a = 0; a < dim; ++a) inst.features(i, a) = means(inst.labels[i], a) + rng.normal();
    }
    const std::size_t last = examples - 1;
    std::copy(inst.features.row(0).begin(), inst.features.row(0).end(), inst.features.row(last).begin());
    inst.labels[last] = (inst.labels[0] + 1) % classes;
    return inst;
}

DistanceSuiteResult verify_distance_bound(const DistanceSuiteConfig& config, std::size_t jobs) {
    LOWSHOT_REQUIRE(config.grad_tol > 0.0, "verify_distance_bound: grad_tol must be > 0");
    struct Slot {
        std::vector<DistanceBoundReport> reports;
        bool skipped = false;
        std::uint64_t seed = 0;
    };
    std::vector<Slot> slots(config.instances);
    detail::parallel_for(config.instances, jobs, [&](std::size_t i) {
        Slot& slot = slots[i];
        slot.seed = derive_seed({config.seed, i});
        SeededRng rng(slot.seed);
        const auto k_count = static_cast<std::uint32_t>(2 + rng.below(2));
        const std::size_t d = 2 + rng.below(2);
        const TheoryInstance inst = make_overlapping_instance(k_count, d, 40, derive_seed({slot.seed, 0}));
        const OptimumResult opt = train_to_optimum(inst.features, inst.labels, inst.classes, config.grad_tol);
        if (!opt.converged) {
            slot.skipped = true;
            return;
        }
        const DenseMatrix& wb = opt.classifier.weights;
        const double denom = hessian_upper_bound(inst.features);
        const double scale = wb.frobenius_norm() + 1.0;
        for (std::size_t s = 0; s < config.samples_per_instance; ++s) {
            DenseMatrix u(k_count, d);
            for (double& v : u.flat()) v = rng.normal();
            const double r = scale * std::pow(10.0, rng.uniform(-3.0, 2.0)) / u.frobenius_norm();
            LinearClassifier w_star(wb);
            kernels::axpy(r, u.flat(), w_star.weights.flat());

            DistanceBoundReport rep;
            rep.seed = slot.seed;
            rep.sample = s;
            rep.grad_norm = grad_wrt_weights(w_star, inst.features, inst.labels).frobenius_norm();
            rep.bound = rep.grad_norm / denom;
            rep.distance = std::sqrt(kernels::squared_distance(w_star.weights.flat(), wb.flat()));
            rep.slack = config.grad_tol / denom;
            rep.satisfied = rep.distance >= rep.bound * (1.0 - 1e-6) - rep.slack;
            slot.reports.push_back(rep);
        }
    });
    DistanceSuiteResult out;
    for (auto& slot : slots) {
        if (slot.skipped) out.skipped.push_back(slot.seed);
        out.reports.insert(out.reports.end(), slot.reports.begin(), slot.reports.end());
    }
    return out;
}

double cosine_distance(const DenseMatrix& a, const DenseMatrix& b) {
    LOWSHOT_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), "cosine_distance: shape mismatch");
    return 1.0 - cosine_similarity(a.flat(), b.flat());
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman_correlation(std::span<const double> x, std::span<const double> y) {
    LOWSHOT_REQUIRE(x.size() == y.size() && x.size() >= 2, "spearman_correlation: need two equal-length samples");
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double mean = 0.5 * static_cast<double>(x.size() + 1);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (rx[i] - mean) * (ry[i] - mean);
        sxx += (rx[i] - mean) * (rx[i] - mean);
        syy += (ry[i] - mean) * (ry[i] - mean);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

GradnormResult gradnorm_distance_experiment(const GradnormConfig& config) {
    LOWSHOT_REQUIRE(config.samples >= 2, "gradnorm_distance_experiment: need at least two samples");
    LOWSHOT_REQUIRE(config.decades > 0.0, "gradnorm_distance_experiment: decades must be > 0");
    const TheoryInstance inst =
        make_overlapping_instance(config.classes, config.dim, config.examples, derive_seed({config.seed, 0}));
    const OptimumResult opt = train_to_optimum(inst.features, inst.labels, inst.classes, config.grad_tol);
    if (!opt.converged) throw Error("gradnorm_distance_experiment: the optimum did not converge");
    const DenseMatrix& wb = opt.classifier.weights;
    const double wb_norm = wb.frobenius_norm();
    LOWSHOT_REQUIRE(wb_norm > 0.0, "gradnorm_distance_experiment: the optimum is W = 0");

    GradnormResult out;
    out.optimum_grad_norm = opt.grad_norm;
    SeededRng rng(derive_seed({config.seed, 1}));
    const std::size_t k_count = wb.rows(), d = wb.cols();
    for (std::size_t s = 0; s < config.samples; ++s) {
        DenseMatrix u(k_count, d);
        for (double& v : u.flat()) v = rng.normal();
        for (std::size_t a = 0; a < d; ++a) {
            double mean = 0.0;
            for (std::size_t k = 0; k < k_count; ++k) mean += u(k, a);
            mean /= static_cast<double>(k_count);
            for (std::size_t k = 0; k < k_count; ++k) u(k, a) -= mean;
        }
        GradnormRow row;
        row.radius = wb_norm * std::pow(10.0, -rng.uniform() * config.decades);
        LinearClassifier w(wb);
        kernels::axpy(row.radius / u.frobenius_norm(), u.flat(), w.weights.flat());
        row.grad_norm = grad_wrt_weights(w, inst.features, inst.labels).frobenius_norm();
        row.cosine_distance = cosine_distance(w.weights, wb);
        out.rows.push_back(row);
    }
    std::vector<double> g, c;
    for (const auto& row : out.rows) {
        g.push_back(row.grad_norm);
        c.push_back(row.cosine_distance);
    }
    out.spearman = spearman_correlation(g, c);
    return out;
}

std::size_t VerifyReport::lipschitz_violations() const {
    return static_cast<std::size_t>(
        std::count_if(lipschitz.begin(), lipschitz.end(), [](const HessianReport& r) { return !r.satisfied; }));
}

bool VerifyReport::passed() const {
    return lipschitz_violations() == 0 && distance.violations() == 0 && gradnorm.spearman >= spearman_threshold;
}

std::string encode_verify_report(const VerifyReport& report) {
    using nlohmann::ordered_json;
    ordered_json doc;

    ordered_json lip;
    double worst = std::numeric_limits<double>::infinity();
    ordered_json recs = ordered_json::array();
    for (const auto& r : report.lipschitz) {
        worst = std::min(worst, r.margin);
        recs.push_back({{"seed", r.seed},
                        {"classes", r.classes},
                        {"dim", r.dim},
                        {"examples", r.examples},
                        {"lambda_max", r.lambda_max},
                        {"lambda_min", r.lambda_min},
                        {"bound", r.bound},
                        {"margin", r.margin},
                        {"satisfied", r.satisfied}});
    }
    lip["instances"] = report.lipschitz.size();
    lip["violations"] = report.lipschitz_violations();
    lip["worst_margin"] = report.lipschitz.empty() ? 0.0 : worst;
    lip["records"] = std::move(recs);
    doc["lipschitz"] = std::move(lip);

    ordered_json dist;
    recs = ordered_json::array();
    for (const auto& r : report.distance.reports)
        recs.push_back({{"seed", r.seed},
                        {"sample", r.sample},
                        {"grad_norm", r.grad_norm},
                        {"bound", r.bound},
                        {"distance", r.distance},
                        {"slack", r.slack},
                        {"satisfied", r.satisfied}});
    dist["samples"] = report.distance.reports.size();
    dist["violations"] = report.distance.violations();
    dist["skipped"] = report.distance.skipped;
    dist["records"] = std::move(recs);
    doc["distance"] = std::move(dist);

    ordered_json gn;
    gn["spearman"] = report.gradnorm.spearman;
    gn["threshold"] = report.spearman_threshold;
    gn["optimum_grad_norm"] = report.gradnorm.optimum_grad_norm;
    recs = ordered_json::array();
    for (const auto& r : report.gradnorm.rows)
        recs.push_back({{"radius", r.radius}, {"grad_norm", r.grad_norm}, {"cosine_distance", r.cosine_distance}});
    gn["rows"] = std::move(recs);
    doc["gradnorm"] = std::move(gn);
    doc["passed"] = report.passed();
    return doc.dump(1) + "\n";
}

}  // namespace lowshot
