#include "lowshot/hallucinator.hpp"

#include "binary_io.hpp"
#include "lowshot/error.hpp"
#include "lowshot/kernels.hpp"
#include "lowshot/repr.hpp"
#include "lowshot/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lowshot {

namespace {

struct LloydRun {
    DenseMatrix centroids;
    std::vector<std::size_t> assignment;
    std::vector<double> trace;
};

DenseMatrix plus_plus_seeding(const DenseMatrix& points, std::size_t k, SeededRng& rng) {
    const std::size_t n = points.rows();
    DenseMatrix centers(k, points.cols());
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t pick = rng.below(n);
    for (std::size_t c = 0; c < k; ++c) {
        std::copy(points.row(pick).begin(), points.row(pick).end(), centers.row(c).begin());
        if (c + 1 == k) break;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d2[i] = std::min(d2[i], kernels::squared_distance(points.row(i), centers.row(c)));
            total += d2[i];
        }
        if (total <= 0.0) {
            pick = rng.below(n);
            continue;
        }
        double target = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            target -= d2[i];
            if (target < 0.0 && d2[i] > 0.0) {
                pick = i;
                break;
            }
        }
    }
    return centers;
}

LloydRun lloyd(const DenseMatrix& points, DenseMatrix centers, std::size_t max_iters) {
    const std::size_t n = points.rows();
    const std::size_t k = centers.rows();
    LloydRun run;
    run.assignment.assign(n, static_cast<std::size_t>(-1));
    std::vector<double> dist(n);
    for (std::size_t it = 0; it < max_iters; ++it) {
        bool changed = false;
        double objective = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = kernels::squared_distance(points.row(i), centers.row(0));
            for (std::size_t c = 1; c < k; ++c) {
                const double dd = kernels::squared_distance(points.row(i), centers.row(c));
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (run.assignment[i] != best) changed = true;
            run.assignment[i] = best;
            dist[i] = best_d;
            objective += best_d;
        }
        if (!run.trace.empty()) {
            const double prev = run.trace.back();
            if (objective > prev + 1e-12 * std::max(1.0, prev))
                throw std::logic_error("kmeans: Lloyd objective increased from " + std::to_string(prev) + " to " +
                                       std::to_string(objective));
        }
        run.trace.push_back(objective);
        if (!changed) break;

        // Update step.
        centers.fill(0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            kernels::axpy(1.0, points.row(i), centers.row(run.assignment[i]));
            ++counts[run.assignment[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                kernels::scale(1.0 / static_cast<double>(counts[c]), centers.row(c));
                continue;
            }
            // Empty cluster: move it onto the point currently farthest from its centroid.
            const std::size_t far =
                static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
            std::copy(points.row(far).begin(), points.row(far).end(), centers.row(c).begin());
            dist[far] = 0.0;
        }
    }
    run.centroids = std::move(centers);
    return run;
}

// Single-point moves (Hartigan): relocate a point whenever that strictly lowers
// the objective once both centroids shift. Returns true if anything moved.
bool hartigan_pass(const DenseMatrix& points, LloydRun& run) {
    const std::size_t n = points.rows(), k = run.centroids.rows();
    std::vector<double> counts(k, 0.0);
    for (std::size_t a : run.assignment) counts[a] += 1.0;
    bool moved = false;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t from = run.assignment[i];
        if (counts[from] <= 1.0) continue;
        const double nf = counts[from];
        const double removal = nf / (nf - 1.0) * kernels::squared_distance(points.row(i), run.centroids.row(from));
        std::size_t to = from;
        double best_gain = 1e-12 * std::max(1.0, removal);
        for (std::size_t c = 0; c < k; ++c) {
            if (c == from) continue;
            const double add = counts[c] / (counts[c] + 1.0) * kernels::squared_distance(points.row(i), run.centroids.row(c));
            if (removal - add > best_gain) {
                best_gain = removal - add;
                to = c;
            }
        }
        if (to == from) continue;
        // Incremental centroid updates.
        auto cf = run.centroids.row(from);
        auto ct = run.centroids.row(to);
        const auto x = points.row(i);
        for (std::size_t j = 0; j < cf.size(); ++j) {
            cf[j] = (cf[j] * nf - x[j]) / (nf - 1.0);
            ct[j] = (ct[j] * counts[to] + x[j]) / (counts[to] + 1.0);
        }
        counts[from] -= 1.0;
        counts[to] += 1.0;
        run.assignment[i] = to;
        moved = true;
    }
    return moved;
}

// Centroids recomputed as exact means of the current assignment, matching the
// Lloyd update so the two phases agree to the last bit.
void recompute_means(const DenseMatrix& points, LloydRun& run) {
    run.centroids.fill(0.0);
    std::vector<std::size_t> counts(run.centroids.rows(), 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        kernels::axpy(1.0, points.row(i), run.centroids.row(run.assignment[i]));
        ++counts[run.assignment[i]];
    }
    for (std::size_t c = 0; c < counts.size(); ++c)
        kernels::scale(1.0 / static_cast<double>(counts[c]), run.centroids.row(c));
}

double objective_of(const DenseMatrix& points, const LloydRun& run) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i)
        total += kernels::squared_distance(points.row(i), run.centroids.row(run.assignment[i]));
    return total;
}

// Lloyd to convergence, then alternate Hartigan passes and Lloyd until neither
// improves. The trace stays non-increasing.
LloydRun lloyd_refined(const DenseMatrix& points, DenseMatrix centers, std::size_t max_iters) {
    LloydRun run = lloyd(points, std::move(centers), max_iters);
    for (std::size_t round = 0; round < max_iters && hartigan_pass(points, run); ++round) {
        recompute_means(points, run);
        const double after = objective_of(points, run);
        if (after > run.trace.back() + 1e-12 * std::max(1.0, run.trace.back()))
            throw std::logic_error("kmeans: refinement increased the objective");
        run.trace.push_back(after);
        LloydRun next = lloyd(points, run.centroids, max_iters);
        if (next.trace.back() > run.trace.back() + 1e-12 * std::max(1.0, run.trace.back()))
            throw std::logic_error("kmeans: Lloyd after refinement increased the objective");
        run.trace.insert(run.trace.end(), next.trace.begin(), next.trace.end());
        run.centroids = std::move(next.centroids);
        run.assignment = std::move(next.assignment);
    }
    return run;
}

}  // namespace

KMeansResult kmeans(const DenseMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters,
                    std::size_t restarts) {
    LOWSHOT_REQUIRE(points.rows() >= 1, "kmeans: no points");
    LOWSHOT_REQUIRE(k >= 1, "kmeans: k must be >= 1");
    LOWSHOT_REQUIRE(max_iters >= 1 && restarts >= 1, "kmeans: max_iters and restarts must be >= 1");
    k = std::min(k, points.rows());

    KMeansResult best;
    bool have = false;
    for (std::size_t r = 0; r < restarts; ++r) {
        SeededRng rng(derive_seed({seed, r}));
        LloydRun run = lloyd_refined(points, plus_plus_seeding(points, k, rng), max_iters);
        const double objective = run.trace.back();
        if (!have || objective < best.objective) {
            have = true;
            best.centroids = std::move(run.centroids);
            best.assignment = std::move(run.assignment);
            best.objective = objective;
            best.objective_trace = std::move(run.trace);
        }
    }
    best.counts.assign(k, 0);
    for (std::size_t a : best.assignment) ++best.counts[a];
    return best;
}

const ClassCentroids* CentroidSet::find(std::uint32_t class_id) const noexcept {
    for (const auto& c : classes)
        if (c.class_id == class_id) return &c;
    return nullptr;
}

CentroidSet compute_centroids(const FeatureDataset& data, const CentroidConfig& config) {
    data.validate();
    LOWSHOT_REQUIRE(config.max_per_class >= 1, "compute_centroids: max_per_class must be >= 1");
    CentroidSet out;
    out.max_per_class = config.max_per_class;
    const auto by_class = data.indices_by_class();
    for (std::uint32_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].empty()) continue;
        const DenseMatrix pts = data.subset(by_class[c]).features;
        const std::size_t k = std::min(config.max_per_class, (pts.rows() + 1) / 2);
        KMeansResult km = kmeans(pts, std::max<std::size_t>(k, 1), derive_seed({config.seed, c}), config.max_iters,
                                 config.restarts);
        out.classes.push_back({c, std::move(km.centroids), std::move(km.counts)});
    }
    return out;
}

std::vector<AnalogyQuadruplet> mine_quadruplets(const CentroidSet& centroids, MiningMode mode) {
    struct PairDiff {
        std::size_t i1, i2;
        std::vector<double> diff;
        double norm;
    };
    const std::size_t d = centroids.dim();
    std::vector<std::vector<PairDiff>> diffs(centroids.classes.size());
    for (std::size_t c = 0; c < centroids.classes.size(); ++c) {
        const DenseMatrix& m = centroids.classes[c].centroids;
        LOWSHOT_REQUIRE(m.cols() == d, "mine_quadruplets: centroid dimension mismatch");
        for (std::size_t i1 = 0; i1 < m.rows(); ++i1)
            for (std::size_t i2 = 0; i2 < m.rows(); ++i2) {
                if (i1 == i2) continue;
                PairDiff p{i1, i2, std::vector<double>(d), 0.0};
                for (std::size_t j = 0; j < d; ++j) p.diff[j] = m(i1, j) - m(i2, j);
                p.norm = norm2(p.diff);
                diffs[c].push_back(std::move(p));
            }
    }

    // Same arithmetic as cosine_similarity, with norms hoisted.
    auto cosine = [](const PairDiff& u, const PairDiff& v) {
        if (u.norm < 1e-12 || v.norm < 1e-12) return 0.0;
        return std::clamp(kernels::dot(u.diff, v.diff) / (u.norm * v.norm), -1.0, 1.0);
    };

    std::vector<AnalogyQuadruplet> out;
    for (std::size_t a = 0; a < diffs.size(); ++a) {
        for (const PairDiff& src : diffs[a]) {
            AnalogyQuadruplet best;
            double best_sim = -std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < diffs.size(); ++b) {
                if (b == a) continue;
                for (const PairDiff& cand : diffs[b]) {
                    const double s = cosine(src, cand);
                    const AnalogyQuadruplet q{centroids.classes[a].class_id, src.i1, src.i2,
                                              centroids.classes[b].class_id, cand.i1, cand.i2, s};
                    if (mode == MiningMode::all_positive) {
                        if (s > 0.0) out.push_back(q);
                    } else if (s > best_sim) {
                        best_sim = s;
                        best = q;
                    }
                }
            }
            if (mode == MiningMode::best_match && best_sim > 0.0) out.push_back(best);
        }
    }
    return out;
}

GeneratorNet make_generator(std::size_t feat_dim, std::size_t hidden, std::uint64_t seed) {
    LOWSHOT_REQUIRE(feat_dim >= 1 && hidden >= 1, "make_generator: sizes must be positive");
    return GeneratorNet{Mlp::initialized({3 * feat_dim, hidden, hidden, feat_dim}, seed)};
}

void GeneratorTrainConfig::validate() const {
    LOWSHOT_REQUIRE(lambda >= 0.0, "generator config: lambda must be >= 0");
    LOWSHOT_REQUIRE(learning_rate > 0.0, "generator config: learning_rate must be > 0");
    LOWSHOT_REQUIRE(epochs >= 1 && batch_size >= 1 && hidden >= 1, "generator config: epochs, batch, hidden must be >= 1");
}

namespace {

const DenseMatrix& centroids_of(const CentroidSet& set, std::uint32_t cls) {
    const ClassCentroids* c = set.find(cls);
    if (c == nullptr) throw InvalidArgument("no centroids for class " + std::to_string(cls));
    return c->centroids;
}

void fill_generator_input(const AnalogyQuadruplet& q, const CentroidSet& set, std::span<double> row,
                          std::span<double> target) {
    const DenseMatrix& ca = centroids_of(set, q.class_a);
    const DenseMatrix& cb = centroids_of(set, q.class_b);
    LOWSHOT_REQUIRE(q.a1 < ca.rows() && q.a2 < ca.rows() && q.b1 < cb.rows() && q.b2 < cb.rows(),
                    "quadruplet centroid index out of range");
    const std::size_t d = ca.cols();
    std::copy(ca.row(q.a1).begin(), ca.row(q.a1).end(), row.begin());
    std::copy(cb.row(q.b1).begin(), cb.row(q.b1).end(), row.begin() + static_cast<std::ptrdiff_t>(d));
    std::copy(cb.row(q.b2).begin(), cb.row(q.b2).end(), row.begin() + static_cast<std::ptrdiff_t>(2 * d));
    std::copy(ca.row(q.a2).begin(), ca.row(q.a2).end(), target.begin());
}

}  // namespace

GeneratorTrainResult train_generator(std::span<const AnalogyQuadruplet> quadruplets, const CentroidSet& centroids,
                                     const LinearClassifier& base_classifier, const GeneratorTrainConfig& config) {
    config.validate();
    if (quadruplets.empty()) throw InvalidArgument("train_generator: the analogy dataset is empty");
    const std::size_t d = centroids.dim();
    LOWSHOT_REQUIRE(base_classifier.dim() == d, "train_generator: classifier dimension != feature dimension");
    for (const auto& q : quadruplets)
        LOWSHOT_REQUIRE(q.class_a < base_classifier.classes(), "train_generator: class outside the classifier label space");

    GeneratorTrainResult result;
    result.generator = make_generator(d, config.hidden, derive_seed({config.seed, 1}));
    Mlp& net = result.generator.net;
    SeededRng order_rng(derive_seed({config.seed, 2}));

    std::vector<std::size_t> block_sizes;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        block_sizes.push_back(net.weights(l).size());
        block_sizes.push_back(net.bias(l).dim());
    }
    AdamOptimizer opt(block_sizes);

    const std::size_t n = quadruplets.size();
    const std::size_t batch = std::min(config.batch_size, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t iteration = 0;
    const double mse_scale = config.lambda / static_cast<double>(d);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);
        double epoch_loss = 0.0;
        double epoch_mse = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start + batch <= n; start += batch, ++iteration) {
            DenseMatrix inputs(batch, 3 * d);
            DenseMatrix targets(batch, d);
            std::vector<std::uint32_t> labels(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                const auto& q = quadruplets[order[start + b]];
                fill_generator_input(q, centroids, inputs.row(b), targets.row(b));
                labels[b] = q.class_a;
            }
            const auto trace = net.forward_batch(inputs);
            const DenseMatrix& out = trace.output();

            // lambda * mean_b (1/d)|out_b - target_b|^2
            DenseMatrix grad_out(batch, d);
            double mse = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                const double diff = out.flat()[i] - targets.flat()[i];
                mse += diff * diff;
                grad_out.flat()[i] = 2.0 * mse_scale * diff / static_cast<double>(batch);
            }
            mse /= static_cast<double>(batch * d);
            HeadGradient cls = cls_loss_grad(base_classifier, out, labels);
            kernels::axpy(1.0, cls.grad_features.flat(), grad_out.flat());
            const double loss = config.lambda * mse + cls.value;
            if (!std::isfinite(loss)) throw DivergenceError("generator training produced a non-finite loss", iteration);

            MlpGradients grads = net.zero_gradients();
            net.backward_batch(trace, grad_out, grads);
            auto params = net.parameter_blocks();
            auto gblocks = gradient_blocks(grads);
            opt.step(params, gblocks, config.learning_rate);

            epoch_loss += loss;
            epoch_mse += mse;
            ++batches;
        }
        result.loss_trace.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
        result.mse_trace.push_back(batches ? epoch_mse / static_cast<double>(batches) : 0.0);
    }
    if (!net.all_finite()) throw DivergenceError("generator training produced non-finite parameters", iteration);
    return result;
}

double generator_mse(const GeneratorNet& generator, std::span<const AnalogyQuadruplet> quadruplets,
                     const CentroidSet& centroids) {
    LOWSHOT_REQUIRE(!quadruplets.empty(), "generator_mse: no quadruplets");
    const std::size_t d = centroids.dim();
    DenseMatrix inputs(quadruplets.size(), 3 * d);
    DenseMatrix targets(quadruplets.size(), d);
    for (std::size_t i = 0; i < quadruplets.size(); ++i)
        fill_generator_input(quadruplets[i], centroids, inputs.row(i), targets.row(i));
    const auto trace = generator.net.forward_batch(inputs);
    return kernels::squared_distance(trace.output().flat(), targets.flat()) / static_cast<double>(targets.size());
}

LabeledFeature hallucinate(const GeneratorNet& generator, std::span<const double> seed_feature,
                           std::span<const double> c1, std::span<const double> c2, std::uint32_t label) {
    const std::size_t d = generator.feature_dim();
    LOWSHOT_REQUIRE(seed_feature.size() == d && c1.size() == d && c2.size() == d,
                    "hallucinate: input dimensions do not match the generator");
    std::vector<double> input;
    input.reserve(3 * d);
    input.insert(input.end(), seed_feature.begin(), seed_feature.end());
    input.insert(input.end(), c1.begin(), c1.end());
    input.insert(input.end(), c2.begin(), c2.end());
    return {generator.net.forward(input), label};
}

LowShotTrainSet augment_low_shot(const LowShotTrainSet& trainset, const GeneratorNet& generator,
                                 const CentroidSet& centroids, std::size_t k_min, std::uint64_t seed) {
    LOWSHOT_REQUIRE(k_min >= 1, "augment_low_shot: k_min must be >= 1");
    LowShotTrainSet out = trainset;

    std::vector<const ClassCentroids*> donors;
    for (const auto& c : centroids.classes)
        if (c.centroids.rows() >= 2) donors.push_back(&c);

    SeededRng rng(seed);
    for (std::uint32_t cls : trainset.novel_classes) {
        const std::size_t have = trainset.count_of(cls);
        if (have >= k_min) continue;
        if (donors.empty()) throw InvalidArgument("augment_low_shot: no base class has at least two centroids");
        LOWSHOT_REQUIRE(generator.feature_dim() == trainset.data.dim(), "augment_low_shot: generator/feature dimension mismatch");
        std::vector<std::size_t> real_rows;
        for (std::size_t i = 0; i < trainset.data.size(); ++i)
            if (trainset.data.labels[i] == cls && trainset.source[i] != LowShotTrainSet::kGenerated) real_rows.push_back(i);
        if (real_rows.empty())
            throw InvalidArgument("augment_low_shot: novel class " + std::to_string(cls) + " has no real seed example");

        for (std::size_t g = have; g < k_min; ++g) {
            const std::size_t seed_row = real_rows[rng.below(real_rows.size())];
            const ClassCentroids& donor = *donors[rng.below(donors.size())];
            const std::size_t i1 = rng.below(donor.centroids.rows());
            std::size_t i2 = rng.below(donor.centroids.rows() - 1);
            if (i2 >= i1) ++i2;
            LabeledFeature h = hallucinate(generator, trainset.data.features.row(seed_row), donor.centroids.row(i1),
                                           donor.centroids.row(i2), cls);
            out.data.features.append_row(h.feature);
            out.data.labels.push_back(cls);
            out.source.push_back(LowShotTrainSet::kGenerated);
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_generator(const GeneratorNet& generator) { return encode_mlp("LSG1", generator.net); }

GeneratorNet decode_generator(std::span<const std::uint8_t> bytes) { return GeneratorNet{decode_mlp("LSG1", bytes)}; }

void save_generator(const GeneratorNet& generator, const std::filesystem::path& path) {
    detail::write_file(path, encode_generator(generator));
}

GeneratorNet load_generator(const std::filesystem::path& path) { return decode_generator(detail::read_file(path)); }

std::string encode_quadruplets(std::span<const AnalogyQuadruplet> quadruplets) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& q : quadruplets) {
        nlohmann::ordered_json r;
        r["a"] = q.class_a;
        r["i1"] = q.a1;
        r["i2"] = q.a2;
        r["b"] = q.class_b;
        r["j1"] = q.b1;
        r["j2"] = q.b2;
        r["similarity"] = q.similarity;
        arr.push_back(std::move(r));
    }
    nlohmann::ordered_json doc;
    doc["quadruplets"] = std::move(arr);
    return doc.dump(1) + "\n";
}

std::vector<AnalogyQuadruplet> decode_quadruplets(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        std::vector<AnalogyQuadruplet> out;
        for (const auto& r : doc.at("quadruplets")) {
            out.push_back({r.at("a").get<std::uint32_t>(), r.at("i1").get<std::size_t>(), r.at("i2").get<std::size_t>(),
                           r.at("b").get<std::uint32_t>(), r.at("j1").get<std::size_t>(), r.at("j2").get<std::size_t>(),
                           r.at("similarity").get<double>()});
        }
        return out;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("quadruplet dump: ") + e.what(), e.byte);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("quadruplet dump: ") + e.what(), 0);
    }
}

std::string encode_centroids(const CentroidSet& centroids) {
    nlohmann::ordered_json doc;
    doc["max_per_class"] = centroids.max_per_class;
    doc["dim"] = centroids.dim();
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& c : centroids.classes) {
        nlohmann::ordered_json r;
        r["class"] = c.class_id;
        r["counts"] = c.counts;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < c.centroids.rows(); ++i)
            rows.push_back(std::vector<double>(c.centroids.row(i).begin(), c.centroids.row(i).end()));
        r["centroids"] = std::move(rows);
        arr.push_back(std::move(r));
    }
    doc["classes"] = std::move(arr);
    return doc.dump(1) + "\n";
}

CentroidSet decode_centroids(const std::string& text) {
    try {
        const auto doc = nlohmann::json::parse(text);
        CentroidSet out;
        out.max_per_class = doc.at("max_per_class").get<std::size_t>();
        for (const auto& r : doc.at("classes")) {
            ClassCentroids c;
            c.class_id = r.at("class").get<std::uint32_t>();
            c.counts = r.at("counts").get<std::vector<std::size_t>>();
            for (const auto& row : r.at("centroids")) c.centroids.append_row(row.get<std::vector<double>>());
            out.classes.push_back(std::move(c));
        }
        return out;
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("centroid dump: ") + e.what(), e.byte);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("centroid dump: ") + e.what(), 0);
    }
}

}  // namespace lowshot
