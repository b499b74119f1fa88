#include "lowshot/error.hpp"
#include "lowshot/hallucinator.hpp"
#include "lowshot/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <map>
#include <algorithm>

using namespace lowshot;

namespace {

DenseMatrix random_points(SeededRng& rng, std::size_t n, std::size_t d) {
    DenseMatrix p(n, d);
    for (auto& v : p.flat()) v = rng.normal() + (rng.below(2) ? 3.0 : 0.0);
    return p;
}

// Minimum over every assignment of points to exactly k non-empty clusters.
double brute_force_kmeans(const DenseMatrix& p, std::size_t k) {
    const std::size_t n = p.rows(), d = p.cols();
    std::vector<std::size_t> label(n, 0);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == n) {
            std::vector<std::vector<double>> sum(k, std::vector<double>(d, 0.0));
            std::vector<std::size_t> cnt(k, 0);
            for (std::size_t r = 0; r < n; ++r) {
                ++cnt[label[r]];
                for (std::size_t j = 0; j < d; ++j) sum[label[r]][j] += p(r, j);
            }
            for (std::size_t c = 0; c < k; ++c)
                if (cnt[c] == 0) return;
            double obj = 0.0;
            for (std::size_t r = 0; r < n; ++r)
                for (std::size_t j = 0; j < d; ++j) obj += std::pow(p(r, j) - sum[label[r]][j] / cnt[label[r]], 2);
            best = std::min(best, obj);
            return;
        }
        for (std::size_t c = 0; c < k; ++c) {
            label[i] = c;
            rec(i + 1);
        }
    };
    rec(0);
    return best;
}

CentroidSet toy_centroids(SeededRng& rng, std::size_t classes, std::size_t per_class, std::size_t d) {
    CentroidSet s;
    for (std::size_t c = 0; c < classes; ++c) {
        ClassCentroids cc;
        cc.class_id = static_cast<std::uint32_t>(10 * c + 1);
        cc.centroids = DenseMatrix(per_class, d);
        for (auto& v : cc.centroids.flat()) v = std::round(4.0 * rng.normal()) / 2.0;  // coarse grid: frequent ties
        cc.counts.assign(per_class, 1);
        s.classes.push_back(cc);
    }
    return s;
}

// Exhaustive search written from the definition.
std::vector<AnalogyQuadruplet> oracle_mining(const CentroidSet& s, bool all_positive) {
    std::vector<AnalogyQuadruplet> out;
    auto diff = [&](std::size_t c, std::size_t i, std::size_t j) {
        std::vector<double> v(s.dim());
        for (std::size_t t = 0; t < s.dim(); ++t) v[t] = s.classes[c].centroids(i, t) - s.classes[c].centroids(j, t);
        return v;
    };
    for (std::size_t a = 0; a < s.classes.size(); ++a) {
        const std::size_t ka = s.classes[a].centroids.rows();
        for (std::size_t i1 = 0; i1 < ka; ++i1)
            for (std::size_t i2 = 0; i2 < ka; ++i2) {
                if (i1 == i2) continue;
                const auto u = diff(a, i1, i2);
                std::vector<AnalogyQuadruplet> cands;
                for (std::size_t b = 0; b < s.classes.size(); ++b) {
                    if (b == a) continue;
                    const std::size_t kb = s.classes[b].centroids.rows();
                    for (std::size_t j1 = 0; j1 < kb; ++j1)
                        for (std::size_t j2 = 0; j2 < kb; ++j2) {
                            if (j1 == j2) continue;
                            const double sim = cosine_similarity(u, diff(b, j1, j2));
                            cands.push_back({s.classes[a].class_id, i1, i2, s.classes[b].class_id, j1, j2, sim});
                        }
                }
                if (all_positive) {
                    for (const auto& q : cands)
                        if (q.similarity > 0.0) out.push_back(q);
                    continue;
                }
                const AnalogyQuadruplet* best = nullptr;
                for (const auto& q : cands)
                    if (!best || q.similarity > best->similarity) best = &q;  // first maximum = lowest (b, j1, j2)
                if (best && best->similarity > 0.0) out.push_back(*best);
            }
    }
    return out;
}

void check_same(const std::vector<AnalogyQuadruplet>& got, const std::vector<AnalogyQuadruplet>& want) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].class_a == want[i].class_a);
        CHECK(got[i].a1 == want[i].a1);
        CHECK(got[i].a2 == want[i].a2);
        CHECK(got[i].class_b == want[i].class_b);
        CHECK(got[i].b1 == want[i].b1);
        CHECK(got[i].b2 == want[i].b2);
        CHECK(got[i].similarity == doctest::Approx(want[i].similarity).epsilon(1e-12));
    }
}

}  // namespace

TEST_CASE("k-means reaches the brute-force optimum on small instances") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        SeededRng rng(seed);
        const std::size_t n = 2 + rng.below(7);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(3, n));
        const DenseMatrix p = random_points(rng, n, 2);
        const KMeansResult r = kmeans(p, k, seed);
        CAPTURE(seed);
        CHECK(r.objective == doctest::Approx(brute_force_kmeans(p, k)).epsilon(1e-9).scale(1e-12));
    }
}

TEST_CASE("Lloyd objective never increases and the result is consistent") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(100 + seed);
        const DenseMatrix p = random_points(rng, 60, 3);
        const KMeansResult r = kmeans(p, 5, seed);
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
            CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] * (1 + 1e-12));
        double obj = 0.0;
        std::vector<std::size_t> counts(5, 0);
        for (std::size_t i = 0; i < 60; ++i) {
            ++counts[r.assignment[i]];
            for (std::size_t j = 0; j < 3; ++j) obj += std::pow(p(i, j) - r.centroids(r.assignment[i], j), 2);
        }
        CHECK(counts == r.counts);
        CHECK(obj == doctest::Approx(r.objective).epsilon(1e-10));
        CHECK(kmeans(p, 5, seed).assignment == r.assignment);
    }
}

TEST_CASE("k-means handles duplicates and k larger than the point count") {
    DenseMatrix p(4, 1, 2.0);
    const KMeansResult r = kmeans(p, 3, 1);
    CHECK(r.objective == 0.0);
    const KMeansResult big = kmeans(DenseMatrix::from_rows({{0.0}, {1.0}}), 5, 1);
    CHECK(big.centroids.rows() == 2);
    CHECK(big.objective == 0.0);
}

TEST_CASE("per-class centroid counts follow min(cap, ceil(count / 2))") {
    FeatureDataset d;
    SeededRng rng(3);
    const std::size_t sizes[] = {1, 2, 5, 40};
    for (std::uint32_t c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < sizes[c]; ++i) {
            d.features.append_row(std::vector<double>{rng.normal(), rng.normal()});
            d.labels.push_back(c);
        }
    d.class_count = 5;  // class 4 has no examples and is skipped
    CentroidConfig cfg;
    cfg.max_per_class = 10;
    const CentroidSet s = compute_centroids(d, cfg);
    REQUIRE(s.classes.size() == 4);
    CHECK(s.classes[0].centroids.rows() == 1);
    CHECK(s.classes[1].centroids.rows() == 1);
    CHECK(s.classes[2].centroids.rows() == 3);
    CHECK(s.classes[3].centroids.rows() == 10);
    CHECK(s.find(4) == nullptr);
    CHECK(s.find(3)->class_id == 3);
    CHECK(compute_centroids(d, cfg).classes[3].centroids == s.classes[3].centroids);
}

TEST_CASE("mining matches the exhaustive oracle on 3 classes x 2 centroids") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        SeededRng rng(seed);
        const CentroidSet s = toy_centroids(rng, 3, 2, 3);
        CAPTURE(seed);
        const auto best = mine_quadruplets(s, MiningMode::best_match);
        check_same(best, oracle_mining(s, false));
        for (const auto& q : best) CHECK(q.similarity > 0.0);
        check_same(mine_quadruplets(s, MiningMode::all_positive), oracle_mining(s, true));
        CHECK(mine_quadruplets(s) == best);
    }
}

TEST_CASE("mining on larger sets also matches the oracle") {
    SeededRng rng(77);
    const CentroidSet s = toy_centroids(rng, 4, 4, 2);
    check_same(mine_quadruplets(s), oracle_mining(s, false));
}

TEST_CASE("shared offsets give similarity one") {
    CentroidSet s;
    s.classes.push_back({0, DenseMatrix::from_rows({{0, 0}, {1, 2}}), {1, 1}});
    s.classes.push_back({1, DenseMatrix::from_rows({{5, 5}, {6, 7}}), {1, 1}});
    const auto q = mine_quadruplets(s);
    REQUIRE(q.size() == 4);
    for (const auto& x : q) CHECK(x.similarity == doctest::Approx(1.0));
    CHECK(q[0].class_a == 0);
    CHECK(q[0].a1 == 0);
    CHECK(q[0].b1 == 0);
}

TEST_CASE("generator output is non-negative and zero parameters give zero output") {
    GeneratorNet g = make_generator(4, 8, 1);
    SeededRng rng(2);
    std::vector<double> x(4), c1(4), c2(4);
    for (int t = 0; t < 50; ++t) {
        for (auto* v : {&x, &c1, &c2})
            for (double& e : *v) e = rng.normal();
        const LabeledFeature f = hallucinate(g, x, c1, c2, 7);
        CHECK(f.label == 7);
        CHECK(f.feature.dim() == 4);
        for (double e : f.feature) CHECK(e >= 0.0);
    }
    GeneratorNet zero{Mlp({12, 8, 8, 4})};
    for (double e : hallucinate(zero, x, c1, c2, 0).feature) CHECK(e == 0.0);
}

namespace {

struct AnalogyWorld {
    SyntheticWorld world;
    CentroidSet centroids;
    LinearClassifier clf;
    std::vector<AnalogyQuadruplet> quads;
};

constexpr std::size_t kModes = 3;

// Noise-free world: each class's centroids are exactly its mode points, and
// every ordered pair of modes in one class is an analogy for the same pair in
// every other class.
AnalogyWorld analogy_world() {
    SyntheticSpec spec;
    spec.raw_dim = 6;
    spec.base_count = 40;
    spec.novel_count = 1;
    spec.mode_count = kModes;
    spec.noise_sigma = 0.0;
    spec.examples_per_class = 12;
    spec.test_per_class = 0;
    AnalogyWorld a;
    a.world = make_synthetic(spec, 21);
    const auto& w = a.world;
    for (std::uint32_t c = 0; c < spec.base_count; ++c) {
        ClassCentroids cc{c, DenseMatrix(kModes, spec.raw_dim), std::vector<std::size_t>(kModes, 1)};
        for (std::size_t m = 0; m < kModes; ++m)
            for (std::size_t j = 0; j < spec.raw_dim; ++j)
                cc.centroids(m, j) = std::max(0.0, w.class_means(c, j) + w.mode_vectors(m, j));
        a.centroids.classes.push_back(cc);
    }
    std::vector<std::uint32_t> base(spec.base_count);
    for (std::uint32_t i = 0; i < spec.base_count; ++i) base[i] = i;
    const FeatureDataset b = relabel(w.train.restricted_to(base), base);
    ClassifierTrainConfig tc;
    tc.iterations = 2000;
    tc.batch_size = 64;
    a.clf = train_classifier(b.features, b.labels, spec.base_count, tc).classifier;
    for (std::uint32_t ca = 0; ca < spec.base_count; ++ca)
        for (std::uint32_t cb = 0; cb < spec.base_count; ++cb)
            for (std::size_t m1 = 0; m1 < kModes; ++m1)
                for (std::size_t m2 = 0; m2 < kModes; ++m2)
                    if (ca != cb && m1 != m2) a.quads.push_back({ca, m1, m2, cb, m1, m2, 1.0});
    return a;
}

double mean_target_norm(const std::vector<AnalogyQuadruplet>& qs, const CentroidSet& s) {
    double t = 0.0;
    for (const auto& q : qs) t += std::pow(norm2(s.find(q.class_a)->centroids.row(q.a2)), 2) / s.dim();
    return t / qs.size();
}

}  // namespace

TEST_CASE("generator learns the shared-mode analogy map") {
    const AnalogyWorld a = analogy_world();
    std::vector<AnalogyQuadruplet> train, held;
    SeededRng split(6);
    for (const auto& q : a.quads) (split.uniform() < 0.8 ? train : held).push_back(q);
    GeneratorTrainConfig g;
    g.seed = 4;
    g.hidden = 64;
    const GeneratorTrainResult r = train_generator(train, a.centroids, a.clf, g);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
    const double mse = generator_mse(r.generator, held, a.centroids);
    CHECK(mse < 0.1 * mean_target_norm(held, a.centroids));

    // Mode oracle: moving a seed from mode m1 to m2 lands nearer the class's true m2 point.
    const auto& w = a.world;
    std::size_t closer = 0, total = 0;
    SeededRng rng(8);
    for (int t = 0; t < 500; ++t) {
        const auto c = static_cast<std::uint32_t>(rng.below(40));
        const std::size_t m1 = rng.below(kModes);
        std::size_t m2 = rng.below(kModes - 1);
        if (m2 >= m1) ++m2;
        auto donor = static_cast<std::uint32_t>(rng.below(39));
        if (donor >= c) ++donor;
        std::vector<double> seed(6), target(6), d1(6), d2(6);
        for (std::size_t j = 0; j < 6; ++j) {
            seed[j] = std::max(0.0, w.class_means(c, j) + w.mode_vectors(m1, j));
            target[j] = std::max(0.0, w.class_means(c, j) + w.mode_vectors(m2, j));
            d1[j] = std::max(0.0, w.class_means(donor, j) + w.mode_vectors(m1, j));
            d2[j] = std::max(0.0, w.class_means(donor, j) + w.mode_vectors(m2, j));
        }
        const LabeledFeature h = hallucinate(r.generator, seed, d1, d2, c);
        double dh = 0.0, ds = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
            dh += std::pow(h.feature[j] - target[j], 2);
            ds += std::pow(seed[j] - target[j], 2);
        }
        closer += dh < ds;
        ++total;
    }
    CHECK(static_cast<double>(closer) / total >= 0.8);
}

TEST_CASE("generator training is deterministic") {
    const AnalogyWorld a = analogy_world();
    GeneratorTrainConfig g;
    g.seed = 9;
    g.epochs = 2;
    g.hidden = 16;
    const std::vector<AnalogyQuadruplet> few(a.quads.begin(), a.quads.begin() + 300);
    CHECK(train_generator(few, a.centroids, a.clf, g).generator == train_generator(few, a.centroids, a.clf, g).generator);
    const GeneratorNet first = train_generator(few, a.centroids, a.clf, g).generator;
    g.seed = 10;
    CHECK_FALSE(train_generator(few, a.centroids, a.clf, g).generator == first);
}

TEST_CASE("very large lambda makes the loss essentially lambda times MSE") {
    const AnalogyWorld a = analogy_world();
    GeneratorTrainConfig g;
    g.lambda = 1e6;
    g.learning_rate = 1e-4;
    g.epochs = 3;
    g.hidden = 16;
    const GeneratorTrainResult r = train_generator(a.quads, a.centroids, a.clf, g);
    for (std::size_t e = 0; e < r.loss_trace.size(); ++e)
        CHECK(r.loss_trace[e] == doctest::Approx(g.lambda * r.mse_trace[e]).epsilon(1e-3));
    CHECK_THROWS_AS(train_generator({}, a.centroids, a.clf, g), InvalidArgument);
}

TEST_CASE("augmentation tops novel classes up to exactly k_min") {
    const AnalogyWorld a = analogy_world();
    SyntheticSpec spec;
    spec.raw_dim = 6;
    spec.base_count = 3;
    spec.novel_count = 4;
    spec.examples_per_class = 6;
    spec.test_per_class = 0;
    const SyntheticWorld w = make_synthetic(spec, 2);
    const std::vector<std::uint32_t> base = {0, 1, 2}, novel = {3, 4, 5, 6};
    const GeneratorNet g = make_generator(6, 8, 1);
    for (std::size_t n : {1u, 2u, 5u})
        for (std::size_t k : {1u, 3u, 5u, 20u}) {
            const LowShotTrainSet t = sample_low_shot(w.train, base, novel, n, 9);
            const LowShotTrainSet out = augment_low_shot(t, g, a.centroids, k, 4);
            // Tally oracle.
            std::map<std::uint32_t, std::size_t> real, gen;
            for (std::size_t i = 0; i < out.data.size(); ++i)
                ++(out.source[i] == LowShotTrainSet::kGenerated ? gen : real)[out.data.labels[i]];
            for (std::uint32_t c : novel) {
                CHECK(real[c] == n);
                CHECK(real[c] + gen[c] == std::max(n, k));
            }
            for (std::uint32_t c : base) {
                CHECK(gen[c] == 0);
                CHECK(real[c] == 6);
            }
            // Original rows untouched and generation deterministic.
            for (std::size_t i = 0; i < t.data.size(); ++i) CHECK(std::ranges::equal(out.data.features.row(i), t.data.features.row(i)));
            CHECK(augment_low_shot(t, g, a.centroids, k, 4).data == out.data);
            if (k <= n) CHECK(out.data == t.data);
        }
    CentroidSet singles;
    singles.classes.push_back({0, DenseMatrix(1, 6), {1}});
    const LowShotTrainSet t = sample_low_shot(w.train, base, novel, 1, 9);
    CHECK_THROWS_AS(augment_low_shot(t, g, singles, 3, 1), InvalidArgument);
    CHECK_NOTHROW(augment_low_shot(t, g, singles, 1, 1));
}

TEST_CASE("generator checkpoints and JSON dumps round-trip") {
    GeneratorNet g = decode_generator(encode_generator(make_generator(3, 5, 2)));
    const auto bytes = encode_generator(g);
    CHECK(std::memcmp(bytes.data(), "LSG1", 4) == 0);
    CHECK(decode_generator(bytes) == g);
    CHECK(encode_generator(decode_generator(bytes)) == bytes);
    for (std::size_t len = 0; len < bytes.size(); len += 7)
        CHECK_THROWS_AS(decode_generator(std::span(bytes.data(), len)), ParseError);
    CHECK_THROWS_AS(decode_generator(encode_mlp("LSE1", g.net)), ParseError);

    SeededRng rng(5);
    const CentroidSet s = toy_centroids(rng, 3, 3, 4);
    const CentroidSet back = decode_centroids(encode_centroids(s));
    REQUIRE(back.classes.size() == 3);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(back.classes[c].class_id == s.classes[c].class_id);
        CHECK(back.classes[c].centroids == s.classes[c].centroids);
        CHECK(back.classes[c].counts == s.classes[c].counts);
    }
    const auto q = mine_quadruplets(s, MiningMode::all_positive);
    CHECK(decode_quadruplets(encode_quadruplets(q)) == q);
    CHECK_THROWS_AS(decode_quadruplets("[{\"a\": 1}]"), ParseError);
    CHECK_THROWS_AS(decode_centroids("{"), ParseError);
}
