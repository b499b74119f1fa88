#include "lowshot/dataset.hpp"
#include "lowshot/error.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <set>

using namespace lowshot;

namespace {

SyntheticSpec small_spec() {
    SyntheticSpec s;
    s.raw_dim = 6;
    s.base_count = 5;
    s.novel_count = 3;
    s.mode_count = 2;
    s.examples_per_class = 10;
    s.test_per_class = 4;
    return s;
}

FeatureDataset tiny_dataset() {
    FeatureDataset d;
    d.features = DenseMatrix::from_rows({{0.5, -1.25}, {3.0, 0.0}, {0.125, 7.0}});
    d.labels = {0, 2, 1};
    d.class_count = 3;
    return d;
}

}  // namespace

TEST_CASE("noise-free world: one mode gives identical examples per class") {
    SyntheticSpec s = small_spec();
    s.noise_sigma = 0.0;
    s.mode_count = 1;
    const SyntheticWorld w = make_synthetic(s, 1);
    const auto by = w.train.indices_by_class();
    for (const auto& rows : by)
        for (std::size_t r : rows) CHECK(std::ranges::equal(w.train.features.row(r), w.train.features.row(rows.front())));
}

TEST_CASE("noise-free world matches the generating formula and shares mode offsets") {
    SyntheticSpec s = small_spec();
    s.noise_sigma = 0.0;
    const SyntheticWorld w = make_synthetic(s, 2);
    for (std::size_t i = 0; i < w.train.size(); ++i) {
        const std::uint32_t c = w.train.labels[i], m = w.train_modes[i];
        for (std::size_t j = 0; j < s.raw_dim; ++j)
            CHECK(w.train.features(i, j) == std::max(0.0, w.class_means(c, j) + w.mode_vectors(m, j)));
    }
    // Pre-rectifier differences between two modes are the same for every class.
    for (std::uint32_t a = 0; a < s.class_count(); ++a)
        for (std::uint32_t b = 0; b < s.class_count(); ++b)
            for (std::size_t j = 0; j < s.raw_dim; ++j) {
                const double da = (w.class_means(a, j) + w.mode_vectors(1, j)) - (w.class_means(a, j) + w.mode_vectors(0, j));
                const double db = (w.class_means(b, j) + w.mode_vectors(1, j)) - (w.class_means(b, j) + w.mode_vectors(0, j));
                CHECK(da == doctest::Approx(db).epsilon(1e-15));
            }
}

TEST_CASE("synthetic world shape, determinism and non-negativity") {
    const SyntheticSpec s = small_spec();
    const SyntheticWorld a = make_synthetic(s, 9), b = make_synthetic(s, 9), c = make_synthetic(s, 10);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK_FALSE(a.train == c.train);
    CHECK(a.train.size() == s.class_count() * s.examples_per_class);
    CHECK(a.test.size() == s.class_count() * s.test_per_class);
    for (double v : a.train.features.flat()) CHECK(v >= 0.0);
    SyntheticSpec bad = s;
    bad.mode_count = 0;
    CHECK_THROWS_AS(make_synthetic(bad, 1), InvalidArgument);
}

TEST_CASE("class split partitions classes and halves") {
    const ClassSplit s = split_classes(60, 40.0 / 60.0, 11);
    CHECK(s.base.size() == 40);
    CHECK(s.novel.size() == 20);
    CHECK(s.cv_base_1.size() + s.cv_base_2.size() == 40);
    CHECK(s.cv_novel_1.size() + s.cv_novel_2.size() == 20);
    s.validate(60);
    std::set<std::uint32_t> all(s.base.begin(), s.base.end());
    all.insert(s.novel.begin(), s.novel.end());
    CHECK(all.size() == 60);
    CHECK(std::is_sorted(s.base.begin(), s.base.end()));
    CHECK(split_classes(60, 40.0 / 60.0, 11) == s);
    CHECK_FALSE(split_classes(60, 40.0 / 60.0, 12) == s);

    ClassSplit broken = s;
    broken.novel.push_back(broken.base.front());
    CHECK_THROWS_AS(broken.validate(60), InvalidArgument);
    CHECK_THROWS_AS(split_classes(3, 0.5, 1), InvalidArgument);
}

TEST_CASE("low-shot sampling: all base rows plus exactly n distinct rows per novel class") {
    const SyntheticWorld w = make_synthetic(small_spec(), 4);
    const std::vector<std::uint32_t> base = {0, 1, 2, 3, 4}, novel = {7, 5, 6};
    for (std::size_t n : {1u, 3u, 10u}) {
        const LowShotTrainSet t = sample_low_shot(w.train, base, novel, n, 77);
        CHECK(t.novel_classes == std::vector<std::uint32_t>{5, 6, 7});
        for (std::uint32_t c : base) CHECK(t.count_of(c) == 10);
        for (std::uint32_t c : novel) CHECK(t.count_of(c) == n);
        std::set<std::size_t> distinct(t.source.begin(), t.source.end());
        CHECK(distinct.size() == t.source.size());
        for (std::size_t i = 0; i < t.source.size(); ++i) CHECK(t.data.labels[i] == w.train.labels[t.source[i]]);
        CHECK(sample_low_shot(w.train, base, novel, n, 77).source == t.source);
    }
    CHECK_THROWS_AS(sample_low_shot(w.train, base, novel, 11, 1), InvalidArgument);
    CHECK_THROWS_AS(sample_low_shot(w.train, base, std::vector<std::uint32_t>{4}, 1, 1), InvalidArgument);
}

TEST_CASE("class-uniform sampler visits classes evenly") {
    std::vector<std::uint32_t> labels(100, 0);
    labels[0] = 1;  // class 1 has a single example
    ClassUniformSampler sampler(labels, 2, 5);
    std::size_t ones = 0;
    const auto batch = sampler.next_batch(20000);
    for (std::size_t i : batch) ones += labels[i] == 1;
    CHECK(ones == doctest::Approx(10000).epsilon(0.03));
    CHECK_THROWS_AS(ClassUniformSampler(labels, 3, 1), InvalidArgument);
}

TEST_CASE("relabel maps class ids to positions") {
    const FeatureDataset d = tiny_dataset();
    const FeatureDataset r = relabel(d, std::vector<std::uint32_t>{2, 0, 1});
    CHECK(r.labels == std::vector<std::uint32_t>{1, 0, 2});
    CHECK(r.class_count == 3);
    CHECK_THROWS_AS(relabel(d, std::vector<std::uint32_t>{0, 1}), InvalidArgument);
}

TEST_CASE("feature store round-trips byte-exactly") {
    const FeatureDataset d = tiny_dataset();
    const auto bytes = encode_feature_store(d);
    CHECK(bytes.size() == 20 + 3 * 2 * 4 + 3 * 4);
    CHECK(std::memcmp(bytes.data(), "LSF1", 4) == 0);
    const FeatureDataset back = decode_feature_store(bytes);
    CHECK(back.labels == d.labels);
    CHECK(encode_feature_store(back) == bytes);
    // Values exactly representable in float32 come back unchanged.
    CHECK(back == d);

    const auto path = std::filesystem::temp_directory_path() / "lowshot_test_store.lsf";
    save_feature_store(d, path);
    CHECK(load_feature_store(path) == d);
    std::filesystem::remove(path);
}

TEST_CASE("corrupted feature stores raise ParseError") {
    const auto bytes = encode_feature_store(tiny_dataset());
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_feature_store(bad_magic), ParseError);

    for (std::size_t len = 0; len < bytes.size(); ++len) {
        const std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
        CHECK_THROWS_AS(decode_feature_store(cut), ParseError);
    }
    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(decode_feature_store(trailing), ParseError);

    auto bad_label = bytes;
    bad_label[bytes.size() - 4] = 9;  // last label little-endian low byte
    CHECK_THROWS_AS(decode_feature_store(bad_label), ParseError);

    auto bad_version = bytes;
    bad_version[4] = 2;
    CHECK_THROWS_AS(decode_feature_store(bad_version), ParseError);

    CHECK_THROWS_AS(load_feature_store("/nonexistent/lowshot.lsf"), IoError);
}

TEST_CASE("split manifest round-trips") {
    const ClassSplit s = split_classes(12, 0.5, 3);
    CHECK(decode_split_manifest(encode_split_manifest(s)) == s);
    CHECK_THROWS_AS(decode_split_manifest("{\"base\": [0]"), ParseError);
    CHECK_THROWS_AS(decode_split_manifest("[]"), ParseError);
}
