#include "lowshot/dataset.hpp"

#include "binary_io.hpp"
#include "lowshot/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace lowshot {

void FeatureDataset::validate() const {
    LOWSHOT_REQUIRE(!labels.empty(), "dataset: no examples");
    LOWSHOT_REQUIRE(features.rows() == labels.size(), "dataset: feature rows != label count");
    LOWSHOT_REQUIRE(class_count >= 1, "dataset: class_count must be positive");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] >= class_count)
            throw InvalidArgument("dataset: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                  " >= class_count " + std::to_string(class_count));
    LOWSHOT_REQUIRE(features.all_finite(), "dataset: non-finite feature");
}

std::vector<std::vector<std::size_t>> FeatureDataset::indices_by_class() const {
    std::vector<std::vector<std::size_t>> out(class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
    return out;
}

FeatureDataset FeatureDataset::subset(std::span<const std::size_t> rows) const {
    FeatureDataset out;
    out.class_count = class_count;
    out.features = DenseMatrix(rows.size(), dim());
    out.labels.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        LOWSHOT_REQUIRE(rows[i] < size(), "subset: row index out of range");
        std::copy_n(features.row(rows[i]).begin(), dim(), out.features.row(i).begin());
        out.labels.push_back(labels[rows[i]]);
    }
    return out;
}

FeatureDataset FeatureDataset::restricted_to(std::span<const std::uint32_t> classes) const {
    std::vector<bool> keep(class_count, false);
    for (std::uint32_t c : classes) {
        LOWSHOT_REQUIRE(c < class_count, "restricted_to: class id out of range");
        keep[c] = true;
    }
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (keep[labels[i]]) rows.push_back(i);
    return subset(rows);
}

FeatureDataset relabel(const FeatureDataset& data, std::span<const std::uint32_t> classes) {
    std::unordered_map<std::uint32_t, std::uint32_t> remap;
    for (std::uint32_t i = 0; i < classes.size(); ++i) {
        LOWSHOT_REQUIRE(remap.emplace(classes[i], i).second, "relabel: duplicate class id");
    }
    FeatureDataset out = data;
    out.class_count = static_cast<std::uint32_t>(classes.size());
    for (auto& l : out.labels) {
        auto it = remap.find(l);
        if (it == remap.end()) throw InvalidArgument("relabel: label " + std::to_string(l) + " not in class list");
        l = it->second;
    }
    return out;
}

namespace {

void require_partition(const std::vector<std::uint32_t>& parent, const std::vector<std::uint32_t>& a,
                       const std::vector<std::uint32_t>& b, const char* what) {
    std::vector<std::uint32_t> joined = a;
    joined.insert(joined.end(), b.begin(), b.end());
    std::sort(joined.begin(), joined.end());
    std::vector<std::uint32_t> p = parent;
    std::sort(p.begin(), p.end());
    if (joined != p) throw InvalidArgument(std::string("class split: ") + what + " halves do not partition their parent");
}

std::vector<std::uint32_t> sorted_prefix(const std::vector<std::uint32_t>& v, std::size_t from, std::size_t to) {
    std::vector<std::uint32_t> out(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to));
    std::sort(out.begin(), out.end());
    return out;
}

template <class T>
void shuffle(std::vector<T>& v, SeededRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

void ClassSplit::validate(std::uint32_t class_count) const {
    std::vector<std::uint32_t> all = base;
    all.insert(all.end(), novel.begin(), novel.end());
    std::sort(all.begin(), all.end());
    std::vector<std::uint32_t> expect(class_count);
    std::iota(expect.begin(), expect.end(), 0u);
    if (all != expect) throw InvalidArgument("class split: base and novel must partition all classes exactly once");
    require_partition(base, cv_base_1, cv_base_2, "cv base");
    require_partition(novel, cv_novel_1, cv_novel_2, "cv novel");
}

ClassSplit split_classes(std::uint32_t class_count, double base_fraction, std::uint64_t seed, double cv_fraction) {
    LOWSHOT_REQUIRE(class_count >= 4, "split_classes: need at least 4 classes");
    LOWSHOT_REQUIRE(base_fraction > 0.0 && base_fraction < 1.0, "split_classes: base_fraction must be in (0,1)");
    LOWSHOT_REQUIRE(cv_fraction > 0.0 && cv_fraction < 1.0, "split_classes: cv_fraction must be in (0,1)");
    const auto n_base = static_cast<std::size_t>(std::llround(class_count * base_fraction));
    if (n_base == 0 || n_base >= class_count)
        throw InvalidArgument("split_classes: base_fraction leaves one side empty");

    SeededRng rng(seed);
    std::vector<std::uint32_t> perm(class_count);
    std::iota(perm.begin(), perm.end(), 0u);
    shuffle(perm, rng);

    ClassSplit s;
    std::vector<std::uint32_t> base_perm(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_base));
    std::vector<std::uint32_t> novel_perm(perm.begin() + static_cast<std::ptrdiff_t>(n_base), perm.end());
    s.base = sorted_prefix(base_perm, 0, base_perm.size());
    s.novel = sorted_prefix(novel_perm, 0, novel_perm.size());

    auto halve = [&](std::vector<std::uint32_t> side, std::vector<std::uint32_t>& h1, std::vector<std::uint32_t>& h2) {
        if (side.size() < 2) throw InvalidArgument("split_classes: a side has fewer than 2 classes, cannot form cv halves");
        shuffle(side, rng);
        auto n1 = static_cast<std::size_t>(std::floor(side.size() * cv_fraction));
        n1 = std::clamp<std::size_t>(n1, 1, side.size() - 1);
        h1 = sorted_prefix(side, 0, n1);
        h2 = sorted_prefix(side, n1, side.size());
    };
    halve(s.base, s.cv_base_1, s.cv_base_2);
    halve(s.novel, s.cv_novel_1, s.cv_novel_2);
    return s;
}

std::size_t LowShotTrainSet::count_of(std::uint32_t cls) const {
    return static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), cls));
}

LowShotTrainSet sample_low_shot(const FeatureDataset& data, std::span<const std::uint32_t> base_classes,
                                std::span<const std::uint32_t> novel_classes, std::size_t n, std::uint64_t seed) {
    LOWSHOT_REQUIRE(n >= 1, "sample_low_shot: n must be >= 1");
    const auto by_class = data.indices_by_class();
    std::vector<bool> is_base(data.class_count, false);
    for (std::uint32_t c : base_classes) {
        LOWSHOT_REQUIRE(c < data.class_count, "sample_low_shot: base class out of range");
        is_base[c] = true;
    }
    std::vector<std::uint32_t> novel(novel_classes.begin(), novel_classes.end());
    std::sort(novel.begin(), novel.end());
    for (std::uint32_t c : novel) {
        LOWSHOT_REQUIRE(c < data.class_count, "sample_low_shot: novel class out of range");
        LOWSHOT_REQUIRE(!is_base[c], "sample_low_shot: class is both base and novel");
        if (by_class[c].size() < n)
            throw InvalidArgument("sample_low_shot: novel class " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) + " examples, need " + std::to_string(n));
    }

    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (is_base[data.labels[i]]) rows.push_back(i);

    SeededRng rng(seed);
    for (std::uint32_t c : novel) {
        std::vector<std::size_t> pool = by_class[c];
        // Partial Fisher-Yates: the first n slots become the draw.
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = i + rng.below(pool.size() - i);
            std::swap(pool[i], pool[j]);
            rows.push_back(pool[i]);
        }
    }

    LowShotTrainSet out;
    out.data = data.subset(rows);
    out.source = std::move(rows);
    out.base_classes.assign(base_classes.begin(), base_classes.end());
    std::sort(out.base_classes.begin(), out.base_classes.end());
    out.novel_classes = std::move(novel);
    out.shots = n;
    out.trial_seed = seed;
    return out;
}

LowShotTrainSet sample_low_shot(const FeatureDataset& data, const ClassSplit& split, std::size_t n, std::uint64_t seed) {
    return sample_low_shot(data, split.base, split.novel, n, seed);
}

void SyntheticSpec::validate() const {
    LOWSHOT_REQUIRE(raw_dim >= 1, "synthetic spec: raw_dim must be >= 1");
    LOWSHOT_REQUIRE(base_count >= 1 && novel_count >= 1, "synthetic spec: need base and novel classes");
    LOWSHOT_REQUIRE(mode_count >= 1, "synthetic spec: mode_count must be >= 1");
    LOWSHOT_REQUIRE(class_mean_scale > 0.0 && mode_scale > 0.0, "synthetic spec: scales must be positive");
    LOWSHOT_REQUIRE(noise_sigma >= 0.0, "synthetic spec: noise_sigma must be non-negative");
    LOWSHOT_REQUIRE(examples_per_class >= 1, "synthetic spec: examples_per_class must be >= 1");
}

SyntheticWorld make_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    const std::uint32_t classes = spec.class_count();
    const std::size_t d = spec.raw_dim;
    SeededRng rng(seed);

    SyntheticWorld w;
    w.class_means = DenseMatrix(classes, d);
    for (double& v : w.class_means.flat()) v = spec.class_mean_scale * rng.normal();
    w.mode_vectors = DenseMatrix(spec.mode_count, d);
    for (double& v : w.mode_vectors.flat()) v = spec.mode_scale * rng.normal();

    auto fill = [&](FeatureDataset& out, std::vector<std::uint32_t>& modes, std::uint32_t per_class) {
        out.class_count = classes;
        out.features = DenseMatrix(static_cast<std::size_t>(classes) * per_class, d);
        out.labels.resize(out.features.rows());
        modes.resize(out.features.rows());
        std::size_t row = 0;
        for (std::uint32_t c = 0; c < classes; ++c) {
            for (std::uint32_t e = 0; e < per_class; ++e, ++row) {
                const auto m = static_cast<std::uint32_t>(rng.below(spec.mode_count));
                auto x = out.features.row(row);
                for (std::size_t j = 0; j < d; ++j) {
                    const double noise = spec.noise_sigma > 0.0 ? spec.noise_sigma * rng.normal() : 0.0;
                    x[j] = std::max(0.0, w.class_means(c, j) + w.mode_vectors(m, j) + noise);
                }
                out.labels[row] = c;
                modes[row] = m;
            }
        }
    };
    fill(w.train, w.train_modes, spec.examples_per_class);
    if (spec.test_per_class > 0) fill(w.test, w.test_modes, spec.test_per_class);
    return w;
}

ClassUniformSampler::ClassUniformSampler(std::span<const std::uint32_t> labels, std::uint32_t class_count,
                                         std::uint64_t seed)
    : by_class_(class_count), rng_(seed) {
    LOWSHOT_REQUIRE(class_count >= 1, "class-uniform sampler: no classes");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        LOWSHOT_REQUIRE(labels[i] < class_count, "class-uniform sampler: label out of range");
        by_class_[labels[i]].push_back(i);
    }
    for (std::size_t c = 0; c < by_class_.size(); ++c)
        if (by_class_[c].empty()) throw InvalidArgument("class-uniform sampler: class " + std::to_string(c) + " is empty");
}

std::vector<std::size_t> ClassUniformSampler::next_batch(std::size_t batch) {
    LOWSHOT_REQUIRE(batch >= 1, "class-uniform sampler: batch must be >= 1");
    std::vector<std::size_t> out(batch);
    next_batch(out);
    return out;
}

void ClassUniformSampler::next_batch(std::span<std::size_t> out) {
    for (auto& slot : out) {
        const auto& members = by_class_[rng_.below(by_class_.size())];
        slot = members[rng_.below(members.size())];
    }
}

std::vector<std::uint8_t> encode_feature_store(const FeatureDataset& data) {
    data.validate();
    detail::ByteWriter w;
    w.magic("LSF1");
    w.u32(1);
    w.u32(static_cast<std::uint32_t>(data.size()));
    w.u32(static_cast<std::uint32_t>(data.dim()));
    w.u32(data.class_count);
    for (double v : data.features.flat()) w.f32(v);
    for (std::uint32_t l : data.labels) w.u32(l);
    return w.take();
}

FeatureDataset decode_feature_store(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes);
    r.expect_magic("LSF1");
    const std::size_t version_at = r.offset();
    const std::uint32_t version = r.u32("version");
    if (version != 1) throw ParseError("unsupported feature-store version " + std::to_string(version), version_at);
    const std::uint32_t n = r.u32("N");
    const std::uint32_t d = r.u32("d");
    const std::uint32_t classes = r.u32("class_count");
    if (n == 0) throw ParseError("feature store has no examples", 8);
    if (classes == 0) throw ParseError("feature store has zero classes", 16);
    r.need(static_cast<std::size_t>(n) * d * 4 + static_cast<std::size_t>(n) * 4, "payload");

    FeatureDataset out;
    out.class_count = classes;
    out.features = DenseMatrix(n, d);
    for (double& v : out.features.flat()) v = r.f32("feature");
    out.labels.resize(n);
    for (auto& l : out.labels) {
        const std::size_t at = r.offset();
        l = r.u32("label");
        if (l >= classes)
            throw ParseError("label " + std::to_string(l) + " >= class_count " + std::to_string(classes), at);
    }
    r.expect_end();
    return out;
}

void save_feature_store(const FeatureDataset& data, const std::filesystem::path& path) {
    detail::write_file(path, encode_feature_store(data));
}

FeatureDataset load_feature_store(const std::filesystem::path& path) {
    return decode_feature_store(detail::read_file(path));
}

std::string encode_split_manifest(const ClassSplit& split) {
    nlohmann::ordered_json j;
    j["base"] = split.base;
    j["novel"] = split.novel;
    j["cv_base_1"] = split.cv_base_1;
    j["cv_base_2"] = split.cv_base_2;
    j["cv_novel_1"] = split.cv_novel_1;
    j["cv_novel_2"] = split.cv_novel_2;
    return j.dump(2) + "\n";
}

ClassSplit decode_split_manifest(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("split manifest: ") + e.what(), e.byte);
    }
    if (!j.is_object()) throw ParseError("split manifest: top level must be an object", 0);
    static const char* kKeys[] = {"base", "novel", "cv_base_1", "cv_base_2", "cv_novel_1", "cv_novel_2"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return it.key() == k; }) == std::end(kKeys))
            throw ParseError("split manifest: unknown key \"" + it.key() + "\"", 0);
    auto list = [&](const char* key) {
        if (!j.contains(key)) throw ParseError(std::string("split manifest: missing key \"") + key + "\"", 0);
        try {
            return j.at(key).get<std::vector<std::uint32_t>>();
        } catch (const nlohmann::json::exception&) {
            throw ParseError(std::string("split manifest: \"") + key + "\" must be a list of class ids", 0);
        }
    };
    ClassSplit s;
    s.base = list("base");
    s.novel = list("novel");
    s.cv_base_1 = list("cv_base_1");
    s.cv_base_2 = list("cv_base_2");
    s.cv_novel_1 = list("cv_novel_1");
    s.cv_novel_2 = list("cv_novel_2");
    return s;
}

void save_split_manifest(const ClassSplit& split, const std::filesystem::path& path) {
    detail::write_text_file(path, encode_split_manifest(split));
}

ClassSplit load_split_manifest(const std::filesystem::path& path) {
    return decode_split_manifest(detail::read_text_file(path));
}

}  // namespace lowshot
