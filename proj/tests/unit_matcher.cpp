#include <doctest.h>

#include <cacp/context_matcher.hpp>

#include "test_support.hpp"

#include <cmath>
#include <set>

using namespace cacp;
using namespace cacp::test;

namespace {

// Counts embed() calls; used to verify the category cache really caches.
class CountingEmbedder : public TextEmbedder {
public:
    explicit CountingEmbedder(int dim = 16) : inner_(dim) {}
    EmbeddingVector embed(const std::string& text) override {
        ++calls;
        return inner_.embed(text);
    }
    int dim() const override { return inner_.dim(); }
    int calls = 0;

private:
    FakeTextEmbedder inner_;
};

GalleryIndex index_with(const std::vector<std::string>& categories) {
    GalleryIndex index;
    index.categories = categories;
    std::sort(index.categories.begin(), index.categories.end());
    for (const auto& c : index.categories)
        index.entries[c].push_back(GalleryEntry{"/nowhere/" + c + ".png",
                                                c + "/x.png", c, std::nullopt, {}});
    return index;
}

}  // namespace

TEST_CASE("similarity of identical strings is 1") {
    FakeTextEmbedder embedder(64);
    Caption caption{"a red car parked outside"};
    auto s = similarity(caption, "a red car parked outside", embedder);
    CHECK(s.score == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("similarity of planted orthogonal vectors is 0") {
    FakeTextEmbedder embedder(4);
    embedder.plant("alpha", {1.f, 0.f, 0.f, 0.f});
    embedder.plant("beta", {0.f, 1.f, 0.f, 0.f});
    auto s = similarity(Caption{"alpha"}, "beta", embedder);
    CHECK(std::abs(s.score) < 1e-6);
}

TEST_CASE("similarity is symmetric in its arguments") {
    FakeTextEmbedder embedder(4);
    embedder.plant("alpha", {0.8f, 0.6f, 0.f, 0.f});
    embedder.plant("beta", {0.6f, 0.8f, 0.f, 0.f});
    auto ab = similarity(Caption{"alpha"}, "beta", embedder);
    auto ba = similarity(Caption{"beta"}, "alpha", embedder);
    CHECK(ab.score == doctest::Approx(ba.score).epsilon(1e-12));
}

TEST_CASE("category phrases are lowercased with underscores as spaces") {
    CHECK(category_phrase("Traffic_Cone") == "traffic cone");
    CHECK(category_phrase("dog") == "dog");
}

TEST_CASE("match_category picks the planted winner") {
    auto index = index_with({"soccer", "pig"});
    FakeCaptioner captioner;
    cv::Mat base = object_image(16, 16, "person", {4, 4, 12, 12});
    captioner.plant(base, "Two teams are playing football games");

    FakeTextEmbedder embedder(4);
    embedder.plant("Two teams are playing football games", {1.f, 0.f, 0.f, 0.f});
    embedder.plant("soccer", {0.9f, std::sqrt(1.f - 0.81f), 0.f, 0.f});
    embedder.plant("pig", {0.4f, std::sqrt(1.f - 0.16f), 0.f, 0.f});

    auto result = match_category(base, index, captioner, embedder);
    CHECK(result.chosen == "soccer");
    REQUIRE(result.ranking.size() == 2);
    CHECK(result.ranking[0].category == "soccer");
    CHECK(result.ranking[0].score == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(result.ranking[1].score == doctest::Approx(0.4).epsilon(1e-6));
}

TEST_CASE("single-category gallery always wins; ties break lexicographically") {
    FakeCaptioner captioner;
    cv::Mat base = solid_image(8, 8, cv::Vec3b(3, 3, 3));

    auto single = index_with({"goose"});
    FakeTextEmbedder embedder(8);
    auto result = match_category(base, single, captioner, embedder);
    CHECK(result.chosen == "goose");

    auto pair = index_with({"zebra", "aardvark"});
    FakeTextEmbedder planted(4);
    planted.plant(captioner.caption(base).text, {1.f, 0.f, 0.f, 0.f});
    planted.plant("zebra", {0.5f, 0.5f, 0.f, 0.f});
    planted.plant("aardvark", {0.5f, 0.5f, 0.f, 0.f});
    auto tied = match_category(base, pair, captioner, planted);
    CHECK(tied.chosen == "aardvark");
}

TEST_CASE("planted score ordering carries through to the ranking") {
    auto index = index_with({"w", "x", "y", "z"});
    FakeCaptioner captioner;
    cv::Mat base = solid_image(6, 6, cv::Vec3b(8, 8, 8));
    FakeTextEmbedder embedder(4);
    auto with_cos = [](float c) {
        return std::vector<float>{c, std::sqrt(1.f - c * c), 0.f, 0.f};
    };
    embedder.plant(captioner.caption(base).text, {1.f, 0.f, 0.f, 0.f});
    embedder.plant("x", with_cos(0.9f));
    embedder.plant("z", with_cos(0.7f));
    embedder.plant("w", with_cos(0.4f));
    embedder.plant("y", with_cos(0.1f));

    auto result = match_category(base, index, captioner, embedder);
    REQUIRE(result.ranking.size() == 4);
    CHECK(result.ranking[0].category == "x");
    CHECK(result.ranking[1].category == "z");
    CHECK(result.ranking[2].category == "w");
    CHECK(result.ranking[3].category == "y");
    CHECK(result.chosen == "x");
}

TEST_CASE("ranking is a permutation of the gallery categories") {
    auto index = index_with({"dog", "cat", "pig", "car", "tree"});
    FakeCaptioner captioner;
    FakeTextEmbedder embedder(32);
    cv::Mat base = solid_image(10, 10, cv::Vec3b(1, 2, 3));
    auto result = match_category(base, index, captioner, embedder);
    std::set<std::string> seen;
    for (const auto& s : result.ranking) seen.insert(s.category);
    CHECK(seen == std::set<std::string>(index.categories.begin(), index.categories.end()));
    for (std::size_t i = 1; i < result.ranking.size(); ++i)
        CHECK(result.ranking[i - 1].score >= result.ranking[i].score);
}

TEST_CASE("argmax is invariant under positive scaling of the embeddings") {
    auto index = index_with({"truck", "flower"});
    FakeCaptioner captioner;
    cv::Mat base = object_image(12, 12, "car", {2, 2, 9, 9});
    captioner.plant(base, "A boy is standing near a red car");

    for (double scale : {1.0, 3.7, 0.004}) {
        FakeTextEmbedder embedder(4);
        auto scaled = [&](std::initializer_list<float> v) {
            std::vector<float> out;
            for (float x : v) out.push_back(float(x * scale));
            return out;
        };
        embedder.plant("A boy is standing near a red car", scaled({1.f, 0.f, 0.f, 0.f}));
        embedder.plant("truck", scaled({0.89f, 0.456f, 0.f, 0.f}));
        embedder.plant("flower", scaled({0.51f, 0.86f, 0.f, 0.f}));
        auto result = match_category(base, index, captioner, embedder);
        CHECK(result.chosen == "truck");
    }
}

TEST_CASE("embed_categories caches one vector per category") {
    std::vector<std::string> categories;
    for (int i = 0; i < 365; ++i) categories.push_back("cat_" + std::to_string(i));
    auto index = index_with(categories);

    CountingEmbedder embedder;
    auto cache = embed_categories(index, embedder);
    CHECK(cache.size() == 365);
    CHECK(embedder.calls == 365);

    // a 10-image run through the cache only adds one caption embed per image
    FakeCaptioner captioner;
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
        cv::Mat base = random_image(8, 8, rng);
        auto result = match_category(base, index, captioner, embedder, &cache);
        CHECK(result.ranking.size() == 365);
    }
    CHECK(embedder.calls == 375);
}

TEST_CASE("cache lookups return byte-identical vectors") {
    auto index = index_with({"dog"});
    FakeTextEmbedder embedder(16);
    auto cache = embed_categories(index, embedder);
    auto first = cache.at("dog").values;
    auto second = cache.at("dog").values;
    CHECK(first == second);
}

TEST_CASE("match_category on an empty gallery is an error") {
    GalleryIndex empty;
    FakeCaptioner captioner;
    FakeTextEmbedder embedder(8);
    cv::Mat base = solid_image(8, 8);
    CHECK_THROWS_AS(match_category(base, empty, captioner, embedder), ConfigError);
}

TEST_CASE("top-k sampling stays within the top k and is seeded") {
    auto index = index_with({"a", "b", "c", "d"});
    FakeCaptioner captioner;
    FakeTextEmbedder embedder(32);
    cv::Mat base = solid_image(9, 9, cv::Vec3b(5, 6, 7));

    auto baseline = match_category(base, index, captioner, embedder, nullptr, 1, 0);
    std::set<std::string> top2{baseline.ranking[0].category,
                               baseline.ranking[1].category};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto r = match_category(base, index, captioner, embedder, nullptr, 2, seed);
        CHECK(top2.count(r.chosen) == 1);
        auto again = match_category(base, index, captioner, embedder, nullptr, 2, seed);
        CHECK(r.chosen == again.chosen);
    }
}

TEST_CASE("embedding cache persists and reloads exactly") {
    auto index = index_with({"dog", "cat", "traffic_cone"});
    FakeTextEmbedder embedder(24);
    auto cache = embed_categories(index, embedder);

    TempDir dir;
    auto path = dir / "emb.tsv";
    save_embedding_cache(cache, path);
    auto loaded = load_embedding_cache(path);
    REQUIRE(loaded.size() == cache.size());
    for (const auto& [category, vec] : cache) {
        REQUIRE(loaded.count(category) == 1);
        CHECK(loaded.at(category).values == vec.values);
    }
}
