#include <doctest.h>

#include <cacp/gallery.hpp>
#include <cacp/util.hpp>

#include "test_support.hpp"

#include <algorithm>
#include <map>
#include <random>

using namespace cacp;
using namespace cacp::test;

namespace {

void write_gallery_entry(const fs::path& root, const std::string& category,
                         const std::string& name, const cv::Mat& image) {
    write_image(root / category / name, image);
}

}  // namespace

TEST_CASE("build_index enumerates folder-per-class galleries") {
    TempDir dir;
    write_gallery_entry(dir.path(), "dog", "a.png", object_image(16, 16, "dog", {2, 2, 8, 8}));
    write_gallery_entry(dir.path(), "dog", "b.png", object_image(16, 16, "dog", {3, 3, 9, 9}));
    write_gallery_entry(dir.path(), "cat", "c.png", object_image(16, 16, "cat", {1, 1, 7, 7}));

    auto index = build_index(dir.path());
    CHECK(index.categories == std::vector<std::string>{"cat", "dog"});
    CHECK(index.total_entries() == 3);
    CHECK(index.entries.at("dog").size() == 2);
    CHECK(index.entries.at("dog")[0].relative_path == "dog/a.png");
}

TEST_CASE("build_index: empty gallery is a config error") {
    TempDir dir;
    CHECK_THROWS_AS(build_index(dir.path()), ConfigError);
    fs::create_directories(dir / "empty_category");
    CHECK_THROWS_AS(build_index(dir.path()), ConfigError);
}

TEST_CASE("build_index ignores non-image files, counts match a brute-force walk") {
    TempDir dir;
    write_gallery_entry(dir.path(), "dog", "a.png", object_image(8, 8, "dog", {1, 1, 5, 5}));
    write_gallery_entry(dir.path(), "dog", "nested/b.jpg",
                        object_image(8, 8, "dog", {1, 1, 5, 5}));
    std::ofstream(dir / "dog/readme.txt") << "not an image";
    std::ofstream(dir / "dog/nested/notes.md") << "also not";

    auto index = build_index(dir.path());

    // independent recursive listing filtered by extension
    std::size_t oracle = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / "dog"))
        if (e.is_regular_file()) {
            auto ext = e.path().extension().string();
            for (auto& c : ext) c = char(std::tolower(c));
            if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
                ++oracle;
        }
    CHECK(index.total_entries() == oracle);
    CHECK(oracle == 2);
}

TEST_CASE("index cache round-trips and rebuilding is idempotent") {
    TempDir dir;
    write_gallery_entry(dir.path(), "dog", "a.png", object_image(8, 8, "dog", {1, 1, 5, 5}));
    write_gallery_entry(dir.path(), "cat", "c.png", object_image(8, 8, "cat", {1, 1, 5, 5}));

    auto index = build_index(dir.path());
    auto cache1 = dir / "index1.tsv";
    auto cache2 = dir / "index2.tsv";
    save_index(index, cache1);
    save_index(build_index(dir.path()), cache2);
    CHECK(read_file(cache1) == read_file(cache2));

    auto loaded = load_index(cache1, dir.path());
    CHECK(loaded.categories == index.categories);
    CHECK(loaded.total_entries() == index.total_entries());
    CHECK(loaded.entries.at("dog")[0].relative_path ==
          index.entries.at("dog")[0].relative_path);
}

TEST_CASE("sidecar boxes are picked up and prefer the category label") {
    TempDir dir;
    write_gallery_entry(dir.path(), "dog", "a.png", object_image(20, 20, "dog", {2, 2, 12, 12}));
    std::ofstream(dir / "dog/a.png.bbox") << "cat\t1\t1\t5\t5\ndog\t2\t2\t12\t12\n";

    auto index = build_index(dir.path());
    const auto& entry = index.entries.at("dog")[0];
    REQUIRE(entry.cached_bbox.has_value());
    CHECK(entry.cached_bbox->label == "dog");
    CHECK(entry.cached_bbox->x_min == 2);
    CHECK(entry.cached_boxes.size() == 2);
}

TEST_CASE("ratio table: planted areas give exact intervals") {
    // one image with a 10x10 dog (area 100) and a 5x5 cat (area 25)
    TempDir dir;
    cv::Mat multi = solid_image(40, 40);
    paint_rect(multi, BBox{2, 2, 12, 12}, fake_color_for("dog"));
    paint_rect(multi, BBox{20, 20, 25, 25}, fake_color_for("cat"));
    write_gallery_entry(dir.path(), "dog", "multi.png", multi);

    auto index = build_index(dir.path());
    FakeObjectDetector detector;
    auto table = build_ratio_table(index, detector);

    auto dog_cat = table.find("dog", "cat");
    REQUIRE(dog_cat.has_value());
    CHECK(dog_cat->ratio_min == 4.0);
    CHECK(dog_cat->ratio_max == 4.0);
    auto cat_dog = table.find("cat", "dog");
    REQUIRE(cat_dog.has_value());
    CHECK(cat_dog->ratio_min == 0.25);
    CHECK(cat_dog->ratio_max == 0.25);
}

TEST_CASE("ratio table folds min/max across images") {
    RatioTable table;
    table.record("dog", "cat", 100, 25);  // 4.0
    table.record("dog", "cat", 50, 25);   // 2.0
    auto interval = table.find("dog", "cat");
    REQUIRE(interval.has_value());
    CHECK(interval->ratio_min == 2.0);
    CHECK(interval->ratio_max == 4.0);
    CHECK(interval->count == 2);
}

TEST_CASE("single-object images contribute nothing to the table") {
    TempDir dir;
    write_gallery_entry(dir.path(), "dog", "solo.png",
                        object_image(16, 16, "dog", {2, 2, 9, 9}));
    auto index = build_index(dir.path());
    FakeObjectDetector detector;
    auto table = build_ratio_table(index, detector);
    CHECK(table.empty());
}

TEST_CASE("ratio table build is order-independent") {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<long long> area(1, 500);
    const char* cats[] = {"dog", "cat", "person", "car"};

    struct Record {
        std::string a, b;
        long long area_a, area_b;
    };
    std::vector<Record> records;
    for (int i = 0; i < 60; ++i) {
        int a = int(rng() % 4), b = int(rng() % 4);
        if (a == b) continue;
        records.push_back(Record{cats[a], cats[b], area(rng), area(rng)});
    }
    RatioTable forward, backward;
    for (const auto& r : records) forward.record(r.a, r.b, r.area_a, r.area_b);
    for (auto it = records.rbegin(); it != records.rend(); ++it)
        backward.record(it->a, it->b, it->area_a, it->area_b);

    auto rows_f = forward.rows();
    auto rows_b = backward.rows();
    REQUIRE(rows_f.size() == rows_b.size());
    for (std::size_t i = 0; i < rows_f.size(); ++i) {
        CHECK(std::get<0>(rows_f[i]) == std::get<0>(rows_b[i]));
        CHECK(std::get<1>(rows_f[i]) == std::get<1>(rows_b[i]));
        CHECK(std::get<2>(rows_f[i]).ratio_min == std::get<2>(rows_b[i]).ratio_min);
        CHECK(std::get<2>(rows_f[i]).ratio_max == std::get<2>(rows_b[i]).ratio_max);
        CHECK(std::get<2>(rows_f[i]).count == std::get<2>(rows_b[i]).count);
    }
}

TEST_CASE("reciprocal identity holds exactly at the rational level") {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<long long> area(1, 100000);
    RatioTable table;
    const char* cats[] = {"a", "b", "c", "dog", "zebra"};
    for (int i = 0; i < 200; ++i) {
        int x = int(rng() % 5), y = int(rng() % 5);
        if (x == y) continue;
        table.record(cats[x], cats[y], area(rng), area(rng));
    }
    for (const auto& [a, b, interval] : table.rows()) {
        auto fwd = table.find_exact(a, b);
        auto rev = table.find_exact(b, a);
        REQUIRE(fwd.has_value());
        REQUIRE(rev.has_value());
        // min(a,b) == 1/max(b,a) and max(a,b) == 1/min(b,a), exactly
        CHECK(fwd->first.num == rev->second.den);
        CHECK(fwd->first.den == rev->second.num);
        CHECK(fwd->second.num == rev->first.den);
        CHECK(fwd->second.den == rev->first.num);
    }
}

TEST_CASE("reciprocal identity is exact in doubles for exactly-representable ratios") {
    RatioTable table;
    // power-of-two areas make every quotient a power of two
    table.record("dog", "cat", 256, 16);
    table.record("dog", "cat", 64, 128);
    auto fwd = table.find("dog", "cat");
    auto rev = table.find("cat", "dog");
    REQUIRE(fwd.has_value());
    REQUIRE(rev.has_value());
    CHECK(fwd->ratio_min == 1.0 / rev->ratio_max);
    CHECK(fwd->ratio_max == 1.0 / rev->ratio_min);
}

TEST_CASE("ratio table file round-trips exactly") {
    RatioTable table;
    table.record("dog", "cat", 97, 31);
    table.record("dog", "cat", 13, 57);
    table.record("person", "car", 1000, 3);
    TempDir dir;
    auto path = dir / "ratios.tsv";
    table.save(path);
    auto loaded = RatioTable::load(path);
    CHECK(loaded.ordered_pair_count() == table.ordered_pair_count());
    for (const auto& [a, b, interval] : table.rows()) {
        auto found = loaded.find(a, b);
        REQUIRE(found.has_value());
        CHECK(found->ratio_min == interval.ratio_min);
        CHECK(found->ratio_max == interval.ratio_max);
        CHECK(found->count == interval.count);
    }
    // second save is byte-identical
    auto path2 = dir / "ratios2.tsv";
    loaded.save(path2);
    CHECK(read_file(path) == read_file(path2));
}

TEST_CASE("sample_donor: single entry, determinism, unknown category") {
    TempDir dir;
    write_gallery_entry(dir.path(), "dog", "only.png",
                        object_image(8, 8, "dog", {1, 1, 5, 5}));
    auto index = build_index(dir.path());
    CHECK(sample_donor(index, "dog", 5).relative_path == "dog/only.png");
    CHECK_THROWS_AS(sample_donor(index, "zebra", 5), LogicError);
}

TEST_CASE("sample_donor draws uniformly across entries") {
    TempDir dir;
    for (int i = 0; i < 4; ++i)
        write_gallery_entry(dir.path(), "dog", "d" + std::to_string(i) + ".png",
                            object_image(8, 8, "dog", {1, 1, 5, 5}));
    auto index = build_index(dir.path());

    std::map<std::string, int> freq;
    for (int i = 0; i < 10000; ++i)
        freq[sample_donor(index, "dog", mix_seed(42, std::uint64_t(i))).relative_path]++;
    // binomial bound: 3 sigma around 2500 with p = 1/4
    double sigma = std::sqrt(10000 * 0.25 * 0.75);
    for (const auto& [name, count] : freq)
        CHECK(std::abs(count - 2500.0) <= 3 * sigma);

    CHECK(sample_donor(index, "dog", 777).relative_path ==
          sample_donor(index, "dog", 777).relative_path);
}

TEST_CASE("ratio_interval falls back for unseen pairs") {
    RatioTable table;
    table.record("dog", "cat", 100, 25);
    auto seen = ratio_interval(table, "dog", "cat");
    CHECK_FALSE(seen.fallback);
    CHECK(seen.ratio_min == 4.0);

    auto unseen = ratio_interval(table, "dog", "zebra");
    CHECK(unseen.fallback);
    CHECK(unseen.ratio_min == 0.05);
    CHECK(unseen.ratio_max == 0.30);

    auto no_context = ratio_interval(table, "dog", "");
    CHECK(no_context.fallback);
}
