#include <doctest.h>

#include <cacp/dataset_io.hpp>
#include <cacp/util.hpp>

#include "test_support.hpp"

#include <nlohmann/json.hpp>

#include <random>
#include <set>

using namespace cacp;
using namespace cacp::test;
using json = nlohmann::json;

namespace {

AnnotationSet classification_ann(const std::string& tag) {
    AnnotationSet ann;
    ann.task = Task::Classification;
    ann.class_tag = tag;
    return ann;
}

CompositeResult paste_result(int base_w, int base_h, const BBox& paste,
                             const std::string& category) {
    CompositeResult result;
    result.image = solid_image(base_w, base_h, {50, 50, 50});
    result.pasted_mask.grid = cv::Mat1b::zeros(base_h, base_w);
    result.pasted_mask.grid(paste.rect()).setTo(1);
    result.donor_category = category;
    result.placement = Placement{1.0, paste.x_min, paste.y_min, 1};
    return result;
}

}  // namespace

TEST_CASE("classification layout loads folder-per-class") {
    TempDir dir;
    write_image(dir / "cat/one.png", solid_image(8, 8, {1, 1, 1}));
    write_image(dir / "dog/two.png", solid_image(8, 8, {2, 2, 2}));
    auto items = load_dataset(dir.path(), Task::Classification);
    REQUIRE(items.size() == 2);
    CHECK(items[0].id == "cat/one");
    CHECK(items[0].annotations.class_tag == "cat");
    CHECK(items[1].annotations.class_tag == "dog");
}

TEST_CASE("detection layout parses COCO-style boxes") {
    TempDir dir;
    write_image(dir / "images/a.png", solid_image(64, 64, {9, 9, 9}));
    json doc;
    doc["images"] = {{{"id", 1}, {"file_name", "a.png"}, {"width", 64}, {"height", 64}}};
    doc["annotations"] = {{{"id", 1},
                           {"image_id", 1},
                           {"category_id", 1},
                           {"bbox", {10, 10, 20, 20}},
                           {"area", 400},
                           {"score", 0.75}}};
    doc["categories"] = {{{"id", 1}, {"name", "person"}}};
    std::ofstream(dir / "annotations.json") << doc.dump(2);

    auto items = load_dataset(dir.path(), Task::Detection);
    REQUIRE(items.size() == 1);
    REQUIRE(items[0].annotations.boxes.size() == 1);
    const auto& box = items[0].annotations.boxes[0];
    CHECK(box == BBox{10, 10, 30, 30, "person", 0.75});
    CHECK(box.score == 0.75);
}

TEST_CASE("detection layout rejects malformed annotations with context") {
    TempDir dir;
    write_image(dir / "images/a.png", solid_image(16, 16, {9, 9, 9}));
    std::ofstream(dir / "annotations.json") << "{not json";
    CHECK_THROWS_AS(load_dataset(dir.path(), Task::Detection), IoError);

    json doc;
    doc["images"] = {{{"id", 1}, {"file_name", "a.png"}, {"width", 16}, {"height", 16}}};
    doc["annotations"] = {{{"id", 1},
                           {"image_id", 1},
                           {"category_id", 1},
                           {"bbox", {10, 10, 20, 20}}}};  // exceeds 16x16
    doc["categories"] = {{{"id", 1}, {"name", "person"}}};
    std::ofstream(dir / "annotations.json", std::ios::trunc) << doc.dump();
    CHECK_THROWS_AS(load_dataset(dir.path(), Task::Detection), IoError);
}

TEST_CASE("segmentation layout loads masks and class maps") {
    TempDir dir;
    write_image(dir / "images/scene.png", solid_image(8, 8, {9, 9, 9}));
    cv::Mat1b mask(8, 8, uchar(0));
    mask(cv::Rect(2, 2, 3, 4)).setTo(1);
    write_image(dir / "masks/scene.png", mask);
    std::ofstream(dir / "classes.json") << R"({"0":"background","1":"car"})";

    auto items = load_dataset(dir.path(), Task::Segmentation);
    REQUIRE(items.size() == 1);
    const auto& ann = items[0].annotations;
    CHECK(ann.class_map.at(0) == "background");
    CHECK(ann.class_map.at(1) == "car");

    // histogram oracle: brute-force pixel count
    long long ones = 0;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            if (ann.index_mask(y, x) == 1) ++ones;
    CHECK(ones == 3 * 4);
}

TEST_CASE("segmentation load validates mask indices and presence") {
    TempDir dir;
    write_image(dir / "images/scene.png", solid_image(8, 8, {9, 9, 9}));
    std::ofstream(dir / "classes.json") << R"({"0":"background"})";
    CHECK_THROWS_AS(load_dataset(dir.path(), Task::Segmentation), IoError);  // no mask

    cv::Mat1b mask(8, 8, uchar(7));  // index 7 missing from classes.json
    write_image(dir / "masks/scene.png", mask);
    CHECK_THROWS_AS(load_dataset(dir.path(), Task::Segmentation), IoError);
}

TEST_CASE("annotation_boxes per task") {
    CHECK(annotation_boxes(classification_ann("cat")).empty());

    AnnotationSet det;
    det.task = Task::Detection;
    det.boxes.push_back(BBox{1, 1, 4, 4, "a", 1.0});
    CHECK(annotation_boxes(det).size() == 1);

    AnnotationSet seg;
    seg.task = Task::Segmentation;
    seg.class_map = {{0, "background"}, {1, "car"}, {2, "tree"}};
    seg.index_mask = cv::Mat1b(10, 10, uchar(0));
    seg.index_mask(cv::Rect(2, 3, 4, 5)).setTo(1);
    auto boxes = annotation_boxes(seg);
    REQUIRE(boxes.size() == 1);  // background and absent classes skipped
    CHECK(boxes[0] == BBox{2, 3, 6, 8, "car", 1.0});
}

TEST_CASE("propagate appends a tight box for the paste") {
    AnnotationSet base;
    base.task = Task::Detection;
    auto result = paste_result(16, 16, BBox{2, 2, 6, 6, "", 1.0}, "dog");
    auto out = propagate_annotations(base, result, 0.2);
    REQUIRE(out.boxes.size() == 1);
    CHECK(out.boxes[0] == BBox{2, 2, 6, 6, "dog", 1.0});
}

TEST_CASE("propagate drops boxes occluded below the keep threshold") {
    AnnotationSet base;
    base.task = Task::Detection;
    base.boxes.push_back(BBox{2, 2, 6, 6, "cat", 1.0});    // fully covered
    base.boxes.push_back(BBox{8, 8, 12, 12, "bird", 1.0});  // untouched
    auto result = paste_result(16, 16, BBox{2, 2, 6, 6, "", 1.0}, "dog");
    auto out = propagate_annotations(base, result, 0.2);
    REQUIRE(out.boxes.size() == 2);
    CHECK(out.boxes[0].label == "bird");
    CHECK(out.boxes[1].label == "dog");
}

TEST_CASE("propagate keeps boxes at or above the visibility threshold") {
    AnnotationSet base;
    base.task = Task::Detection;
    base.boxes.push_back(BBox{0, 0, 10, 10, "cat", 1.0});
    // paste covers half of the cat box: visible 0.5 >= 0.2
    auto result = paste_result(16, 16, BBox{0, 0, 10, 5, "", 1.0}, "dog");
    auto out = propagate_annotations(base, result, 0.2);
    CHECK(out.boxes.size() == 2);

    // threshold exactly at the visible fraction keeps the box
    auto edge = propagate_annotations(base, result, 0.5);
    CHECK(edge.boxes.size() == 2);
    auto strict = propagate_annotations(base, result, 0.6);
    CHECK(strict.boxes.size() == 1);
}

TEST_CASE("propagate overlays segmentation masks like a per-pixel oracle") {
    std::mt19937_64 rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        AnnotationSet base;
        base.task = Task::Segmentation;
        base.class_map = {{0, "background"}, {1, "car"}};
        base.index_mask = cv::Mat1b(12, 12);
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) base.index_mask(y, x) = uchar(rng() % 2);

        CompositeResult result;
        result.image = solid_image(12, 12);
        result.pasted_mask = random_mask(12, 12, rng, 0.3);
        result.donor_category = "dog";
        auto out = propagate_annotations(base, result, 0.2);

        int dog_idx = -1;
        for (const auto& [idx, name] : out.class_map)
            if (name == "dog") dog_idx = idx;
        REQUIRE(dog_idx == 2);  // extended past the existing max index

        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x) {
                uchar expect = result.pasted_mask.grid(y, x)
                                   ? uchar(dog_idx)
                                   : base.index_mask(y, x);
                CHECK(out.index_mask(y, x) == expect);
            }
    }
}

TEST_CASE("propagate leaves classification tags alone") {
    auto base = classification_ann("cat");
    auto result = paste_result(8, 8, BBox{1, 1, 4, 4, "", 1.0}, "dog");
    auto out = propagate_annotations(base, result, 0.2);
    CHECK(out.class_tag == "cat");
    CHECK(out == base);
}

TEST_CASE("write/load round-trips all three task layouts") {
    std::mt19937_64 rng(62);

    SUBCASE("classification") {
        TempDir dir;
        std::vector<WriteItem> items;
        items.push_back(WriteItem{"cat/img0", random_image(8, 8, rng),
                                  classification_ann("cat"), std::nullopt});
        items.push_back(WriteItem{"dog/img1", random_image(8, 8, rng),
                                  classification_ann("dog"), std::nullopt});
        auto rows = write_dataset(items, dir.path(), Task::Classification);
        CHECK(rows.size() == 2);

        auto loaded = load_dataset(dir.path(), Task::Classification);
        REQUIRE(loaded.size() == 2);
        for (std::size_t i = 0; i < loaded.size(); ++i) {
            CHECK(loaded[i].annotations == items[i].annotations);
            CHECK(mats_equal(load_image(loaded[i].image_path), items[i].image));
        }
    }

    SUBCASE("detection") {
        TempDir dir;
        AnnotationSet ann;
        ann.task = Task::Detection;
        ann.boxes.push_back(BBox{3, 4, 10, 12, "person", 1.0});
        ann.boxes.push_back(BBox{12, 1, 20, 9, "car", 0.5});
        std::vector<WriteItem> items{
            WriteItem{"scene", random_image(24, 24, rng), ann, std::nullopt}};
        write_dataset(items, dir.path(), Task::Detection);

        auto loaded = load_dataset(dir.path(), Task::Detection);
        REQUIRE(loaded.size() == 1);
        CHECK(loaded[0].annotations == ann);
        CHECK(loaded[0].annotations.boxes[1].score == 0.5);
        CHECK(mats_equal(load_image(loaded[0].image_path), items[0].image));
    }

    SUBCASE("segmentation") {
        TempDir dir;
        AnnotationSet ann;
        ann.task = Task::Segmentation;
        ann.class_map = {{0, "background"}, {1, "car"}};
        ann.index_mask = cv::Mat1b(8, 8, uchar(0));
        ann.index_mask(cv::Rect(1, 1, 3, 3)).setTo(1);
        std::vector<WriteItem> items{
            WriteItem{"scene", random_image(8, 8, rng), ann, std::nullopt}};
        write_dataset(items, dir.path(), Task::Segmentation);

        auto loaded = load_dataset(dir.path(), Task::Segmentation);
        REQUIRE(loaded.size() == 1);
        CHECK(loaded[0].annotations == ann);
        CHECK(mats_equal(load_image(loaded[0].image_path), items[0].image));
    }
}

TEST_CASE("manifest rows digest file content") {
    TempDir dir;
    std::mt19937_64 rng(63);
    cv::Mat image = random_image(8, 8, rng);
    std::vector<WriteItem> items{
        WriteItem{"cat/a", image, classification_ann("cat"), std::nullopt}};
    auto rows = write_dataset(items, dir.path(), Task::Classification);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].relative_path == "cat/a.png");
    CHECK(rows[0].sha256.size() == 64);

    // unchanged bytes -> unchanged digest
    auto rows2 = write_dataset(items, dir.path(), Task::Classification);
    CHECK(rows2[0].sha256 == rows[0].sha256);

    // flip one pixel -> digest changes
    items[0].image.at<cv::Vec3b>(3, 3)[0] ^= 0xff;
    auto rows3 = write_dataset(items, dir.path(), Task::Classification);
    CHECK(rows3[0].sha256 != rows[0].sha256);

    auto manifest_lines = read_lines(dir / "manifest.tsv");
    REQUIRE(manifest_lines.size() == 1);
    CHECK(manifest_lines[0] == rows3[0].relative_path + "\t" + rows3[0].sha256);
}

TEST_CASE("select_partition arithmetic and determinism") {
    {
        auto [augment, pass] = select_partition(100, 1, 5);
        CHECK(augment.size() == 100);
        CHECK(pass.empty());
    }
    {
        auto [augment, pass] = select_partition(100, 4, 5);
        CHECK(augment.size() == 25);
        CHECK(pass.size() == 75);
    }
    {
        auto [a1, p1] = select_partition(57, 3, 9);
        auto [a2, p2] = select_partition(57, 3, 9);
        CHECK(a1 == a2);
        CHECK(p1 == p2);
    }
}

TEST_CASE("select_partition conserves every index") {
    std::mt19937_64 rng(64);
    for (int trial = 0; trial < 30; ++trial) {
        std::size_t count = rng() % 200;
        int den = 1 + int(rng() % 8);
        auto [augment, pass] = select_partition(count, den, rng());
        CHECK(augment.size() ==
              static_cast<std::size_t>(std::llround(double(count) / den)));
        std::set<std::size_t> all;
        for (auto i : augment) all.insert(i);
        for (auto i : pass) all.insert(i);
        CHECK(all.size() == augment.size() + pass.size());
        CHECK(all.size() == count);
        if (count) CHECK(*all.rbegin() == count - 1);
    }
}

TEST_CASE("provenance records round-trip through jsonl") {
    AugmentationRecord rec;
    rec.output_id = "cat/a__v1";
    rec.base_path = "/data/cat/a.png";
    rec.donor_path = "dog/d3.png";
    rec.donor_category = "dog";
    rec.caption = "a dog running across a grassy field";
    rec.chosen_category = "dog";
    rec.chosen_score = 0.8125;
    rec.placement = Placement{1.25, 7, 9, 3};
    rec.prompt_mode = "box+cam";
    rec.seed = 42;
    rec.item_index = 11;
    rec.variant = 1;

    TempDir dir;
    auto path = dir / "augmentations.jsonl";
    write_provenance({rec}, path);
    auto loaded = load_provenance(path);
    REQUIRE(loaded.size() == 1);
    const auto& r = loaded[0];
    CHECK(r.output_id == rec.output_id);
    CHECK(r.base_path == rec.base_path);
    CHECK(r.donor_path == rec.donor_path);
    CHECK(r.donor_category == rec.donor_category);
    CHECK(r.caption == rec.caption);
    CHECK(r.chosen_score == rec.chosen_score);
    CHECK(r.placement.scale == rec.placement.scale);
    CHECK(r.placement.x == rec.placement.x);
    CHECK(r.placement.y == rec.placement.y);
    CHECK(r.placement.attempts == rec.placement.attempts);
    CHECK(r.prompt_mode == rec.prompt_mode);
    CHECK(r.seed == rec.seed);
    CHECK(r.item_index == rec.item_index);
    CHECK(r.variant == rec.variant);
}
