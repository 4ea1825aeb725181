#include <cacp/dataset_io.hpp>
#include <cacp/gallery.hpp>
#include <cacp/util.hpp>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cacp {

namespace {

bool masks_equal(const cv::Mat1b& a, const cv::Mat1b& b) {
    if (a.empty() != b.empty()) return false;
    if (a.empty()) return true;
    if (a.rows != b.rows || a.cols != b.cols) return false;
    return cv::countNonZero(a != b) == 0;
}

std::string stem_id(const fs::path& file, const fs::path& base) {
    fs::path rel = fs::relative(file, base);
    rel.replace_extension();
    return rel.generic_string();
}

void write_png(const fs::path& path, const cv::Mat& image) {
    fs::create_directories(path.parent_path());
    std::vector<uchar> bytes;
    if (!cv::imencode(".png", image, bytes))
        throw IoError("failed to encode " + path.string());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    fs::rename(tmp, path);
}

void check_boxes(const std::vector<BBox>& boxes, int width, int height,
                 const std::string& context) {
    for (const auto& b : boxes) {
        if (b.x_min < 0 || b.y_min < 0 || b.x_max > width || b.y_max > height ||
            b.x_min >= b.x_max || b.y_min >= b.y_max)
            throw IoError("malformed annotation: box out of bounds in " + context);
        if (b.label.empty())
            throw IoError("malformed annotation: empty label in " + context);
    }
}

std::vector<DatasetItem> load_classification(const fs::path& root) {
    std::vector<DatasetItem> items;
    std::vector<std::string> classes;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) classes.push_back(e.path().filename().string());
    std::sort(classes.begin(), classes.end());
    for (const auto& cls : classes) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(root / cls))
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            DatasetItem item;
            item.image_path = f;
            item.id = stem_id(f, root);
            item.annotations.task = Task::Classification;
            item.annotations.class_tag = cls;
            items.push_back(std::move(item));
        }
    }
    if (items.empty())
        throw ConfigError("no classification items under " + root.string());
    return items;
}

std::vector<DatasetItem> load_detection(const fs::path& root) {
    fs::path ann_path = root / "annotations.json";
    std::ifstream in(ann_path);
    if (!in) throw IoError("missing annotations.json under " + root.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("malformed annotation file " + ann_path.string() + ": " + e.what());
    }

    std::map<int, std::string> categories;
    for (const auto& c : doc.value("categories", json::array()))
        categories[c.at("id").get<int>()] = c.at("name").get<std::string>();

    struct ImageInfo {
        std::string file_name;
        int width = 0, height = 0;
    };
    std::map<int, ImageInfo> images;
    for (const auto& im : doc.value("images", json::array()))
        images[im.at("id").get<int>()] =
            ImageInfo{im.at("file_name").get<std::string>(),
                      im.at("width").get<int>(), im.at("height").get<int>()};

    std::map<int, std::vector<BBox>> boxes_by_image;
    for (const auto& a : doc.value("annotations", json::array())) {
        auto bb = a.at("bbox");
        BBox box;
        box.x_min = bb.at(0).get<int>();
        box.y_min = bb.at(1).get<int>();
        box.x_max = box.x_min + bb.at(2).get<int>();
        box.y_max = box.y_min + bb.at(3).get<int>();
        int cat = a.at("category_id").get<int>();
        if (!categories.count(cat))
            throw IoError("malformed annotation: unknown category_id " +
                          std::to_string(cat) + " in " + ann_path.string());
        box.label = categories[cat];
        box.score = a.value("score", 1.0);
        boxes_by_image[a.at("image_id").get<int>()].push_back(std::move(box));
    }

    std::vector<DatasetItem> items;
    for (const auto& [id, info] : images) {
        DatasetItem item;
        item.image_path = root / "images" / info.file_name;
        if (!fs::exists(item.image_path))
            throw IoError("annotation references missing image " +
                          item.image_path.string());
        item.id = fs::path(info.file_name).replace_extension().generic_string();
        item.annotations.task = Task::Detection;
        if (auto it = boxes_by_image.find(id); it != boxes_by_image.end())
            item.annotations.boxes = it->second;
        check_boxes(item.annotations.boxes, info.width, info.height,
                    ann_path.string() + " image " + info.file_name);
        items.push_back(std::move(item));
    }
    std::sort(items.begin(), items.end(),
              [](const DatasetItem& a, const DatasetItem& b) { return a.id < b.id; });
    if (items.empty()) throw ConfigError("no detection items under " + root.string());
    return items;
}

std::map<int, std::string> load_class_map(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("missing classes.json: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw IoError("malformed classes.json " + path.string() + ": " + e.what());
    }
    std::map<int, std::string> out;
    for (const auto& [key, value] : doc.items()) {
        int idx;
        try {
            idx = std::stoi(key);
        } catch (const std::exception&) {
            throw IoError("non-integer class index '" + key + "' in " + path.string());
        }
        if (idx < 0 || idx > 255)
            throw IoError("class index out of byte range in " + path.string());
        out[idx] = value.get<std::string>();
    }
    if (out.empty()) throw IoError("empty class map: " + path.string());
    return out;
}

std::vector<DatasetItem> load_segmentation(const fs::path& root) {
    auto class_map = load_class_map(root / "classes.json");
    fs::path images_dir = root / "images";
    if (!fs::is_directory(images_dir))
        throw IoError("missing images/ under " + root.string());

    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(images_dir))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<DatasetItem> items;
    for (const auto& f : files) {
        DatasetItem item;
        item.image_path = f;
        item.id = stem_id(f, images_dir);
        item.annotations.task = Task::Segmentation;
        item.annotations.class_map = class_map;

        fs::path mask_path = root / "masks" / (item.id + ".png");
        cv::Mat mask = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
        if (mask.empty())
            throw IoError("malformed annotation: missing or unreadable mask " +
                          mask_path.string());
        item.annotations.index_mask = mask;
        for (int y = 0; y < mask.rows; ++y) {
            const uchar* row = mask.ptr<uchar>(y);
            for (int x = 0; x < mask.cols; ++x)
                if (!class_map.count(row[x]))
                    throw IoError("malformed annotation: mask index " +
                                  std::to_string(row[x]) + " not in classes.json (" +
                                  mask_path.string() + ")");
        }
        items.push_back(std::move(item));
    }
    if (items.empty())
        throw ConfigError("no segmentation items under " + root.string());
    return items;
}

}  // namespace

bool AnnotationSet::operator==(const AnnotationSet& other) const {
    return task == other.task && class_tag == other.class_tag &&
           boxes == other.boxes && class_map == other.class_map &&
           masks_equal(index_mask, other.index_mask);
}

std::vector<BBox> annotation_boxes(const AnnotationSet& ann) {
    switch (ann.task) {
        case Task::Classification:
            return {};
        case Task::Detection:
            return ann.boxes;
        case Task::Segmentation: {
            std::vector<BBox> out;
            if (ann.index_mask.empty()) return out;
            for (const auto& [idx, name] : ann.class_map) {
                if (idx == 0) continue;  // background
                cv::Mat1b member = (ann.index_mask == idx);
                if (cv::countNonZero(member) == 0) continue;
                cv::Rect r = cv::boundingRect(member);
                out.push_back(BBox{r.x, r.y, r.x + r.width, r.y + r.height, name, 1.0});
            }
            return out;
        }
    }
    return {};
}

cv::Mat load_image(const fs::path& path) {
    cv::Mat image = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (image.empty()) throw IoError("cannot read image: " + path.string());
    return image;
}

std::vector<DatasetItem> load_dataset(const fs::path& root, Task task) {
    if (!fs::is_directory(root))
        throw ConfigError("dataset root is not a directory: " + root.string());
    switch (task) {
        case Task::Classification: return load_classification(root);
        case Task::Detection: return load_detection(root);
        case Task::Segmentation: return load_segmentation(root);
    }
    throw LogicError("unreachable task");
}

AnnotationSet propagate_annotations(const AnnotationSet& base_ann,
                                    const CompositeResult& result,
                                    double keep_threshold) {
    const cv::Mat1b& pasted = result.pasted_mask.grid;
    AnnotationSet out = base_ann;
    if (!out.index_mask.empty()) out.index_mask = base_ann.index_mask.clone();

    if (pasted.empty() || cv::countNonZero(pasted) == 0) return out;

    switch (base_ann.task) {
        case Task::Classification:
            break;
        case Task::Detection: {
            out.boxes.clear();
            for (const auto& box : base_ann.boxes) {
                long long occluded = cv::countNonZero(pasted(box.rect()));
                double visible = 1.0 - static_cast<double>(occluded) /
                                           static_cast<double>(box.area());
                if (visible >= keep_threshold) out.boxes.push_back(box);
            }
            cv::Rect r = cv::boundingRect(pasted);
            out.boxes.push_back(
                BBox{r.x, r.y, r.x + r.width, r.y + r.height, result.donor_category, 1.0});
            break;
        }
        case Task::Segmentation: {
            if (out.index_mask.empty())
                throw LogicError("segmentation propagation needs an index mask");
            int donor_idx = -1;
            for (const auto& [idx, name] : out.class_map)
                if (name == result.donor_category) donor_idx = idx;
            if (donor_idx < 0) {
                int next = out.class_map.empty() ? 0 : out.class_map.rbegin()->first + 1;
                if (next > 255)
                    throw LogicError("class map full: cannot add " +
                                     result.donor_category);
                donor_idx = next;
                out.class_map[donor_idx] = result.donor_category;
            }
            for (int y = 0; y < pasted.rows; ++y) {
                const uchar* src = pasted.ptr<uchar>(y);
                uchar* dst = out.index_mask.ptr<uchar>(y);
                for (int x = 0; x < pasted.cols; ++x)
                    if (src[x]) dst[x] = static_cast<uchar>(donor_idx);
            }
            break;
        }
    }
    return out;
}

std::string AugmentationRecord::to_json_line() const {
    json j;
    j["output_id"] = output_id;
    j["base_path"] = base_path;
    j["donor_path"] = donor_path;
    j["donor_category"] = donor_category;
    j["caption"] = caption;
    j["chosen_category"] = chosen_category;
    j["chosen_score"] = chosen_score;
    j["placement"] = {{"scale", placement.scale},
                      {"x", placement.x},
                      {"y", placement.y},
                      {"attempts", placement.attempts}};
    j["prompt_mode"] = prompt_mode;
    j["seed"] = seed;
    j["item_index"] = item_index;
    j["variant"] = variant;
    return j.dump();
}

AugmentationRecord AugmentationRecord::from_json_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed provenance record: ") + e.what());
    }
    AugmentationRecord r;
    r.output_id = j.at("output_id").get<std::string>();
    r.base_path = j.at("base_path").get<std::string>();
    r.donor_path = j.at("donor_path").get<std::string>();
    r.donor_category = j.at("donor_category").get<std::string>();
    r.caption = j.at("caption").get<std::string>();
    r.chosen_category = j.at("chosen_category").get<std::string>();
    r.chosen_score = j.at("chosen_score").get<double>();
    r.placement.scale = j.at("placement").at("scale").get<double>();
    r.placement.x = j.at("placement").at("x").get<int>();
    r.placement.y = j.at("placement").at("y").get<int>();
    r.placement.attempts = j.at("placement").at("attempts").get<int>();
    r.prompt_mode = j.at("prompt_mode").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.item_index = j.at("item_index").get<std::uint64_t>();
    r.variant = j.at("variant").get<int>();
    return r;
}

std::string item_image_relpath(const std::string& id, Task task) {
    switch (task) {
        case Task::Classification: return id + ".png";
        case Task::Detection:
        case Task::Segmentation: return "images/" + id + ".png";
    }
    return id + ".png";
}

std::string item_mask_relpath(const std::string& id) { return "masks/" + id + ".png"; }

ManifestRow write_item_files(const WriteItem& item, const fs::path& out_dir,
                             Task task) {
    if (task == Task::Classification && item.annotations.class_tag.empty())
        throw LogicError("classification item without class tag: " + item.id);
    std::string rel;
    if (task == Task::Classification) {
        // id already carries the class folder for loaded items; items built
        // programmatically get it from the tag
        rel = item.id.find('/') != std::string::npos
                  ? item.id + ".png"
                  : item.annotations.class_tag + "/" + item.id + ".png";
    } else {
        rel = item_image_relpath(item.id, task);
    }
    write_png(out_dir / rel, item.image);
    if (task == Task::Segmentation) {
        if (item.annotations.index_mask.empty())
            throw LogicError("segmentation item without mask: " + item.id);
        write_png(out_dir / item_mask_relpath(item.id), item.annotations.index_mask);
    }
    return ManifestRow{rel, sha256_file(out_dir / rel)};
}

void write_detection_ann_rows(const std::vector<DetectionAnnRow>& rows,
                              const fs::path& out_dir) {
    std::vector<const DetectionAnnRow*> sorted;
    for (const auto& r : rows) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const DetectionAnnRow* a, const DetectionAnnRow* b) {
                  return a->id < b->id;
              });

    std::map<std::string, int> category_ids;
    for (const auto* r : sorted)
        for (const auto& b : r->boxes) category_ids[b.label] = 0;
    int next_cat = 1;
    for (auto& [name, id] : category_ids) id = next_cat++;

    json images = json::array();
    json annotations = json::array();
    int image_id = 1, ann_id = 1;
    for (const auto* r : sorted) {
        json im;
        im["id"] = image_id;
        im["file_name"] = r->id + ".png";
        im["width"] = r->width;
        im["height"] = r->height;
        images.push_back(im);
        for (const auto& b : r->boxes) {
            json a;
            a["id"] = ann_id++;
            a["image_id"] = image_id;
            a["category_id"] = category_ids.at(b.label);
            a["bbox"] = {b.x_min, b.y_min, b.width(), b.height()};
            a["area"] = b.area();
            a["score"] = b.score;
            annotations.push_back(a);
        }
        ++image_id;
    }
    json categories = json::array();
    for (const auto& [name, id] : category_ids)
        categories.push_back({{"id", id}, {"name", name}});

    json doc;
    doc["images"] = images;
    doc["annotations"] = annotations;
    doc["categories"] = categories;

    fs::create_directories(out_dir);
    fs::path path = out_dir / "annotations.json";
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write annotations.json under " + out_dir.string());
        out << doc.dump(2) << '\n';
    }
    fs::rename(tmp, path);
}

std::vector<DetectionAnnRow> load_detection_ann_rows(const fs::path& out_dir) {
    std::vector<DetectionAnnRow> rows;
    std::ifstream in(out_dir / "annotations.json");
    if (!in) return rows;
    json doc;
    try {
        in >> doc;
    } catch (const json::exception&) {
        return rows;  // unreadable partial state just means nothing to resume
    }
    std::map<int, std::string> categories;
    for (const auto& c : doc.value("categories", json::array()))
        categories[c.at("id").get<int>()] = c.at("name").get<std::string>();
    std::map<int, DetectionAnnRow> by_id;
    for (const auto& im : doc.value("images", json::array())) {
        DetectionAnnRow row;
        row.id = fs::path(im.at("file_name").get<std::string>())
                     .replace_extension()
                     .generic_string();
        row.width = im.at("width").get<int>();
        row.height = im.at("height").get<int>();
        by_id[im.at("id").get<int>()] = std::move(row);
    }
    for (const auto& a : doc.value("annotations", json::array())) {
        auto it = by_id.find(a.at("image_id").get<int>());
        auto cat = categories.find(a.at("category_id").get<int>());
        if (it == by_id.end() || cat == categories.end()) continue;
        auto bb = a.at("bbox");
        BBox box;
        box.x_min = bb.at(0).get<int>();
        box.y_min = bb.at(1).get<int>();
        box.x_max = box.x_min + bb.at(2).get<int>();
        box.y_max = box.y_min + bb.at(3).get<int>();
        box.label = cat->second;
        box.score = a.value("score", 1.0);
        it->second.boxes.push_back(std::move(box));
    }
    for (auto& [id, row] : by_id) rows.push_back(std::move(row));
    return rows;
}

void write_detection_annotations(const std::vector<WriteItem>& items,
                                 const fs::path& out_dir) {
    std::vector<DetectionAnnRow> rows;
    rows.reserve(items.size());
    for (const auto& it : items)
        rows.push_back(DetectionAnnRow{it.id, it.image.cols, it.image.rows,
                                       it.annotations.boxes});
    write_detection_ann_rows(rows, out_dir);
}

void write_classes_json(const std::map<int, std::string>& class_map,
                        const fs::path& out_dir) {
    json doc = json::object();
    for (const auto& [idx, name] : class_map) doc[std::to_string(idx)] = name;
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "classes.json", std::ios::trunc);
    if (!out) throw IoError("cannot write classes.json under " + out_dir.string());
    out << doc.dump(2) << '\n';
}

void write_manifest(const std::vector<ManifestRow>& rows, const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest: " + path.string());
    for (const auto& row : rows) out << row.relative_path << '\t' << row.sha256 << '\n';
}

void write_provenance(const std::vector<AugmentationRecord>& records,
                      const fs::path& path) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write provenance: " + path.string());
    for (const auto& r : records) out << r.to_json_line() << '\n';
}

std::vector<AugmentationRecord> load_provenance(const fs::path& path) {
    std::vector<AugmentationRecord> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        out.push_back(AugmentationRecord::from_json_line(line));
    }
    return out;
}

std::vector<ManifestRow> write_dataset(const std::vector<WriteItem>& items,
                                       const fs::path& out_dir, Task task) {
    fs::create_directories(out_dir);
    std::vector<ManifestRow> rows;
    rows.reserve(items.size());
    std::map<int, std::string> merged_classes;
    std::vector<AugmentationRecord> records;

    for (const auto& item : items) {
        rows.push_back(write_item_files(item, out_dir, task));
        if (task == Task::Segmentation) {
            for (const auto& [idx, name] : item.annotations.class_map) {
                auto it = merged_classes.find(idx);
                if (it != merged_classes.end() && it->second != name)
                    throw LogicError("inconsistent class maps across items: index " +
                                     std::to_string(idx));
                merged_classes[idx] = name;
            }
        }
        if (item.record) records.push_back(*item.record);
    }
    if (task == Task::Detection) write_detection_annotations(items, out_dir);
    if (task == Task::Segmentation) write_classes_json(merged_classes, out_dir);

    std::sort(rows.begin(), rows.end(), [](const ManifestRow& a, const ManifestRow& b) {
        return a.relative_path < b.relative_path;
    });
    write_manifest(rows, out_dir / "manifest.tsv");
    std::sort(records.begin(), records.end(),
              [](const AugmentationRecord& a, const AugmentationRecord& b) {
                  return a.output_id < b.output_id;
              });
    write_provenance(records, out_dir / "augmentations.jsonl");
    return rows;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> select_partition(
    std::size_t count, int fraction_den, std::uint64_t rng_seed) {
    if (fraction_den < 1) throw ConfigError("partition fraction denominator must be >= 1");
    std::vector<std::size_t> indices(count);
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    std::mt19937_64 rng(rng_seed);
    std::shuffle(indices.begin(), indices.end(), rng);

    auto n_augment = static_cast<std::size_t>(
        std::llround(static_cast<double>(count) / fraction_den));
    n_augment = std::min(n_augment, count);
    std::vector<std::size_t> augment(indices.begin(), indices.begin() + n_augment);
    std::vector<std::size_t> passthrough(indices.begin() + n_augment, indices.end());
    std::sort(augment.begin(), augment.end());
    std::sort(passthrough.begin(), passthrough.end());
    return {std::move(augment), std::move(passthrough)};
}

}  // namespace cacp
