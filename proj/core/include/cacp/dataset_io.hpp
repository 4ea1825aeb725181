#pragma once

#include <cacp/types.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cacp {

// Task-specific labels. Exactly the fields for the task are populated:
// classification -> class_tag; detection -> boxes; segmentation ->
// index_mask + class_map (index 0 is background).
struct AnnotationSet {
    Task task = Task::Classification;
    std::string class_tag;
    std::vector<BBox> boxes;
    cv::Mat1b index_mask;
    std::map<int, std::string> class_map;

    bool operator==(const AnnotationSet& other) const;
};

// Boxes usable for placement and scale context: detection boxes as-is, a
// tight box per non-background class for segmentation, none for
// classification.
std::vector<BBox> annotation_boxes(const AnnotationSet& ann);

// One dataset element; pixels are loaded lazily via load_image().
struct DatasetItem {
    std::filesystem::path image_path;
    std::string id;  // relative path without extension, '/'-separated
    AnnotationSet annotations;
};

cv::Mat load_image(const std::filesystem::path& path);

// Layouts: classification root/<class>/<image>; detection images/ +
// annotations.json (COCO-style); segmentation images/ + masks/<stem>.png +
// classes.json. Items come back in sorted id order.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& root, Task task);

// Appends the pasted object's annotation and drops base boxes whose visible
// (un-occluded) area fraction fell below keep_threshold. Existing boxes are
// never shrunk. Segmentation masks are overwritten on pasted pixels with the
// donor's class index, extending class_map when the category is new.
AnnotationSet propagate_annotations(const AnnotationSet& base_ann,
                                    const CompositeResult& result,
                                    double keep_threshold = 0.2);

// Full provenance of one synthetic image; with fake backends the record is
// sufficient to replay the composite deterministically.
struct AugmentationRecord {
    std::string output_id;
    std::string base_path;
    std::string donor_path;
    std::string donor_category;
    std::string caption;
    std::string chosen_category;
    double chosen_score = 0.0;
    Placement placement;
    std::string prompt_mode;
    std::uint64_t seed = 0;      // run seed
    std::uint64_t item_index = 0;
    int variant = 0;

    std::string to_json_line() const;
    static AugmentationRecord from_json_line(const std::string& line);
};

struct ManifestRow {
    std::string relative_path;
    std::string sha256;
};

// One item ready to be written: decoded pixels plus annotations.
struct WriteItem {
    std::string id;
    cv::Mat image;
    AnnotationSet annotations;
    std::optional<AugmentationRecord> record;
};

// Writes the dataset in the layout load_dataset expects (round-trip
// property), plus manifest.tsv ("relative_path TAB sha256", one row per
// item, sorted) and augmentations.jsonl (one record per synthetic image).
std::vector<ManifestRow> write_dataset(const std::vector<WriteItem>& items,
                                       const std::filesystem::path& out_dir,
                                       Task task);

// Lower-level pieces used by the orchestrator for incremental writes.
std::string item_image_relpath(const std::string& id, Task task);
std::string item_mask_relpath(const std::string& id);
ManifestRow write_item_files(const WriteItem& item, const std::filesystem::path& out_dir,
                             Task task);
void write_detection_annotations(const std::vector<WriteItem>& items,
                                 const std::filesystem::path& out_dir);

// Annotation-only view of a detection item; lets the orchestrator rewrite
// annotations.json incrementally without holding pixel data.
struct DetectionAnnRow {
    std::string id;
    int width = 0;
    int height = 0;
    std::vector<BBox> boxes;
};
void write_detection_ann_rows(const std::vector<DetectionAnnRow>& rows,
                              const std::filesystem::path& out_dir);
std::vector<DetectionAnnRow> load_detection_ann_rows(const std::filesystem::path& out_dir);
void write_classes_json(const std::map<int, std::string>& class_map,
                        const std::filesystem::path& out_dir);
void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::filesystem::path& path);
void write_provenance(const std::vector<AugmentationRecord>& records,
                      const std::filesystem::path& path);
std::vector<AugmentationRecord> load_provenance(const std::filesystem::path& path);

// Splits item indices into (augment_set, passthrough_set):
// |augment_set| = round(count / fraction_den), disjoint union preserves all
// indices, reproducible per seed. Both sets come back sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> select_partition(
    std::size_t count, int fraction_den, std::uint64_t rng_seed);

}  // namespace cacp
