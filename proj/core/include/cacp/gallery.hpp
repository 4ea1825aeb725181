#pragma once

#include <cacp/backends.hpp>
#include <cacp/types.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cacp {

// One donor candidate. cached_bbox comes from an optional sidecar file
// "<image>.bbox" holding one box per line ("label x_min y_min x_max y_max",
// tab- or space-separated); it lets pre-annotated galleries skip detection.
struct GalleryEntry {
    std::filesystem::path image_path;   // absolute
    std::string relative_path;          // relative to the gallery root, '/'-separated
    std::string category;
    std::optional<BBox> cached_bbox;    // the donor object box, when cached
    std::vector<BBox> cached_boxes;     // every sidecar box (ratio statistics)
};

// Category -> donor images. Iteration order is deterministic: categories and
// entries are sorted.
struct GalleryIndex {
    std::filesystem::path root;
    std::vector<std::string> categories;
    std::map<std::string, std::vector<GalleryEntry>> entries;

    bool has_category(const std::string& c) const { return entries.count(c) != 0; }
    std::size_t total_entries() const;
};

// Builds the index from a folder-per-class tree. Subdirectories with no
// image files are skipped; an entirely empty gallery is a ConfigError.
GalleryIndex build_index(const std::filesystem::path& root_dir);

// Versioned cache: "CACP-INDEX v1" header then "category TAB relative_path"
// lines, sorted. Sidecar boxes are re-probed on load.
void save_index(const GalleryIndex& index, const std::filesystem::path& path);
GalleryIndex load_index(const std::filesystem::path& path,
                        const std::filesystem::path& root_dir);

// Observed object-area ratios per ordered category pair. Bounds are stored
// as exact integer rationals in one canonical orientation; the reverse
// direction is derived by swapping numerator and denominator, so the
// reciprocal identity interval(a,b) == (1/max(b,a), 1/min(b,a)) holds
// exactly at the rational level for every stored pair.
class RatioTable {
public:
    struct Interval {
        double ratio_min = 0.0;
        double ratio_max = 0.0;
        long long count = 0;
    };
    struct Rational {
        long long num = 0;
        long long den = 1;
    };

    // Folds one co-observation: area(a)/area(b) within a single image.
    void record(const std::string& a, const std::string& b, long long area_a,
                long long area_b);

    std::optional<Interval> find(const std::string& a, const std::string& b) const;

    // Exact bounds for built tables; nullopt for pairs absent or tables
    // loaded from disk (the file stores decimals).
    std::optional<std::pair<Rational, Rational>> find_exact(
        const std::string& a, const std::string& b) const;

    bool empty() const { return ordered_.empty(); }
    std::size_t ordered_pair_count() const { return ordered_.size(); }

    // Every ordered pair, sorted by (obj1, obj2).
    std::vector<std::tuple<std::string, std::string, Interval>> rows() const;

    // One record per line: obj1 TAB obj2 TAB ratio_min TAB ratio_max TAB
    // count, UTF-8, sorted by (obj1, obj2).
    void save(const std::filesystem::path& path) const;
    static RatioTable load(const std::filesystem::path& path);

private:
    struct Stats {
        Rational min, max;
        long long count = 0;
    };
    void refresh_ordered(const std::string& lo, const std::string& hi,
                         const Stats& s);

    std::map<std::pair<std::string, std::string>, Stats> canonical_;
    std::map<std::pair<std::string, std::string>, Interval> ordered_;
};

// Traverses the gallery and folds every cross-category box pair per image
// into the table. Uses sidecar boxes when present, the detector otherwise;
// images that fail to load or detect are skipped.
RatioTable build_ratio_table(const GalleryIndex& index, ObjectDetector& detector);

// Uniform draw from a category's entries; reproducible for a fixed seed.
const GalleryEntry& sample_donor(const GalleryIndex& index, const std::string& category,
                                 std::uint64_t rng_seed);

// Interval for scaling a donor of category `a` against base context `b`.
// Unseen pairs get the documented fallback and are flagged.
inline constexpr double kFallbackRatioMin = 0.05;
inline constexpr double kFallbackRatioMax = 0.30;

struct RatioInterval {
    double ratio_min = kFallbackRatioMin;
    double ratio_max = kFallbackRatioMax;
    bool fallback = true;
};

RatioInterval ratio_interval(const RatioTable& table, const std::string& a,
                             const std::string& b,
                             double fallback_min = kFallbackRatioMin,
                             double fallback_max = kFallbackRatioMax);

// True for the image file extensions the gallery and dataset loaders accept.
bool is_image_file(const std::filesystem::path& p);

}  // namespace cacp
