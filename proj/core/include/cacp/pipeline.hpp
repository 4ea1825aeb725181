#pragma once

#include <cacp/config.hpp>
#include <cacp/types.hpp>

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>

namespace cacp {

struct StageTimings {
    double load_s = 0.0;
    double match_s = 0.0;
    double prompt_s = 0.0;
    double segment_s = 0.0;
    double composite_s = 0.0;
    double write_s = 0.0;
};

struct RunReport {
    std::size_t images_processed = 0;
    std::size_t images_augmented = 0;  // base images that received a paste
    std::size_t donors_skipped = 0;    // donor draws abandoned (no object found)
    double wall_time_s = 0.0;
    StageTimings stages;

    std::string summary() const;
};

// Builds (or loads) the gallery index and ratio table, partitions the source
// dataset, and writes the augmented dataset with propagated annotations,
// manifest.tsv and augmentations.jsonl. Deterministic end-to-end for fake
// backends and a fixed seed. With config.resume, items whose outputs already
// exist are not recomputed.
RunReport run_augment(const RunConfig& config);

// Writes the index cache and ratio table files; returns their paths.
std::pair<std::filesystem::path, std::filesystem::path> run_build_gallery(
    const RunConfig& config);

// Compares two dataset trees of the same layout and returns the TSV report
// ("metric TAB class TAB value" lines).
std::string run_evaluate(const std::filesystem::path& pred_dir,
                         const std::filesystem::path& truth_dir, Task task);

// Dry run of one image: writes caption.txt, ranking.tsv, prompt_overlay.png
// and composite.png under <output_dir>/preview. The composite equals what
// run_augment would produce for the same config and seed.
void run_preview(const RunConfig& config, const std::filesystem::path& base_image_path);

}  // namespace cacp
