#pragma once

#include <cacp/backends.hpp>
#include <cacp/gallery.hpp>
#include <cacp/prompt_generator.hpp>
#include <cacp/types.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace cacp {

// Everything one augmentation run needs. Every field has a default except
// the three directories.
struct RunConfig {
    Task task = Task::Classification;
    std::filesystem::path source_dir;
    std::filesystem::path gallery_dir;
    std::filesystem::path output_dir;
    std::filesystem::path index_cache_path;  // default <gallery_dir>/cacp-index.tsv
    std::filesystem::path ratio_table_path;  // default <gallery_dir>/cacp-ratios.tsv

    int fraction_den = 1;  // augment 1/fraction_den of the items
    int variants_per_image = 1;
    std::uint64_t seed = 0;
    bool resume = false;
    int jobs = 1;

    PromptOptions prompt;

    int feather_px = 0;
    double max_overlap_iou = 0.3;
    int max_attempts = 20;

    double keep_threshold = 0.2;
    double fallback_ratio_min = kFallbackRatioMin;
    double fallback_ratio_max = kFallbackRatioMax;
    int top_k = 1;

    BackendSelection backends;
};

// Flat "key = value" lines, '#' comments, dotted keys. Unknown keys are
// config errors so typos fail fast.
std::map<std::string, std::string> load_config_file(const std::filesystem::path& path);

// Applies keys onto the config, validating types and ranges. Later calls
// override earlier ones, so CLI flags can be layered on top of a file.
void apply_config(RunConfig& config, const std::map<std::string, std::string>& kv);

// Range/consistency checks that need the fully-assembled config.
void validate_for_run(const RunConfig& config);

// Fills index/ratio paths from gallery_dir when unset.
void fill_defaults(RunConfig& config);

int parse_fraction(const std::string& text);  // "1/4" or "1" -> denominator

}  // namespace cacp
