#include <cacp/compositor.hpp>
#include <cacp/context_matcher.hpp>
#include <cacp/dataset_io.hpp>
#include <cacp/metrics.hpp>
#include <cacp/pipeline.hpp>
#include <cacp/prompt_generator.hpp>
#include <cacp/util.hpp>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;

namespace cacp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

class ScopedTimer {
public:
    ScopedTimer(double& acc) : acc_(acc), t0_(Clock::now()) {}
    ~ScopedTimer() { acc_ += seconds_since(t0_); }

private:
    double& acc_;
    Clock::time_point t0_;
};

std::uint64_t item_seed(const RunConfig& config, std::size_t index) {
    return mix_seed(mix_seed(config.seed, "item"), static_cast<std::uint64_t>(index));
}

std::string output_id(const std::string& base_id, int variant, int total_variants) {
    if (total_variants == 1) return base_id;
    return base_id + "__v" + std::to_string(variant);
}

const BBox* largest_box(const std::vector<BBox>& boxes) {
    const BBox* best = nullptr;
    for (const auto& b : boxes)
        if (!best || b.area() > best->area()) best = &b;
    return best;
}

// Read-only state shared by every worker.
struct AugmentContext {
    const RunConfig& config;
    const GalleryIndex& index;
    const RatioTable& table;
    const EmbeddingCache& cache;
    const std::map<int, std::string>* ext_class_map;  // segmentation only
};

struct PreparedDonor {
    bool found = false;
    std::string category;
    std::string donor_relpath;
    cv::Mat donor_image;
    BBox box;
    PromptBundle prompt;
    BinaryMask mask;
    std::size_t donors_skipped = 0;
};

// Matches the base image to a category, then hunts for a usable donor:
// up to 5 draws from the chosen category, then up to 5 from the runner-up.
PreparedDonor prepare_donor(const AugmentContext& ctx, const cv::Mat& base_image,
                            BackendSet& backends, MatchResult& match,
                            std::uint64_t seed_i, StageTimings& timings) {
    {
        ScopedTimer t(timings.match_s);
        match = match_category(base_image, ctx.index, *backends.captioner,
                               *backends.embedder, &ctx.cache, ctx.config.top_k,
                               mix_seed(seed_i, "match"));
    }

    std::vector<std::string> candidates{match.chosen};
    for (const auto& s : match.ranking) {
        if (s.category != match.chosen) {
            candidates.push_back(s.category);
            break;
        }
    }

    PreparedDonor donor;
    for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
        const std::string& category = candidates[ci];
        for (int attempt = 0; attempt < 5; ++attempt) {
            std::uint64_t draw_seed =
                mix_seed(mix_seed(seed_i, "donor"),
                         std::uint64_t{16} * ci + std::uint64_t(attempt));
            const GalleryEntry& entry = sample_donor(ctx.index, category, draw_seed);
            try {
                cv::Mat donor_image;
                {
                    ScopedTimer t(timings.load_s);
                    donor_image = load_image(entry.image_path);
                }
                BBox box;
                bool have_cached = entry.cached_bbox && entry.cached_bbox->x_max <= donor_image.cols &&
                                   entry.cached_bbox->y_max <= donor_image.rows;
                if (have_cached) {
                    box = *entry.cached_bbox;
                } else {
                    ScopedTimer t(timings.prompt_s);
                    box = pick_object_box(donor_image, category, *backends.detector);
                }
                PromptBundle prompt;
                {
                    ScopedTimer t(timings.prompt_s);
                    prompt = build_prompt_for_box(donor_image, box, category,
                                                  ctx.config.prompt,
                                                  backends.saliency.get(),
                                                  mix_seed(seed_i, "points"));
                }
                BinaryMask mask;
                {
                    ScopedTimer t(timings.segment_s);
                    mask = backends.segmenter->segment(donor_image, prompt);
                }
                if (mask.empty())
                    throw NoObjectFoundError("segmenter produced an empty mask");

                donor.found = true;
                donor.category = category;
                donor.donor_relpath = entry.relative_path;
                donor.donor_image = std::move(donor_image);
                donor.box = box;
                donor.prompt = std::move(prompt);
                donor.mask = std::move(mask);
                return donor;
            } catch (const BackendError&) {
                throw;  // misconfigured backend is fatal, not a donor problem
            } catch (const ConfigError&) {
                throw;
            } catch (const Error&) {
                ++donor.donors_skipped;
            }
        }
    }
    return donor;
}

struct VariantResult {
    CompositeResult composite;
    AnnotationSet annotations;
    AugmentationRecord record;
};

std::optional<VariantResult> make_variant(const AugmentContext& ctx,
                                          const cv::Mat& base_image,
                                          const AnnotationSet& base_ann,
                                          const std::string& base_path,
                                          const MatchResult& match,
                                          const PreparedDonor& donor, int variant,
                                          std::size_t item_index, std::uint64_t seed_i,
                                          const std::string& out_id,
                                          StageTimings& timings) {
    ScopedTimer t(timings.composite_s);
    const RunConfig& config = ctx.config;

    std::vector<BBox> context_boxes = annotation_boxes(base_ann);
    const BBox* largest = largest_box(context_boxes);
    std::string context_cat = largest ? largest->label : "";
    long long base_ref_area =
        largest ? largest->area()
                : std::max<long long>(
                      1, std::llround(0.10 * base_image.cols * base_image.rows));

    cv::Mat crop = donor.donor_image(donor.box.rect()).clone();
    BinaryMask crop_mask{donor.mask.grid(donor.box.rect()).clone()};
    if (crop_mask.empty()) return std::nullopt;

    const double fit_limit =
        std::min((base_image.cols - 0.25) / crop.cols,
                 (base_image.rows - 0.25) / crop.rows);

    for (int retry = 0; retry < 5; ++retry) {
        double scale = choose_scale(
            ctx.table, donor.category, context_cat, donor.box.area(), base_ref_area,
            mix_seed(mix_seed(seed_i, "scale"),
                     static_cast<std::uint64_t>(variant * 8 + retry)),
            config.fallback_ratio_min, config.fallback_ratio_max);
        scale = std::min(scale, fit_limit);
        if (!(scale > 0.0)) return std::nullopt;

        cv::Mat scaled_crop;
        BinaryMask scaled_mask;
        try {
            std::tie(scaled_crop, scaled_mask) = rescale_object(crop, crop_mask, scale);
        } catch (const LogicError&) {
            continue;  // degenerate scale; draw a new ratio
        }
        if (scaled_mask.empty()) continue;

        Placement placement = choose_position(
            context_boxes, cv::Size(scaled_crop.cols, scaled_crop.rows),
            cv::Size(base_image.cols, base_image.rows), config.max_overlap_iou,
            config.max_attempts,
            mix_seed(mix_seed(seed_i, "position"), static_cast<std::uint64_t>(variant)));
        placement.scale = scale;

        VariantResult result;
        result.composite = blend(base_image, scaled_crop, scaled_mask, placement,
                                 donor.category, config.feather_px);
        result.annotations =
            propagate_annotations(base_ann, result.composite, config.keep_threshold);

        AugmentationRecord& rec = result.record;
        rec.output_id = out_id;
        rec.base_path = base_path;
        rec.donor_path = donor.donor_relpath;
        rec.donor_category = donor.category;
        rec.caption = match.base_caption.text;
        rec.chosen_category = match.chosen;
        for (const auto& s : match.ranking)
            if (s.category == match.chosen) rec.chosen_score = s.score;
        rec.placement = placement;
        rec.prompt_mode = to_string(config.prompt.mode);
        rec.seed = config.seed;
        rec.item_index = item_index;
        rec.variant = variant;
        return result;
    }
    return std::nullopt;
}

struct ItemWork {
    std::vector<WriteItem> outputs;
    std::vector<ManifestRow> resumed_rows;
    std::vector<AugmentationRecord> resumed_records;
    std::vector<DetectionAnnRow> resumed_ann_rows;
    std::size_t donors_skipped = 0;
    bool augmented = false;
    bool resumed = false;
};

class Augmenter {
public:
    explicit Augmenter(const RunConfig& config) : config_(config) {
        fill_defaults(config_);
        validate_for_run(config_);
    }

    RunReport run();

    // Shared with run_preview: builds the per-item computation state.
    static void prepare_shared(RunConfig& config, GalleryIndex& index,
                               RatioTable& table);

private:
    ItemWork process_item(std::size_t index, const AugmentContext& ctx,
                          BackendSet& backends, StageTimings& timings) const;
    ItemWork resume_item(std::size_t index) const;
    bool can_resume(std::size_t index) const;
    std::vector<std::string> expected_ids(std::size_t index) const;
    AnnotationSet adjusted_annotations(const DatasetItem& item) const;

    RunConfig config_;
    GalleryIndex index_;
    RatioTable table_;
    EmbeddingCache cache_;
    std::vector<DatasetItem> items_;
    std::set<std::size_t> augment_set_;
    std::map<int, std::string> ext_class_map_;
    std::map<std::string, AugmentationRecord> prior_records_;
    std::map<std::string, DetectionAnnRow> prior_ann_rows_;
};

void Augmenter::prepare_shared(RunConfig& config, GalleryIndex& index,
                               RatioTable& table) {
    if (fs::exists(config.index_cache_path))
        index = load_index(config.index_cache_path, config.gallery_dir);
    else
        index = build_index(config.gallery_dir);

    if (fs::exists(config.ratio_table_path)) {
        table = RatioTable::load(config.ratio_table_path);
    } else {
        BackendSet backends = make_backends(config.backends);
        table = build_ratio_table(index, *backends.detector);
    }
}

AnnotationSet Augmenter::adjusted_annotations(const DatasetItem& item) const {
    AnnotationSet ann = item.annotations;
    if (config_.task == Task::Segmentation) ann.class_map = ext_class_map_;
    return ann;
}

std::vector<std::string> Augmenter::expected_ids(std::size_t index) const {
    const auto& id = items_[index].id;
    if (!augment_set_.count(index)) return {id};
    std::vector<std::string> ids;
    for (int k = 0; k < config_.variants_per_image; ++k)
        ids.push_back(output_id(id, k, config_.variants_per_image));
    return ids;
}

bool Augmenter::can_resume(std::size_t index) const {
    const bool augment = augment_set_.count(index) != 0;
    for (const auto& id : expected_ids(index)) {
        fs::path image = config_.output_dir / item_image_relpath(id, config_.task);
        if (!fs::exists(image)) return false;
        if (config_.task == Task::Segmentation &&
            !fs::exists(config_.output_dir / item_mask_relpath(id)))
            return false;
        if (augment) {
            if (!prior_records_.count(id)) return false;
            if (config_.task == Task::Detection && !prior_ann_rows_.count(id))
                return false;
        } else if (config_.task == Task::Detection && !prior_ann_rows_.count(id)) {
            return false;
        }
    }
    return true;
}

ItemWork Augmenter::resume_item(std::size_t index) const {
    ItemWork work;
    work.resumed = true;
    const bool augment = augment_set_.count(index) != 0;
    for (const auto& id : expected_ids(index)) {
        std::string rel = item_image_relpath(id, config_.task);
        work.resumed_rows.push_back(
            ManifestRow{rel, sha256_file(config_.output_dir / rel)});
        if (augment) {
            work.resumed_records.push_back(prior_records_.at(id));
            work.augmented = true;
        }
        if (config_.task == Task::Detection)
            work.resumed_ann_rows.push_back(prior_ann_rows_.at(id));
    }
    return work;
}

ItemWork Augmenter::process_item(std::size_t index, const AugmentContext& ctx,
                                 BackendSet& backends, StageTimings& timings) const {
    const DatasetItem& item = items_[index];
    ItemWork work;

    cv::Mat base_image;
    {
        ScopedTimer t(timings.load_s);
        base_image = load_image(item.image_path);
    }
    AnnotationSet base_ann = adjusted_annotations(item);

    if (!augment_set_.count(index)) {
        work.outputs.push_back(WriteItem{item.id, base_image, base_ann, std::nullopt});
        return work;
    }

    std::uint64_t seed_i = item_seed(config_, index);
    MatchResult match;
    PreparedDonor donor =
        prepare_donor(ctx, base_image, backends, match, seed_i, timings);
    work.donors_skipped = donor.donors_skipped;

    if (!donor.found) {
        // graceful degradation: the base image passes through unmodified
        work.outputs.push_back(WriteItem{item.id, base_image, base_ann, std::nullopt});
        return work;
    }

    for (int k = 0; k < config_.variants_per_image; ++k) {
        std::string out_id = output_id(item.id, k, config_.variants_per_image);
        auto variant = make_variant(ctx, base_image, base_ann,
                                    item.image_path.generic_string(), match, donor, k,
                                    index, seed_i, out_id, timings);
        if (variant) {
            work.outputs.push_back(WriteItem{out_id, variant->composite.image,
                                             variant->annotations, variant->record});
            work.augmented = true;
        } else {
            work.outputs.push_back(WriteItem{out_id, base_image, base_ann, std::nullopt});
        }
    }
    return work;
}

RunReport Augmenter::run() {
    auto wall_start = Clock::now();
    RunReport report;

    prepare_shared(config_, index_, table_);

    {
        BackendSet backends = make_backends(config_.backends);
        cache_ = embed_categories(index_, *backends.embedder);
    }

    items_ = load_dataset(config_.source_dir, config_.task);
    report.images_processed = items_.size();

    auto [augment_idx, passthrough_idx] = select_partition(
        items_.size(), config_.fraction_den, mix_seed(config_.seed, "partition"));
    augment_set_ = std::set<std::size_t>(augment_idx.begin(), augment_idx.end());

    if (config_.task == Task::Segmentation && !items_.empty()) {
        ext_class_map_ = items_.front().annotations.class_map;
        std::set<std::string> names;
        for (const auto& [idx, name] : ext_class_map_) names.insert(name);
        int next = ext_class_map_.empty() ? 0 : ext_class_map_.rbegin()->first + 1;
        for (const auto& category : index_.categories) {
            if (names.count(category)) continue;
            if (next > 255)
                throw ConfigError("segmentation class map cannot hold every gallery "
                                  "category (index > 255)");
            ext_class_map_[next++] = category;
        }
    }

    fs::create_directories(config_.output_dir);
    if (config_.resume) {
        for (auto& rec :
             load_provenance(config_.output_dir / "augmentations.jsonl"))
            prior_records_[rec.output_id] = rec;
        if (config_.task == Task::Detection)
            for (auto& row : load_detection_ann_rows(config_.output_dir))
                prior_ann_rows_[row.id] = row;
    }

    std::vector<char> resumed(items_.size(), 0);
    if (config_.resume)
        for (std::size_t i = 0; i < items_.size(); ++i)
            if (can_resume(i)) resumed[i] = 1;

    AugmentContext ctx{config_, index_, table_, cache_,
                       config_.task == Task::Segmentation ? &ext_class_map_ : nullptr};

    // Items are processed in batches: a worker pool computes one batch, the
    // main thread writes it in item order, so memory stays bounded and an
    // interrupted run leaves valid partial bookkeeping. Manifest and
    // provenance are appended per item and rewritten sorted at the end.
    std::vector<ManifestRow> manifest;
    std::vector<AugmentationRecord> records;
    std::vector<DetectionAnnRow> ann_rows;

    std::ofstream manifest_stream(config_.output_dir / "manifest.tsv", std::ios::trunc);
    std::ofstream records_stream(config_.output_dir / "augmentations.jsonl",
                                 std::ios::trunc);
    if (!manifest_stream || !records_stream)
        throw IoError("cannot open output files under " + config_.output_dir.string());

    if (config_.task == Task::Segmentation)
        write_classes_json(ext_class_map_, config_.output_dir);

    const int jobs = std::clamp<int>(
        config_.jobs, 1, static_cast<int>(std::max<std::size_t>(1, items_.size())));
    const std::size_t batch_size = std::max<std::size_t>(16, std::size_t(jobs) * 4);
    std::mutex merge_mutex;

    for (std::size_t batch_start = 0; batch_start < items_.size();
         batch_start += batch_size) {
        const std::size_t batch_end =
            std::min(items_.size(), batch_start + batch_size);
        std::vector<std::optional<ItemWork>> results(batch_end - batch_start);
        std::atomic<std::size_t> cursor{batch_start};
        std::exception_ptr first_error;

        auto worker = [&]() {
            BackendSet backends = make_backends(config_.backends);
            StageTimings local;
            while (true) {
                std::size_t i = cursor.fetch_add(1);
                if (i >= batch_end) break;
                if (resumed[i]) continue;
                try {
                    results[i - batch_start] = process_item(i, ctx, backends, local);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(merge_mutex);
                    if (!first_error) first_error = std::current_exception();
                    cursor.store(batch_end);
                    break;
                }
            }
            std::lock_guard<std::mutex> lock(merge_mutex);
            report.stages.load_s += local.load_s;
            report.stages.match_s += local.match_s;
            report.stages.prompt_s += local.prompt_s;
            report.stages.segment_s += local.segment_s;
            report.stages.composite_s += local.composite_s;
        };

        if (jobs == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
            for (auto& t : pool) t.join();
        }
        if (first_error) std::rethrow_exception(first_error);

        auto write_start = Clock::now();
        for (std::size_t i = batch_start; i < batch_end; ++i) {
            ItemWork work =
                resumed[i] ? resume_item(i) : std::move(*results[i - batch_start]);
            report.donors_skipped += work.donors_skipped;
            if (work.augmented) ++report.images_augmented;

            if (work.resumed) {
                for (auto& row : work.resumed_rows) {
                    manifest_stream << row.relative_path << '\t' << row.sha256 << '\n';
                    manifest.push_back(std::move(row));
                }
                for (auto& rec : work.resumed_records) {
                    records_stream << rec.to_json_line() << '\n';
                    records.push_back(std::move(rec));
                }
                for (auto& row : work.resumed_ann_rows)
                    ann_rows.push_back(std::move(row));
            } else {
                for (auto& out : work.outputs) {
                    ManifestRow row =
                        write_item_files(out, config_.output_dir, config_.task);
                    manifest_stream << row.relative_path << '\t' << row.sha256 << '\n';
                    manifest.push_back(std::move(row));
                    if (config_.task == Task::Detection)
                        ann_rows.push_back(DetectionAnnRow{out.id, out.image.cols,
                                                           out.image.rows,
                                                           out.annotations.boxes});
                    if (out.record) {
                        records_stream << out.record->to_json_line() << '\n';
                        records.push_back(*out.record);
                    }
                }
                if (config_.task == Task::Detection)
                    write_detection_ann_rows(ann_rows, config_.output_dir);
            }
            manifest_stream.flush();
            records_stream.flush();
        }
        report.stages.write_s += seconds_since(write_start);
    }
    manifest_stream.close();
    records_stream.close();

    auto finalize_start = Clock::now();
    if (config_.task == Task::Detection)
        write_detection_ann_rows(ann_rows, config_.output_dir);

    std::sort(manifest.begin(), manifest.end(),
              [](const ManifestRow& a, const ManifestRow& b) {
                  return a.relative_path < b.relative_path;
              });
    write_manifest(manifest, config_.output_dir / "manifest.tsv");
    std::sort(records.begin(), records.end(),
              [](const AugmentationRecord& a, const AugmentationRecord& b) {
                  return a.output_id < b.output_id;
              });
    write_provenance(records, config_.output_dir / "augmentations.jsonl");

    report.stages.write_s += seconds_since(finalize_start);
    report.wall_time_s = seconds_since(wall_start);
    return report;
}

}  // namespace

std::string RunReport::summary() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "images_processed\t%zu\n"
                  "images_augmented\t%zu\n"
                  "donors_skipped\t%zu\n"
                  "wall_time_s\t%.3f\n"
                  "stage_load_s\t%.3f\n"
                  "stage_match_s\t%.3f\n"
                  "stage_prompt_s\t%.3f\n"
                  "stage_segment_s\t%.3f\n"
                  "stage_composite_s\t%.3f\n"
                  "stage_write_s\t%.3f\n",
                  images_processed, images_augmented, donors_skipped, wall_time_s,
                  stages.load_s, stages.match_s, stages.prompt_s, stages.segment_s,
                  stages.composite_s, stages.write_s);
    return buf;
}

RunReport run_augment(const RunConfig& config) {
    Augmenter augmenter(config);
    return augmenter.run();
}

std::pair<fs::path, fs::path> run_build_gallery(const RunConfig& config_in) {
    RunConfig config = config_in;
    fill_defaults(config);
    if (config.gallery_dir.empty()) throw ConfigError("gallery_dir is required");

    GalleryIndex index = build_index(config.gallery_dir);
    save_index(index, config.index_cache_path);

    BackendSet backends = make_backends(config.backends);
    RatioTable table = build_ratio_table(index, *backends.detector);
    table.save(config.ratio_table_path);
    return {config.index_cache_path, config.ratio_table_path};
}

namespace {

std::string strip_class_dir(const std::string& id) {
    auto slash = id.find('/');
    return slash == std::string::npos ? id : id.substr(slash + 1);
}

std::string evaluate_classification(const fs::path& pred_dir, const fs::path& truth_dir) {
    auto truth_items = load_dataset(truth_dir, Task::Classification);
    auto pred_items = load_dataset(pred_dir, Task::Classification);

    // Items pair up by class-stripped stem (the class folder IS the
    // prediction), so stems must be unique across classes.
    auto stem_map = [](const std::vector<DatasetItem>& items, const char* side) {
        std::map<std::string, std::string> out;
        for (const auto& item : items) {
            auto stem = strip_class_dir(item.id);
            if (!out.emplace(stem, item.annotations.class_tag).second)
                throw ConfigError(std::string(side) + " dataset has duplicate stem '" +
                                  stem + "' across classes");
        }
        return out;
    };
    auto pred_by_stem = stem_map(pred_items, "prediction");
    auto truth_by_stem = stem_map(truth_items, "truth");

    std::vector<std::string> pred, truth;
    for (const auto& [stem, truth_tag] : truth_by_stem) {
        auto it = pred_by_stem.find(stem);
        if (it == pred_by_stem.end())
            throw ConfigError("prediction missing for item '" + stem + "'");
        pred.push_back(it->second);
        truth.push_back(truth_tag);
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "accuracy\t*\t%.9f\n", accuracy(pred, truth));
    return buf;
}

std::string evaluate_segmentation(const fs::path& pred_dir, const fs::path& truth_dir) {
    auto truth_items = load_dataset(truth_dir, Task::Segmentation);
    auto pred_items = load_dataset(pred_dir, Task::Segmentation);
    std::map<std::string, const DatasetItem*> pred_by_id;
    for (const auto& item : pred_items) pred_by_id[item.id] = &item;

    const auto& truth_map = truth_items.front().annotations.class_map;
    std::map<std::string, int> truth_index_by_name;
    for (const auto& [idx, name] : truth_map) truth_index_by_name[name] = idx;

    std::map<int, ConfusionCounts> counts;
    for (const auto& t : truth_items) {
        auto it = pred_by_id.find(t.id);
        if (it == pred_by_id.end())
            throw ConfigError("prediction missing for item '" + t.id + "'");

        // remap prediction indices to truth indices by class name; names the
        // truth never uses become a sentinel outside the truth's index set
        int sentinel = 255;
        while (sentinel >= 0 && truth_map.count(sentinel)) --sentinel;
        const auto& pred_map = it->second->annotations.class_map;
        std::array<uchar, 256> remap;
        remap.fill(static_cast<uchar>(std::max(sentinel, 0)));
        for (const auto& [idx, name] : pred_map) {
            auto found = truth_index_by_name.find(name);
            if (found != truth_index_by_name.end())
                remap[idx] = static_cast<uchar>(found->second);
            else if (sentinel < 0)
                throw ConfigError("prediction class '" + name +
                                  "' cannot be remapped: truth uses all 256 indices");
        }
        cv::Mat1b pred_mask = it->second->annotations.index_mask.clone();
        for (int y = 0; y < pred_mask.rows; ++y) {
            uchar* row = pred_mask.ptr<uchar>(y);
            for (int x = 0; x < pred_mask.cols; ++x) row[x] = remap[row[x]];
        }
        const cv::Mat1b& truth_mask = t.annotations.index_mask;
        if (pred_mask.rows != truth_mask.rows || pred_mask.cols != truth_mask.cols)
            throw ConfigError("mask dimensions differ for item '" + t.id + "'");
        for (const auto& [idx, name] : truth_map) {
            auto c = confusion_counts(pred_mask, truth_mask, idx);
            counts[idx].tp += c.tp;
            counts[idx].fp += c.fp;
            counts[idx].fn += c.fn;
        }
    }

    std::ostringstream out;
    double sum = 0.0;
    char buf[128];
    for (const auto& [idx, name] : truth_map) {
        double v = iou_from_counts(counts[idx]);
        sum += v;
        std::snprintf(buf, sizeof(buf), "iou\t%s\t%.9f\n", name.c_str(), v);
        out << buf;
    }
    std::snprintf(buf, sizeof(buf), "miou\t*\t%.9f\n",
                  sum / static_cast<double>(truth_map.size()));
    out << buf;
    return out.str();
}

std::string evaluate_detection(const fs::path& pred_dir, const fs::path& truth_dir) {
    auto truth_items = load_dataset(truth_dir, Task::Detection);
    auto pred_items = load_dataset(pred_dir, Task::Detection);
    std::map<std::string, const DatasetItem*> pred_by_id;
    for (const auto& item : pred_items) pred_by_id[item.id] = &item;

    std::set<std::string> class_set;
    std::vector<DetectionMatch> matches;
    for (const auto& t : truth_items) {
        DetectionMatch m;
        m.ground_truth = t.annotations.boxes;
        for (const auto& b : m.ground_truth) class_set.insert(b.label);
        if (auto it = pred_by_id.find(t.id); it != pred_by_id.end())
            m.predictions = it->second->annotations.boxes;
        matches.push_back(std::move(m));
    }
    std::vector<std::string> classes(class_set.begin(), class_set.end());

    std::ostringstream out;
    char buf[128];
    for (const auto& cls : classes) {
        auto ap = average_precision(matches, cls);
        if (!ap) continue;
        std::snprintf(buf, sizeof(buf), "ap50\t%s\t%.9f\n", cls.c_str(), *ap);
        out << buf;
    }
    auto mean = map50(matches, classes);
    if (mean)
        std::snprintf(buf, sizeof(buf), "map50\t*\t%.9f\n", *mean);
    else
        std::snprintf(buf, sizeof(buf), "map50\t*\tnan\n");
    out << buf;
    return out.str();
}

}  // namespace

std::string run_evaluate(const fs::path& pred_dir, const fs::path& truth_dir,
                         Task task) {
    switch (task) {
        case Task::Classification: return evaluate_classification(pred_dir, truth_dir);
        case Task::Segmentation: return evaluate_segmentation(pred_dir, truth_dir);
        case Task::Detection: return evaluate_detection(pred_dir, truth_dir);
    }
    throw LogicError("unreachable task");
}

void run_preview(const RunConfig& config_in, const fs::path& base_image_path) {
    RunConfig config = config_in;
    fill_defaults(config);
    validate_for_run(config);

    GalleryIndex index;
    RatioTable table;
    Augmenter::prepare_shared(config, index, table);

    auto items = load_dataset(config.source_dir, config.task);
    fs::path wanted = fs::absolute(base_image_path);
    std::size_t item_index = items.size();
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (fs::absolute(items[i].image_path) == wanted ||
            (fs::exists(items[i].image_path) && fs::exists(wanted) &&
             fs::equivalent(items[i].image_path, wanted))) {
            item_index = i;
            break;
        }
    }
    if (item_index == items.size())
        throw ConfigError("preview image is not part of source_dir: " +
                          base_image_path.string());

    BackendSet backends = make_backends(config.backends);
    EmbeddingCache cache = embed_categories(index, *backends.embedder);
    AugmentContext ctx{config, index, table, cache, nullptr};

    const DatasetItem& item = items[item_index];
    cv::Mat base_image = load_image(item.image_path);
    std::uint64_t seed_i = item_seed(config, item_index);

    StageTimings timings;
    MatchResult match;
    PreparedDonor donor =
        prepare_donor(ctx, base_image, backends, match, seed_i, timings);

    fs::path preview_dir = config.output_dir / "preview";
    fs::create_directories(preview_dir);
    {
        std::ofstream caption(preview_dir / "caption.txt", std::ios::trunc);
        caption << match.base_caption.text << '\n';
    }
    {
        std::ofstream ranking(preview_dir / "ranking.tsv", std::ios::trunc);
        for (const auto& s : match.ranking)
            ranking << s.category << '\t' << format_double(s.score) << '\n';
    }
    if (!donor.found)
        throw NoObjectFoundError("preview: no usable donor for this image");

    // box outline then point markers, so markers stay intact when they touch
    cv::Mat overlay = donor.donor_image.clone();
    cv::rectangle(overlay,
                  cv::Rect(donor.box.x_min, donor.box.y_min, donor.box.width(),
                           donor.box.height()),
                  cv::Scalar(0, 255, 0), 1);
    for (const auto& p : donor.prompt.points) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                int x = p.x + dx, y = p.y + dy;
                if (x < 0 || y < 0 || x >= overlay.cols || y >= overlay.rows) continue;
                overlay.at<cv::Vec3b>(y, x) = cv::Vec3b(255, 0, 255);
            }
        }
    }
    cv::imwrite((preview_dir / "prompt_overlay.png").string(), overlay);

    AnnotationSet base_ann = item.annotations;
    auto variant = make_variant(ctx, base_image, base_ann,
                                item.image_path.generic_string(), match, donor, 0,
                                item_index, seed_i,
                                output_id(item.id, 0, config.variants_per_image),
                                timings);
    if (!variant) throw LogicError("preview: variant composition failed");
    cv::imwrite((preview_dir / "composite.png").string(), variant->composite.image);
}

}  // namespace cacp
