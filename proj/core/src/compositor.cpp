#include <cacp/compositor.hpp>

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace cacp {

std::pair<cv::Mat, BinaryMask> rescale_object(const cv::Mat& donor_crop,
                                              const BinaryMask& donor_mask,
                                              double target_scale) {
    if (!(target_scale > 0.0)) throw LogicError("target scale must be positive");
    if (donor_crop.empty() || donor_mask.grid.empty())
        throw LogicError("cannot rescale an empty crop");
    if (donor_crop.rows != donor_mask.grid.rows ||
        donor_crop.cols != donor_mask.grid.cols)
        throw LogicError("crop and mask dimensions differ");

    int nw = std::max(1, static_cast<int>(std::lround(donor_crop.cols * target_scale)));
    int nh = std::max(1, static_cast<int>(std::lround(donor_crop.rows * target_scale)));
    if (static_cast<long long>(nw) * nh < 4)
        throw LogicError("degenerate scale: result smaller than 4 px");

    if (nw == donor_crop.cols && nh == donor_crop.rows)
        return {donor_crop.clone(), BinaryMask{donor_mask.grid.clone()}};

    cv::Mat crop;
    cv::resize(donor_crop, crop, cv::Size(nw, nh), 0, 0, cv::INTER_LINEAR);
    BinaryMask mask;
    cv::resize(donor_mask.grid, mask.grid, cv::Size(nw, nh), 0, 0, cv::INTER_NEAREST);
    return {std::move(crop), std::move(mask)};
}

double choose_scale(const RatioTable& table, const std::string& donor_category,
                    const std::string& base_context_category,
                    long long donor_box_area, long long base_ref_area,
                    std::uint64_t rng_seed, double fallback_min, double fallback_max) {
    if (donor_box_area <= 0 || base_ref_area <= 0)
        throw LogicError("areas must be positive");
    RatioInterval interval = ratio_interval(table, donor_category,
                                            base_context_category, fallback_min,
                                            fallback_max);
    std::mt19937_64 rng(rng_seed);
    double r = interval.ratio_min;
    if (interval.ratio_max > interval.ratio_min) {
        std::uniform_real_distribution<double> pick(interval.ratio_min,
                                                    interval.ratio_max);
        r = pick(rng);
    }
    return std::sqrt(r * static_cast<double>(base_ref_area) /
                     static_cast<double>(donor_box_area));
}

Placement choose_position(const std::vector<BBox>& base_annotations,
                          cv::Size paste_dims, cv::Size base_dims,
                          double max_overlap_iou, int max_attempts,
                          std::uint64_t rng_seed) {
    if (max_attempts < 1) throw ConfigError("max_attempts must be >= 1");
    if (paste_dims.width < 1 || paste_dims.height < 1)
        throw LogicError("paste dimensions must be positive");
    if (paste_dims.width > base_dims.width || paste_dims.height > base_dims.height)
        throw LogicError("paste too large for base image");

    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<int> px(0, base_dims.width - paste_dims.width);
    std::uniform_int_distribution<int> py(0, base_dims.height - paste_dims.height);

    Placement best;
    double best_overlap = std::numeric_limits<double>::infinity();
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        Placement p;
        p.x = px(rng);
        p.y = py(rng);
        p.attempts = attempt;

        BBox paste_box{p.x, p.y, p.x + paste_dims.width, p.y + paste_dims.height, "", 1.0};
        double overlap = 0.0;
        for (const auto& existing : base_annotations)
            overlap = std::max(overlap, box_iou(paste_box, existing));

        if (overlap <= max_overlap_iou) return p;
        if (overlap < best_overlap) {
            best_overlap = overlap;
            best = p;
        }
    }
    best.attempts = max_attempts;
    return best;
}

CompositeResult blend(const cv::Mat& base, const cv::Mat& donor_crop,
                      const BinaryMask& donor_mask, const Placement& placement,
                      const std::string& donor_category, int feather_px) {
    if (base.empty() || base.type() != CV_8UC3)
        throw LogicError("base must be an 8-bit 3-channel image");
    if (donor_crop.type() != CV_8UC3)
        throw LogicError("donor crop must be an 8-bit 3-channel image");
    if (donor_crop.rows != donor_mask.grid.rows ||
        donor_crop.cols != donor_mask.grid.cols)
        throw LogicError("crop and mask dimensions differ");
    if (feather_px < 0) throw ConfigError("feather radius must be non-negative");
    const int w = donor_crop.cols, h = donor_crop.rows;
    if (placement.x < 0 || placement.y < 0 || placement.x + w > base.cols ||
        placement.y + h > base.rows)
        throw LogicError("paste region out of base bounds");

    CompositeResult result;
    result.image = base.clone();
    result.pasted_mask.grid = cv::Mat1b::zeros(base.rows, base.cols);
    result.donor_category = donor_category;
    result.placement = placement;

    cv::Mat1f alpha;
    if (feather_px > 0) {
        // Distance to the mask boundary (the crop edge counts as boundary),
        // ramped linearly over feather_px.
        cv::Mat1b padded = cv::Mat1b::zeros(h + 2, w + 2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                padded(y + 1, x + 1) = donor_mask.grid(y, x) ? 255 : 0;
        cv::Mat1f dist;
        cv::distanceTransform(padded, dist, cv::DIST_L2, cv::DIST_MASK_PRECISE);
        alpha.create(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                alpha(y, x) = std::min(1.0f, dist(y + 1, x + 1) / float(feather_px));
    }

    for (int y = 0; y < h; ++y) {
        const auto* donor_row = donor_crop.ptr<cv::Vec3b>(y);
        auto* out_row = result.image.ptr<cv::Vec3b>(placement.y + y);
        auto* mask_row = result.pasted_mask.grid.ptr<uchar>(placement.y + y);
        for (int x = 0; x < w; ++x) {
            if (!donor_mask.grid(y, x)) continue;
            mask_row[placement.x + x] = 1;
            if (feather_px > 0) {
                float a = alpha(y, x);
                cv::Vec3b& dst = out_row[placement.x + x];
                for (int c = 0; c < 3; ++c)
                    dst[c] = cv::saturate_cast<uchar>(
                        std::lround(a * donor_row[x][c] + (1.0f - a) * dst[c]));
            } else {
                out_row[placement.x + x] = donor_row[x];
            }
        }
    }
    return result;
}

}  // namespace cacp
