#include <cacp/prompt_generator.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace cacp {

namespace {

void check_point_budget(int n) {
    if (n < 0 || n > 16) throw ConfigError("prompt point count must be in [0, 16]");
}

}  // namespace

BBox pick_object_box(const cv::Mat& donor_image, const std::string& category,
                     ObjectDetector& detector) {
    auto boxes = detector.detect(donor_image, category);
    if (boxes.empty())
        throw NoObjectFoundError("no '" + category + "' object found in donor image");
    return boxes.front();
}

std::vector<PromptPoint> sample_cam_points(const Heatmap& heatmap, const BBox& box,
                                           int n, double min_sep) {
    check_point_budget(n);
    if (min_sep < 0) throw ConfigError("min_sep must be non-negative");
    if (box.x_min < 0 || box.y_min < 0 || box.x_max > heatmap.grid.cols ||
        box.y_max > heatmap.grid.rows)
        throw LogicError("prompt box outside heatmap bounds");
    if (n == 0) return {};

    struct Cell {
        float value;
        int x, y;
    };
    std::vector<Cell> cells;
    cells.reserve(static_cast<std::size_t>(box.width()) * box.height());
    for (int y = box.y_min; y < box.y_max; ++y)
        for (int x = box.x_min; x < box.x_max; ++x)
            cells.push_back(Cell{heatmap.grid(y, x), x, y});
    std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });

    const double sep = min_sep * std::hypot(double(box.width()), double(box.height()));
    std::vector<PromptPoint> points;
    for (const auto& cell : cells) {
        bool ok = true;
        for (const auto& p : points) {
            if (std::hypot(double(cell.x - p.x), double(cell.y - p.y)) < sep) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        points.push_back(PromptPoint{cell.x, cell.y, true});
        if (static_cast<int>(points.size()) == n) break;
    }
    return points;
}

std::vector<PromptPoint> sample_random_points(const BBox& box, int n,
                                              std::uint64_t rng_seed) {
    check_point_budget(n);
    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<int> px(box.x_min, box.x_max - 1);
    std::uniform_int_distribution<int> py(box.y_min, box.y_max - 1);
    std::vector<PromptPoint> points;
    points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int x = px(rng);
        int y = py(rng);
        points.push_back(PromptPoint{x, y, true});
    }
    return points;
}

PromptBundle build_prompt_for_box(const cv::Mat& donor_image, const BBox& box,
                                  const std::string& category,
                                  const PromptOptions& options,
                                  SaliencyMapper* saliency, std::uint64_t rng_seed) {
    check_point_budget(options.n_points);
    PromptBundle bundle;
    bundle.box = box;
    bundle.mode = options.mode;
    switch (options.mode) {
        case PromptMode::BoxOnly:
            break;
        case PromptMode::BoxPlusRandom:
            bundle.points = sample_random_points(box, options.n_points, rng_seed);
            break;
        case PromptMode::BoxPlusCam: {
            if (!saliency)
                throw BackendError("box+cam prompt mode requires a saliency backend");
            Heatmap hm = saliency->saliency(donor_image, category);
            bundle.points = sample_cam_points(hm, box, options.n_points, options.min_sep);
            break;
        }
    }
    return bundle;
}

PromptBundle build_prompt(const cv::Mat& donor_image, const std::string& category,
                          const PromptOptions& options, ObjectDetector& detector,
                          SaliencyMapper* saliency, std::uint64_t rng_seed) {
    BBox box = pick_object_box(donor_image, category, detector);
    return build_prompt_for_box(donor_image, box, category, options, saliency, rng_seed);
}

}  // namespace cacp
