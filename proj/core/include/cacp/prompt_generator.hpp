#pragma once

#include <cacp/backends.hpp>
#include <cacp/types.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace cacp {

struct PromptOptions {
    PromptMode mode = PromptMode::BoxPlusCam;
    int n_points = 3;       // in [0, 16]
    double min_sep = 0.15;  // fraction of the box diagonal
};

// Highest-score box whose label equals the category. Throws
// NoObjectFoundError when the detector finds none; the caller skips this
// donor and resamples.
BBox pick_object_box(const cv::Mat& donor_image, const std::string& category,
                     ObjectDetector& detector);

// Greedy top-value selection: the n highest-value heatmap cells inside the
// box, subject to pairwise distance >= min_sep * diag(box). Fewer than n
// points are returned only when the box cannot host n separated points.
std::vector<PromptPoint> sample_cam_points(const Heatmap& heatmap, const BBox& box,
                                           int n, double min_sep);

// Uniform i.i.d. points inside the box; reproducible per seed.
std::vector<PromptPoint> sample_random_points(const BBox& box, int n,
                                              std::uint64_t rng_seed);

// Composes a bundle for an already-known object box (used when the gallery
// carries a cached annotation). saliency may be null for non-CAM modes.
PromptBundle build_prompt_for_box(const cv::Mat& donor_image, const BBox& box,
                                  const std::string& category,
                                  const PromptOptions& options,
                                  SaliencyMapper* saliency, std::uint64_t rng_seed);

// Detects the object box, then composes the bundle per mode.
PromptBundle build_prompt(const cv::Mat& donor_image, const std::string& category,
                          const PromptOptions& options, ObjectDetector& detector,
                          SaliencyMapper* saliency, std::uint64_t rng_seed);

}  // namespace cacp
