#pragma once

#include <cacp/gallery.hpp>
#include <cacp/types.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace cacp {

// Resizes crop (bilinear) and mask (nearest-neighbour) by the same factor.
// The mask stays binary. Throws LogicError when the scaled area would be
// smaller than 4 px.
std::pair<cv::Mat, BinaryMask> rescale_object(const cv::Mat& donor_crop,
                                              const BinaryMask& donor_mask,
                                              double target_scale);

// Samples a target area ratio r ~ Uniform[ratio_min, ratio_max] for the
// (donor, base-context) pair — falling back to the default interval when the
// pair is unseen — and returns sqrt(r * base_ref_area / donor_box_area).
double choose_scale(const RatioTable& table, const std::string& donor_category,
                    const std::string& base_context_category,
                    long long donor_box_area, long long base_ref_area,
                    std::uint64_t rng_seed,
                    double fallback_min = kFallbackRatioMin,
                    double fallback_max = kFallbackRatioMax);

// Proposes uniform-random top-left positions and accepts the first whose
// box-IoU with every existing annotation box is <= max_overlap_iou. After
// max_attempts the minimum-overlap proposal wins. attempts records how many
// proposals were generated.
Placement choose_position(const std::vector<BBox>& base_annotations,
                          cv::Size paste_dims, cv::Size base_dims,
                          double max_overlap_iou, int max_attempts,
                          std::uint64_t rng_seed);

// out[p] = mask[p] ? donor[p] : base[p], with the mask translated to the
// placement offset. feather_px > 0 ramps donor alpha linearly within that
// distance of the mask boundary; 0 is a hard paste, bit-exact.
CompositeResult blend(const cv::Mat& base, const cv::Mat& donor_crop,
                      const BinaryMask& donor_mask, const Placement& placement,
                      const std::string& donor_category, int feather_px = 0);

}  // namespace cacp
