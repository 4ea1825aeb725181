#pragma once

#include <cacp/types.hpp>

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cacp {

// Fraction of positions where prediction equals truth.
double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& truth);

// Per-class pixel confusion over index masks.
struct ConfusionCounts {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
};

ConfusionCounts confusion_counts(const cv::Mat1b& pred, const cv::Mat1b& truth,
                                 int cls);

// How IoU treats a class absent from both masks: score it 1.0, or drop it
// from the mean entirely.
enum class AbsentClassPolicy { OneWhenAbsent, Skip };

// TP / (TP + FP + FN) for one class.
double iou_mask(const cv::Mat1b& pred, const cv::Mat1b& truth, int cls,
                AbsentClassPolicy policy = AbsentClassPolicy::OneWhenAbsent);

// Unweighted mean of per-class IoU over the class set.
double miou(const cv::Mat1b& pred, const cv::Mat1b& truth,
            const std::vector<int>& classes,
            AbsentClassPolicy policy = AbsentClassPolicy::OneWhenAbsent);

double iou_from_counts(const ConfusionCounts& c,
                       AbsentClassPolicy policy = AbsentClassPolicy::OneWhenAbsent);

// One image's detections against its ground truth. Prediction scores ride in
// BBox::score.
struct DetectionMatch {
    std::vector<BBox> predictions;
    std::vector<BBox> ground_truth;
};

// Average precision for one class across images: predictions matched
// greedily by descending score, each ground-truth box used at most once,
// IoU >= iou_threshold required; AP is the 101-point interpolated area under
// the precision-recall curve. nullopt when the class has no ground truth.
std::optional<double> average_precision(const std::vector<DetectionMatch>& images,
                                        const std::string& cls,
                                        double iou_threshold = 0.5);

// Mean AP over the classes with at least one ground-truth box. nullopt when
// no ground truth exists anywhere.
std::optional<double> map50(const std::vector<DetectionMatch>& images,
                            const std::vector<std::string>& classes,
                            double iou_threshold = 0.5);

}  // namespace cacp
