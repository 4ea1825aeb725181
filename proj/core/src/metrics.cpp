#include <cacp/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cacp {

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& truth) {
    if (predictions.size() != truth.size())
        throw LogicError("accuracy: prediction/truth length mismatch");
    if (predictions.empty()) throw LogicError("accuracy: empty inputs");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i)
        if (predictions[i] == truth[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

ConfusionCounts confusion_counts(const cv::Mat1b& pred, const cv::Mat1b& truth,
                                 int cls) {
    if (pred.rows != truth.rows || pred.cols != truth.cols)
        throw LogicError("confusion_counts: mask dimension mismatch");
    ConfusionCounts c;
    for (int y = 0; y < pred.rows; ++y) {
        const uchar* p = pred.ptr<uchar>(y);
        const uchar* t = truth.ptr<uchar>(y);
        for (int x = 0; x < pred.cols; ++x) {
            bool in_pred = p[x] == cls;
            bool in_truth = t[x] == cls;
            if (in_pred && in_truth) ++c.tp;
            else if (in_pred) ++c.fp;
            else if (in_truth) ++c.fn;
        }
    }
    return c;
}

double iou_from_counts(const ConfusionCounts& c, AbsentClassPolicy policy) {
    long long denom = c.tp + c.fp + c.fn;
    if (denom == 0)
        return policy == AbsentClassPolicy::OneWhenAbsent
                   ? 1.0
                   : std::numeric_limits<double>::quiet_NaN();
    return static_cast<double>(c.tp) / static_cast<double>(denom);
}

double iou_mask(const cv::Mat1b& pred, const cv::Mat1b& truth, int cls,
                AbsentClassPolicy policy) {
    return iou_from_counts(confusion_counts(pred, truth, cls), policy);
}

double miou(const cv::Mat1b& pred, const cv::Mat1b& truth,
            const std::vector<int>& classes, AbsentClassPolicy policy) {
    if (classes.empty()) throw LogicError("miou: empty class set");
    double sum = 0.0;
    int counted = 0;
    for (int cls : classes) {
        double v = iou_mask(pred, truth, cls, policy);
        if (std::isnan(v)) continue;  // skipped absent class
        sum += v;
        ++counted;
    }
    if (counted == 0) throw LogicError("miou: every class was absent and skipped");
    return sum / counted;
}

namespace {

struct ScoredPrediction {
    double score;
    std::size_t image;
    std::size_t index;  // position within the image's prediction list
    const BBox* box;
};

// 101-point interpolation over the cumulative TP/FP sequence.
double interpolated_ap(const std::vector<bool>& is_tp, long long n_gt) {
    std::vector<double> precision, recall;
    long long tp = 0, fp = 0;
    for (bool hit : is_tp) {
        hit ? ++tp : ++fp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    }
    double sum = 0.0;
    for (int i = 0; i <= 100; ++i) {
        double t = i / 100.0;
        double best = 0.0;
        for (std::size_t k = 0; k < precision.size(); ++k)
            if (recall[k] >= t) best = std::max(best, precision[k]);
        sum += best;
    }
    return sum / 101.0;
}

}  // namespace

std::optional<double> average_precision(const std::vector<DetectionMatch>& images,
                                        const std::string& cls, double iou_threshold) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
        throw LogicError("iou_threshold must be in (0, 1)");

    long long n_gt = 0;
    std::vector<std::vector<const BBox*>> gt_per_image(images.size());
    std::vector<ScoredPrediction> preds;
    for (std::size_t i = 0; i < images.size(); ++i) {
        for (const auto& g : images[i].ground_truth)
            if (g.label == cls) {
                gt_per_image[i].push_back(&g);
                ++n_gt;
            }
        for (std::size_t j = 0; j < images[i].predictions.size(); ++j) {
            const auto& p = images[i].predictions[j];
            if (p.label == cls) {
                if (!std::isfinite(p.score)) throw LogicError("non-finite score");
                preds.push_back(ScoredPrediction{p.score, i, j, &p});
            }
        }
    }
    if (n_gt == 0) return std::nullopt;
    if (preds.empty()) return 0.0;

    std::stable_sort(preds.begin(), preds.end(),
                     [](const ScoredPrediction& a, const ScoredPrediction& b) {
                         if (a.score != b.score) return a.score > b.score;
                         if (a.image != b.image) return a.image < b.image;
                         return a.index < b.index;
                     });

    std::vector<std::vector<bool>> gt_used(images.size());
    for (std::size_t i = 0; i < images.size(); ++i)
        gt_used[i].assign(gt_per_image[i].size(), false);

    std::vector<bool> is_tp;
    is_tp.reserve(preds.size());
    for (const auto& pred : preds) {
        const auto& gts = gt_per_image[pred.image];
        double best_iou = 0.0;
        std::size_t best_gt = gts.size();
        for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_used[pred.image][g]) continue;
            double iou = box_iou(*pred.box, *gts[g]);
            if (iou > best_iou) {
                best_iou = iou;
                best_gt = g;
            }
        }
        if (best_gt < gts.size() && best_iou >= iou_threshold) {
            gt_used[pred.image][best_gt] = true;
            is_tp.push_back(true);
        } else {
            is_tp.push_back(false);
        }
    }
    return interpolated_ap(is_tp, n_gt);
}

std::optional<double> map50(const std::vector<DetectionMatch>& images,
                            const std::vector<std::string>& classes,
                            double iou_threshold) {
    double sum = 0.0;
    int counted = 0;
    for (const auto& cls : classes) {
        auto ap = average_precision(images, cls, iou_threshold);
        if (!ap) continue;  // classes without ground truth stay out of the mean
        sum += *ap;
        ++counted;
    }
    if (counted == 0) return std::nullopt;
    return sum / counted;
}

}  // namespace cacp
