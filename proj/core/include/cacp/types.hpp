#pragma once

#include <opencv2/core.hpp>
#include <stdexcept>
#include <string>
#include <vector>

namespace cacp {

// Error taxonomy. The kind maps onto CLI exit codes: Config -> 2, Io -> 3,
// Backend -> 4. Logic errors indicate a violated call contract.
enum class ErrorKind { Config, Io, Backend, Logic };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};
struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::Io, what) {}
};
struct BackendError : Error {
    explicit BackendError(const std::string& what) : Error(ErrorKind::Backend, what) {}
};
struct LogicError : Error {
    explicit LogicError(const std::string& what) : Error(ErrorKind::Logic, what) {}
};

// Raised when a donor image yields no usable object; the orchestrator treats
// it as a signal to resample, not a fatal condition.
struct NoObjectFoundError : Error {
    explicit NoObjectFoundError(const std::string& what) : Error(ErrorKind::Logic, what) {}
};

// Natural-language description of an image.
struct Caption {
    std::string text;  // non-empty after trimming
};

// Fixed-length real vector; dim() is identical across all vectors produced
// by one embedder instance.
struct EmbeddingVector {
    std::vector<float> values;
    int dim() const { return static_cast<int>(values.size()); }
};

// Axis-aligned box with half-open pixel extents: x in [x_min, x_max),
// y in [y_min, y_max). 0 <= x_min < x_max <= image width, same for y.
struct BBox {
    int x_min = 0;
    int y_min = 0;
    int x_max = 0;
    int y_max = 0;
    std::string label;
    double score = 1.0;

    int width() const { return x_max - x_min; }
    int height() const { return y_max - y_min; }
    long long area() const { return static_cast<long long>(width()) * height(); }
    cv::Rect rect() const { return cv::Rect(x_min, y_min, width(), height()); }

    bool operator==(const BBox& o) const {
        return x_min == o.x_min && y_min == o.y_min && x_max == o.x_max &&
               y_max == o.y_max && label == o.label;
    }
};

double box_iou(const BBox& a, const BBox& b);

// Per-pixel saliency in [0,1], same dimensions as the source image.
struct Heatmap {
    cv::Mat1f grid;
    std::string source_label;
};

// Per-pixel object mask; grid values are exactly 0 or 1 and dimensions equal
// the source image dimensions.
struct BinaryMask {
    cv::Mat1b grid;

    long long count() const { return cv::countNonZero(grid); }
    bool empty() const { return grid.empty() || count() == 0; }
};

enum class Task { Classification, Detection, Segmentation };

std::string to_string(Task task);
Task task_from_string(const std::string& s);

enum class PromptMode { BoxOnly, BoxPlusRandom, BoxPlusCam };

std::string to_string(PromptMode mode);
PromptMode prompt_mode_from_string(const std::string& s);

// Box plus foreground points handed to the segmenter. All points lie inside
// the box; at most 16 points.
struct PromptPoint {
    int x = 0;
    int y = 0;
    bool positive = true;
};

struct PromptBundle {
    BBox box;
    std::vector<PromptPoint> points;
    PromptMode mode = PromptMode::BoxOnly;
};

// Geometry of one accepted paste.
struct Placement {
    double scale = 1.0;          // linear factor applied to the donor crop
    int x = 0;                   // top-left paste position in base coordinates
    int y = 0;
    int attempts = 0;            // proposals generated before acceptance
};

// Output of one blend: image has base dimensions and differs from the base
// only on pasted_mask's 1-cells.
struct CompositeResult {
    cv::Mat image;
    BinaryMask pasted_mask;
    std::string donor_category;
    Placement placement;
};

}  // namespace cacp
