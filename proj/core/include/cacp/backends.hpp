#pragma once

#include <cacp/types.hpp>

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cacp {

// The five model roles the pipeline consumes. Real deployments plug BLIP /
// BERT / YOLO / SAM / Grad-CAM style models behind these; the Fake*
// implementations below are deterministic stand-ins so the rest of the
// system is testable without weights.
//
// Backend instances are not required to be safe for simultaneous use; hold
// one instance per worker. All fakes are pure functions of their inputs.

class Captioner {
public:
    virtual ~Captioner() = default;
    virtual Caption caption(const cv::Mat& image) = 0;
};

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
    virtual int dim() const = 0;
};

class ObjectDetector {
public:
    virtual ~ObjectDetector() = default;
    // Boxes ordered by descending score, ties by (y_min, x_min). When
    // category_hint is non-empty only boxes with that label are returned.
    virtual std::vector<BBox> detect(const cv::Mat& image,
                                     const std::string& category_hint = "") = 0;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    // Mask dimensions always equal image dimensions.
    virtual BinaryMask segment(const cv::Mat& image, const PromptBundle& prompt) = 0;
};

class SaliencyMapper {
public:
    virtual ~SaliencyMapper() = default;
    virtual Heatmap saliency(const cv::Mat& image, const std::string& label) = 0;
};

// Category <-> colour table shared by the fake backends and test fixtures.
// The fake detector recognises an object by the colour it was painted with.
const std::vector<std::pair<cv::Vec3b, std::string>>& fake_palette();
cv::Vec3b fake_color_for(const std::string& category);
std::string fake_label_for(const cv::Vec3b& color);

// Content hash used by the fake captioner; exposed so tests can key fixtures.
std::uint64_t image_content_hash(const cv::Mat& image);

// Caption = fixed phrase table indexed by a content hash; an all-zero image
// captions as "a blank image". plant() overrides the caption for one image.
class FakeCaptioner : public Captioner {
public:
    Caption caption(const cv::Mat& image) override;
    void plant(const cv::Mat& image, std::string text);

private:
    std::map<std::uint64_t, std::string> planted_;
};

// Maps each string to a reproducible pseudo-random unit vector seeded by the
// string's bytes. plant() installs exact fixture vectors.
class FakeTextEmbedder : public TextEmbedder {
public:
    explicit FakeTextEmbedder(int dim = 64);
    EmbeddingVector embed(const std::string& text) override;
    int dim() const override { return dim_; }
    void plant(const std::string& text, std::vector<float> values);

private:
    int dim_;
    std::map<std::string, std::vector<float>> planted_;
};

// Connected components over non-background pixels, 4-connectivity. The
// background is the most frequent colour; each component is labelled by its
// most frequent colour's palette name. Scores are always 1.0, so ordering is
// the (y_min, x_min) tie-break.
class FakeObjectDetector : public ObjectDetector {
public:
    std::vector<BBox> detect(const cv::Mat& image,
                             const std::string& category_hint = "") override;
};

// Box prompt -> filled rectangle; box plus points -> ellipse inscribed in
// the box. Every 1-cell lies inside the prompt box.
class FakeSegmenter : public Segmenter {
public:
    BinaryMask segment(const cv::Mat& image, const PromptBundle& prompt) override;
};

// Radial gradient with value 1.0 at the centre pixel of the detected
// object's box, decaying linearly with distance; peak at the image centre
// when nothing is detected.
class FakeSaliencyMapper : public SaliencyMapper {
public:
    Heatmap saliency(const cv::Mat& image, const std::string& label) override;

private:
    FakeObjectDetector detector_;
};

// Per-role backend choice: "fake" or "real", plus a per-role model path for
// real backends. Paths default to <model_dir>/<role> with model_dir taken
// from CACP_MODEL_DIR.
struct BackendSelection {
    std::string captioner = "fake";
    std::string embedder = "fake";
    std::string detector = "fake";
    std::string segmenter = "fake";
    std::string saliency = "fake";
    std::string captioner_model;
    std::string embedder_model;
    std::string detector_model;
    std::string segmenter_model;
    std::string saliency_model;
    std::string model_dir;
    int embedder_dim = 64;

    // Effective model path for one role.
    std::string model_path(const std::string& role) const;
};

struct BackendSet {
    std::unique_ptr<Captioner> captioner;
    std::unique_ptr<TextEmbedder> embedder;
    std::unique_ptr<ObjectDetector> detector;
    std::unique_ptr<Segmenter> segmenter;
    std::unique_ptr<SaliencyMapper> saliency;
};

// Builds one set of backend instances. Throws BackendError when a real
// backend is selected but no implementation can be loaded.
BackendSet make_backends(const BackendSelection& selection);

}  // namespace cacp
