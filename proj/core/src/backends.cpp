#include <cacp/backends.hpp>
#include <cacp/util.hpp>

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

namespace cacp {

namespace {

void require_image(const cv::Mat& image) {
    if (image.empty()) throw LogicError("backend called with an empty image");
    if (image.type() != CV_8UC3)
        throw LogicError("backend expects an 8-bit 3-channel image");
}

std::uint32_t pack(const cv::Vec3b& c) {
    return (static_cast<std::uint32_t>(c[0]) << 16) |
           (static_cast<std::uint32_t>(c[1]) << 8) | c[2];
}

cv::Vec3b unpack(std::uint32_t key) {
    return cv::Vec3b(static_cast<uchar>((key >> 16) & 0xff),
                     static_cast<uchar>((key >> 8) & 0xff),
                     static_cast<uchar>(key & 0xff));
}

// Most frequent colour; ties resolved toward the smaller packed value.
std::uint32_t dominant_color(const cv::Mat& image, const cv::Mat1b* select) {
    std::unordered_map<std::uint32_t, int> counts;
    for (int y = 0; y < image.rows; ++y) {
        const auto* row = image.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.cols; ++x) {
            if (select && (*select)(y, x) == 0) continue;
            counts[pack(row[x])]++;
        }
    }
    std::uint32_t best_key = 0;
    int best_count = -1;
    for (const auto& [key, count] : counts) {
        if (count > best_count || (count == best_count && key < best_key)) {
            best_key = key;
            best_count = count;
        }
    }
    return best_key;
}

const char* kPhrases[] = {
    "a group of people standing outside",
    "a dog running across a grassy field",
    "a cat sitting on a wooden table",
    "a car parked on the side of the road",
    "two teams playing a ball game on a pitch",
    "a bird perched on a tree branch",
    "a person riding a bicycle down a street",
    "a bowl of fruit on a kitchen counter",
    "a boat floating on calm water",
    "a city street lined with tall buildings",
    "a horse grazing in an open meadow",
    "children playing in a park",
};

}  // namespace

const std::vector<std::pair<cv::Vec3b, std::string>>& fake_palette() {
    // BGR colours; background-ish colours (black, pure white) excluded so a
    // painted object never dissolves into the canvas.
    static const std::vector<std::pair<cv::Vec3b, std::string>> table = {
        {{0, 0, 200}, "dog"},      {{0, 200, 0}, "cat"},
        {{200, 0, 0}, "person"},   {{0, 200, 200}, "car"},
        {{200, 0, 200}, "truck"},  {{200, 200, 0}, "flower"},
        {{0, 100, 220}, "soccer"}, {{100, 220, 0}, "pig"},
        {{220, 100, 0}, "goose"},  {{60, 60, 220}, "bird"},
        {{60, 220, 60}, "horse"},  {{220, 60, 60}, "sheep"},
        {{30, 140, 140}, "cow"},   {{140, 30, 140}, "boat"},
        {{140, 140, 30}, "chair"}, {{90, 170, 250}, "tree"},
        {{250, 90, 170}, "building"}, {{170, 250, 90}, "road"},
        {{250, 170, 90}, "sky"},   {{90, 250, 170}, "bottle"},
    };
    return table;
}

cv::Vec3b fake_color_for(const std::string& category) {
    for (const auto& [color, name] : fake_palette())
        if (name == category) return color;
    // Hash-derived colour for categories outside the table. Channels are
    // biased away from 0 so the object never matches a black background.
    auto h = fnv1a64(category);
    return cv::Vec3b(static_cast<uchar>(64 + (h & 0xbf)),
                     static_cast<uchar>(64 + ((h >> 8) & 0xbf)),
                     static_cast<uchar>(64 + ((h >> 16) & 0xbf)));
}

std::string fake_label_for(const cv::Vec3b& color) {
    for (const auto& [c, name] : fake_palette())
        if (c == color) return name;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "obj_%02x%02x%02x", color[2], color[1], color[0]);
    return buf;
}

std::uint64_t image_content_hash(const cv::Mat& image) {
    cv::Mat m = image.isContinuous() ? image : image.clone();
    std::uint64_t h = fnv1a64(&m.rows, sizeof(m.rows));
    h = mix_seed(h, static_cast<std::uint64_t>(m.cols));
    h = mix_seed(h, fnv1a64(m.data, m.total() * m.elemSize()));
    return h;
}

Caption FakeCaptioner::caption(const cv::Mat& image) {
    require_image(image);
    auto h = image_content_hash(image);
    if (auto it = planted_.find(h); it != planted_.end()) return Caption{it->second};
    if (cv::countNonZero(image.reshape(1)) == 0) return Caption{"a blank image"};
    constexpr std::size_t n = sizeof(kPhrases) / sizeof(kPhrases[0]);
    return Caption{kPhrases[h % n]};
}

void FakeCaptioner::plant(const cv::Mat& image, std::string text) {
    planted_[image_content_hash(image)] = std::move(text);
}

FakeTextEmbedder::FakeTextEmbedder(int dim) : dim_(dim) {
    if (dim < 1) throw ConfigError("embedder dim must be positive");
}

EmbeddingVector FakeTextEmbedder::embed(const std::string& text) {
    if (trim(text).empty()) throw LogicError("cannot embed empty text");
    if (auto it = planted_.find(text); it != planted_.end())
        return EmbeddingVector{it->second};
    // splitmix64 stream seeded by the string bytes, mapped to [-1, 1] and
    // normalised. Portable: no stdlib distribution involved.
    std::uint64_t state = fnv1a64(text);
    std::vector<float> v(static_cast<std::size_t>(dim_));
    double norm_sq = 0.0;
    for (auto& x : v) {
        state = splitmix64(state);
        double u = static_cast<double>(state >> 11) * 0x1.0p-53;  // [0,1)
        x = static_cast<float>(2.0 * u - 1.0);
        norm_sq += static_cast<double>(x) * x;
    }
    double norm = std::sqrt(norm_sq);
    if (norm == 0.0) {  // astronomically unlikely; keep the contract anyway
        v[0] = 1.0f;
        norm = 1.0;
    }
    for (auto& x : v) x = static_cast<float>(x / norm);
    return EmbeddingVector{std::move(v)};
}

void FakeTextEmbedder::plant(const std::string& text, std::vector<float> values) {
    if (static_cast<int>(values.size()) != dim_)
        throw LogicError("planted vector dim mismatch");
    planted_[text] = std::move(values);
}

std::vector<BBox> FakeObjectDetector::detect(const cv::Mat& image,
                                             const std::string& category_hint) {
    require_image(image);
    const std::uint32_t bg = dominant_color(image, nullptr);
    cv::Mat1b fg(image.rows, image.cols);
    for (int y = 0; y < image.rows; ++y) {
        const auto* row = image.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.cols; ++x)
            fg(y, x) = pack(row[x]) != bg ? 255 : 0;
    }
    if (cv::countNonZero(fg) == 0) return {};

    cv::Mat1i labels;
    int n = cv::connectedComponents(fg, labels, 4, CV_32S);
    std::vector<BBox> boxes;
    for (int comp = 1; comp < n; ++comp) {
        cv::Mat1b member = (labels == comp);
        cv::Rect r = cv::boundingRect(member);
        // dominant colour of the component itself, not of its bounding rect
        cv::Mat1b sub = member(r);
        cv::Vec3b color = unpack(dominant_color(image(r), &sub));
        BBox box;
        box.x_min = r.x;
        box.y_min = r.y;
        box.x_max = r.x + r.width;
        box.y_max = r.y + r.height;
        box.label = fake_label_for(color);
        box.score = 1.0;
        boxes.push_back(std::move(box));
    }
    if (!category_hint.empty()) {
        std::erase_if(boxes, [&](const BBox& b) { return b.label != category_hint; });
    }
    std::stable_sort(boxes.begin(), boxes.end(), [](const BBox& a, const BBox& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.y_min != b.y_min) return a.y_min < b.y_min;
        return a.x_min < b.x_min;
    });
    return boxes;
}

BinaryMask FakeSegmenter::segment(const cv::Mat& image, const PromptBundle& prompt) {
    require_image(image);
    const BBox& box = prompt.box;
    if (box.x_min < 0 || box.y_min < 0 || box.x_max > image.cols ||
        box.y_max > image.rows || box.x_min >= box.x_max || box.y_min >= box.y_max)
        throw LogicError("invalid prompt: box outside image bounds");
    for (const auto& p : prompt.points) {
        if (p.x < box.x_min || p.x >= box.x_max || p.y < box.y_min || p.y >= box.y_max)
            throw LogicError("invalid prompt: point outside box");
    }

    BinaryMask mask;
    mask.grid = cv::Mat1b::zeros(image.rows, image.cols);
    if (prompt.points.empty()) {
        mask.grid(box.rect()).setTo(1);
        return mask;
    }
    // Inscribed ellipse; distinguishes point-augmented prompts in tests.
    const double cx = box.x_min + box.width() / 2.0;
    const double cy = box.y_min + box.height() / 2.0;
    const double a = box.width() / 2.0;
    const double b = box.height() / 2.0;
    for (int y = box.y_min; y < box.y_max; ++y) {
        for (int x = box.x_min; x < box.x_max; ++x) {
            double dx = (x + 0.5 - cx) / a;
            double dy = (y + 0.5 - cy) / b;
            if (dx * dx + dy * dy <= 1.0) mask.grid(y, x) = 1;
        }
    }
    return mask;
}

Heatmap FakeSaliencyMapper::saliency(const cv::Mat& image, const std::string& label) {
    require_image(image);
    auto boxes = detector_.detect(image, label);
    if (boxes.empty()) boxes = detector_.detect(image);

    int px, py;
    if (!boxes.empty()) {
        const BBox& b = boxes.front();
        px = (b.x_min + b.x_max - 1) / 2;
        py = (b.y_min + b.y_max - 1) / 2;
    } else {
        px = (image.cols - 1) / 2;
        py = (image.rows - 1) / 2;
    }

    Heatmap hm;
    hm.source_label = label;
    hm.grid.create(image.rows, image.cols);
    double max_d = 0.0;
    for (int y = 0; y < image.rows; ++y)
        for (int x = 0; x < image.cols; ++x)
            max_d = std::max(max_d, std::hypot(double(x - px), double(y - py)));
    if (max_d <= 0.0) max_d = 1.0;
    for (int y = 0; y < image.rows; ++y) {
        for (int x = 0; x < image.cols; ++x) {
            double d = std::hypot(double(x - px), double(y - py));
            hm.grid(y, x) = static_cast<float>(1.0 - d / (max_d + 1.0));
        }
    }
    return hm;
}

std::string BackendSelection::model_path(const std::string& role) const {
    if (role == "captioner" && !captioner_model.empty()) return captioner_model;
    if (role == "embedder" && !embedder_model.empty()) return embedder_model;
    if (role == "detector" && !detector_model.empty()) return detector_model;
    if (role == "segmenter" && !segmenter_model.empty()) return segmenter_model;
    if (role == "saliency" && !saliency_model.empty()) return saliency_model;
    return model_dir.empty() ? std::string() : model_dir + "/" + role;
}

namespace {

[[noreturn]] void real_backend_unavailable(const std::string& role,
                                           const std::string& path) {
    throw BackendError("backend unavailable: no real " + role +
                       " implementation can be loaded" +
                       (path.empty() ? " (no model path; set CACP_MODEL_DIR or backends." +
                                           role + "_model)"
                                     : " from " + path) +
                       "; use backends." + role + "=fake");
}

void check_choice(const std::string& role, const std::string& value) {
    if (value != "fake" && value != "real")
        throw ConfigError("backends." + role + " must be 'fake' or 'real', got '" +
                          value + "'");
}

}  // namespace

BackendSet make_backends(const BackendSelection& sel) {
    check_choice("captioner", sel.captioner);
    check_choice("embedder", sel.embedder);
    check_choice("detector", sel.detector);
    check_choice("segmenter", sel.segmenter);
    check_choice("saliency", sel.saliency);

    BackendSet set;
    if (sel.captioner == "fake") set.captioner = std::make_unique<FakeCaptioner>();
    else real_backend_unavailable("captioner", sel.model_path("captioner"));
    if (sel.embedder == "fake")
        set.embedder = std::make_unique<FakeTextEmbedder>(sel.embedder_dim);
    else real_backend_unavailable("embedder", sel.model_path("embedder"));
    if (sel.detector == "fake") set.detector = std::make_unique<FakeObjectDetector>();
    else real_backend_unavailable("detector", sel.model_path("detector"));
    if (sel.segmenter == "fake") set.segmenter = std::make_unique<FakeSegmenter>();
    else real_backend_unavailable("segmenter", sel.model_path("segmenter"));
    if (sel.saliency == "fake") set.saliency = std::make_unique<FakeSaliencyMapper>();
    else real_backend_unavailable("saliency", sel.model_path("saliency"));
    return set;
}

}  // namespace cacp
