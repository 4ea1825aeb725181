#include <cacp/config.hpp>
#include <cacp/util.hpp>

#include <cstdlib>
#include <fstream>

namespace fs = std::filesystem;

namespace cacp {

namespace {

long long to_int(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" +
                          value + "'");
    }
}

double to_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a number, got '" + value +
                          "'");
    }
}

bool to_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("config key '" + key + "' expects a boolean, got '" + value + "'");
}

}  // namespace

int parse_fraction(const std::string& text) {
    auto t = trim(text);
    long long den = 1;
    if (auto slash = t.find('/'); slash != std::string::npos) {
        if (trim(t.substr(0, slash)) != "1")
            throw ConfigError("fraction must have the form 1/N, got '" + text + "'");
        den = to_int("fraction", trim(t.substr(slash + 1)));
    } else {
        if (trim(t) != "1")
            throw ConfigError("fraction must have the form 1/N, got '" + text + "'");
    }
    if (den < 1) throw ConfigError("fraction denominator must be >= 1");
    if (den > 1'000'000) throw ConfigError("fraction denominator unreasonably large");
    return static_cast<int>(den);
}

std::map<std::string, std::string> load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              " is not 'key = value': " + t);
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

void apply_config(RunConfig& c, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        if (key == "task") c.task = task_from_string(value);
        else if (key == "source_dir") c.source_dir = value;
        else if (key == "gallery_dir") c.gallery_dir = value;
        else if (key == "output_dir") c.output_dir = value;
        else if (key == "index_cache_path") c.index_cache_path = value;
        else if (key == "ratio_table_path") c.ratio_table_path = value;
        else if (key == "fraction") c.fraction_den = parse_fraction(value);
        else if (key == "variants_per_image") {
            c.variants_per_image = static_cast<int>(to_int(key, value));
            if (c.variants_per_image < 1)
                throw ConfigError("variants_per_image must be >= 1");
        } else if (key == "seed") {
            c.seed = static_cast<std::uint64_t>(to_int(key, value));
        } else if (key == "resume") c.resume = to_bool(key, value);
        else if (key == "jobs") {
            c.jobs = static_cast<int>(to_int(key, value));
            if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
        } else if (key == "prompt.mode") c.prompt.mode = prompt_mode_from_string(value);
        else if (key == "prompt.n_points") {
            c.prompt.n_points = static_cast<int>(to_int(key, value));
            if (c.prompt.n_points < 0 || c.prompt.n_points > 16)
                throw ConfigError("prompt.n_points must be in [0, 16]");
        } else if (key == "prompt.min_sep") {
            c.prompt.min_sep = to_double(key, value);
            if (c.prompt.min_sep < 0.0 || c.prompt.min_sep > 1.0)
                throw ConfigError("prompt.min_sep must be in [0, 1]");
        } else if (key == "composite.feather_px") {
            c.feather_px = static_cast<int>(to_int(key, value));
            if (c.feather_px < 0) throw ConfigError("composite.feather_px must be >= 0");
        } else if (key == "composite.max_overlap_iou") {
            c.max_overlap_iou = to_double(key, value);
            if (c.max_overlap_iou < 0.0 || c.max_overlap_iou > 1.0)
                throw ConfigError("composite.max_overlap_iou must be in [0, 1]");
        } else if (key == "composite.max_attempts") {
            c.max_attempts = static_cast<int>(to_int(key, value));
            if (c.max_attempts < 1) throw ConfigError("composite.max_attempts must be >= 1");
        } else if (key == "dataset.keep_threshold") {
            c.keep_threshold = to_double(key, value);
            if (c.keep_threshold < 0.0 || c.keep_threshold > 1.0)
                throw ConfigError("dataset.keep_threshold must be in [0, 1]");
        } else if (key == "gallery.fallback_ratio_min") {
            c.fallback_ratio_min = to_double(key, value);
        } else if (key == "gallery.fallback_ratio_max") {
            c.fallback_ratio_max = to_double(key, value);
        } else if (key == "match.top_k") {
            c.top_k = static_cast<int>(to_int(key, value));
            if (c.top_k < 1) throw ConfigError("match.top_k must be >= 1");
        } else if (key == "backends.captioner") c.backends.captioner = value;
        else if (key == "backends.embedder") c.backends.embedder = value;
        else if (key == "backends.detector") c.backends.detector = value;
        else if (key == "backends.segmenter") c.backends.segmenter = value;
        else if (key == "backends.saliency") c.backends.saliency = value;
        else if (key == "backends.all") {
            c.backends.captioner = c.backends.embedder = c.backends.detector =
                c.backends.segmenter = c.backends.saliency = value;
        } else if (key == "backends.model_dir") c.backends.model_dir = value;
        else if (key == "backends.captioner_model") c.backends.captioner_model = value;
        else if (key == "backends.embedder_model") c.backends.embedder_model = value;
        else if (key == "backends.detector_model") c.backends.detector_model = value;
        else if (key == "backends.segmenter_model") c.backends.segmenter_model = value;
        else if (key == "backends.saliency_model") c.backends.saliency_model = value;
        else if (key == "backends.embedder_dim") {
            c.backends.embedder_dim = static_cast<int>(to_int(key, value));
            if (c.backends.embedder_dim < 1)
                throw ConfigError("backends.embedder_dim must be >= 1");
        } else {
            throw ConfigError("unknown config key: " + key);
        }
    }
}

void fill_defaults(RunConfig& c) {
    if (c.backends.model_dir.empty()) {
        if (const char* env = std::getenv("CACP_MODEL_DIR")) c.backends.model_dir = env;
    }
    if (!c.gallery_dir.empty()) {
        if (c.index_cache_path.empty()) c.index_cache_path = c.gallery_dir / "cacp-index.tsv";
        if (c.ratio_table_path.empty()) c.ratio_table_path = c.gallery_dir / "cacp-ratios.tsv";
    }
}

void validate_for_run(const RunConfig& c) {
    if (c.source_dir.empty()) throw ConfigError("source_dir is required");
    if (c.gallery_dir.empty()) throw ConfigError("gallery_dir is required");
    if (c.output_dir.empty()) throw ConfigError("output_dir is required");
    if (c.fraction_den < 1) throw ConfigError("fraction denominator must be >= 1");
    if (c.variants_per_image < 1) throw ConfigError("variants_per_image must be >= 1");
    if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
    if (c.prompt.n_points < 0 || c.prompt.n_points > 16)
        throw ConfigError("prompt.n_points must be in [0, 16]");
    if (c.prompt.min_sep < 0.0 || c.prompt.min_sep > 1.0)
        throw ConfigError("prompt.min_sep must be in [0, 1]");
    if (c.feather_px < 0) throw ConfigError("composite.feather_px must be >= 0");
    if (c.max_overlap_iou < 0.0 || c.max_overlap_iou > 1.0)
        throw ConfigError("composite.max_overlap_iou must be in [0, 1]");
    if (c.max_attempts < 1) throw ConfigError("composite.max_attempts must be >= 1");
    if (c.keep_threshold < 0.0 || c.keep_threshold > 1.0)
        throw ConfigError("dataset.keep_threshold must be in [0, 1]");
    if (c.top_k < 1) throw ConfigError("match.top_k must be >= 1");
    if (!(c.fallback_ratio_min > 0.0) || c.fallback_ratio_max < c.fallback_ratio_min)
        throw ConfigError("gallery fallback ratio interval is invalid");
    if (!fs::is_directory(c.source_dir))
        throw ConfigError("source_dir does not exist: " + c.source_dir.string());
    if (!fs::is_directory(c.gallery_dir))
        throw ConfigError("gallery_dir does not exist: " + c.gallery_dir.string());
}

}  // namespace cacp
