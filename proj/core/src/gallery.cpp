#include <cacp/gallery.hpp>
#include <cacp/util.hpp>

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;

namespace cacp {

namespace {

// a/b < c/d for positive rationals, exact.
bool rational_less(const RatioTable::Rational& l, const RatioTable::Rational& r) {
    return static_cast<__int128>(l.num) * r.den < static_cast<__int128>(r.num) * l.den;
}

std::vector<BBox> read_sidecar(const fs::path& image_path) {
    fs::path sidecar = image_path;
    sidecar += ".bbox";
    std::vector<BBox> boxes;
    std::ifstream in(sidecar);
    if (!in) return boxes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        BBox b;
        if (!(ss >> b.label >> b.x_min >> b.y_min >> b.x_max >> b.y_max))
            throw IoError("malformed sidecar " + sidecar.string() + ":" +
                          std::to_string(line_no));
        if (b.x_min >= b.x_max || b.y_min >= b.y_max || b.x_min < 0 || b.y_min < 0)
            throw IoError("degenerate box in sidecar " + sidecar.string() + ":" +
                          std::to_string(line_no));
        b.score = 1.0;
        boxes.push_back(std::move(b));
    }
    return boxes;
}

GalleryEntry make_entry(const fs::path& root, const fs::path& file,
                        const std::string& category) {
    GalleryEntry e;
    e.image_path = file;
    e.relative_path = fs::relative(file, root).generic_string();
    e.category = category;
    e.cached_boxes = read_sidecar(file);
    for (const auto& b : e.cached_boxes) {
        if (b.label == category) {
            e.cached_bbox = b;
            break;
        }
    }
    if (!e.cached_bbox && !e.cached_boxes.empty()) e.cached_bbox = e.cached_boxes.front();
    return e;
}

}  // namespace

bool is_image_file(const fs::path& p) {
    auto ext = to_lower(p.extension().string());
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::size_t GalleryIndex::total_entries() const {
    std::size_t n = 0;
    for (const auto& [cat, list] : entries) n += list.size();
    return n;
}

GalleryIndex build_index(const fs::path& root_dir) {
    if (!fs::is_directory(root_dir))
        throw ConfigError("gallery root is not a directory: " + root_dir.string());

    GalleryIndex index;
    index.root = fs::absolute(root_dir);

    std::vector<std::string> category_dirs;
    for (const auto& e : fs::directory_iterator(index.root))
        if (e.is_directory()) category_dirs.push_back(e.path().filename().string());
    std::sort(category_dirs.begin(), category_dirs.end());

    for (const auto& category : category_dirs) {
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(index.root / category))
            if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
        if (files.empty()) continue;
        std::sort(files.begin(), files.end());
        auto& list = index.entries[category];
        for (const auto& f : files) list.push_back(make_entry(index.root, f, category));
        index.categories.push_back(category);
    }
    if (index.categories.empty())
        throw ConfigError("empty gallery: no category directory under " +
                          root_dir.string() + " contains images");
    return index;
}

void save_index(const GalleryIndex& index, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write index cache: " + path.string());
    out << "CACP-INDEX v1\n";
    for (const auto& cat : index.categories)
        for (const auto& e : index.entries.at(cat))
            out << cat << '\t' << e.relative_path << '\n';
    if (!out) throw IoError("failed writing index cache: " + path.string());
}

GalleryIndex load_index(const fs::path& path, const fs::path& root_dir) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open index cache: " + path.string());
    std::string header;
    std::getline(in, header);
    if (trim(header) != "CACP-INDEX v1")
        throw IoError("bad index cache header in " + path.string());

    GalleryIndex index;
    index.root = fs::absolute(root_dir);
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 2)
            throw IoError("malformed index cache " + path.string() + ":" +
                          std::to_string(line_no));
        const std::string& cat = fields[0];
        if (!index.entries.count(cat)) index.categories.push_back(cat);
        index.entries[cat].push_back(make_entry(index.root, index.root / fields[1], cat));
    }
    if (index.categories.empty())
        throw ConfigError("empty gallery index: " + path.string());
    return index;
}

void RatioTable::record(const std::string& a, const std::string& b, long long area_a,
                        long long area_b) {
    if (a == b) throw LogicError("ratio records need two distinct categories");
    if (area_a <= 0 || area_b <= 0) throw LogicError("ratio records need positive areas");

    const bool a_is_lo = a < b;
    const std::string& lo = a_is_lo ? a : b;
    const std::string& hi = a_is_lo ? b : a;
    Rational r{a_is_lo ? area_a : area_b, a_is_lo ? area_b : area_a};

    auto& s = canonical_[{lo, hi}];
    if (s.count == 0) {
        s.min = s.max = r;
    } else {
        if (rational_less(r, s.min)) s.min = r;
        if (rational_less(s.max, r)) s.max = r;
    }
    s.count += 1;
    refresh_ordered(lo, hi, s);
}

void RatioTable::refresh_ordered(const std::string& lo, const std::string& hi,
                                 const Stats& s) {
    Interval fwd;
    fwd.ratio_min = static_cast<double>(s.min.num) / static_cast<double>(s.min.den);
    fwd.ratio_max = static_cast<double>(s.max.num) / static_cast<double>(s.max.den);
    fwd.count = s.count;
    Interval rev;
    rev.ratio_min = static_cast<double>(s.max.den) / static_cast<double>(s.max.num);
    rev.ratio_max = static_cast<double>(s.min.den) / static_cast<double>(s.min.num);
    rev.count = s.count;
    ordered_[{lo, hi}] = fwd;
    ordered_[{hi, lo}] = rev;
}

std::optional<RatioTable::Interval> RatioTable::find(const std::string& a,
                                                     const std::string& b) const {
    auto it = ordered_.find({a, b});
    if (it == ordered_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::pair<RatioTable::Rational, RatioTable::Rational>>
RatioTable::find_exact(const std::string& a, const std::string& b) const {
    const bool a_is_lo = a < b;
    auto it = canonical_.find(a_is_lo ? std::make_pair(a, b) : std::make_pair(b, a));
    if (it == canonical_.end()) return std::nullopt;
    const Stats& s = it->second;
    if (a_is_lo) return std::make_pair(s.min, s.max);
    // reverse orientation: swap numerator and denominator, min and max
    return std::make_pair(Rational{s.max.den, s.max.num}, Rational{s.min.den, s.min.num});
}

std::vector<std::tuple<std::string, std::string, RatioTable::Interval>>
RatioTable::rows() const {
    std::vector<std::tuple<std::string, std::string, Interval>> out;
    out.reserve(ordered_.size());
    for (const auto& [key, interval] : ordered_)
        out.emplace_back(key.first, key.second, interval);
    return out;
}

void RatioTable::save(const fs::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write ratio table: " + path.string());
    for (const auto& [key, interval] : ordered_) {
        out << key.first << '\t' << key.second << '\t'
            << format_double(interval.ratio_min) << '\t'
            << format_double(interval.ratio_max) << '\t' << interval.count << '\n';
    }
    if (!out) throw IoError("failed writing ratio table: " + path.string());
}

RatioTable RatioTable::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ratio table: " + path.string());
    RatioTable table;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 5)
            throw IoError("malformed ratio table " + path.string() + ":" +
                          std::to_string(line_no));
        Interval interval;
        try {
            interval.ratio_min = std::stod(fields[2]);
            interval.ratio_max = std::stod(fields[3]);
            interval.count = std::stoll(fields[4]);
        } catch (const std::exception&) {
            throw IoError("malformed ratio table " + path.string() + ":" +
                          std::to_string(line_no));
        }
        if (!(interval.ratio_min > 0.0) || interval.ratio_max < interval.ratio_min)
            throw IoError("invalid interval in ratio table " + path.string() + ":" +
                          std::to_string(line_no));
        table.ordered_[{fields[0], fields[1]}] = interval;
    }
    return table;
}

RatioTable build_ratio_table(const GalleryIndex& index, ObjectDetector& detector) {
    RatioTable table;
    for (const auto& cat : index.categories) {
        for (const auto& entry : index.entries.at(cat)) {
            std::vector<BBox> boxes = entry.cached_boxes;
            if (boxes.empty()) {
                cv::Mat image = cv::imread(entry.image_path.string(), cv::IMREAD_COLOR);
                if (image.empty()) continue;
                try {
                    boxes = detector.detect(image);
                } catch (const Error&) {
                    continue;  // detection failures skip the image
                }
            }
            for (std::size_t i = 0; i < boxes.size(); ++i) {
                for (std::size_t j = i + 1; j < boxes.size(); ++j) {
                    if (boxes[i].label == boxes[j].label) continue;
                    table.record(boxes[i].label, boxes[j].label, boxes[i].area(),
                                 boxes[j].area());
                }
            }
        }
    }
    return table;
}

const GalleryEntry& sample_donor(const GalleryIndex& index, const std::string& category,
                                 std::uint64_t rng_seed) {
    auto it = index.entries.find(category);
    if (it == index.entries.end())
        throw LogicError("unknown gallery category: " + category);
    const auto& list = it->second;
    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
    return list[pick(rng)];
}

RatioInterval ratio_interval(const RatioTable& table, const std::string& a,
                             const std::string& b, double fallback_min,
                             double fallback_max) {
    if (!a.empty() && !b.empty()) {
        if (auto found = table.find(a, b)) {
            return RatioInterval{found->ratio_min, found->ratio_max, false};
        }
    }
    return RatioInterval{fallback_min, fallback_max, true};
}

}  // namespace cacp
