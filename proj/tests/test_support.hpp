#pragma once

#include <cacp/backends.hpp>
#include <cacp/types.hpp>

#include <opencv2/imgcodecs.hpp>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace cacp::test {

namespace fs = std::filesystem;

// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        auto name = "cacp_test_" + std::to_string(::getpid()) + "_" +
                    std::to_string(counter.fetch_add(1));
        path_ = fs::temp_directory_path() / name;
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline cv::Mat solid_image(int width, int height, cv::Vec3b color = {0, 0, 0}) {
    cv::Mat image(height, width, CV_8UC3, cv::Scalar(color[0], color[1], color[2]));
    return image;
}

inline void paint_rect(cv::Mat& image, const BBox& box, cv::Vec3b color) {
    for (int y = box.y_min; y < box.y_max; ++y)
        for (int x = box.x_min; x < box.x_max; ++x)
            image.at<cv::Vec3b>(y, x) = color;
}

// Black canvas holding one palette-coloured object the fake detector will
// label with `category`.
inline cv::Mat object_image(int width, int height, const std::string& category,
                            const BBox& box) {
    cv::Mat image = solid_image(width, height);
    paint_rect(image, box, fake_color_for(category));
    return image;
}

inline void write_image(const fs::path& path, const cv::Mat& image) {
    fs::create_directories(path.parent_path());
    REQUIRE(cv::imwrite(path.string(), image));
}

inline bool mats_equal(const cv::Mat& a, const cv::Mat& b) {
    if (a.empty() != b.empty()) return false;
    if (a.empty()) return true;
    if (a.rows != b.rows || a.cols != b.cols || a.type() != b.type()) return false;
    return cv::countNonZero(a.reshape(1) != b.reshape(1)) == 0;
}

inline std::vector<std::string> read_lines(const fs::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Deterministic random 3-channel image.
inline cv::Mat random_image(int width, int height, std::mt19937_64& rng) {
    cv::Mat image(height, width, CV_8UC3);
    std::uniform_int_distribution<int> byte(0, 255);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            image.at<cv::Vec3b>(y, x) = cv::Vec3b(
                static_cast<uchar>(byte(rng)), static_cast<uchar>(byte(rng)),
                static_cast<uchar>(byte(rng)));
    return image;
}

inline BinaryMask random_mask(int width, int height, std::mt19937_64& rng,
                              double fill = 0.5) {
    BinaryMask mask;
    mask.grid.create(height, width);
    std::bernoulli_distribution bit(fill);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) mask.grid(y, x) = bit(rng) ? 1 : 0;
    return mask;
}

}  // namespace cacp::test
