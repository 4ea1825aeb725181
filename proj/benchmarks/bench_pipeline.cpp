#include <benchmark/benchmark.h>

#include <cacp/backends.hpp>
#include <cacp/compositor.hpp>
#include <cacp/gallery.hpp>
#include <cacp/metrics.hpp>
#include <cacp/prompt_generator.hpp>

#include <random>

namespace {

using namespace cacp;

cv::Mat random_image(int size, std::mt19937_64& rng) {
    cv::Mat m(size, size, CV_8UC3);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            m.at<cv::Vec3b>(y, x) =
                cv::Vec3b(uchar(rng() % 256), uchar(rng() % 256), uchar(rng() % 256));
    return m;
}

BinaryMask random_mask(int size, std::mt19937_64& rng) {
    BinaryMask mask;
    mask.grid.create(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) mask.grid(y, x) = rng() % 2;
    return mask;
}

void BMBlend(benchmark::State& state) {
    const int base_size = int(state.range(0));
    const int crop_size = base_size / 2;
    std::mt19937_64 rng(1);
    cv::Mat base = random_image(base_size, rng);
    cv::Mat crop = random_image(crop_size, rng);
    BinaryMask mask = random_mask(crop_size, rng);
    Placement at{1.0, base_size / 4, base_size / 4, 1};
    for (auto _ : state) {
        auto result = blend(base, crop, mask, at, "dog");
        benchmark::DoNotOptimize(result.image.data);
    }
}
BENCHMARK(BMBlend)->Arg(64)->Arg(256)->Arg(512);

void BMBlendFeathered(benchmark::State& state) {
    const int size = int(state.range(0));
    std::mt19937_64 rng(2);
    cv::Mat base = random_image(size, rng);
    cv::Mat crop = random_image(size / 2, rng);
    BinaryMask mask = random_mask(size / 2, rng);
    Placement at{1.0, size / 4, size / 4, 1};
    for (auto _ : state) {
        auto result = blend(base, crop, mask, at, "dog", 3);
        benchmark::DoNotOptimize(result.image.data);
    }
}
BENCHMARK(BMBlendFeathered)->Arg(256);

void BMCamPointSampling(benchmark::State& state) {
    const int size = int(state.range(0));
    std::mt19937_64 rng(3);
    Heatmap hm;
    hm.grid.create(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) hm.grid(y, x) = float(rng() % 1000) / 999.f;
    BBox box{1, 1, size - 1, size - 1, "dog", 1.0};
    for (auto _ : state) {
        auto points = sample_cam_points(hm, box, 5, 0.15);
        benchmark::DoNotOptimize(points.data());
    }
}
BENCHMARK(BMCamPointSampling)->Arg(64)->Arg(256);

void BMFakeDetector(benchmark::State& state) {
    cv::Mat image(128, 128, CV_8UC3, cv::Scalar(0, 0, 0));
    image(cv::Rect(10, 10, 40, 30)).setTo(cv::Scalar(0, 0, 200));
    image(cv::Rect(70, 60, 30, 40)).setTo(cv::Scalar(0, 200, 0));
    FakeObjectDetector detector;
    for (auto _ : state) {
        auto boxes = detector.detect(image);
        benchmark::DoNotOptimize(boxes.data());
    }
}
BENCHMARK(BMFakeDetector);

void BMRatioTableRecord(benchmark::State& state) {
    std::mt19937_64 rng(4);
    const char* cats[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (auto _ : state) {
        RatioTable table;
        for (int i = 0; i < 1000; ++i) {
            int x = int(rng() % 8), y = int(rng() % 8);
            if (x == y) continue;
            table.record(cats[x], cats[y], 1 + rng() % 10000, 1 + rng() % 10000);
        }
        benchmark::DoNotOptimize(table.ordered_pair_count());
    }
}
BENCHMARK(BMRatioTableRecord);

void BMMap50(benchmark::State& state) {
    std::mt19937_64 rng(5);
    std::vector<DetectionMatch> images(20);
    for (auto& m : images) {
        for (int i = 0; i < 10; ++i) {
            int x = int(rng() % 200), y = int(rng() % 200);
            m.ground_truth.push_back(BBox{x, y, x + 20, y + 20, "dog", 1.0});
            int px = x + int(rng() % 10) - 5, py = y + int(rng() % 10) - 5;
            m.predictions.push_back(BBox{px, py, px + 20, py + 20, "dog",
                                         (1 + rng() % 100) / 100.0});
        }
    }
    for (auto _ : state) {
        auto result = map50(images, {"dog"});
        benchmark::DoNotOptimize(result);
    }
}
BENCHMARK(BMMap50);

}  // namespace

BENCHMARK_MAIN();
