#pragma once

// Deterministic synthetic image/mask pairs for data, engine and CLI tests.

#include <filesystem>
#include <string>

#include <opencv2/imgcodecs.hpp>

#include "hcm/core/tensor.hpp"

namespace synth {

namespace fs = std::filesystem;

/// Color image with a textured background and a distinctly colored
/// rectangular object; fully determined by (index, size, rect).
inline void write_color_png(const std::string& path, int w, int h, int x0, int y0, int x1, int y1,
                            int index = 0) {
    cv::Mat img(h, w, CV_8UC3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool inside = x >= x0 && x < x1 && y >= y0 && y < y1;
            const int wave = (x * 7 + y * 13 + index * 31) % 64;
            if (inside)
                img.at<cv::Vec3b>(y, x) = cv::Vec3b(40 + wave / 4, 200, 60);
            else
                img.at<cv::Vec3b>(y, x) =
                    cv::Vec3b(static_cast<uchar>(120 + wave), static_cast<uchar>(60 + wave / 2),
                              static_cast<uchar>(180 - wave));
        }
    cv::imwrite(path, img);
}

inline void write_mask_png(const std::string& path, int w, int h, int x0, int y0, int x1, int y1) {
    cv::Mat img(h, w, CV_8UC1, cv::Scalar(0));
    for (int y = std::max(0, y0); y < std::min(h, y1); ++y)
        for (int x = std::max(0, x0); x < std::min(w, x1); ++x) img.at<uchar>(y, x) = 255;
    cv::imwrite(path, img);
}

/// Creates `<root>/<split>/{images,masks}` with n paired samples. The object
/// rectangle moves with the index so samples differ.
inline void make_dataset(const std::string& root, const std::string& split, int n, int w, int h) {
    const fs::path img_dir = fs::path(root) / split / "images";
    const fs::path msk_dir = fs::path(root) / split / "masks";
    fs::create_directories(img_dir);
    fs::create_directories(msk_dir);
    for (int i = 0; i < n; ++i) {
        const int x0 = w / 4 + (i % 3) * 2, y0 = h / 4 + (i % 2) * 2;
        const int x1 = x0 + w / 3, y1 = y0 + h / 3;
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%03d", i);
        write_color_png((img_dir / (std::string(name) + ".png")).string(), w, h, x0, y0, x1, y1, i);
        write_mask_png((msk_dir / (std::string(name) + ".png")).string(), w, h, x0, y0, x1, y1);
    }
}

/// Fresh scratch directory under the system temp root.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                ("hcm_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    std::string str() const { return path_.string(); }

private:
    fs::path path_;
};

}  // namespace synth
