#pragma once

#include <optional>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "hcm/core/tensor.hpp"

namespace hcm::data {

/// Decodes an 8-bit image to a 3 x H x W tensor in [0, 1], RGB order.
inline std::optional<Tensor> load_image_rgb(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_COLOR);  // BGR
    if (img.empty()) return std::nullopt;
    const int64_t h = img.rows, w = img.cols;
    Tensor out({1, 3, h, w});
    for (int64_t y = 0; y < h; ++y) {
        const cv::Vec3b* row = img.ptr<cv::Vec3b>(static_cast<int>(y));
        for (int64_t x = 0; x < w; ++x) {
            out.at(0, 0, y, x) = row[x][2] / 255.0;
            out.at(0, 1, y, x) = row[x][1] / 255.0;
            out.at(0, 2, y, x) = row[x][0] / 255.0;
        }
    }
    return out;
}

/// Decodes an 8-bit mask (or prediction map) to 1 x H x W in [0, 1].
inline std::optional<Tensor> load_gray(const std::string& path) {
    cv::Mat img = cv::imread(path, cv::IMREAD_GRAYSCALE);
    if (img.empty()) return std::nullopt;
    const int64_t h = img.rows, w = img.cols;
    Tensor out({1, 1, h, w});
    for (int64_t y = 0; y < h; ++y) {
        const uint8_t* row = img.ptr<uint8_t>(static_cast<int>(y));
        for (int64_t x = 0; x < w; ++x) out.at(0, 0, y, x) = row[x] / 255.0;
    }
    return out;
}

/// Writes a [0, 1] map as an 8-bit single-channel PNG, values round(255 * v).
inline bool save_gray_png(const std::string& path, const Tensor& map) {
    HCM_CHECK(map.ndim() == 2, "save_gray_png: expects an H x W map");
    const int64_t h = map.dim(0), w = map.dim(1);
    cv::Mat img(static_cast<int>(h), static_cast<int>(w), CV_8UC1);
    for (int64_t y = 0; y < h; ++y) {
        uint8_t* row = img.ptr<uint8_t>(static_cast<int>(y));
        for (int64_t x = 0; x < w; ++x) {
            const double v = std::min(1.0, std::max(0.0, map.at(y, x)));
            row[x] = static_cast<uint8_t>(std::lround(255.0 * v));
        }
    }
    return cv::imwrite(path, img);
}

}  // namespace hcm::data
