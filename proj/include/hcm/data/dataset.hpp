#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hcm/core/ops.hpp"
#include "hcm/data/image_io.hpp"

namespace hcm::data {

namespace fs = std::filesystem;

struct SampleRecord {
    std::string image_path;
    std::string mask_path;
    std::string stem;
    std::string split;
    std::string dataset;
};

struct DatasetManifest {
    std::string root;
    std::string split;
    std::vector<SampleRecord> records;
    std::vector<std::string> warnings;  // unmatched stems, skipped files

    size_t size() const { return records.size(); }
};

/// Per-dataset statistics; the histogram keys are "WxH" strings.
struct DatasetStats {
    int64_t count = 0;
    std::map<std::string, int64_t> resolution_histogram;
};

namespace detail {

inline bool is_image_file(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e == ".png" || e == ".jpg" || e == ".jpeg";
}

inline std::map<std::string, fs::path> stem_index(const fs::path& dir) {
    std::map<std::string, fs::path> out;  // ordered -> deterministic scan
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image_file(entry.path()))
            out[entry.path().stem().string()] = entry.path();
    return out;
}

}  // namespace detail

/// Scans `<root>/<split>/{images,masks}` and pairs files by stem. Unmatched
/// stems become warnings; an empty intersection is a hard error.
inline DatasetManifest scan(const std::string& root, const std::string& split) {
    const fs::path img_dir = fs::path(root) / split / "images";
    const fs::path msk_dir = fs::path(root) / split / "masks";
    if (!fs::is_directory(img_dir))
        throw DataError("scan: missing image directory " + img_dir.string());
    if (!fs::is_directory(msk_dir))
        throw DataError("scan: missing mask directory " + msk_dir.string());

    DatasetManifest m;
    m.root = root;
    m.split = split;
    auto images = detail::stem_index(img_dir);
    auto masks = detail::stem_index(msk_dir);
    for (const auto& [stem, ipath] : images) {
        auto it = masks.find(stem);
        if (it == masks.end()) {
            m.warnings.push_back("image without mask: " + stem);
            continue;
        }
        m.records.push_back({ipath.string(), it->second.string(), stem, split,
                             fs::path(root).filename().string()});
    }
    for (const auto& [stem, mpath] : masks)
        if (!images.count(stem)) m.warnings.push_back("mask without image: " + stem);

    if (m.records.empty())
        throw DataError("scan: no image/mask pairs under " + (fs::path(root) / split).string());
    return m;
}

inline DatasetStats compute_stats(const DatasetManifest& m) {
    DatasetStats s;
    s.count = static_cast<int64_t>(m.records.size());
    for (const auto& r : m.records) {
        cv::Mat img = cv::imread(r.image_path, cv::IMREAD_GRAYSCALE);
        if (img.empty()) continue;
        s.resolution_histogram[std::to_string(img.cols) + "x" + std::to_string(img.rows)]++;
    }
    return s;
}

/// One preprocessed sample. The native-resolution mask is kept for scoring.
struct Sample {
    Tensor image;        // 1 x 3 x S x S, channel-normalized
    Tensor mask;         // 1 x 1 x S x S, binary
    Tensor native_mask;  // 1 x 1 x H x W, binary
    std::string stem;
    int64_t native_h = 0, native_w = 0;
};

inline constexpr double kMean[3] = {0.485, 0.456, 0.406};
inline constexpr double kStd[3] = {0.229, 0.224, 0.225};

/// Resize (bilinear for the image, nearest for the mask), scale to [0, 1],
/// normalize channels, binarize the mask at 127.5/255. Undecodable files
/// yield nullopt so the caller can skip them with a warning.
inline std::optional<Sample> preprocess(const SampleRecord& rec, int64_t input_size) {
    auto img = load_image_rgb(rec.image_path);
    auto msk = load_gray(rec.mask_path);
    if (!img || !msk) return std::nullopt;

    Sample s;
    s.stem = rec.stem;
    s.native_h = msk->dim(2);
    s.native_w = msk->dim(3);

    s.image = bilinear_resize(*img, input_size, input_size);
    for (int64_t c = 0; c < 3; ++c) {
        double* d = s.image.data() + c * input_size * input_size;
        for (int64_t i = 0; i < input_size * input_size; ++i)
            d[i] = (d[i] - kMean[c]) / kStd[c];
    }

    Tensor m = nearest_resize(*msk, input_size, input_size);
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = m[i] > 0.5 ? 1.0 : 0.0;
    s.mask = m;

    Tensor nm = msk->clone();
    for (int64_t i = 0; i < nm.numel(); ++i) nm[i] = nm[i] > 0.5 ? 1.0 : 0.0;
    s.native_mask = nm;
    return s;
}

using Batch = std::vector<size_t>;  // record indices

/// Deterministic batch plan. Training shuffles with the given seed and drops
/// the last partial batch; evaluation keeps order and the tail.
inline std::vector<Batch> make_batches(const DatasetManifest& m, int64_t batch_size,
                                       uint64_t seed, bool training) {
    HCM_CHECK(batch_size >= 1, "make_batches: batch size must be >= 1");
    std::vector<size_t> order(m.records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (training) {
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<Batch> batches;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(order.size(), i + static_cast<size_t>(batch_size));
        if (training && end - i < static_cast<size_t>(batch_size)) break;
        batches.emplace_back(order.begin() + static_cast<long>(i),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

/// Horizontal flip of an NCHW tensor (training augmentation).
inline Tensor hflip(const Tensor& t) {
    Tensor out(t.shape());
    const int64_t B = t.dim(0), C = t.dim(1), H = t.dim(2), W = t.dim(3);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < H; ++y)
                for (int64_t x = 0; x < W; ++x) out.at(b, c, y, x) = t.at(b, c, y, W - 1 - x);
    return out;
}

}  // namespace hcm::data
