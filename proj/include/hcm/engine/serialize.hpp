#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "hcm/core/tensor.hpp"

namespace hcm::engine {

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

inline void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
    uint64_t n = 0;
    read_pod(is, n);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

inline void write_tensor(std::ostream& os, const Tensor& t) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int64_t i = 0; i < t.ndim(); ++i) write_pod<int64_t>(os, t.dim(i));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

inline Tensor read_tensor(std::istream& is) {
    uint32_t nd = 0;
    read_pod(is, nd);
    std::vector<int64_t> shape(nd);
    for (auto& d : shape) read_pod(is, d);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    return t;
}

}  // namespace detail

/// Named-tensor container used for weight files and checkpoint sections.
inline void write_tensor_map(std::ostream& os,
                             const std::vector<std::pair<std::string, Tensor>>& tensors) {
    detail::write_pod<uint64_t>(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        detail::write_string(os, name);
        detail::write_tensor(os, t);
    }
}

inline std::map<std::string, Tensor> read_tensor_map(std::istream& is) {
    uint64_t n = 0;
    detail::read_pod(is, n);
    std::map<std::string, Tensor> out;
    for (uint64_t i = 0; i < n; ++i) {
        std::string name = detail::read_string(is);
        out[name] = detail::read_tensor(is);
    }
    return out;
}

/// Standalone weight file (e.g. pretrained backbone ingestion).
inline void save_weights(const std::string& path,
                         const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_weights: cannot open " + path);
    os.write("HCMTENS1", 8);
    write_tensor_map(os, tensors);
    if (!os) throw DataError("save_weights: write failed for " + path);
}

inline std::map<std::string, Tensor> load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_weights: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, "HCMTENS1", 8) != 0)
        throw DataError("load_weights: " + path + " is not a weight file");
    auto out = read_tensor_map(is);
    if (!is) throw DataError("load_weights: truncated file " + path);
    return out;
}

}  // namespace hcm::engine
