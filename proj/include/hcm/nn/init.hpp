#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "hcm/core/tensor.hpp"

namespace hcm {

/// Process-wide RNG for weight init and data shuffling. Seed it once per run
/// (engine does this from the config) for reproducible experiments.
inline std::mt19937_64& global_rng() {
    static std::mt19937_64 rng(0x9e3779b97f4a7c15ULL);
    return rng;
}

inline void seed_all(uint64_t seed) { global_rng().seed(seed); }

namespace init {

inline void normal_(Tensor& t, double mean, double stddev, std::mt19937_64& rng = global_rng()) {
    std::normal_distribution<double> dist(mean, stddev);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

inline void uniform_(Tensor& t, double lo, double hi, std::mt19937_64& rng = global_rng()) {
    std::uniform_real_distribution<double> dist(lo, hi);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
}

/// He initialization for rectified conv stacks.
inline void kaiming_normal_(Tensor& t, int64_t fan_in, std::mt19937_64& rng = global_rng()) {
    normal_(t, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

}  // namespace init
}  // namespace hcm
