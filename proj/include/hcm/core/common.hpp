#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace hcm {

/// Error in tensor shapes or module wiring.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error in run configuration (bad key, bad value, missing required field).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Error in dataset layout or file contents.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Training aborted (non-finite loss, unrecoverable state).
class TrainAbort : public std::runtime_error {
public:
    explicit TrainAbort(const std::string& msg) : std::runtime_error(msg) {}
};

#define HCM_CHECK(cond, msg)                                        \
    do {                                                            \
        if (!(cond)) throw ::hcm::ShapeError(std::string(msg));     \
    } while (0)

}  // namespace hcm
