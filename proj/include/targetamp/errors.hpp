#pragma once

#include <stdexcept>
#include <string>

namespace targetamp {

// Bad flags, bad config files, invalid option values. CLI maps this to exit 2.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (corpus files, mask files, checkpoints).
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace targetamp
