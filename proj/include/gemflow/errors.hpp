#pragma once

#include <stdexcept>
#include <string>

namespace gemflow {

// Error categories map 1:1 onto CLI exit codes (see tools/gemflow_main.cpp).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SimulationError : std::runtime_error {
    explicit SimulationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gemflow
