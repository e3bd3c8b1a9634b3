#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dpc {

using cfloat = std::complex<float>;

// I/O failures (missing files, malformed WAV/containers). CLI maps these to exit 3.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Configuration / weight-shape mismatches. CLI maps these to exit 4.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline constexpr float kLogEps = 1e-10f;

}  // namespace dpc
