// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------

#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dpemu {

using cplx = std::complex<double>;

/// Speed of light in vacuum (m/s), SI exact value.
inline constexpr double speed_of_light = 299792458.0;
inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

enum class ErrorKind {
    ZeroDistance,
    InvalidRho,
    RankDeficient,
    InsufficientData,
    UnsupportedLength,
    DelayOutOfRange,
    BufferUnderrun,
    CausalityViolation,
    ConfigError,
    SchemaError,
    MissingRef,
    EmptyTemplate,
    BandExceeded,
    InvalidArgument,
};

inline std::string_view to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::ZeroDistance: return "ZeroDistance";
    case ErrorKind::InvalidRho: return "InvalidRho";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::UnsupportedLength: return "UnsupportedLength";
    case ErrorKind::DelayOutOfRange: return "DelayOutOfRange";
    case ErrorKind::BufferUnderrun: return "BufferUnderrun";
    case ErrorKind::CausalityViolation: return "CausalityViolation";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::MissingRef: return "MissingRef";
    case ErrorKind::EmptyTemplate: return "EmptyTemplate";
    case ErrorKind::BandExceeded: return "BandExceeded";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Contiguous run of complex baseband samples starting at an absolute sample index.
struct SampleBlock {
    std::int64_t start_index = 0;
    std::vector<cplx> data;

    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }
    std::int64_t end_index() const noexcept { return start_index + static_cast<std::int64_t>(data.size()); }
};

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0)))
        --q;
    return q;
}

} // namespace dpemu
