// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Receiver streams on disk: interleaved real/imag float32, little-endian,
// plus a JSON sidecar "<name>.json" with fs, fc, start time and node id.

#pragma once

#include "dpemu/core.hpp"
#include "dpemu/opcount.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

namespace dpemu {

struct StreamHeader {
    std::string node_id;
    double fs_hz = 0.0;
    double fc_hz = 0.0;
    double start_time_s = 0.0;
    std::size_t samples = 0;
};

namespace detail {

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big)
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    return v;
}

} // namespace detail

/// Writes `<path>` (samples) and `<path>.json` (header).
inline void write_stream(const std::filesystem::path &path, const SampleBlock &block, StreamHeader hdr) {
    hdr.samples = block.size();
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error(ErrorKind::ConfigError, "cannot write " + path.string());
    for (const cplx &z : block.data) {
        for (double part : {z.real(), z.imag()}) {
            const std::uint32_t w = detail::to_le(std::bit_cast<std::uint32_t>(static_cast<float>(part)));
            out.write(reinterpret_cast<const char *>(&w), 4);
        }
    }
    nlohmann::json j{{"node_id", hdr.node_id},
                     {"fs_hz", hdr.fs_hz},
                     {"fc_hz", hdr.fc_hz},
                     {"start_time_s", hdr.start_time_s},
                     {"samples", hdr.samples},
                     {"format", "cf32le"}};
    std::ofstream side(path.string() + ".json");
    side << j.dump(2) << "\n";
}

inline std::pair<SampleBlock, StreamHeader> read_stream(const std::filesystem::path &path) {
    std::ifstream side(path.string() + ".json");
    if (!side)
        throw Error(ErrorKind::MissingRef, path.string() + ".json");
    const nlohmann::json j = nlohmann::json::parse(side);
    StreamHeader hdr;
    hdr.node_id = j.at("node_id").get<std::string>();
    hdr.fs_hz = j.at("fs_hz").get<double>();
    hdr.fc_hz = j.at("fc_hz").get<double>();
    hdr.start_time_s = j.at("start_time_s").get<double>();
    hdr.samples = j.at("samples").get<std::size_t>();
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::MissingRef, path.string());
    SampleBlock b;
    b.start_index = static_cast<std::int64_t>(std::llround(hdr.start_time_s * hdr.fs_hz));
    b.data.reserve(hdr.samples);
    for (std::size_t i = 0; i < hdr.samples; ++i) {
        std::uint32_t w[2];
        if (!in.read(reinterpret_cast<char *>(w), 8))
            throw Error(ErrorKind::SchemaError, path.string() + ": fewer samples than the header states");
        b.data.emplace_back(std::bit_cast<float>(detail::to_le(w[0])), std::bit_cast<float>(detail::to_le(w[1])));
    }
    return {b, hdr};
}

inline nlohmann::json opcount_json(const OpCount &c, EngineKind e, std::size_t N, std::size_t K, int R) {
    return {{"engine", to_string(e)}, {"N", N}, {"K", K}, {"R", R}, {"per_sample_ops", c.per_sample_ops},
            {"convention", c.convention}};
}

} // namespace dpemu
