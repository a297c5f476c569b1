// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Transmit waveforms.  A waveform is evaluated on demand at absolute sample
// indices so the emulator never has to hold a whole transmission.

#pragma once

#include "dpemu/core.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dpemu {

enum class WaveKind { Tone, Lfm, PulseTrain, Samples };

inline std::string to_string(WaveKind k) {
    switch (k) {
    case WaveKind::Tone: return "tone";
    case WaveKind::Lfm: return "lfm";
    case WaveKind::PulseTrain: return "pulse_train";
    case WaveKind::Samples: return "file";
    }
    return "tone";
}

inline WaveKind wave_kind_from_string(const std::string &s) {
    if (s == "tone") return WaveKind::Tone;
    if (s == "lfm") return WaveKind::Lfm;
    if (s == "pulse_train") return WaveKind::PulseTrain;
    if (s == "file") return WaveKind::Samples;
    throw Error(ErrorKind::SchemaError, "unknown waveform kind '" + s + "'");
}

/// Parameters for every kind; unused fields are ignored.
///
///   tone        amplitude * exp(j 2 pi freq_hz t)
///   lfm         chirp sweeping -bandwidth/2 .. +bandwidth/2 over width_s,
///               repeated every period_s when period_s > 0, else one-shot
///   pulse_train tone bursts of width_s every period_s; a nonzero
///               bandwidth_hz makes each burst a chirp instead
///   file        explicit samples starting at index 0
///
/// Everything is shifted to begin at start_s.
struct WaveformSpec {
    WaveKind kind = WaveKind::Tone;
    double amplitude = 1.0;
    double freq_hz = 0.0;
    double bandwidth_hz = 0.0;
    double width_s = 0.0;
    double period_s = 0.0;
    double start_s = 0.0;
    std::string file;
    std::vector<cplx> samples;

    bool operator==(const WaveformSpec &) const = default;

    /// Highest baseband frequency magnitude the waveform occupies (ideal, no sidelobes).
    double max_frequency() const {
        switch (kind) {
        case WaveKind::Tone: return std::abs(freq_hz);
        case WaveKind::Lfm: return 0.5 * bandwidth_hz;
        case WaveKind::PulseTrain: return std::abs(freq_hz) + 0.5 * bandwidth_hz;
        case WaveKind::Samples: return 0.0;
        }
        return 0.0;
    }
};

/// Checks the 25%-oversampling band rule: max |f| <= fs / (2 (1 + oversampling)).
inline void check_band(const WaveformSpec &w, double fs, double oversampling = 0.25) {
    const double limit = fs / (2.0 * (1.0 + oversampling));
    if (w.max_frequency() > limit * (1.0 + 1e-12))
        throw Error(ErrorKind::BandExceeded, "waveform occupies " + std::to_string(w.max_frequency()) +
                                                 " Hz, above the oversampled limit " + std::to_string(limit) + " Hz");
}

class Waveform {
public:
    Waveform(WaveformSpec spec, double fs) : spec_(std::move(spec)), fs_(fs) {
        if (!(fs > 0.0))
            throw Error(ErrorKind::InvalidArgument, "sample rate must be positive");
        if ((spec_.kind == WaveKind::Lfm || spec_.kind == WaveKind::PulseTrain) && !(spec_.width_s > 0.0))
            throw Error(ErrorKind::InvalidArgument, "waveform width must be positive");
        if (spec_.kind == WaveKind::PulseTrain && !(spec_.period_s >= spec_.width_s))
            throw Error(ErrorKind::InvalidArgument, "pulse period must be at least the pulse width");
        start_ = static_cast<std::int64_t>(std::llround(spec_.start_s * fs_));
        width_ = static_cast<std::int64_t>(std::llround(spec_.width_s * fs_));
        period_ = static_cast<std::int64_t>(std::llround(spec_.period_s * fs_));
    }

    const WaveformSpec &spec() const noexcept { return spec_; }

    cplx at(std::int64_t n) const {
        const std::int64_t i = n - start_;
        if (i < 0)
            return {};
        const double A = spec_.amplitude;
        switch (spec_.kind) {
        case WaveKind::Tone:
            return A * std::polar(1.0, two_pi * spec_.freq_hz * static_cast<double>(i) / fs_);
        case WaveKind::Lfm: {
            std::int64_t j = i;
            if (period_ > 0)
                j = i % period_;
            if (j >= width_)
                return {};
            return A * chirp(j);
        }
        case WaveKind::PulseTrain: {
            const std::int64_t j = i % period_;
            if (j >= width_)
                return {};
            if (spec_.bandwidth_hz != 0.0)
                return A * chirp(j) * std::polar(1.0, two_pi * spec_.freq_hz * static_cast<double>(j) / fs_);
            return A * std::polar(1.0, two_pi * spec_.freq_hz * static_cast<double>(j) / fs_);
        }
        case WaveKind::Samples:
            if (i >= static_cast<std::int64_t>(spec_.samples.size()))
                return {};
            return A * spec_.samples[static_cast<std::size_t>(i)];
        }
        return {};
    }

private:
    cplx chirp(std::int64_t j) const {
        const double t = static_cast<double>(j) / fs_;
        const double k = spec_.bandwidth_hz / spec_.width_s;
        return std::polar(1.0, pi * k * t * t - pi * spec_.bandwidth_hz * t);
    }

    WaveformSpec spec_;
    double fs_;
    std::int64_t start_ = 0, width_ = 0, period_ = 0;
};

/// Samples [0, duration * fs) of the waveform after the band check.
inline SampleBlock waveform_gen(const WaveformSpec &spec, double fs, double duration_s) {
    check_band(spec, fs);
    const Waveform w(spec, fs);
    SampleBlock b;
    const auto n = static_cast<std::int64_t>(std::llround(duration_s * fs));
    b.data.reserve(static_cast<std::size_t>(std::max<std::int64_t>(n, 0)));
    for (std::int64_t i = 0; i < n; ++i)
        b.data.push_back(w.at(i));
    return b;
}

} // namespace dpemu
