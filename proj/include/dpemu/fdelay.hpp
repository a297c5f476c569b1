// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Fractional-delay FIR filters, their quality metrics, and the ring-buffer
// delay line the emulator reads from.
//
// A filter h designed for fractional delay mu has a DC group delay of
// R/2 - 1 + mu samples: it interpolates the input at that position inside
// its R-sample window.

#pragma once

#include "dpemu/core.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace dpemu {

enum class FdMethod { Spline, Legendre };

inline std::string to_string(FdMethod m) { return m == FdMethod::Spline ? "spline" : "legendre"; }

inline FdMethod fd_method_from_string(const std::string &s) {
    if (s == "spline")
        return FdMethod::Spline;
    if (s == "legendre")
        return FdMethod::Legendre;
    throw Error(ErrorKind::InvalidArgument, "unknown filter method '" + s + "'");
}

struct FracDelayFilter {
    std::vector<double> taps;
    FdMethod method = FdMethod::Spline;
    double mu = 0.0;
    int R = 4;
};

namespace detail {

inline double bspline3(double x) {
    x = std::abs(x);
    if (x < 1.0)
        return 2.0 / 3.0 - x * x + 0.5 * x * x * x;
    if (x < 2.0) {
        const double u = 2.0 - x;
        return u * u * u / 6.0;
    }
    return 0.0;
}

// Cardinal cubic spline kernel: the impulse response of cubic B-spline
// interpolation, sum_k C z^|k| beta3(x - k) with z = sqrt(3) - 2.
inline double cardinal_cubic(double x) {
    const double z = std::sqrt(3.0) - 2.0;
    const double c = std::sqrt(3.0);
    const int k0 = static_cast<int>(std::floor(x)) - 2;
    const int k1 = static_cast<int>(std::ceil(x)) + 2;
    double acc = 0.0;
    for (int k = k0; k <= k1; ++k) {
        const double b = bspline3(x - k);
        if (b != 0.0)
            acc += std::pow(z, std::abs(k)) * b;
    }
    return c * acc;
}

} // namespace detail

/// Designs an R-tap filter interpolating at position R/2 - 1 + mu.
///
/// Spline uses the cardinal cubic B-spline kernel truncated to the window,
/// corrected so the DC gain is one and the DC group delay is exact.
/// Legendre is the degree R-1 polynomial through the window samples
/// (Lagrange form of the Legendre-basis interpolant).
inline FracDelayFilter design(FdMethod method, int R, double mu) {
    if (R != 4 && R != 8)
        throw Error(ErrorKind::UnsupportedLength, "fractional delay filters support R = 4 or 8");
    if (!(mu >= 0.0 && mu < 1.0))
        throw Error(ErrorKind::InvalidArgument, "mu must lie in [0, 1)");
    FracDelayFilter f;
    f.method = method;
    f.mu = mu;
    f.R = R;
    f.taps.assign(static_cast<std::size_t>(R), 0.0);
    const int centre = R / 2 - 1;
    if (mu == 0.0) {
        f.taps[static_cast<std::size_t>(centre)] = 1.0;
        return f;
    }
    const double D = centre + mu;
    for (int r = 0; r < R; ++r) {
        double h = 1.0;
        if (method == FdMethod::Legendre) {
            for (int j = 0; j < R; ++j)
                if (j != r)
                    h *= (D - j) / static_cast<double>(r - j);
        } else {
            h = detail::cardinal_cubic(r - D);
        }
        f.taps[static_cast<std::size_t>(r)] = h;
    }
    if (method == FdMethod::Spline) {
        // The truncated kernel loses polynomial reproduction.  Restore unit DC
        // gain and the first moment D with the smallest-norm linear correction
        // h_r += a + b r.
        double s0 = 0.0, s1 = 0.0;
        for (int r = 0; r < R; ++r) {
            s0 += f.taps[static_cast<std::size_t>(r)];
            s1 += r * f.taps[static_cast<std::size_t>(r)];
        }
        const double n = R, sr = R * (R - 1) / 2.0, srr = (R - 1) * R * (2.0 * R - 1) / 6.0;
        const double det = n * srr - sr * sr;
        const double e0 = 1.0 - s0, e1 = D - s1;
        const double a = (srr * e0 - sr * e1) / det;
        const double b = (n * e1 - sr * e0) / det;
        for (int r = 0; r < R; ++r)
            f.taps[static_cast<std::size_t>(r)] += a + b * r;
    }
    double sum = 0.0;
    for (double h : f.taps)
        sum += h;
    for (double &h : f.taps)
        h /= sum;
    return f;
}

struct FilterMetrics {
    double delay_accuracy_ns = 0.0;
    double amplitude_ripple = 0.0;
};

/// Worst-case group-delay error and amplitude ripple over the occupied band
/// and `settings` uniformly spaced fractional delays.
///
/// The occupied band is fs / (1 + oversample_pct/100), centred on DC.  When
/// fs is zero the sample rate is chosen so the occupied band is 2 GHz.
inline FilterMetrics measure(FdMethod method, int R, double oversample_pct, int settings = 64,
                             double fs = 0.0, int freq_points = 400) {
    if (settings < 1 || freq_points < 2)
        throw Error(ErrorKind::InvalidArgument, "need at least one setting and two frequency points");
    if (fs <= 0.0)
        fs = 2e9 * (1.0 + oversample_pct / 100.0);
    const double edge = 0.5 / (1.0 + oversample_pct / 100.0);  // cycles per sample
    double worst = 0.0, amin = 1e300, amax = 0.0;
    for (int s = 0; s < settings; ++s) {
        const double mu = static_cast<double>(s) / settings;
        const FracDelayFilter f = design(method, R, mu);
        const double target = R / 2 - 1 + mu;
        for (int i = 0; i < freq_points; ++i) {
            const double nu = -edge + 2.0 * edge * i / (freq_points - 1);
            const double w = two_pi * nu;
            cplx H{}, dH{};
            for (int n = 0; n < R; ++n) {
                const cplx e = std::polar(1.0, -w * n);
                H += f.taps[static_cast<std::size_t>(n)] * e;
                dH += static_cast<double>(n) * f.taps[static_cast<std::size_t>(n)] * e;
            }
            const double gd = (dH / H).real();
            worst = std::max(worst, std::abs(gd - target));
            const double a = std::abs(H);
            amin = std::min(amin, a);
            amax = std::max(amax, a);
        }
    }
    return FilterMetrics{worst / fs * 1e9, amax - amin};
}

/// Filters for a uniform grid of `settings` fractional delays mu = b / settings.
class FilterBank {
public:
    static constexpr int default_settings = 1024;

    FilterBank(FdMethod method = FdMethod::Spline, int R = 4, int settings = default_settings)
        : method_(method), R_(R), Q_(settings) {
        if (settings < 1)
            throw Error(ErrorKind::InvalidArgument, "filter bank needs at least one setting");
        taps_.reserve(static_cast<std::size_t>(R) * settings);
        for (int b = 0; b < settings; ++b) {
            const FracDelayFilter f = design(method, R, static_cast<double>(b) / settings);
            taps_.insert(taps_.end(), f.taps.begin(), f.taps.end());
        }
    }

    int R() const noexcept { return R_; }
    int settings() const noexcept { return Q_; }
    FdMethod method() const noexcept { return method_; }

    std::span<const double> taps(int b) const {
        return {taps_.data() + static_cast<std::size_t>(b) * R_, static_cast<std::size_t>(R_)};
    }

    /// Resolution of a fractional read position: y = sum_r taps[r] x[newest - r].
    struct Read {
        std::int64_t newest = 0;
        const double *taps = nullptr;
    };

    /// Quantizes `pos` (absolute sample position) to the bank grid.
    Read resolve(double pos) const {
        const auto S = static_cast<std::int64_t>(std::llround(pos * Q_));
        const std::int64_t i = floor_div(S, Q_);
        const auto rem = static_cast<int>(S - i * Q_);
        if (rem == 0)
            return Read{i + R_ / 2 - 1, taps_.data()};
        return Read{i + R_ / 2, taps_.data() + static_cast<std::size_t>(Q_ - rem) * R_};
    }

    /// Oldest and newest sample index a read at `pos` touches.
    std::pair<std::int64_t, std::int64_t> support(double pos) const {
        const Read rd = resolve(pos);
        return {rd.newest - R_ + 1, rd.newest};
    }

private:
    FdMethod method_;
    int R_;
    int Q_;
    std::vector<double> taps_;
};

/// Ring buffer of complex samples addressed by absolute sample index.
class DelayLine {
public:
    explicit DelayLine(std::size_t capacity = 1, std::int64_t start_index = 0)
        : ring_(std::max<std::size_t>(capacity, 1)), next_(start_index), first_(start_index) {}

    std::size_t capacity() const noexcept { return ring_.size(); }
    /// Absolute index of the next sample to be written.
    std::int64_t write_index() const noexcept { return next_; }
    std::int64_t oldest_index() const noexcept {
        return std::max(first_, next_ - static_cast<std::int64_t>(ring_.size()));
    }

    void push(cplx v) {
        ring_[slot(next_)] = v;
        ++next_;
    }

    void append(std::span<const cplx> v) {
        for (const cplx &x : v)
            push(x);
    }

    /// Writes zeros up to (excluding) absolute index n.
    void fill_to(std::int64_t n) {
        while (next_ < n)
            push({});
    }

    bool holds(std::int64_t lo, std::int64_t hi) const { return lo >= oldest_index() && hi < next_; }

    /// Sample at absolute index n; indices before the first write read as zero.
    cplx at(std::int64_t n) const {
        if (n < first_)
            return {};
        if (n >= next_ || n < next_ - static_cast<std::int64_t>(ring_.size()))
            throw Error(ErrorKind::DelayOutOfRange, "sample " + std::to_string(n) + " not held in delay line");
        return ring_[slot(n)];
    }

    cplx apply(const FilterBank::Read &rd, int R) const {
        const std::int64_t lo = rd.newest - R + 1;
        if (rd.newest >= next_ ||
            (rd.newest >= first_ && std::max(lo, first_) < next_ - static_cast<std::int64_t>(ring_.size())))
            throw Error(ErrorKind::DelayOutOfRange, "fractional read outside the buffered history");
        cplx acc{};
        if (lo >= first_) {
            std::size_t s = slot(rd.newest);
            for (int r = 0; r < R; ++r) {
                acc += rd.taps[r] * ring_[s];
                s = (s == 0) ? ring_.size() - 1 : s - 1;
            }
        } else {
            for (int r = 0; r < R; ++r) {
                const std::int64_t n = rd.newest - r;
                if (n >= first_)
                    acc += rd.taps[r] * ring_[slot(n)];
            }
        }
        return acc;
    }

    /// Interpolated value at fractional absolute position `pos`.
    cplx sample_at(double pos, const FilterBank &bank) const { return apply(bank.resolve(pos), bank.R()); }

    /// Value delayed by `delay_samples` relative to the most recently written sample.
    cplx read_delayed(double delay_samples, const FilterBank &bank) const {
        if (delay_samples < bank.R() || delay_samples > static_cast<double>(capacity()) - 1.0)
            throw Error(ErrorKind::DelayOutOfRange, "delay outside [R, capacity - 1]");
        return sample_at(static_cast<double>(next_ - 1) - delay_samples, bank);
    }

private:
    std::size_t slot(std::int64_t n) const {
        const auto c = static_cast<std::int64_t>(ring_.size());
        return static_cast<std::size_t>(((n % c) + c) % c);
    }

    std::vector<cplx> ring_;
    std::int64_t next_;
    std::int64_t first_;
};

/// Ring capacity needed to serve a round trip at max_range_m: fs * 2 d / c + R.
inline std::size_t required_buffer_length(double fs, double max_range_m, int R) {
    return static_cast<std::size_t>(std::ceil(fs * 2.0 * max_range_m / speed_of_light)) + static_cast<std::size_t>(R);
}

} // namespace dpemu
