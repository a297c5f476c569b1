// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Signal analysis for the experiments.

#pragma once

#include "dpemu/core.hpp"
#include "dpemu/geom.hpp"

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dpemu {

struct MatchedFilterResult {
    std::vector<std::int64_t> lags;
    std::vector<double> magnitude;
    std::int64_t peak_lag = 0;
    double peak_mag = 0.0;
};

/// c(L) = sum_n received[template.start + n + L] conj(template[n]).  A copy of
/// the template delayed by d samples peaks at L = d.  Default lag range is
/// every lag with any overlap.
inline MatchedFilterResult matched_filter(const SampleBlock &received, const SampleBlock &tmpl,
                                          std::optional<std::pair<std::int64_t, std::int64_t>> lag_range = {}) {
    if (tmpl.empty())
        throw Error(ErrorKind::EmptyTemplate, "matched filter template is empty");
    const auto T = static_cast<std::int64_t>(tmpl.size());
    std::int64_t lo = received.start_index - tmpl.start_index - (T - 1);
    std::int64_t hi = received.end_index() - 1 - tmpl.start_index;
    if (lag_range) {
        lo = lag_range->first;
        hi = lag_range->second;
    }
    MatchedFilterResult r;
    for (std::int64_t L = lo; L <= hi; ++L) {
        cplx acc{};
        const std::int64_t base = tmpl.start_index + L - received.start_index;
        const std::int64_t n0 = std::max<std::int64_t>(0, -base);
        const std::int64_t n1 = std::min<std::int64_t>(T, static_cast<std::int64_t>(received.size()) - base);
        for (std::int64_t n = n0; n < n1; ++n)
            acc += received.data[static_cast<std::size_t>(base + n)] * std::conj(tmpl.data[static_cast<std::size_t>(n)]);
        const double mag = std::abs(acc);
        r.lags.push_back(L);
        r.magnitude.push_back(mag);
        if (r.lags.size() == 1 || mag > r.peak_mag) {
            r.peak_mag = mag;
            r.peak_lag = L;
        }
    }
    return r;
}

inline double block_energy(const SampleBlock &b) {
    double e = 0.0;
    for (const cplx &z : b.data)
        e += std::norm(z);
    return e;
}

/// Rectangular-window periodogram.  `power` sums to the block's mean square;
/// `normalized` is power over its peak.  Frequencies run from -fs/2 upward.
struct Periodogram {
    std::vector<double> freqs;
    std::vector<double> power;
    std::vector<double> normalized;
};

/// DFT of the block zero-padded to `nfft` (0 keeps the block length), in natural order.
inline std::vector<cplx> dft(const SampleBlock &block, std::size_t nfft = 0) {
    const std::size_t n = nfft ? nfft : block.size();
    if (n < block.size())
        throw Error(ErrorKind::InvalidArgument, "transform length shorter than the block");
    std::vector<cplx> in(n), out(n);
    std::copy(block.data.begin(), block.data.end(), in.begin());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n), reinterpret_cast<fftw_complex *>(in.data()),
                                      reinterpret_cast<fftw_complex *>(out.data()), FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

inline Periodogram periodogram(const SampleBlock &block, double fs, std::size_t nfft = 0) {
    if (block.empty())
        throw Error(ErrorKind::InvalidArgument, "periodogram of an empty block");
    const std::vector<cplx> X = dft(block, nfft);
    const std::size_t n = X.size();
    // Scaling keeps Parseval with respect to the unpadded block.
    const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(block.size()));
    Periodogram p;
    p.freqs.resize(n);
    p.power.resize(n);
    const std::size_t half = n / 2;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = (i + n - half) % n;  // fftshift
        const auto kk = static_cast<double>(k >= (n + 1) / 2 ? static_cast<std::int64_t>(k) - static_cast<std::int64_t>(n)
                                                             : static_cast<std::int64_t>(k));
        p.freqs[i] = kk * fs / static_cast<double>(n);
        p.power[i] = std::norm(X[k]) * scale;
    }
    const double peak = *std::max_element(p.power.begin(), p.power.end());
    p.normalized.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        p.normalized[i] = peak > 0.0 ? p.power[i] / peak : 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// Two-path interferometry baseline

/// Two transmit/receive nodes and one moving reflector; both nodes send the
/// same pulse at the same instant and the direct link between them is muted.
struct InterferometryGeometry {
    std::array<Vec3, 2> nodes{Vec3(-2000.0, 0.0, 0.0), Vec3(2000.0, 0.0, 0.0)};
    Vec3 reflector{0.0, 7745.966692414834, 0.0};
    Vec3 reflector_velocity{100.0, 0.0, 0.0};
    double fc_hz = 1e9;
    double loss_ref_m = 1.0;
};

struct BouncePath {
    double delay_s = 0.0;
    double phase = 0.0;
    double amplitude = 0.0;
};

/// Paths tx -> reflector -> receiver for a pulse sent at t_emit.  Each leg's
/// geometry is taken when the pulse reaches the leg's far end.
inline std::array<BouncePath, 2> bounce_paths(const InterferometryGeometry &g, std::size_t receiver, double t_emit) {
    std::array<BouncePath, 2> out;
    auto refl = [&](double t) { return g.reflector + t * g.reflector_velocity; };
    for (std::size_t tx = 0; tx < 2; ++tx) {
        double t1 = t_emit;
        for (int it = 0; it < 8; ++it)
            t1 = t_emit + (refl(t1) - g.nodes[tx]).norm() / speed_of_light;
        const double d1 = (refl(t1) - g.nodes[tx]).norm();
        double t2 = t1;
        for (int it = 0; it < 8; ++it)
            t2 = t1 + (g.nodes[receiver] - refl(t2)).norm() / speed_of_light;
        const double d2 = (g.nodes[receiver] - refl(t2)).norm();
        BouncePath &p = out[tx];
        p.delay_s = (d1 + d2) / speed_of_light;
        p.phase = -two_pi * g.fc_hz * p.delay_s;
        p.amplitude = (g.loss_ref_m / d1) * (g.loss_ref_m / d2);
    }
    return out;
}

/// Matched-filter peak of a sum of rectangular-pulse returns: each path adds
/// a e^{j phi} T tri((L - d) / T) at integer lag L.  Normalized by the
/// constructive maximum T sum |a|.
inline double coherent_peak(std::span<const BouncePath> paths, double fs, double pulse_samples) {
    double dmin = 1e300, dmax = -1e300, amp = 0.0;
    for (const BouncePath &p : paths) {
        dmin = std::min(dmin, p.delay_s * fs);
        dmax = std::max(dmax, p.delay_s * fs);
        amp += std::abs(p.amplitude);
    }
    if (amp == 0.0)
        return 0.0;
    double best = 0.0;
    for (auto L = static_cast<std::int64_t>(std::floor(dmin)) - 1; L <= static_cast<std::int64_t>(std::ceil(dmax)) + 1; ++L) {
        cplx acc{};
        for (const BouncePath &p : paths) {
            const double x = std::abs(static_cast<double>(L) - p.delay_s * fs) / pulse_samples;
            if (x < 1.0)
                acc += p.amplitude * std::polar(1.0, p.phase) * (1.0 - x);
        }
        best = std::max(best, std::abs(acc));
    }
    return best / amp;
}

/// Predicted normalized matched-filter peak at `receiver` for the pulse sent at t_emit.
inline double two_path_baseline(const InterferometryGeometry &g, std::size_t receiver, double t_emit, double fs,
                                double pulse_s) {
    const auto paths = bounce_paths(g, receiver, t_emit);
    return coherent_peak(paths, fs, pulse_s * fs);
}

// ---------------------------------------------------------------------------
// Beam sweeps and statistics

/// Peak matched-filter magnitude per recording, normalized by the largest.
inline std::vector<double> beam_sweep_extract(std::span<const SampleBlock> runs, const SampleBlock &tmpl) {
    std::vector<double> peaks;
    for (const SampleBlock &r : runs)
        peaks.push_back(matched_filter(r, tmpl).peak_mag);
    const double mx = peaks.empty() ? 0.0 : *std::max_element(peaks.begin(), peaks.end());
    for (double &p : peaks)
        p = mx > 0.0 ? p / mx : 0.0;
    return peaks;
}

/// Rayleigh scale by maximum likelihood: sigma^2 = sum x^2 / (2 n).
inline double rayleigh_sigma_mle(std::span<const double> x) {
    double s = 0.0;
    for (double v : x)
        s += v * v;
    return std::sqrt(s / (2.0 * static_cast<double>(x.size())));
}

/// One-sample Kolmogorov-Smirnov statistic against a continuous CDF.
template <typename Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf) {
    std::sort(x.begin(), x.end());
    const auto n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double F = cdf(x[i]);
        d = std::max({d, F - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - F});
    }
    return d;
}

inline double ks_rayleigh(std::span<const double> x) {
    const double s = rayleigh_sigma_mle(x);
    return ks_statistic(std::vector<double>(x.begin(), x.end()),
                        [s](double v) { return 1.0 - std::exp(-v * v / (2.0 * s * s)); });
}

// ---------------------------------------------------------------------------
// CSV output

inline void write_csv(const std::string &path, const std::vector<std::string> &header,
                      const std::vector<std::vector<double>> &columns) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::ConfigError, "cannot write " + path);
    out.precision(12);
    for (std::size_t c = 0; c < header.size(); ++c)
        out << (c ? "," : "") << header[c];
    out << "\n";
    const std::size_t rows = columns.empty() ? 0 : columns.front().size();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c)
            out << (c ? "," : "") << columns[c][r];
        out << "\n";
    }
}

} // namespace dpemu
