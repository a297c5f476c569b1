// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Operation counting.  One op is one complex multiply-accumulate.  Per
// emulated sample and per ordered node pair (m, l):
//
//   direct: K weighted R-tap reads of the intermediates, one R-tap read of
//           the transmit signal, one loss/Doppler multiply, plus the pair's
//           share of the intermediates (K R-tap reads of the arrival from m
//           at l) and of the receiver (one R-tap read)
//           -> (2K + 2) R + 1
//   tdl:    (N - 1) K R-tap reads (one per source and scatterer), one R-tap
//           transmit read, one loss/Doppler multiply, one R-tap receiver read
//           -> (N - 1) K R + 2 R + 1
//
// Weights are folded into the filter taps, so they cost nothing extra.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dpemu {

enum class EngineKind { Direct, Tdl };

inline std::string to_string(EngineKind e) { return e == EngineKind::Direct ? "direct" : "tdl"; }

struct OpCount {
    double per_sample_ops = 0.0;
    std::string convention;
};

inline const char *opcount_convention() {
    return "1 op = 1 complex multiply-accumulate; per sample and ordered pair: "
           "direct (2K+2)R+1, tdl (N-1)KR+2R+1; weights folded into filter taps";
}

inline double direct_ops_per_sample(std::int64_t N, std::int64_t K, std::int64_t R) {
    return static_cast<double>(N * (N - 1) * ((2 * K + 2) * R + 1));
}

inline double tdl_ops_per_sample(std::int64_t N, std::int64_t K, std::int64_t R) {
    return static_cast<double>(N * (N - 1) * ((N - 1) * K * R + 2 * R + 1));
}

/// Dry-run count for a uniform scenario (every node holds K points).
inline OpCount count_ops(EngineKind e, std::int64_t N, std::int64_t K, std::int64_t R) {
    return OpCount{e == EngineKind::Direct ? direct_ops_per_sample(N, K, R) : tdl_ops_per_sample(N, K, R),
                   opcount_convention()};
}

struct ScalingFit {
    double c = 0.0;
    double r2 = 0.0;
};

/// Least-squares fit y ~ c x through the origin with the centered R^2.
inline ScalingFit fit_through_origin(std::span<const double> x, std::span<const double> y) {
    double sxy = 0, sxx = 0, mean = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += x[i] * y[i];
        sxx += x[i] * x[i];
        mean += y[i];
    }
    mean /= static_cast<double>(y.size());
    ScalingFit f;
    f.c = sxy / sxx;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ss_res += (y[i] - f.c * x[i]) * (y[i] - f.c * x[i]);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    f.r2 = 1.0 - ss_res / ss_tot;
    return f;
}

/// Fit of the op count against N^2 K (direct) or N^3 K (tdl) over a sweep.
inline ScalingFit scaling_fit(EngineKind e, std::span<const std::int64_t> Ns, std::span<const std::int64_t> Ks,
                              std::int64_t R) {
    std::vector<double> x, y;
    for (std::int64_t N : Ns)
        for (std::int64_t K : Ks) {
            const double n = static_cast<double>(N), k = static_cast<double>(K);
            x.push_back(e == EngineKind::Direct ? n * n * k : n * n * n * k);
            y.push_back(count_ops(e, N, K, R).per_sample_ops);
        }
    return fit_through_origin(x, y);
}

} // namespace dpemu
