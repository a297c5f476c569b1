// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Randomized scenarios for engine cross-checks.

#pragma once

#include "dpemu/scenario.hpp"

#include <random>

namespace dpemu {

struct RandomScenarioOptions {
    std::size_t N = 3;
    std::size_t K = 4;
    double fs_hz = 25e6;
    std::int64_t update_samples = 400;
    double duration_updates = 2.5;
    double box_m = 1500.0;
    double min_separation_m = 300.0;
    double max_speed_mps = 300.0;
    double scatter_extent_m = 10.0;
    double rx_offset_m = 2.0;
    int profile_order = 2;
    int antenna_order = 1;
    int antenna_rank = 2;
};

inline VecC random_coeffs(std::mt19937_64 &rng, int P, double scale) {
    std::normal_distribution<double> g(0.0, scale);
    VecC v(P);
    for (int i = 0; i < P; ++i)
        v[i] = cplx(g(rng), g(rng));
    return v;
}

inline Scenario random_scenario(std::uint64_t seed, const RandomScenarioOptions &o = {}) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> box(-0.5 * o.box_m, 0.5 * o.box_m), unit(-1.0, 1.0), u01(0.0, 1.0);
    Scenario sc;
    sc.fs_hz = o.fs_hz;
    sc.fc_hz = 1e9;
    sc.update_interval_s = static_cast<double>(o.update_samples) / o.fs_hz;
    sc.duration_s = o.duration_updates * sc.update_interval_s;
    sc.max_range_m = 2.0 * o.box_m;
    sc.filter = u01(rng) < 0.5 ? FdMethod::Spline : FdMethod::Legendre;
    sc.taps = u01(rng) < 0.5 ? 4 : 8;

    std::vector<Vec3> placed;
    for (std::size_t i = 0; i < o.N; ++i) {
        NodeModel n;
        n.id = "n" + std::to_string(i);
        Vec3 pos;
        for (;;) {
            pos = Vec3(box(rng), box(rng), 0.2 * box(rng));
            bool ok = true;
            for (const Vec3 &q : placed)
                ok = ok && (pos - q).norm() >= o.min_separation_m;
            if (ok)
                break;
        }
        placed.push_back(pos);
        const Vec3 vel = Vec3(unit(rng), unit(rng), unit(rng)).normalized() * (o.max_speed_mps * u01(rng));
        n.trajectory = Trajectory::fixed(pos, vel, random_rotation(rng));

        n.profile.spec = ShBasisSpec(o.profile_order);
        const int P = n.profile.spec.P();
        for (std::size_t k = 0; k < o.K; ++k) {
            ScatterPoint p;
            p.location = Vec3(unit(rng), unit(rng), unit(rng)) * (0.5 * o.scatter_extent_m);
            p.in_coeffs = random_coeffs(rng, P, 1.0);
            p.out_coeffs = random_coeffs(rng, P, 1.0);
            n.profile.points.push_back(p);
        }

        AntennaModel a;
        a.spec = ShBasisSpec(o.antenna_order);
        a.D = o.antenna_rank;
        for (int d = 0; d < a.D; ++d) {
            a.steer_factors.push_back(ShFunction{a.spec, random_coeffs(rng, a.spec.P(), 1.0)});
            a.field_factors.push_back(ShFunction{a.spec, random_coeffs(rng, a.spec.P(), 1.0)});
        }
        n.antenna = a;
        n.antenna_ref = "inline";
        n.steer = {TimedValue<Angle>{0.0, Angle{360.0 * u01(rng) - 180.0, 180.0 * u01(rng)}}};
        n.rx_offset = Vec3(unit(rng), unit(rng), unit(rng)) * o.rx_offset_m;

        if (i == 0 || u01(rng) < 0.5) {
            WaveformSpec w;
            const double pick = u01(rng);
            if (pick < 0.33) {
                w.kind = WaveKind::Tone;
                w.freq_hz = o.fs_hz * 0.3 * unit(rng);
            } else if (pick < 0.66) {
                w.kind = WaveKind::Lfm;
                w.bandwidth_hz = o.fs_hz * 0.5;
                w.width_s = 200.0 / o.fs_hz;
                w.period_s = 260.0 / o.fs_hz;
            } else {
                w.kind = WaveKind::PulseTrain;
                w.freq_hz = o.fs_hz * 0.1 * unit(rng);
                w.width_s = 40.0 / o.fs_hz;
                w.period_s = 150.0 / o.fs_hz;
            }
            w.amplitude = 0.5 + u01(rng);
            n.tx = w;
        }
        sc.nodes.push_back(std::move(n));
    }
    return sc;
}

} // namespace dpemu
