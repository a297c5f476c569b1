// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Geometry, kinematics and the delay/Doppler chain.
//
// Angle convention: an Angle is a direction on the unit sphere given by
// azimuth phi (from +x toward +y) and polar angle vartheta measured from +z:
//
//     u(theta) = [cos(phi) sin(vartheta), sin(phi) sin(vartheta), cos(vartheta)]
//
// and the steering vector is a(theta) = u(theta) / c.  Scatterer and receiver
// offsets use directions of *propagation*: an incoming angle points along the
// travel direction of the arriving wave, an outgoing angle along the travel
// direction of the departing wave.  Both are expressed in the local frame of
// the node, obtained by rotating the global direction by orientation^T.

#pragma once

#include "dpemu/core.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace dpemu {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double deg2rad(double d) { return d * pi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / pi; }

/// Spherical direction in degrees; azimuth in [-180, 180), polar in [0, 180].
struct Angle {
    double azimuth_deg = 0.0;
    double polar_deg = 0.0;

    /// Canonicalizes arbitrary inputs onto the valid ranges.  A negative
    /// polar angle is folded through the pole onto the opposite azimuth.
    static Angle normalized(double azimuth_deg, double polar_deg) {
        double pol = std::fmod(polar_deg, 360.0);
        if (pol < 0.0)
            pol += 360.0;
        double az = azimuth_deg;
        if (pol > 180.0) {
            pol = 360.0 - pol;
            az += 180.0;
        }
        az = std::fmod(az + 180.0, 360.0);
        if (az < 0.0)
            az += 360.0;
        return Angle{az - 180.0, pol};
    }

    bool valid() const {
        return std::isfinite(azimuth_deg) && std::isfinite(polar_deg) && azimuth_deg >= -180.0 &&
               azimuth_deg < 180.0 && polar_deg >= 0.0 && polar_deg <= 180.0;
    }

    Vec3 direction() const {
        const double ph = deg2rad(azimuth_deg);
        const double th = deg2rad(polar_deg);
        return {std::cos(ph) * std::sin(th), std::sin(ph) * std::sin(th), std::cos(th)};
    }

    /// Direction pointing the opposite way.
    Angle antipode() const { return from_direction(-direction()); }

    static Angle from_direction(const Vec3 &v) {
        const double n = v.norm();
        if (!(n > 0.0))
            throw Error(ErrorKind::InvalidArgument, "cannot take the angle of a zero vector");
        const double z = std::clamp(v.z() / n, -1.0, 1.0);
        double az = rad2deg(std::atan2(v.y(), v.x()));
        if (az >= 180.0)
            az -= 360.0;
        return Angle{az, rad2deg(std::acos(z))};
    }
};

/// a(theta) = u(theta) / c, in seconds per meter.
inline Vec3 steering_vector(const Angle &theta) { return theta.direction() / speed_of_light; }

/// Uniformly distributed rotation (Haar measure) from a unit quaternion.
template <typename Rng>
Mat3 random_rotation(Rng &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

/// Rotation taking +z onto `dir` through the plane they span.
inline Mat3 rotation_from_z(const Vec3 &dir) {
    return Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), dir.normalized()).toRotationMatrix();
}

struct Kinematics {
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    Mat3 orientation = Mat3::Identity();
    double reference_time = 0.0;
};

/// Linear motion about the reference time.
inline Vec3 propagate(const Kinematics &k, double t) {
    return k.position + (t - k.reference_time) * k.velocity;
}

inline bool is_rotation(const Mat3 &r, double tol = 1e-9) {
    return (r.transpose() * r - Mat3::Identity()).norm() < tol && std::abs(r.determinant() - 1.0) < tol;
}

/// One-way propagation state from a source node to a destination node.
struct PathState {
    double delay_s = 0.0;
    double doppler_hz = 0.0;
    double loss_amp = 1.0;
    Angle incoming;  // propagation direction at the destination, destination frame
    Angle outgoing;  // propagation direction at the source, source frame
    double distance_m = 0.0;
    double radial_velocity = 0.0;
};

/// Evaluates both endpoints at time t.  Amplitude loss is loss_ref_m / d, so
/// power falls off as 1/d^2.
inline PathState path_between(const Kinematics &src, const Kinematics &dst, double fc, double t,
                              double loss_ref_m = 1.0) {
    const Vec3 d = propagate(dst, t) - propagate(src, t);
    const double dist = d.norm();
    if (!(dist > 0.0))
        throw Error(ErrorKind::ZeroDistance, "source and destination positions coincide");
    const Vec3 v_rel = dst.velocity - src.velocity;
    PathState p;
    p.distance_m = dist;
    p.delay_s = dist / speed_of_light;
    p.radial_velocity = d.dot(v_rel) / dist;
    p.doppler_hz = -fc * p.radial_velocity / speed_of_light;
    p.loss_amp = loss_ref_m / dist;
    p.outgoing = Angle::from_direction(src.orientation.transpose() * d);
    p.incoming = Angle::from_direction(dst.orientation.transpose() * d);
    return p;
}

struct Waypoint {
    double t = 0.0;
    Vec3 position = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
};

template <typename T>
struct TimedValue {
    double t = 0.0;
    T value{};
};

/// Returns the entry active at time t (last one with entry.t <= t, else the first).
template <typename T>
const T &active_at(std::span<const TimedValue<T>> schedule, double t) {
    if (schedule.empty())
        throw Error(ErrorKind::ConfigError, "empty schedule");
    auto it = std::upper_bound(schedule.begin(), schedule.end(), t,
                               [](double x, const TimedValue<T> &e) { return x < e.t; });
    if (it == schedule.begin())
        return schedule.front().value;
    return std::prev(it)->value;
}

/// Piecewise-linear trajectory with a piecewise-constant orientation.
struct Trajectory {
    std::vector<Waypoint> waypoints{Waypoint{}};
    std::vector<TimedValue<Mat3>> orientation{TimedValue<Mat3>{0.0, Mat3::Identity()}};

    static Trajectory fixed(const Vec3 &position, const Vec3 &velocity = Vec3::Zero(),
                            const Mat3 &orientation = Mat3::Identity()) {
        Trajectory tr;
        tr.waypoints = {Waypoint{0.0, position, velocity}};
        tr.orientation = {TimedValue<Mat3>{0.0, orientation}};
        return tr;
    }

    Kinematics at(double t) const {
        if (waypoints.empty())
            throw Error(ErrorKind::ConfigError, "trajectory has no waypoints");
        auto it = std::upper_bound(waypoints.begin(), waypoints.end(), t,
                                   [](double x, const Waypoint &w) { return x < w.t; });
        const Waypoint &w = (it == waypoints.begin()) ? waypoints.front() : *std::prev(it);
        Kinematics k;
        k.reference_time = t;
        k.velocity = w.velocity;
        k.position = w.position + (t - w.t) * w.velocity;
        k.orientation = active_at<Mat3>(orientation, t);
        return k;
    }
};

/// Windowed-sinc value of a sampled signal at fractional position `pos`
/// (in samples, relative to x[0]); samples outside the span count as zero.
inline cplx bandlimited_sample(std::span<const cplx> x, double pos, int half_width = 64) {
    const double fl = std::floor(pos);
    const auto base = static_cast<std::int64_t>(fl);
    const double frac = pos - fl;
    if (frac == 0.0) {
        if (base < 0 || base >= static_cast<std::int64_t>(x.size()))
            return {};
        return x[static_cast<std::size_t>(base)];
    }
    // Kaiser window, beta = 12.
    constexpr double beta = 12.0;
    auto bessel_i0 = [](double v) {
        double sum = 1.0, term = 1.0;
        for (int k = 1; k < 60; ++k) {
            term *= (v / (2.0 * k)) * (v / (2.0 * k));
            sum += term;
            if (term < 1e-18 * sum)
                break;
        }
        return sum;
    };
    const double i0b = bessel_i0(beta);
    cplx acc{};
    for (int k = -half_width + 1; k <= half_width; ++k) {
        const std::int64_t idx = base + k;
        if (idx < 0 || idx >= static_cast<std::int64_t>(x.size()))
            continue;
        const double off = static_cast<double>(k) - frac;
        const double r = off / half_width;
        if (std::abs(r) >= 1.0)
            continue;
        const double w = bessel_i0(beta * std::sqrt(1.0 - r * r)) / i0b;
        const double s = std::sin(pi * off) / (pi * off);
        acc += x[static_cast<std::size_t>(idx)] * (w * s);
    }
    return acc;
}

/// Relative RMS error of the narrowband Doppler approximation
/// e^{-j 2 pi fc rho t} u(t) against the exact dilation
/// e^{-j 2 pi fc rho t} u(t (1 - rho)).  The dilated signal is resampled with
/// a bandlimited interpolator; `half_width` samples at each end are excluded.
inline double doppler_approx_error(const SampleBlock &u, double fc, double rho, double fs,
                                   int half_width = 64) {
    if (!(std::abs(rho) < 1e-3))
        throw Error(ErrorKind::InvalidRho, "|rho| must stay below 1e-3 for the modulation model");
    if (u.size() <= static_cast<std::size_t>(2 * half_width))
        throw Error(ErrorKind::InvalidArgument, "block too short for the resampling guard");
    double err2 = 0.0, ref2 = 0.0;
    const std::span<const cplx> x(u.data);
    for (std::size_t n = half_width; n + half_width < u.size(); ++n) {
        const double t = static_cast<double>(n) / fs;
        const cplx mod = std::polar(1.0, -two_pi * fc * rho * t);
        const cplx exact = mod * bandlimited_sample(x, static_cast<double>(n) * (1.0 - rho), half_width);
        const cplx approx = mod * u.data[n];
        err2 += std::norm(exact - approx);
        ref2 += std::norm(exact);
    }
    if (ref2 == 0.0)
        return 0.0;
    return std::sqrt(err2 / ref2);
}

} // namespace dpemu
