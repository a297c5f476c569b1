// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Separable point-scattering profiles
//
//     h(t; theta_i, theta_o) = sum_k alpha_k(theta_i) beta_k(theta_o) delta(t - tau^i_k + tau^o_k)
//
// with alpha_k = psi^T b^i_k, beta_k = psi^T b^o_k and tau_k = x_k^T a(theta).
// Angles are propagation directions in the object's frame (see geom.hpp),
// so a tap sits at delay tau^i_k - tau^o_k.  A monostatic probe along
// theta sees the reflection leave along antipode(theta): delay 2 x_k^T a(theta).
//
// Also here: the monostatic OMP fit, the bistatic alternating least-squares
// fit, and Swerling / hemispherical-pattern profile generators.

#pragma once

#include "dpemu/core.hpp"
#include "dpemu/geom.hpp"
#include "dpemu/sphharm.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace dpemu {

struct ScatterPoint {
    Vec3 location = Vec3::Zero();
    VecC in_coeffs;
    VecC out_coeffs;
};

struct ScatterProfile {
    static constexpr std::size_t max_points = 16;

    ShBasisSpec spec;
    std::vector<ScatterPoint> points;

    std::size_t K() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }

    void validate() const {
        if (points.size() > max_points)
            throw Error(ErrorKind::ConfigError, "a scattering profile holds at most 16 points");
        for (const ScatterPoint &p : points) {
            if (p.in_coeffs.size() != spec.P() || p.out_coeffs.size() != spec.P())
                throw Error(ErrorKind::ConfigError, "scatter coefficients do not match the basis size");
            if (!p.location.allFinite())
                throw Error(ErrorKind::ConfigError, "scatter location is not finite");
        }
    }

    /// Stored values: 2P coefficients and a 3-vector location per point.
    std::size_t storage() const { return K() * (2u * static_cast<std::size_t>(spec.P()) + 3u); }

    cplx alpha(std::size_t k, const VecC &psi) const { return psi.cwiseProduct(points[k].in_coeffs).sum(); }
    cplx beta(std::size_t k, const VecC &psi) const { return psi.cwiseProduct(points[k].out_coeffs).sum(); }

    /// Single isotropic scatterer with alpha * beta = amplitude.
    static ScatterPoint isotropic_point(const ShBasisSpec &spec, const Vec3 &location, cplx amplitude = 1.0) {
        ScatterPoint p;
        p.location = location;
        p.in_coeffs = ShFunction::constant(spec, amplitude).coeffs;
        p.out_coeffs = ShFunction::constant(spec, 1.0).coeffs;
        return p;
    }
};

inline std::pair<double, double> scatter_delays(const ScatterPoint &point, const Angle &theta_in,
                                                const Angle &theta_out) {
    return {point.location.dot(steering_vector(theta_in)), point.location.dot(steering_vector(theta_out))};
}

struct ScatterTap {
    double net_delay = 0.0;
    cplx weight;
};

inline std::vector<ScatterTap> scatter_response(const ScatterProfile &profile, const Angle &theta_in,
                                                const Angle &theta_out) {
    std::vector<ScatterTap> taps;
    if (profile.empty())
        return taps;
    const VecC psi_i = sh_eval(profile.spec, theta_in);
    const VecC psi_o = sh_eval(profile.spec, theta_out);
    for (std::size_t k = 0; k < profile.K(); ++k) {
        const auto [ti, to] = scatter_delays(profile.points[k], theta_in, theta_out);
        taps.push_back(ScatterTap{ti - to, profile.alpha(k, psi_i) * profile.beta(k, psi_o)});
    }
    return taps;
}

/// Frequency response of the profile, sum_k weight_k e^{-j 2 pi f net_delay_k}.
inline cplx scatter_frequency_response(const ScatterProfile &profile, const Angle &theta_in,
                                       const Angle &theta_out, double f) {
    cplx acc{};
    for (const ScatterTap &t : scatter_response(profile, theta_in, theta_out))
        acc += t.weight * std::polar(1.0, -two_pi * f * t.net_delay);
    return acc;
}

/// Rotates scatterer locations; coefficients are left untouched.
inline ScatterProfile rotate_locations(ScatterProfile profile, const Mat3 &R) {
    for (ScatterPoint &p : profile.points)
        p.location = R * p.location;
    return profile;
}

// ---------------------------------------------------------------------------
// Monostatic fitting

/// values(f, a): monostatic response at frequencies[f] probed along angles[a].
struct MonostaticTable {
    std::vector<double> frequencies;
    std::vector<Angle> angles;
    MatC values;

    void validate() const {
        if (values.rows() != static_cast<Eigen::Index>(frequencies.size()) ||
            values.cols() != static_cast<Eigen::Index>(angles.size()))
            throw Error(ErrorKind::InvalidArgument, "monostatic table dimensions are inconsistent");
        if (frequencies.size() > 2) {
            const double df = frequencies[1] - frequencies[0];
            for (std::size_t i = 2; i < frequencies.size(); ++i)
                if (std::abs(frequencies[i] - frequencies[i - 1] - df) > 1e-9 * std::abs(df))
                    throw Error(ErrorKind::InvalidArgument, "table frequencies must be uniformly spaced");
        }
    }

    double energy() const { return values.squaredNorm(); }
};

inline MonostaticTable synthesize_monostatic(const ScatterProfile &profile, std::vector<double> frequencies,
                                             std::vector<Angle> angles) {
    MonostaticTable t;
    t.frequencies = std::move(frequencies);
    t.angles = std::move(angles);
    t.values = MatC::Zero(static_cast<Eigen::Index>(t.frequencies.size()), static_cast<Eigen::Index>(t.angles.size()));
    for (std::size_t a = 0; a < t.angles.size(); ++a)
        for (std::size_t f = 0; f < t.frequencies.size(); ++f)
            t.values(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(a)) =
                scatter_frequency_response(profile, t.angles[a], t.angles[a].antipode(), t.frequencies[f]);
    return t;
}

struct OmpFit {
    ScatterProfile profile;
    std::vector<std::size_t> selected;  // grid indices, in selection order
    double residual_energy = 0.0;
    std::vector<double> mse_history;    // normalized residual after each selection
};

/// Greedy grid search: each step adds the grid location whose monostatic
/// phase history, correlated against the residual and projected onto the
/// basis, carries the most energy; then all selected points' coefficients
/// are re-solved jointly.  Ties go to the lowest grid index.
///
/// The fitted sigma_k(theta) is stored as the incoming factor; the outgoing
/// factor is isotropic.
inline OmpFit omp_fit_monostatic(const MonostaticTable &table, std::span<const Vec3> grid, std::size_t K,
                                 const ShBasisSpec &spec) {
    table.validate();
    if (K > ScatterProfile::max_points)
        throw Error(ErrorKind::InvalidArgument, "at most 16 scattering points");
    if (K > grid.size())
        throw Error(ErrorKind::InvalidArgument, "more points requested than grid locations");
    const auto F = static_cast<Eigen::Index>(table.frequencies.size());
    const auto A = static_cast<Eigen::Index>(table.angles.size());
    const Eigen::Index P = spec.P();
    if (A < P || F * A < P)
        throw Error(ErrorKind::InsufficientData, "table has fewer samples than unknowns per point");

    OmpFit fit;
    fit.profile.spec = spec;
    const double energy = table.energy();
    fit.residual_energy = energy;
    if (K == 0)
        return fit;

    const MatC Psi = sh_design_matrix(spec, table.angles);  // A x P
    Eigen::HouseholderQR<MatC> qr(Psi);
    const MatC Q = qr.householderQ() * MatC::Identity(A, P);

    auto phase = [&](std::size_t g, Eigen::Index f, Eigen::Index a) {
        const double tau = 2.0 * grid[g].dot(steering_vector(table.angles[static_cast<std::size_t>(a)]));
        return std::polar(1.0, -two_pi * table.frequencies[static_cast<std::size_t>(f)] * tau);
    };

    MatC residual = table.values;
    std::vector<bool> used(grid.size(), false);
    MatC coeffs;
    for (std::size_t step = 0; step < K; ++step) {
        std::size_t best = grid.size();
        double best_score = -1.0;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            if (used[g])
                continue;
            VecC c = VecC::Zero(A);
            for (Eigen::Index a = 0; a < A; ++a)
                for (Eigen::Index f = 0; f < F; ++f)
                    c[a] += std::conj(phase(g, f, a)) * residual(f, a);
            const double score = (Q.adjoint() * c).squaredNorm();
            if (score > best_score) {
                best_score = score;
                best = g;
            }
        }
        used[best] = true;
        fit.selected.push_back(best);

        // Joint least squares over all selected points.
        const auto n = static_cast<Eigen::Index>(fit.selected.size());
        MatC M(F * A, n * P);
        MatC y(F * A, 1);
        for (Eigen::Index a = 0; a < A; ++a)
            for (Eigen::Index f = 0; f < F; ++f) {
                const Eigen::Index row = a * F + f;
                y(row, 0) = table.values(f, a);
                for (Eigen::Index k = 0; k < n; ++k)
                    M.block(row, k * P, 1, P) = phase(fit.selected[static_cast<std::size_t>(k)], f, a) * Psi.row(a);
            }
        coeffs = ls_solve(M, y);
        const MatC r = y - M * coeffs;
        for (Eigen::Index a = 0; a < A; ++a)
            for (Eigen::Index f = 0; f < F; ++f)
                residual(f, a) = r(a * F + f, 0);
        fit.residual_energy = residual.squaredNorm();
        fit.mse_history.push_back(energy > 0.0 ? fit.residual_energy / energy : fit.residual_energy);
    }

    for (std::size_t k = 0; k < fit.selected.size(); ++k) {
        ScatterPoint p;
        p.location = grid[fit.selected[k]];
        p.in_coeffs = coeffs.block(static_cast<Eigen::Index>(k) * P, 0, P, 1);
        p.out_coeffs = ShFunction::constant(spec).coeffs;
        fit.profile.points.push_back(std::move(p));
    }
    return fit;
}

/// Uniform grid with `spacing` between points, `n` points per axis, centred on the origin.
inline std::vector<Vec3> cubic_grid(int n, double spacing) {
    std::vector<Vec3> g;
    const double off = 0.5 * (n - 1) * spacing;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                g.emplace_back(i * spacing - off, j * spacing - off, k * spacing - off);
    return g;
}

// ---------------------------------------------------------------------------
// Bistatic fitting

struct BistaticSample {
    Angle theta_in;
    Angle theta_out;
    double frequency = 0.0;
    cplx value;
};

inline std::vector<BistaticSample> synthesize_bistatic(const ScatterProfile &profile,
                                                       std::span<const std::pair<Angle, Angle>> angle_pairs,
                                                       std::span<const double> frequencies) {
    std::vector<BistaticSample> out;
    for (const auto &[ti, to] : angle_pairs)
        for (double f : frequencies)
            out.push_back(BistaticSample{ti, to, f, scatter_frequency_response(profile, ti, to, f)});
    return out;
}

enum class AlsInit { Isotropic, Random };

struct BilinearFit {
    ScatterProfile profile;
    std::vector<double> objective;  // normalized residual energy after each iteration
};

/// Alternating least squares for the per-point factors at fixed locations.
/// Each iteration solves for every b^i_k with the outgoing factors held,
/// then for every b^o_k, then rescales each pair so ||b^i_k|| = ||b^o_k||.
inline BilinearFit bilinear_fit_bistatic(std::span<const BistaticSample> samples, std::span<const Vec3> locations,
                                         const ShBasisSpec &spec, int iters, AlsInit init = AlsInit::Isotropic,
                                         std::uint64_t seed = 0, double tol = 0.0) {
    if (iters < 1)
        throw Error(ErrorKind::InvalidArgument, "need at least one iteration");
    if (locations.size() > ScatterProfile::max_points)
        throw Error(ErrorKind::InvalidArgument, "at most 16 scattering points");
    const auto J = static_cast<Eigen::Index>(samples.size());
    const Eigen::Index P = spec.P();
    const auto K = static_cast<Eigen::Index>(locations.size());
    if (J < K * P)
        throw Error(ErrorKind::InsufficientData, "fewer samples than unknowns");

    MatC psi_i(J, P), psi_o(J, P), ph(J, K);
    MatC y(J, 1);
    for (Eigen::Index j = 0; j < J; ++j) {
        const BistaticSample &s = samples[static_cast<std::size_t>(j)];
        psi_i.row(j) = sh_eval(spec, s.theta_in).transpose();
        psi_o.row(j) = sh_eval(spec, s.theta_out).transpose();
        for (Eigen::Index k = 0; k < K; ++k) {
            const Vec3 &x = locations[static_cast<std::size_t>(k)];
            const double net = x.dot(steering_vector(s.theta_in)) - x.dot(steering_vector(s.theta_out));
            ph(j, k) = std::polar(1.0, -two_pi * s.frequency * net);
        }
        y(j, 0) = s.value;
    }
    const double energy = y.squaredNorm();

    MatC bi = MatC::Zero(P, K), bo = MatC::Zero(P, K);
    if (init == AlsInit::Isotropic) {
        bo.row(0).setConstant(std::sqrt(4.0 * pi));
    } else {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        for (Eigen::Index k = 0; k < K; ++k)
            for (Eigen::Index p = 0; p < P; ++p)
                bo(p, k) = cplx(n(rng), n(rng));
    }

    // Design matrix for one factor with the other held fixed.
    auto design = [&](const MatC &psi_free, const MatC &psi_fixed, const MatC &b_fixed) {
        MatC M(J, K * P);
        const MatC fixed_vals = psi_fixed * b_fixed;  // J x K
        for (Eigen::Index k = 0; k < K; ++k)
            for (Eigen::Index j = 0; j < J; ++j)
                M.block(j, k * P, 1, P) = (fixed_vals(j, k) * ph(j, k)) * psi_free.row(j);
        return M;
    };
    auto unpack = [&](const MatC &v) {
        MatC b(P, K);
        for (Eigen::Index k = 0; k < K; ++k)
            b.col(k) = v.block(k * P, 0, P, 1);
        return b;
    };

    BilinearFit fit;
    for (int it = 0; it < iters; ++it) {
        bi = unpack(ls_solve(design(psi_i, psi_o, bo), y));
        const MatC Mo = design(psi_o, psi_i, bi);
        const MatC vo = ls_solve(Mo, y);
        bo = unpack(vo);
        for (Eigen::Index k = 0; k < K; ++k) {
            const double ni = bi.col(k).norm(), no = bo.col(k).norm();
            if (ni > 0.0 && no > 0.0) {
                const double s = std::sqrt(no / ni);
                bi.col(k) *= s;
                bo.col(k) /= s;
            }
        }
        const double obj = (y - Mo * vo).squaredNorm();
        fit.objective.push_back(energy > 0.0 ? obj / energy : obj);
        if (fit.objective.back() <= tol)
            break;
    }

    fit.profile.spec = spec;
    for (Eigen::Index k = 0; k < K; ++k) {
        ScatterPoint p;
        p.location = locations[static_cast<std::size_t>(k)];
        p.in_coeffs = bi.col(k);
        p.out_coeffs = bo.col(k);
        fit.profile.points.push_back(std::move(p));
    }
    return fit;
}

// ---------------------------------------------------------------------------
// Generators

/// Isotropic points at uniform random locations in a cube of side extent_m.
/// Kind 1 gives equal weights; kind 3 puts 90% of the power on the first point.
/// Total power is normalized to one.
inline ScatterProfile swerling_profile(int kind, std::size_t count, double extent_m, std::uint64_t seed) {
    if (kind != 1 && kind != 3)
        throw Error(ErrorKind::InvalidArgument, "Swerling kind must be 1 or 3");
    if (count > ScatterProfile::max_points)
        throw Error(ErrorKind::InvalidArgument, "at most 16 scattering points");
    if (kind == 1 && count < 10)
        throw Error(ErrorKind::InvalidArgument, "Swerling 1 needs at least 10 points");
    if (count < 1)
        throw Error(ErrorKind::InvalidArgument, "need at least one point");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5 * extent_m, 0.5 * extent_m);
    ScatterProfile prof;
    prof.spec = ShBasisSpec(0);
    for (std::size_t k = 0; k < count; ++k) {
        double power = 1.0 / static_cast<double>(count);
        if (kind == 3)
            power = (k == 0) ? 0.9 : (count > 1 ? 0.1 / static_cast<double>(count - 1) : 0.0);
        if (kind == 3 && count == 1)
            power = 1.0;
        const Vec3 loc(u(rng), u(rng), u(rng));
        prof.points.push_back(ScatterProfile::isotropic_point(prof.spec, loc, std::sqrt(power)));
    }
    return prof;
}

/// Basis approximation of the indicator of the hemisphere {u : <u, axis> >= 0}.
inline ShFunction heaviside_pattern(const ShBasisSpec &spec, const Vec3 &axis, int n_polar = 64, int n_azimuth = 128) {
    const SphereGrid grid = SphereGrid::quadrature(n_polar, n_azimuth);
    const Vec3 ax = axis.normalized();
    return sh_project(spec, grid, [&](const Angle &a) { return a.direction().dot(ax) >= 0.0 ? 1.0 : 0.0; });
}

} // namespace dpemu
