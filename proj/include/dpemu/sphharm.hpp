// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Complex spherical harmonics, least-squares fitting on the sphere and the
// separable rank-D antenna gain model
//
//     G(theta_s, theta) = sum_d conj(g^s_d(theta_s)) g_d(theta).
//
// Basis: orthonormal Y_l^m with the Condon-Shortley phase, stored at
// 0-based index l^2 + l + m.

#pragma once

#include "dpemu/core.hpp"
#include "dpemu/geom.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace dpemu {

using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;

struct ShBasisSpec {
    static constexpr int max_order = 31;
    int order = 0;

    ShBasisSpec() = default;
    explicit ShBasisSpec(int order_) : order(order_) {
        if (order_ < 0 || order_ > max_order)
            throw Error(ErrorKind::InvalidArgument, "spherical harmonic order must lie in [0, 31]");
    }

    int P() const noexcept { return (order + 1) * (order + 1); }
    bool operator==(const ShBasisSpec &) const = default;
};

/// 0-based position of Y_l^m in a coefficient vector.
inline constexpr int sh_index(int l, int m) { return l * l + l + m; }

/// Inverse of sh_index.
inline std::pair<int, int> sh_degree_order(int idx) {
    int l = static_cast<int>(std::sqrt(static_cast<double>(idx)));
    while (l * l > idx)
        --l;
    while ((l + 1) * (l + 1) <= idx)
        ++l;
    return {l, idx - l * l - l};
}

/// psi(theta): all Y_l^m up to spec.order evaluated at theta.
inline VecC sh_eval(const ShBasisSpec &spec, const Angle &theta) {
    const int L = spec.order;
    VecC out(spec.P());
    const double th = deg2rad(theta.polar_deg);
    const double ph = deg2rad(theta.azimuth_deg);
    const double x = std::cos(th);
    const double s = std::sin(th);

    // Normalized associated Legendre values for m >= 0, Condon-Shortley included.
    std::vector<double> pmm(static_cast<std::size_t>(L) + 1);
    pmm[0] = 1.0 / std::sqrt(4.0 * pi);
    for (int m = 1; m <= L; ++m)
        pmm[static_cast<std::size_t>(m)] =
            -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm[static_cast<std::size_t>(m) - 1];

    for (int m = 0; m <= L; ++m) {
        const cplx e = std::polar(1.0, m * ph);
        const cplx e_neg = std::conj(e) * ((m % 2 == 0) ? 1.0 : -1.0);
        double p2 = 0.0;
        double p1 = pmm[static_cast<std::size_t>(m)];
        for (int l = m; l <= L; ++l) {
            double p;
            if (l == m) {
                p = p1;
            } else if (l == m + 1) {
                p = std::sqrt(2.0 * m + 3.0) * x * p1;
                p2 = p1;
                p1 = p;
            } else {
                const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - static_cast<double>(m) * m));
                const double b = std::sqrt((static_cast<double>(l - 1) * (l - 1) - static_cast<double>(m) * m) /
                                           (4.0 * (l - 1) * (l - 1) - 1.0));
                p = a * (x * p1 - b * p2);
                p2 = p1;
                p1 = p;
            }
            out[sh_index(l, m)] = p * e;
            if (m > 0)
                out[sh_index(l, -m)] = p * e_neg;
        }
    }
    return out;
}

/// Rows are psi(theta_i)^T.
inline MatC sh_design_matrix(const ShBasisSpec &spec, std::span<const Angle> angles) {
    MatC A(static_cast<Eigen::Index>(angles.size()), spec.P());
    for (std::size_t i = 0; i < angles.size(); ++i)
        A.row(static_cast<Eigen::Index>(i)) = sh_eval(spec, angles[i]).transpose();
    return A;
}

struct ShFunction {
    ShBasisSpec spec;
    VecC coeffs;

    ShFunction() : coeffs(VecC::Zero(1)) {}
    ShFunction(ShBasisSpec s, VecC c) : spec(s), coeffs(std::move(c)) {
        if (coeffs.size() != spec.P())
            throw Error(ErrorKind::InvalidArgument, "coefficient count does not match the basis");
    }

    /// Constant function with value `value`.
    static ShFunction constant(const ShBasisSpec &spec, cplx value = 1.0) {
        VecC c = VecC::Zero(spec.P());
        c[0] = value * std::sqrt(4.0 * pi);
        return ShFunction(spec, c);
    }

    cplx operator()(const Angle &theta) const { return eval(theta); }

    cplx eval(const Angle &theta) const { return (sh_eval(spec, theta).transpose() * coeffs)(0); }
};

/// Gauss-Legendre nodes and weights on [-1, 1].
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(static_cast<std::size_t>(n)), w(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double z = std::cos(pi * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16)
                break;
        }
        x[static_cast<std::size_t>(i)] = z;
        w[static_cast<std::size_t>(i)] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

/// Product quadrature on the sphere: Gauss-Legendre in cos(polar) times a
/// uniform azimuth grid.  Weights sum to 4 pi.
struct SphereGrid {
    std::vector<Angle> angles;
    std::vector<double> weights;
    int n_polar = 0;
    int n_azimuth = 0;

    static SphereGrid quadrature(int n_polar, int n_azimuth) {
        if (n_polar < 1 || n_azimuth < 1)
            throw Error(ErrorKind::InvalidArgument, "grid dimensions must be positive");
        SphereGrid g;
        g.n_polar = n_polar;
        g.n_azimuth = n_azimuth;
        auto [x, w] = gauss_legendre(n_polar);
        for (int i = 0; i < n_polar; ++i) {
            const double pol = rad2deg(std::acos(x[static_cast<std::size_t>(i)]));
            for (int j = 0; j < n_azimuth; ++j) {
                const double az = -180.0 + 360.0 * j / n_azimuth;
                g.angles.push_back(Angle{az, pol});
                g.weights.push_back(w[static_cast<std::size_t>(i)] * two_pi / n_azimuth);
            }
        }
        return g;
    }

    std::size_t size() const noexcept { return angles.size(); }
};

/// Projects f onto the basis by quadrature: b_p = sum_i w_i conj(psi_p(theta_i)) f(theta_i).
template <typename F>
ShFunction sh_project(const ShBasisSpec &spec, const SphereGrid &grid, F &&f) {
    VecC b = VecC::Zero(spec.P());
    for (std::size_t i = 0; i < grid.size(); ++i)
        b += grid.weights[i] * sh_eval(spec, grid.angles[i]).conjugate() * cplx(f(grid.angles[i]));
    return ShFunction(spec, b);
}

/// Solves min ||A X - Y||^2 + ridge ||X||^2 column by column through the
/// normal equations.  Throws RankDeficient when ridge is zero and the normal
/// matrix condition number exceeds 1e12.
inline MatC ls_solve(const MatC &A, const MatC &Y, double ridge = 0.0, double max_condition = 1e12) {
    if (A.rows() != Y.rows())
        throw Error(ErrorKind::InvalidArgument, "least squares dimensions disagree");
    MatC N = A.adjoint() * A;
    if (ridge > 0.0)
        N.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<MatC> es(N, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (ridge == 0.0 && (!(hi > 0.0) || lo <= hi / max_condition))
        throw Error(ErrorKind::RankDeficient, "normal matrix is ill-conditioned");
    return N.ldlt().solve(A.adjoint() * Y);
}

inline ShFunction sh_fit(std::span<const std::pair<Angle, cplx>> samples, const ShBasisSpec &spec,
                         double ridge = 0.0) {
    if (ridge < 0.0)
        throw Error(ErrorKind::InvalidArgument, "ridge must be nonnegative");
    if (samples.size() < static_cast<std::size_t>(spec.P()) && ridge == 0.0)
        throw Error(ErrorKind::RankDeficient, "fewer samples than basis functions");
    MatC A(static_cast<Eigen::Index>(samples.size()), spec.P());
    MatC y(static_cast<Eigen::Index>(samples.size()), 1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        A.row(static_cast<Eigen::Index>(i)) = sh_eval(spec, samples[i].first).transpose();
        y(static_cast<Eigen::Index>(i), 0) = samples[i].second;
    }
    return ShFunction(spec, ls_solve(A, y, ridge).col(0));
}

// ---------------------------------------------------------------------------
// Antenna model

/// Element positions in wavelengths; element d contributes the phase
/// phi_d(theta) = 2 pi <offset_d, u(theta)>.
struct ElementGeometry {
    std::vector<Vec3> offsets_wavelengths;

    double phase(std::size_t d, const Angle &theta) const {
        return two_pi * offsets_wavelengths[d].dot(theta.direction());
    }
};

struct AntennaModel {
    ShBasisSpec spec;
    int D = 1;
    std::vector<ShFunction> steer_factors;
    std::vector<ShFunction> field_factors;
    std::optional<ElementGeometry> geometry;

    /// Single isotropic element with unit gain.
    static AntennaModel isotropic() {
        AntennaModel m;
        m.spec = ShBasisSpec(0);
        m.D = 1;
        m.steer_factors = {ShFunction::constant(m.spec)};
        m.field_factors = {ShFunction::constant(m.spec)};
        return m;
    }

    void validate() const {
        if (D < 1 || steer_factors.size() != static_cast<std::size_t>(D) ||
            field_factors.size() != static_cast<std::size_t>(D))
            throw Error(ErrorKind::InvalidArgument, "antenna model needs D steer and D field factors");
        for (std::size_t d = 0; d < static_cast<std::size_t>(D); ++d)
            if (!(steer_factors[d].spec == spec) || !(field_factors[d].spec == spec))
                throw Error(ErrorKind::InvalidArgument, "antenna factors must share one basis");
        if (geometry && geometry->offsets_wavelengths.size() != static_cast<std::size_t>(D))
            throw Error(ErrorKind::InvalidArgument, "element geometry must list D offsets");
    }

    /// Number of stored complex coefficients, 2 P D.
    std::size_t storage() const { return 2u * static_cast<std::size_t>(spec.P()) * static_cast<std::size_t>(D); }

    /// g^s_d(steer) for every d.
    VecC steer_values(const Angle &steer) const {
        const VecC psi = sh_eval(spec, steer);
        VecC v(D);
        for (int d = 0; d < D; ++d) {
            cplx g = (psi.transpose() * steer_factors[static_cast<std::size_t>(d)].coeffs)(0);
            if (geometry)
                g *= std::polar(1.0, geometry->phase(static_cast<std::size_t>(d), steer));
            v[d] = g;
        }
        return v;
    }

    /// g_d(theta) for every d.
    VecC field_values(const Angle &theta) const {
        const VecC psi = sh_eval(spec, theta);
        VecC v(D);
        for (int d = 0; d < D; ++d) {
            cplx g = (psi.transpose() * field_factors[static_cast<std::size_t>(d)].coeffs)(0);
            if (geometry)
                g *= std::polar(1.0, geometry->phase(static_cast<std::size_t>(d), theta));
            v[d] = g;
        }
        return v;
    }
};

inline cplx antenna_gain(const AntennaModel &model, const Angle &steer, const Angle &theta) {
    return model.steer_values(steer).dot(model.field_values(theta));
}

struct AntennaFit {
    AntennaModel model;
    double train_nmse = 0.0;
    double test_nmse = 0.0;
};

/// Field-grid columns held out for testing: every tenth column.
inline bool is_test_column(std::size_t j) { return j % 10 == 9; }

/// Fits a rank-D model to table(s, f) = G(steer_grid[s], field_grid[f]).
///
/// With element geometry the steer factors are fixed to the array phase of an
/// isotropic steer element; the per-element field responses are recovered by
/// least squares and each is fitted in the basis after removing its phase.
/// Without geometry the table is factored by a truncated SVD and each factor
/// is projected onto the basis.
inline AntennaFit fit_antenna_table(const MatC &table, std::span<const Angle> steer_grid,
                                    std::span<const Angle> field_grid, int D, const ShBasisSpec &spec,
                                    const std::optional<ElementGeometry> &geometry = std::nullopt,
                                    double ridge = 0.0) {
    if (table.rows() != static_cast<Eigen::Index>(steer_grid.size()) ||
        table.cols() != static_cast<Eigen::Index>(field_grid.size()))
        throw Error(ErrorKind::InvalidArgument, "table dimensions do not match the grids");
    if (D < 1)
        throw Error(ErrorKind::InvalidArgument, "rank must be positive");
    if (geometry && geometry->offsets_wavelengths.size() != static_cast<std::size_t>(D))
        throw Error(ErrorKind::InvalidArgument, "geometry must list D element offsets");

    std::vector<Eigen::Index> train, test;
    for (std::size_t j = 0; j < field_grid.size(); ++j)
        (is_test_column(j) ? test : train).push_back(static_cast<Eigen::Index>(j));
    const auto S = table.rows();
    const auto F_train = static_cast<Eigen::Index>(train.size());
    MatC T_train(S, F_train);
    for (Eigen::Index j = 0; j < F_train; ++j)
        T_train.col(j) = table.col(train[static_cast<std::size_t>(j)]);

    AntennaFit fit;
    AntennaModel &m = fit.model;
    m.spec = spec;
    m.D = D;
    m.geometry = geometry;

    std::vector<Angle> train_angles;
    for (auto j : train)
        train_angles.push_back(field_grid[static_cast<std::size_t>(j)]);
    const MatC A_field = sh_design_matrix(spec, train_angles);

    if (geometry) {
        // E(s, d) = conj(g^s_d(steer_s)) with isotropic steer elements.
        MatC E(S, D);
        for (Eigen::Index s = 0; s < S; ++s)
            for (int d = 0; d < D; ++d)
                E(s, d) = std::polar(1.0, -geometry->phase(static_cast<std::size_t>(d), steer_grid[static_cast<std::size_t>(s)]));
        const MatC H = E.completeOrthogonalDecomposition().solve(T_train);  // D x F_train
        MatC Y(F_train, D);
        for (Eigen::Index j = 0; j < F_train; ++j)
            for (int d = 0; d < D; ++d)
                Y(j, d) = H(d, j) * std::polar(1.0, -geometry->phase(static_cast<std::size_t>(d), train_angles[static_cast<std::size_t>(j)]));
        const MatC B = ls_solve(A_field, Y, ridge);
        for (int d = 0; d < D; ++d) {
            m.steer_factors.push_back(ShFunction::constant(spec));
            m.field_factors.push_back(ShFunction(spec, B.col(d)));
        }
    } else {
        Eigen::JacobiSVD<MatC> svd(T_train, Eigen::ComputeThinU | Eigen::ComputeThinV);
        if (svd.singularValues().size() < D)
            throw Error(ErrorKind::InsufficientData, "table smaller than the requested rank");
        const MatC A_steer = sh_design_matrix(spec, steer_grid);
        MatC Ys(S, D);
        MatC Yf_train(F_train, D);
        for (int d = 0; d < D; ++d) {
            const double sq = std::sqrt(svd.singularValues()[d]);
            Ys.col(d) = (svd.matrixU().col(d) * sq).conjugate();
            Yf_train.col(d) = svd.matrixV().col(d).conjugate() * sq;
        }
        const MatC Bs = ls_solve(A_steer, Ys, ridge);
        const MatC Bf = ls_solve(A_field, Yf_train, ridge);
        for (int d = 0; d < D; ++d) {
            m.steer_factors.push_back(ShFunction(spec, Bs.col(d)));
            m.field_factors.push_back(ShFunction(spec, Bf.col(d)));
        }
    }
    m.validate();

    // Error on the training and held-out columns.
    std::vector<VecC> steer_vals;
    for (const Angle &a : steer_grid)
        steer_vals.push_back(m.steer_values(a));
    auto column_error = [&](const std::vector<Eigen::Index> &cols) {
        double err = 0.0, ref = 0.0;
        for (auto j : cols) {
            const VecC g = m.field_values(field_grid[static_cast<std::size_t>(j)]);
            for (Eigen::Index s = 0; s < S; ++s) {
                const cplx model_val = steer_vals[static_cast<std::size_t>(s)].dot(g);
                err += std::norm(model_val - table(s, j));
                ref += std::norm(table(s, j));
            }
        }
        return ref > 0.0 ? err / ref : err;
    };
    fit.train_nmse = column_error(train);
    fit.test_nmse = column_error(test);
    return fit;
}

} // namespace dpemu
