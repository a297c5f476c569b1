#include "dpemu/sphharm.hpp"

#include <catch_amalgamated.hpp>

#include <random>

using namespace dpemu;
using Catch::Approx;

namespace {

VecC random_coeffs(int P, std::mt19937_64 &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    VecC c(P);
    for (int i = 0; i < P; ++i)
        c[i] = cplx(n(rng), n(rng));
    return c;
}

} // namespace

TEST_CASE("low-order harmonics") {
    const VecC y0 = sh_eval(ShBasisSpec(0), Angle{33, 71});
    REQUIRE(y0.size() == 1);
    CHECK(std::abs(y0[0] - 1.0 / std::sqrt(4 * pi)) < 1e-15);

    const VecC y1 = sh_eval(ShBasisSpec(1), Angle{0, 0});
    CHECK(std::abs(y1[sh_index(1, -1)]) < 1e-15);
    CHECK(std::abs(y1[sh_index(1, 1)]) < 1e-15);
    CHECK(std::abs(y1[sh_index(1, 0)] - std::sqrt(3.0 / (4 * pi))) < 1e-15);
}

TEST_CASE("harmonics match reference values") {
    // scipy.special.sph_harm at azimuth 40 deg, polar 70 deg.
    const VecC y = sh_eval(ShBasisSpec(15), Angle{40, 70});
    struct Ref {
        int l, m;
        double re, im;
    };
    const Ref refs[] = {
        {1, 1, -0.24870268875929263, -0.2086863344107203},  {1, -1, 0.24870268875929263, -0.2086863344107203},
        {2, -2, 0.059229431872659076, -0.335906800165697},  {3, 1, 0.09657147432258649, 0.08103308848632848},
        {3, -3, -0.17309979458347707, -0.2998176389983184}, {5, 2, -0.057689121211175046, -0.32717126431465926},
        {15, -7, 0.005691446819522302, 0.03227779887487794},
    };
    for (const Ref &r : refs)
        CHECK(std::abs(y[sh_index(r.l, r.m)] - cplx(r.re, r.im)) < 1e-13);
}

TEST_CASE("index mapping is a bijection") {
    for (int L = 0; L <= ShBasisSpec::max_order; ++L) {
        const int P = ShBasisSpec(L).P();
        std::vector<int> seen(static_cast<std::size_t>(P), 0);
        for (int l = 0; l <= L; ++l)
            for (int m = -l; m <= l; ++m) {
                const int p = sh_index(l, m);
                REQUIRE(p >= 0);
                REQUIRE(p < P);
                ++seen[static_cast<std::size_t>(p)];
                CHECK(sh_degree_order(p) == std::make_pair(l, m));
            }
        for (int s : seen)
            CHECK(s == 1);
    }
    CHECK_THROWS_AS(ShBasisSpec(32), Error);
}

TEST_CASE("basis is orthonormal under quadrature") {
    const SphereGrid g = SphereGrid::quadrature(64, 128);
    double wsum = 0;
    for (double w : g.weights)
        wsum += w;
    CHECK(wsum == Approx(4 * pi).epsilon(1e-13));
    for (int order : {3, 15}) {
        const ShBasisSpec spec(order);
        const MatC A = sh_design_matrix(spec, g.angles);
        Eigen::VectorXd w(static_cast<Eigen::Index>(g.size()));
        for (std::size_t i = 0; i < g.size(); ++i)
            w[static_cast<Eigen::Index>(i)] = g.weights[i];
        const MatC gram = A.adjoint() * w.asDiagonal() * A;
        CHECK((gram - MatC::Identity(spec.P(), spec.P())).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("least-squares fitting") {
    std::mt19937_64 rng(7);
    const SphereGrid g = SphereGrid::quadrature(12, 24);
    SECTION("round trip") {
        const ShBasisSpec spec(4);
        const ShFunction truth(spec, random_coeffs(spec.P(), rng));
        std::vector<std::pair<Angle, cplx>> samples;
        for (const Angle &a : g.angles)
            samples.emplace_back(a, truth(a));
        const ShFunction fit = sh_fit(samples, spec);
        CHECK((fit.coeffs - truth.coeffs).norm() / truth.coeffs.norm() < 1e-8);
    }
    SECTION("constant") {
        std::vector<std::pair<Angle, cplx>> samples;
        for (const Angle &a : g.angles)
            samples.emplace_back(a, 1.0);
        const ShFunction fit = sh_fit(samples, ShBasisSpec(0));
        CHECK(std::abs(fit.coeffs[0] - std::sqrt(4 * pi)) < 1e-12);
    }
    SECTION("nested models") {
        const ShFunction truth(ShBasisSpec(3), random_coeffs(16, rng));
        std::vector<std::pair<Angle, cplx>> samples;
        for (const Angle &a : g.angles)
            samples.emplace_back(a, truth(a));
        const ShFunction fit = sh_fit(samples, ShBasisSpec(5));
        for (int p = 16; p < 36; ++p)
            CHECK(std::abs(fit.coeffs[p]) < 1e-8);
        CHECK((fit.coeffs.head(16) - truth.coeffs).norm() < 1e-8);
    }
    SECTION("degenerate samples") {
        std::vector<std::pair<Angle, cplx>> samples(50, {Angle{10, 20}, 1.0});
        CHECK_THROWS_AS(sh_fit(samples, ShBasisSpec(2)), Error);
        // A ridge makes the same problem solvable.
        CHECK_NOTHROW(sh_fit(samples, ShBasisSpec(2), 1e-3));
    }
}

TEST_CASE("antenna gain") {
    const AntennaModel iso = AntennaModel::isotropic();
    CHECK(std::abs(antenna_gain(iso, Angle{10, 20}, Angle{-100, 150}) - 1.0) < 1e-14);

    std::mt19937_64 rng(9);
    AntennaModel m;
    m.spec = ShBasisSpec(2);
    m.D = 3;
    for (int d = 0; d < 3; ++d) {
        m.steer_factors.emplace_back(m.spec, random_coeffs(9, rng));
        m.field_factors.emplace_back(m.spec, random_coeffs(9, rng));
    }
    m.validate();
    const cplx alpha(0.3, -1.7);
    AntennaModel scaled = m;
    for (auto &f : scaled.steer_factors)
        f.coeffs *= alpha;
    std::uniform_real_distribution<double> az(-180, 180), pol(0, 180);
    for (int i = 0; i < 20; ++i) {
        const Angle s{az(rng), pol(rng)}, t{az(rng), pol(rng)};
        CHECK(std::abs(antenna_gain(scaled, s, t) - std::conj(alpha) * antenna_gain(m, s, t)) < 1e-12);
        cplx direct{};
        for (int d = 0; d < 3; ++d)
            direct += std::conj(m.steer_factors[static_cast<std::size_t>(d)](s)) * m.field_factors[static_cast<std::size_t>(d)](t);
        CHECK(std::abs(antenna_gain(m, s, t) - direct) < 1e-12);
    }

    AntennaModel big;
    big.spec = ShBasisSpec(3);
    big.D = 169;
    CHECK(big.storage() == 5408);
}

namespace {

struct Table {
    SphereGrid steer = SphereGrid::quadrature(10, 20);
    SphereGrid field = SphereGrid::quadrature(12, 24);
    MatC values;
};

template <typename G>
Table make_table(G &&gain) {
    Table t;
    t.values.resize(static_cast<Eigen::Index>(t.steer.size()), static_cast<Eigen::Index>(t.field.size()));
    for (std::size_t s = 0; s < t.steer.size(); ++s)
        for (std::size_t f = 0; f < t.field.size(); ++f)
            t.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(f)) = gain(t.steer.angles[s], t.field.angles[f]);
    return t;
}

double model_nmse(const AntennaModel &m, const Table &t) {
    double e = 0, r = 0;
    for (std::size_t s = 0; s < t.steer.size(); ++s)
        for (std::size_t f = 0; f < t.field.size(); ++f) {
            const cplx v = t.values(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(f));
            e += std::norm(antenna_gain(m, t.steer.angles[s], t.field.angles[f]) - v);
            r += std::norm(v);
        }
    return e / r;
}

} // namespace

TEST_CASE("antenna table fitting without geometry") {
    std::mt19937_64 rng(21);
    SECTION("rank 2 round trip") {
        AntennaModel truth;
        truth.spec = ShBasisSpec(3);
        truth.D = 2;
        for (int d = 0; d < 2; ++d) {
            truth.steer_factors.emplace_back(truth.spec, random_coeffs(16, rng));
            truth.field_factors.emplace_back(truth.spec, random_coeffs(16, rng));
        }
        const Table t = make_table([&](const Angle &s, const Angle &f) { return antenna_gain(truth, s, f); });
        const AntennaFit fit = fit_antenna_table(t.values, t.steer.angles, t.field.angles, 2, ShBasisSpec(3));
        CHECK(fit.train_nmse < 1e-12);
        CHECK(fit.test_nmse < 1e-6);
        CHECK(model_nmse(fit.model, t) < 1e-6);
    }
    SECTION("rank 1 with D = 1") {
        const ShFunction gs(ShBasisSpec(2), random_coeffs(9, rng)), g(ShBasisSpec(2), random_coeffs(9, rng));
        auto gain = [&](const Angle &s, const Angle &f) { return std::conj(gs(s)) * g(f); };
        const Table t = make_table(gain);
        const AntennaFit fit = fit_antenna_table(t.values, t.steer.angles, t.field.angles, 1, ShBasisSpec(2));
        std::uniform_real_distribution<double> az(-180, 180), pol(0, 180);
        for (int i = 0; i < 50; ++i) {
            const Angle s{az(rng), pol(rng)}, f{az(rng), pol(rng)};
            CHECK(std::abs(antenna_gain(fit.model, s, f) - gain(s, f)) < 1e-9);
        }
    }
}

TEST_CASE("antenna table fitting with known geometry") {
    std::mt19937_64 rng(23);
    ElementGeometry geo;
    for (double x : {-0.25, 0.25})
        for (double y : {-0.25, 0.25})
            geo.offsets_wavelengths.emplace_back(x, y, 0.0);
    std::vector<ShFunction> elements;
    for (int d = 0; d < 4; ++d)
        elements.emplace_back(ShBasisSpec(1), random_coeffs(4, rng));
    auto gain = [&](const Angle &s, const Angle &f) {
        cplx acc{};
        for (std::size_t d = 0; d < 4; ++d)
            acc += std::polar(1.0, geo.phase(d, f) - geo.phase(d, s)) * elements[d](f);
        return acc;
    };
    const Table t = make_table(gain);
    const AntennaFit fit = fit_antenna_table(t.values, t.steer.angles, t.field.angles, 4, ShBasisSpec(1), geo);
    CHECK(fit.test_nmse < 1e-8);
    CHECK(fit.train_nmse < 1e-8);
    for (std::size_t d = 0; d < 4; ++d)
        CHECK((fit.model.field_factors[d].coeffs - elements[d].coeffs).norm() < 1e-8);
}

TEST_CASE("fit error falls with order for a dipole-like array") {
    ElementGeometry geo;
    for (double x : {-0.25, 0.25})
        for (double y : {-0.25, 0.25})
            geo.offsets_wavelengths.emplace_back(x, y, 0.0);
    // Half-wave dipole along x.
    auto dipole = [](const Angle &a) {
        const double ux = a.direction().x();
        const double s2 = 1.0 - ux * ux;
        return s2 < 1e-12 ? 0.0 : std::cos(pi / 2 * ux) / std::sqrt(s2);
    };
    auto gain = [&](const Angle &s, const Angle &f) {
        cplx acc{};
        for (std::size_t d = 0; d < 4; ++d)
            acc += std::polar(1.0, geo.phase(d, f) - geo.phase(d, s)) * dipole(f);
        return acc;
    };
    const Table t = make_table(gain);
    std::vector<double> train, test;
    for (int order = 0; order <= 6; ++order) {
        const AntennaFit fit = fit_antenna_table(t.values, t.steer.angles, t.field.angles, 4, ShBasisSpec(order), geo);
        train.push_back(fit.train_nmse);
        test.push_back(fit.test_nmse);
    }
    // Nested least squares: training error never grows with order.
    for (std::size_t i = 1; i < train.size(); ++i)
        CHECK(train[i] <= train[i - 1] * (1 + 1e-9));
    CHECK(test[3] < 0.05 * test[0]);
    CHECK(test[3] < 0.01);
}
