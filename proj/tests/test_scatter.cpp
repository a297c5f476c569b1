#include "dpemu/scatter.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <set>

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

Angle random_angle(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> az(-180, 180), z(-1, 1);
    return Angle{az(rng), rad2deg(std::acos(z(rng)))};
}

ScatterProfile random_profile(std::size_t K, int order, double extent, std::mt19937_64 &rng) {
    ScatterProfile p;
    p.spec = ShBasisSpec(order);
    std::uniform_real_distribution<double> u(-extent / 2, extent / 2);
    for (std::size_t k = 0; k < K; ++k)
        p.points.push_back({Vec3(u(rng), u(rng), u(rng)), random_coeffs(p.spec.P(), rng), random_coeffs(p.spec.P(), rng)});
    return p;
}

// Delay written out from the spherical formula rather than through steering_vector.
double delay_of(const Vec3 &x, const Angle &a) {
    const double ph = a.azimuth_deg * pi / 180, th = a.polar_deg * pi / 180;
    return (x.x() * std::cos(ph) * std::sin(th) + x.y() * std::sin(ph) * std::sin(th) + x.z() * std::cos(th)) /
           299792458.0;
}

} // namespace

TEST_CASE("scatterer delays") {
    ScatterPoint origin{Vec3::Zero(), VecC::Ones(1), VecC::Ones(1)};
    auto [a, b] = scatter_delays(origin, Angle{10, 20}, Angle{30, 40});
    CHECK(a == 0.0);
    CHECK(b == 0.0);

    ScatterPoint p{Vec3(3, 0, 0), VecC::Ones(1), VecC::Ones(1)};
    auto [ti, to] = scatter_delays(p, Angle{0, 90}, Angle{0, 90});
    CHECK(ti == Approx(1.000692285594456e-08).epsilon(1e-14));
    CHECK(ti == to);
}

TEST_CASE("scatter response") {
    ScatterProfile iso;
    iso.spec = ShBasisSpec(0);
    CHECK(scatter_response(iso, Angle{0, 0}, Angle{0, 0}).empty());
    iso.points.push_back(ScatterProfile::isotropic_point(iso.spec, Vec3::Zero()));
    const auto taps = scatter_response(iso, Angle{12, 34}, Angle{-56, 78});
    REQUIRE(taps.size() == 1);
    CHECK(taps[0].net_delay == 0.0);
    CHECK(std::abs(taps[0].weight - 1.0) < 1e-14);
}

TEST_CASE("separable response equals the general point-scattering form") {
    std::mt19937_64 rng(1);
    const ScatterProfile prof = random_profile(5, 3, 4.0, rng);
    for (int i = 0; i < 100; ++i) {
        const Angle ti = random_angle(rng), to = random_angle(rng);
        const auto taps = scatter_response(prof, ti, to);
        REQUIRE(taps.size() == 5);
        for (std::size_t k = 0; k < 5; ++k) {
            const ScatterPoint &p = prof.points[k];
            const cplx sigma = ShFunction(prof.spec, p.in_coeffs)(ti) * ShFunction(prof.spec, p.out_coeffs)(to);
            const double net = delay_of(p.location, ti) - delay_of(p.location, to);
            CHECK(std::abs(taps[k].weight - sigma) <= 1e-12 * std::max(1.0, std::abs(sigma)));
            CHECK(taps[k].net_delay == Approx(net).margin(1e-22));
        }
    }
}

TEST_CASE("rotation covariance") {
    std::mt19937_64 rng(2);
    const ScatterProfile prof = swerling_profile(1, 12, 10.0, 5);
    for (int i = 0; i < 20; ++i) {
        const Mat3 R = random_rotation(rng);
        const ScatterProfile rot = rotate_locations(prof, R);
        const Angle ti = random_angle(rng), to = random_angle(rng);
        const Angle rti = Angle::from_direction(R * ti.direction());
        const Angle rto = Angle::from_direction(R * to.direction());
        const auto a = scatter_response(prof, ti, to);
        const auto b = scatter_response(rot, rti, rto);
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].net_delay == Approx(b[k].net_delay).margin(1e-20));
            CHECK(std::abs(a[k].weight - b[k].weight) < 1e-12);
        }
    }
}

TEST_CASE("profile storage and limits") {
    std::mt19937_64 rng(3);
    const ScatterProfile p = random_profile(16, 15, 1.0, rng);
    CHECK(p.spec.P() == 256);
    CHECK(p.storage() == 16u * (2u * 256u + 3u));
    CHECK_NOTHROW(p.validate());
    ScatterProfile q = p;
    q.points.push_back(q.points.front());
    CHECK_THROWS_AS(q.validate(), Error);
}

namespace {

std::vector<double> band() {
    std::vector<double> f;
    for (int i = 0; i <= 20; ++i)
        f.push_back(1e9 + 50e6 * i);
    return f;
}

} // namespace

TEST_CASE("OMP recovers on-grid isotropic scatterers") {
    const double lambda_min = speed_of_light / 2e9;
    const std::vector<Vec3> grid = cubic_grid(5, lambda_min / 2);
    const ShBasisSpec spec(1);
    ScatterProfile truth;
    truth.spec = spec;
    const std::size_t picks[] = {7, 62, 111};
    const cplx amps[] = {1.0, cplx(0.4, 0.6), cplx(-0.7, 0.2)};
    for (int i = 0; i < 3; ++i)
        truth.points.push_back(ScatterProfile::isotropic_point(spec, grid[picks[i]], amps[i]));
    const SphereGrid angles = SphereGrid::quadrature(6, 12);
    const MonostaticTable table = synthesize_monostatic(truth, band(), angles.angles);

    const OmpFit fit = omp_fit_monostatic(table, grid, 3, spec);
    const std::set<std::size_t> got(fit.selected.begin(), fit.selected.end());
    CHECK(got == std::set<std::size_t>{7, 62, 111});
    CHECK(fit.residual_energy / table.energy() < 1e-8);

    // Same input, same answer.
    const OmpFit again = omp_fit_monostatic(table, grid, 3, spec);
    CHECK(again.selected == fit.selected);

    // The fitted profile reproduces the table.
    const MonostaticTable re = synthesize_monostatic(fit.profile, band(), angles.angles);
    CHECK((re.values - table.values).norm() / table.values.norm() < 1e-6);

    const OmpFit none = omp_fit_monostatic(table, grid, 0, spec);
    CHECK(none.profile.empty());
    CHECK(none.residual_energy == Approx(table.energy()));
}

TEST_CASE("OMP error falls with the point count") {
    std::mt19937_64 rng(4);
    const double lambda_min = speed_of_light / 2e9;
    const std::vector<Vec3> grid = cubic_grid(5, lambda_min / 2);
    const SphereGrid angles = SphereGrid::quadrature(6, 12);
    // Extended target: a dense line of off-grid scatterers.
    MonostaticTable table;
    table.frequencies = band();
    table.angles = angles.angles;
    table.values = MatC::Zero(21, static_cast<Eigen::Index>(angles.size()));
    for (int s = 0; s < 30; ++s) {
        const Vec3 x(-0.14 + 0.28 * s / 29.0, 0.01 * std::sin(s), 0.0);
        for (std::size_t a = 0; a < angles.size(); ++a)
            for (std::size_t f = 0; f < 21; ++f)
                table.values(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(a)) +=
                    std::polar(1.0 / 30, -two_pi * table.frequencies[f] * 2 * x.dot(steering_vector(angles.angles[a])));
    }
    const OmpFit fit = omp_fit_monostatic(table, grid, 8, ShBasisSpec(1));
    REQUIRE(fit.mse_history.size() == 8);
    for (std::size_t i = 1; i < fit.mse_history.size(); ++i)
        CHECK(fit.mse_history[i] <= fit.mse_history[i - 1] * (1 + 1e-12));
    CHECK(fit.mse_history.back() < fit.mse_history.front());
}

TEST_CASE("OMP rejects undersized tables") {
    MonostaticTable t;
    t.frequencies = {1e9, 1.1e9};
    t.angles = {Angle{0, 10}, Angle{0, 20}};
    t.values = MatC::Ones(2, 2);
    const std::vector<Vec3> grid{Vec3::Zero()};
    try {
        omp_fit_monostatic(t, grid, 1, ShBasisSpec(2));
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::InsufficientData);
    }
}

namespace {

std::vector<BistaticSample> bistatic_data(const ScatterProfile &truth, std::mt19937_64 &rng, int pairs) {
    std::vector<std::pair<Angle, Angle>> ap;
    for (int i = 0; i < pairs; ++i)
        ap.emplace_back(random_angle(rng), random_angle(rng));
    const std::vector<double> freqs{1e9, 1.25e9, 1.5e9, 1.75e9, 2e9};
    return synthesize_bistatic(truth, ap, freqs);
}

std::vector<Vec3> locations_of(const ScatterProfile &p) {
    std::vector<Vec3> v;
    for (const auto &pt : p.points)
        v.push_back(pt.location);
    return v;
}

} // namespace

TEST_CASE("bilinear fit on separable truth") {
    std::mt19937_64 rng(12);
    const ScatterProfile truth = random_profile(3, 1, 0.3, rng);
    const auto data = bistatic_data(truth, rng, 80);
    const BilinearFit fit = bilinear_fit_bistatic(data, locations_of(truth), truth.spec, 50);
    CHECK(fit.objective.back() < 1e-10);
    for (std::size_t i = 1; i < fit.objective.size(); ++i)
        CHECK(fit.objective[i] <= fit.objective[i - 1] * (1 + 1e-9) + 1e-15);
    for (int i = 0; i < 30; ++i) {
        const Angle ti = random_angle(rng), to = random_angle(rng);
        const auto a = scatter_response(truth, ti, to);
        const auto b = scatter_response(fit.profile, ti, to);
        for (std::size_t k = 0; k < a.size(); ++k)
            CHECK(std::abs(a[k].weight - b[k].weight) <= 1e-6 * std::abs(a[k].weight));
    }
    // Balanced factors.
    for (const auto &p : fit.profile.points)
        CHECK(p.in_coeffs.norm() == Approx(p.out_coeffs.norm()).epsilon(1e-9));
}

TEST_CASE("bilinear fit of one isotropic point converges at once") {
    std::mt19937_64 rng(13);
    ScatterProfile truth;
    truth.spec = ShBasisSpec(1);
    truth.points.push_back(ScatterProfile::isotropic_point(truth.spec, Vec3(0.05, -0.02, 0.1), cplx(0.3, 0.8)));
    const auto data = bistatic_data(truth, rng, 20);
    const BilinearFit fit = bilinear_fit_bistatic(data, locations_of(truth), truth.spec, 1);
    REQUIRE(fit.objective.size() == 1);
    CHECK(fit.objective[0] < 1e-20);
}

TEST_CASE("bilinear objective never increases") {
    std::mt19937_64 rng(14);
    const ScatterProfile truth = random_profile(4, 2, 0.3, rng);
    auto data = bistatic_data(truth, rng, 60);
    std::normal_distribution<double> n(0.0, 0.05);
    for (auto &s : data)
        s.value += cplx(n(rng), n(rng));
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const BilinearFit fit = bilinear_fit_bistatic(data, locations_of(truth), truth.spec, 15, AlsInit::Random, seed);
        for (std::size_t i = 1; i < fit.objective.size(); ++i)
            CHECK(fit.objective[i] <= fit.objective[i - 1] * (1 + 1e-10));
    }
}

TEST_CASE("Swerling profiles") {
    const ScatterProfile a = swerling_profile(1, 16, 7.5, 42);
    const ScatterProfile b = swerling_profile(1, 16, 7.5, 42);
    REQUIRE(a.K() == 16);
    for (std::size_t k = 0; k < 16; ++k) {
        CHECK(a.points[k].location == b.points[k].location);
        CHECK(a.points[k].in_coeffs == b.points[k].in_coeffs);
        CHECK(a.points[k].location.cwiseAbs().maxCoeff() <= 3.75);
    }
    const ScatterProfile c = swerling_profile(3, 12, 7.5, 42);
    const VecC psi = sh_eval(c.spec, Angle{0, 0});
    double total = 0, first = 0;
    for (std::size_t k = 0; k < c.K(); ++k) {
        const double pw = std::norm(c.alpha(k, psi) * c.beta(k, psi));
        total += pw;
        if (k == 0)
            first = pw;
    }
    CHECK(first / total >= 0.9 - 1e-12);
    CHECK(total == Approx(1.0));
    CHECK_THROWS_AS(swerling_profile(1, 5, 1.0, 0), Error);
    CHECK_THROWS_AS(swerling_profile(1, 20, 1.0, 0), Error);
}

TEST_CASE("hemispherical pattern") {
    const ShFunction h = heaviside_pattern(ShBasisSpec(15), Vec3(0, 0, 1));
    CHECK(std::abs(h(Angle{0, 30}) - 1.0) < 0.05);
    CHECK(std::abs(h(Angle{0, 150})) < 0.05);
    CHECK(std::abs(h(Angle{45, 90}) - 0.5) < 0.05);
}
