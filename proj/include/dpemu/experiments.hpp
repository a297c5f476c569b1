// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// End-to-end experiments: emulate, analyze, compare with a baseline.
//
// Every emulated experiment is defined at a desk-scale sample rate.  A scale
// factor F multiplies fs, bandwidths and speeds and divides distances and
// durations, so delays and Doppler shifts keep their size in samples.

#pragma once

#include "dpemu/analysis.hpp"
#include "dpemu/engine.hpp"
#include "dpemu/fdelay.hpp"
#include "dpemu/io/json_io.hpp"
#include "dpemu/opcount.hpp"
#include "dpemu/random_scenario.hpp"
#include "dpemu/scatter.hpp"
#include "dpemu/scenario.hpp"
#include "dpemu/sphharm.hpp"

#include <json.hpp>

#include <chrono>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace dpemu {

struct ExperimentOptions {
    std::filesystem::path out_dir;  // empty: nothing written
    std::uint64_t seed = 1;
    double fs_scale = 1.0;
    EngineKind engine = EngineKind::Direct;
    std::size_t workers = 1;
};

/// One checked quantity.  `relation` is "<", "<=", ">" or ">=".
struct Metric {
    std::string name;
    double value = 0.0;
    std::string relation;
    double threshold = 0.0;

    bool pass() const {
        if (relation == "<")
            return value < threshold;
        if (relation == "<=")
            return value <= threshold;
        if (relation == ">")
            return value > threshold;
        return value >= threshold;
    }
};

struct ExperimentResult {
    std::string name;
    std::vector<Metric> metrics;
    std::vector<std::pair<std::string, double>> info;  // reported, not checked
    double seconds = 0.0;

    bool pass() const {
        for (const Metric &m : metrics)
            if (!m.pass())
                return false;
        return true;
    }

    const Metric &metric(const std::string &n) const {
        for (const Metric &m : metrics)
            if (m.name == n)
                return m;
        throw Error(ErrorKind::InvalidArgument, "no metric named " + n);
    }

    std::string summary() const {
        std::ostringstream s;
        s.precision(6);
        s << name << ": " << (pass() ? "PASS" : "FAIL") << " (" << seconds << " s)\n";
        for (const Metric &m : metrics)
            s << "  " << (m.pass() ? "ok   " : "FAIL ") << m.name << " = " << m.value << " (want " << m.relation << " "
              << m.threshold << ")\n";
        for (const auto &[k, v] : info)
            s << "  info " << k << " = " << v << "\n";
        return s.str();
    }

    nlohmann::json to_json() const {
        nlohmann::json j{{"name", name}, {"pass", pass()}, {"seconds", seconds}, {"metrics", nlohmann::json::array()}};
        for (const Metric &m : metrics)
            j["metrics"].push_back(
                {{"name", m.name}, {"value", m.value}, {"relation", m.relation}, {"threshold", m.threshold}, {"pass", m.pass()}});
        for (const auto &[k, v] : info)
            j["info"][k] = v;
        return j;
    }
};

namespace detail {

inline void check_scale(double F) {
    if (!(F > 0.0) || !std::isfinite(F))
        throw Error(ErrorKind::ConfigError, "fs scale must be positive");
}

inline std::filesystem::path prepare_out(const ExperimentOptions &o) {
    if (!o.out_dir.empty())
        std::filesystem::create_directories(o.out_dir);
    return o.out_dir;
}

inline void finish(ExperimentResult &r, const ExperimentOptions &o, std::chrono::steady_clock::time_point t0) {
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.out_dir.empty()) {
        std::ofstream(o.out_dir / (r.name + "_summary.json")) << r.to_json().dump(2) << "\n";
    }
}

inline SampleBlock pulse_template(const WaveformSpec &w, double fs) {
    SampleBlock t;
    const Waveform wf(w, fs);
    const auto n = static_cast<std::int64_t>(std::llround(w.width_s * fs));
    for (std::int64_t i = 0; i < n; ++i)
        t.data.push_back(wf.at(i + static_cast<std::int64_t>(std::llround(w.start_s * fs))));
    t.start_index = static_cast<std::int64_t>(std::llround(w.start_s * fs));
    return t;
}

} // namespace detail

/// Matched-filters a stream pulse by pulse as it arrives.  Pulse p is
/// searched over lags[p] = [lo, hi] in absolute sample indices; windows must
/// be in increasing order.
class PulseCollector {
public:
    PulseCollector(SampleBlock tmpl, std::vector<std::pair<std::int64_t, std::int64_t>> lags)
        : tmpl_(std::move(tmpl)), lags_(std::move(lags)) {
        tmpl_.start_index = 0;
        buf_.start_index = lags_.empty() ? 0 : lags_.front().first;
    }

    void push(const SampleBlock &blk) {
        if (buf_.data.empty())
            buf_.start_index = std::max(buf_.start_index, blk.start_index);
        for (std::size_t i = 0; i < blk.size(); ++i) {
            const std::int64_t n = blk.start_index + static_cast<std::int64_t>(i);
            if (n >= buf_.end_index())
                buf_.data.push_back(blk.data[i]);
        }
        const auto T = static_cast<std::int64_t>(tmpl_.size());
        while (peaks_.size() < lags_.size() && lags_[peaks_.size()].second + T <= buf_.end_index()) {
            const auto [lo, hi] = lags_[peaks_.size()];
            peaks_.push_back(matched_filter(buf_, tmpl_, std::pair{lo, hi}).peak_mag);
            if (peaks_.size() < lags_.size()) {
                const std::int64_t keep = lags_[peaks_.size()].first;
                if (keep > buf_.start_index) {
                    const auto drop = static_cast<std::size_t>(std::min<std::int64_t>(keep - buf_.start_index,
                                                                                      static_cast<std::int64_t>(buf_.size())));
                    buf_.data.erase(buf_.data.begin(), buf_.data.begin() + static_cast<std::ptrdiff_t>(drop));
                    buf_.start_index += static_cast<std::int64_t>(drop);
                }
            }
        }
    }

    const std::vector<double> &peaks() const noexcept { return peaks_; }

private:
    SampleBlock tmpl_;
    std::vector<std::pair<std::int64_t, std::int64_t>> lags_;
    SampleBlock buf_;
    std::vector<double> peaks_;
};

// ---------------------------------------------------------------------------
// Operation counts

inline ExperimentResult experiment_opcount(const ExperimentOptions &o = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = detail::prepare_out(o);
    ExperimentResult r{"opcount", {}, {}, 0.0};
    const std::vector<std::int64_t> Ns{4, 8, 16, 32}, Ks{1, 4, 16};
    const std::int64_t R = 4;

    std::vector<double> cn, ck, ct, cd;
    for (std::int64_t N : Ns)
        for (std::int64_t K : Ks) {
            cn.push_back(static_cast<double>(N));
            ck.push_back(static_cast<double>(K));
            ct.push_back(count_ops(EngineKind::Tdl, N, K, R).per_sample_ops);
            cd.push_back(count_ops(EngineKind::Direct, N, K, R).per_sample_ops);
        }
    const double tdl = count_ops(EngineKind::Tdl, 200, 16, R).per_sample_ops;
    const double direct = count_ops(EngineKind::Direct, 200, 16, R).per_sample_ops;
    cn.push_back(200);
    ck.push_back(16);
    ct.push_back(tdl);
    cd.push_back(direct);
    if (!out.empty())
        write_csv((out / "opcount.csv").string(), {"N", "K", "tdl_ops", "direct_ops"}, {cn, ck, ct, cd});

    // The running engines must charge exactly what the formulas say.
    RandomScenarioOptions ro;
    ro.N = 4;
    ro.K = 4;
    const Scenario sc = random_scenario(o.seed, ro);
    double worst = 0.0;
    for (EngineKind e : {EngineKind::Direct, EngineKind::Tdl}) {
        RunOptions opt;
        opt.engine = e;
        const RunResult res = run(sc, opt);
        const double want = count_ops(e, 4, 4, sc.taps).per_sample_ops;
        worst = std::max(worst, std::abs(res.ops.per_sample_ops - want) / want);
    }

    const ScalingFit ft = scaling_fit(EngineKind::Tdl, Ns, Ks, R);
    const ScalingFit fd = scaling_fit(EngineKind::Direct, Ns, Ks, R);
    r.metrics = {{"tdl_relative_error", std::abs(tdl - 5.07e8) / 5.07e8, "<=", 0.10},
                 {"direct_relative_error", std::abs(direct - 5.25e6) / 5.25e6, "<=", 0.10},
                 {"ratio", tdl / direct, ">=", 90.0},
                 {"tdl_r2", ft.r2, ">", 0.999},
                 {"direct_r2", fd.r2, ">", 0.999},
                 {"engine_counter_mismatch", worst, "<=", 0.0}};
    r.info = {{"tdl_ops", tdl}, {"direct_ops", direct}};
    detail::finish(r, o, t0);
    return r;
}

// ---------------------------------------------------------------------------
// Fractional-delay filter table

struct FilterTableRow {
    FdMethod method;
    int R;
    double pct;
    FilterMetrics measured;
    FilterMetrics reference;
};

/// Reference delay accuracy (ns) and amplitude ripple for the 16 cells.
inline std::vector<FilterTableRow> filter_table_reference() {
    const double pcts[] = {20, 25, 30, 33};
    struct Ref {
        FdMethod m;
        int R;
        double delay[4];
        double ripple[4];
    };
    const Ref refs[] = {{FdMethod::Legendre, 4, {0.338, 0.254, 0.198, 0.172}, {0.62, 0.55, 0.49, 0.45}},
                        {FdMethod::Legendre, 8, {0.301, 0.215, 0.159, 0.133}, {0.47, 0.38, 0.31, 0.27}},
                        {FdMethod::Spline, 4, {0.339, 0.254, 0.198, 0.172}, {0.56, 0.48, 0.40, 0.36}},
                        {FdMethod::Spline, 8, {0.307, 0.220, 0.163, 0.137}, {0.43, 0.34, 0.27, 0.24}}};
    std::vector<FilterTableRow> rows;
    for (const Ref &ref : refs)
        for (int i = 0; i < 4; ++i)
            rows.push_back({ref.m, ref.R, pcts[i], {}, {ref.delay[i], ref.ripple[i]}});
    return rows;
}

inline ExperimentResult experiment_filtertable(const ExperimentOptions &o = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = detail::prepare_out(o);
    ExperimentResult r{"filtertable", {}, {}, 0.0};
    std::vector<FilterTableRow> rows = filter_table_reference();
    double worst = 0.0;
    for (FilterTableRow &row : rows) {
        row.measured = measure(row.method, row.R, row.pct);
        worst = std::max({worst, std::abs(row.measured.delay_accuracy_ns / row.reference.delay_accuracy_ns - 1.0),
                          std::abs(row.measured.amplitude_ripple / row.reference.amplitude_ripple - 1.0)});
    }
    auto find = [&](FdMethod m, int R, double pct) -> const FilterMetrics & {
        for (const FilterTableRow &row : rows)
            if (row.method == m && row.R == R && row.pct == pct)
                return row.measured;
        throw Error(ErrorKind::InvalidArgument, "missing table cell");
    };
    int violations = 0;
    const double pcts[] = {20, 25, 30, 33};
    for (FdMethod m : {FdMethod::Spline, FdMethod::Legendre}) {
        for (int i = 0; i < 4; ++i) {
            const FilterMetrics &a4 = find(m, 4, pcts[i]), &a8 = find(m, 8, pcts[i]);
            violations += a8.delay_accuracy_ns > a4.delay_accuracy_ns;
            violations += a8.amplitude_ripple > a4.amplitude_ripple;
            if (i > 0)
                for (int R : {4, 8}) {
                    const FilterMetrics &cur = find(m, R, pcts[i]), &prev = find(m, R, pcts[i - 1]);
                    violations += cur.delay_accuracy_ns > prev.delay_accuracy_ns;
                    violations += cur.amplitude_ripple > prev.amplitude_ripple;
                }
        }
    }
    if (!out.empty()) {
        std::ofstream f(out / "filtertable.csv");
        f << "method,R,oversample_pct,delay_accuracy_ns,amplitude_ripple,reference_delay_ns,reference_ripple\n";
        for (const FilterTableRow &row : rows)
            f << to_string(row.method) << "," << row.R << "," << row.pct << "," << row.measured.delay_accuracy_ns << ","
              << row.measured.amplitude_ripple << "," << row.reference.delay_accuracy_ns << ","
              << row.reference.amplitude_ripple << "\n";
    }
    r.metrics = {{"cells", static_cast<double>(rows.size()), ">=", 16.0},
                 {"worst_relative_error", worst, "<=", 0.30},
                 {"ordering_violations", static_cast<double>(violations), "<=", 0.0}};
    detail::finish(r, o, t0);
    return r;
}

// ---------------------------------------------------------------------------
// Interferometry

struct InterferometryConfig {
    double fs_hz = 5e6;
    double fc_hz = 1e9;
    double separation_m = 4000.0;
    double reflector_range_m = 8000.0;
    double speed_mps = 100.0;
    double pulse_s = 20e-6;
    double pri_s = 200e-6;
    double duration_s = 2.0;
    double update_interval_s = 1.3e-3;
    FdMethod filter = FdMethod::Spline;
    int taps = 4;

    InterferometryConfig scaled(double F) const {
        detail::check_scale(F);
        InterferometryConfig c = *this;
        c.fs_hz *= F;
        c.separation_m /= F;
        c.reflector_range_m /= F;
        c.speed_mps *= F;
        c.pulse_s /= F;
        c.pri_s /= F;
        c.duration_s /= F;
        c.update_interval_s /= F;
        return c;
    }

    InterferometryGeometry geometry() const {
        InterferometryGeometry g;
        const double h = 0.5 * separation_m;
        g.nodes = {Vec3(-h, 0.0, 0.0), Vec3(h, 0.0, 0.0)};
        g.reflector = Vec3(0.0, std::sqrt(reflector_range_m * reflector_range_m - h * h), 0.0);
        g.reflector_velocity = Vec3(speed_mps, 0.0, 0.0);
        g.fc_hz = fc_hz;
        return g;
    }
};

/// Two pulsing transceivers muted toward each other and one moving point reflector.
inline Scenario interferometry_scenario(const InterferometryConfig &c) {
    const InterferometryGeometry g = c.geometry();
    Scenario sc;
    sc.fc_hz = c.fc_hz;
    sc.fs_hz = c.fs_hz;
    sc.update_interval_s = c.update_interval_s;
    sc.duration_s = c.duration_s;
    sc.max_range_m = 1.25 * c.reflector_range_m;
    sc.filter = c.filter;
    sc.taps = c.taps;
    WaveformSpec pulse;
    pulse.kind = WaveKind::PulseTrain;
    pulse.width_s = c.pulse_s;
    pulse.period_s = c.pri_s;
    const char *ids[] = {"west", "east"};
    for (int i = 0; i < 2; ++i) {
        NodeModel n;
        n.id = ids[i];
        n.trajectory = Trajectory::fixed(g.nodes[static_cast<std::size_t>(i)]);
        n.tx = pulse;
        n.mute = {ids[1 - i]};
        sc.nodes.push_back(n);
    }
    NodeModel refl;
    refl.id = "reflector";
    refl.trajectory = Trajectory::fixed(g.reflector, g.reflector_velocity);
    refl.profile.spec = ShBasisSpec(0);
    refl.profile.points = {ScatterProfile::isotropic_point(refl.profile.spec, Vec3::Zero())};
    sc.nodes.push_back(refl);
    return sc;
}

struct InterferometryCurves {
    std::vector<double> t_emit;
    std::array<std::vector<double>, 2> emulated;
    std::array<std::vector<double>, 2> baseline;
    std::array<double, 2> nrmse{};
};

/// Emulates the scenario and matched-filters every complete pulse return at both transceivers.
inline InterferometryCurves interferometry_curves(const InterferometryConfig &c, EngineKind engine = EngineKind::Direct,
                                                  std::size_t workers = 1) {
    const Scenario sc = interferometry_scenario(c);
    const InterferometryGeometry g = c.geometry();
    const double fs = c.fs_hz;
    const auto P = static_cast<std::int64_t>(std::llround(c.pri_s * fs));
    const SampleBlock tmpl = detail::pulse_template(*sc.nodes[0].tx, fs);
    const auto T = static_cast<std::int64_t>(tmpl.size());
    const std::int64_t total = sc.total_samples();
    const std::int64_t pad = sc.taps + 2;

    InterferometryCurves out;
    std::array<std::vector<std::pair<std::int64_t, std::int64_t>>, 2> lags;
    for (std::int64_t p = 0;; ++p) {
        const double te = static_cast<double>(p * P) / fs;
        std::array<std::pair<std::int64_t, std::int64_t>, 2> w;
        bool fits = true;
        for (std::size_t rx = 0; rx < 2; ++rx) {
            const auto paths = bounce_paths(g, rx, te);
            const double d0 = std::min(paths[0].delay_s, paths[1].delay_s) * fs;
            const double d1 = std::max(paths[0].delay_s, paths[1].delay_s) * fs;
            w[rx] = {p * P + static_cast<std::int64_t>(std::floor(d0)) - pad,
                     p * P + static_cast<std::int64_t>(std::ceil(d1)) + pad};
            fits = fits && w[rx].second + T <= total;
        }
        if (!fits)
            break;
        out.t_emit.push_back(te);
        for (std::size_t rx = 0; rx < 2; ++rx) {
            lags[rx].push_back(w[rx]);
            out.baseline[rx].push_back(two_path_baseline(g, rx, te, fs, c.pulse_s));
        }
    }

    std::array<PulseCollector, 2> col{PulseCollector(tmpl, lags[0]), PulseCollector(tmpl, lags[1])};
    RunOptions opt;
    opt.engine = engine;
    opt.workers = workers;
    opt.sink = [&](std::size_t node, const SampleBlock &blk) {
        if (node < 2)
            col[node].push(blk);
    };
    run(sc, opt);

    for (std::size_t rx = 0; rx < 2; ++rx) {
        std::vector<double> e = col[rx].peaks();
        std::vector<double> &b = out.baseline[rx];
        e.resize(b.size());
        const double em = *std::max_element(e.begin(), e.end());
        const double bm = *std::max_element(b.begin(), b.end());
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] = em > 0.0 ? e[i] / em : 0.0;
            b[i] = bm > 0.0 ? b[i] / bm : 0.0;
            num += (e[i] - b[i]) * (e[i] - b[i]);
            den += b[i] * b[i];
        }
        out.emulated[rx] = std::move(e);
        out.nrmse[rx] = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    }
    return out;
}

inline ExperimentResult experiment_interferometry(const ExperimentOptions &o = {},
                                                  const InterferometryConfig &base = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = detail::prepare_out(o);
    const InterferometryConfig c = base.scaled(o.fs_scale);
    const InterferometryCurves cv = interferometry_curves(c, o.engine, o.workers);
    if (!out.empty())
        write_csv((out / "interferometry.csv").string(),
                  {"t_emit_s", "emulated_west", "baseline_west", "emulated_east", "baseline_east"},
                  {cv.t_emit, cv.emulated[0], cv.baseline[0], cv.emulated[1], cv.baseline[1]});
    ExperimentResult r{"interferometry", {}, {}, 0.0};
    r.metrics = {{"nrmse", std::max(cv.nrmse[0], cv.nrmse[1]), "<", 0.02}};
    r.info = {{"pulses", static_cast<double>(cv.t_emit.size())}, {"nrmse_west", cv.nrmse[0]}, {"nrmse_east", cv.nrmse[1]}};
    detail::finish(r, o, t0);
    return r;
}

// ---------------------------------------------------------------------------
// Beam sweep

struct BeamSweepConfig {
    double fs_hz = 25e6;
    double fc_hz = 10e9;
    double range_m = 3000.0;
    double pulse_s = 2e-6;
    int angles = 91;
    int order = 3;
    int array_side = 13;
    double spacing_wavelengths = 0.5;
    double element_exponent = 1.5;
    int grid_polar = 16;
    int grid_azimuth = 32;
    /// Steering directions as (azimuth, elevation) in degrees.
    std::vector<std::pair<double, double>> steering{{3.67, 1.83}, {3.67, 69.7}};

    BeamSweepConfig scaled(double F) const {
        detail::check_scale(F);
        BeamSweepConfig c = *this;
        c.fs_hz *= F;
        c.range_m /= F;
        c.pulse_s /= F;
        return c;
    }
};

/// Azimuth/elevation to the library's azimuth/polar angle.
inline Angle from_az_el(double az_deg, double el_deg) { return Angle::normalized(az_deg, 90.0 - el_deg); }

/// Square array in the y-z plane facing +x; element offsets in wavelengths.
inline ElementGeometry planar_array(int side, double spacing) {
    ElementGeometry g;
    const double c = 0.5 * (side - 1);
    for (int i = 0; i < side; ++i)
        for (int j = 0; j < side; ++j)
            g.offsets_wavelengths.emplace_back(0.0, (i - c) * spacing, (j - c) * spacing);
    return g;
}

/// Backed element facing +x: ((1 + cos psi) / 2)^e with psi measured from +x.
inline double backed_element(const Angle &a, double exponent) {
    return std::pow(0.5 * (1.0 + a.direction().x()), exponent);
}

/// Synthetic steering table of the backed array and its fit with known geometry.
inline AntennaFit beam_sweep_antenna(const BeamSweepConfig &c) {
    const ElementGeometry geo = planar_array(c.array_side, c.spacing_wavelengths);
    const SphereGrid sg = SphereGrid::quadrature(c.grid_polar, c.grid_azimuth);
    const std::vector<Angle> &steer = sg.angles, &field = sg.angles;
    const auto D = static_cast<Eigen::Index>(geo.offsets_wavelengths.size());
    MatC Es(static_cast<Eigen::Index>(steer.size()), D), Ef(static_cast<Eigen::Index>(field.size()), D);
    for (std::size_t s = 0; s < steer.size(); ++s)
        for (Eigen::Index d = 0; d < D; ++d)
            Es(static_cast<Eigen::Index>(s), d) = std::polar(1.0, -geo.phase(static_cast<std::size_t>(d), steer[s]));
    for (std::size_t f = 0; f < field.size(); ++f) {
        const double g = backed_element(field[f], c.element_exponent);
        for (Eigen::Index d = 0; d < D; ++d)
            Ef(static_cast<Eigen::Index>(f), d) = g * std::polar(1.0, geo.phase(static_cast<std::size_t>(d), field[f]));
    }
    const MatC table = Es * Ef.transpose();
    return fit_antenna_table(table, steer, field, static_cast<int>(D), ShBasisSpec(c.order), geo);
}

struct BeamSweepCurves {
    std::vector<double> elevation_deg;
    std::vector<std::vector<double>> emulated;  // per steering
    std::vector<std::vector<double>> model;
    std::vector<double> max_error;
    AntennaFit fit;
};

inline BeamSweepCurves beam_sweep_curves(const BeamSweepConfig &c, EngineKind engine = EngineKind::Direct) {
    BeamSweepCurves out;
    out.fit = beam_sweep_antenna(c);
    const double fs = c.fs_hz;
    WaveformSpec pulse;
    pulse.kind = WaveKind::PulseTrain;
    pulse.width_s = c.pulse_s;
    pulse.period_s = 1.0;
    const SampleBlock tmpl = detail::pulse_template(pulse, fs);
    const double delay = c.range_m / speed_of_light * fs;
    const auto U = static_cast<std::int64_t>(std::ceil(delay)) + static_cast<std::int64_t>(tmpl.size()) + 32;

    for (int i = 0; i < c.angles; ++i)
        out.elevation_deg.push_back(90.0 - 180.0 * i / (c.angles - 1));
    for (const auto &[az, el] : c.steering) {
        const Angle steer = from_az_el(az, el);
        std::vector<double> em, mo;
        for (double e : out.elevation_deg) {
            const Angle look = from_az_el(0.0, e);
            Scenario sc;
            sc.fs_hz = fs;
            sc.fc_hz = c.fc_hz;
            sc.update_interval_s = static_cast<double>(U) / fs;
            sc.duration_s = static_cast<double>(U) / fs;
            sc.max_range_m = 1.5 * c.range_m;
            NodeModel tx;
            tx.id = "array";
            tx.antenna = out.fit.model;
            tx.antenna_ref = "inline";
            tx.steer = {TimedValue<Angle>{0.0, steer}};
            tx.tx = pulse;
            NodeModel rx;
            rx.id = "probe";
            rx.trajectory = Trajectory::fixed(c.range_m * look.direction());
            sc.nodes = {tx, rx};
            RunOptions opt;
            opt.engine = engine;
            const RunResult res = run(sc, opt);
            const auto lo = static_cast<std::int64_t>(std::floor(delay)) - sc.taps - 2;
            const auto hi = static_cast<std::int64_t>(std::ceil(delay)) + sc.taps + 2;
            em.push_back(matched_filter(res.receivers[1], tmpl, std::pair{lo, hi}).peak_mag);
            mo.push_back(std::abs(antenna_gain(out.fit.model, steer, look)));
        }
        const double emax = *std::max_element(em.begin(), em.end());
        const double mmax = *std::max_element(mo.begin(), mo.end());
        double worst = 0.0;
        for (std::size_t i = 0; i < em.size(); ++i) {
            em[i] /= emax;
            mo[i] /= mmax;
            worst = std::max(worst, std::abs(em[i] - mo[i]));
        }
        out.emulated.push_back(std::move(em));
        out.model.push_back(std::move(mo));
        out.max_error.push_back(worst);
    }
    return out;
}

inline ExperimentResult experiment_beamsweep(const ExperimentOptions &o = {}, const BeamSweepConfig &base = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = detail::prepare_out(o);
    const BeamSweepCurves cv = beam_sweep_curves(base.scaled(o.fs_scale), o.engine);
    ExperimentResult r{"beamsweep", {}, {}, 0.0};
    std::vector<std::string> header{"elevation_deg"};
    std::vector<std::vector<double>> cols{cv.elevation_deg};
    for (std::size_t s = 0; s < cv.emulated.size(); ++s) {
        header.push_back("emulated_" + std::to_string(s));
        header.push_back("model_" + std::to_string(s));
        cols.push_back(cv.emulated[s]);
        cols.push_back(cv.model[s]);
        r.metrics.push_back({"max_error_steer_" + std::to_string(s), cv.max_error[s], "<", 0.02});
    }
    if (!out.empty()) {
        write_csv((out / "beamsweep.csv").string(), header, cols);
        save_antenna(out / "beamsweep_antenna.json", cv.fit.model);
    }
    r.info = {{"fit_train_nmse", cv.fit.train_nmse}, {"fit_test_nmse", cv.fit.test_nmse}};
    detail::finish(r, o, t0);
    return r;
}

// ---------------------------------------------------------------------------
// Complex scattering spectrum

struct ComplexScatterConfig {
    double fs_hz = 25e6;
    double fc_hz = 1e9;
    double bandwidth_hz = 5e6;
    double chirp_s = 20e-6;
    double range_m = 3000.0;
    double span_m = 60.0;
    int order = 15;

    ComplexScatterConfig scaled(double F) const {
        detail::check_scale(F);
        ComplexScatterConfig c = *this;
        c.fs_hz *= F;
        c.bandwidth_hz *= F;
        c.chirp_s /= F;
        c.range_m /= F;
        c.span_m /= F;
        return c;
    }
};

/// Sixteen points laid out like an aircraft seen broadside: fuselage along x,
/// wings along y, two tail points.  Each point scatters into a Heaviside lobe
/// about a random axis leaning toward +y, with a random complex weight.
inline ScatterProfile aircraft_profile(const ComplexScatterConfig &c, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double s = c.span_m / 60.0;
    std::vector<Vec3> locs;
    for (int i = 0; i < 8; ++i)
        locs.emplace_back((-30.0 + 60.0 * i / 7.0) * s, 0.0, 0.0);
    for (double y : {-25.0, -17.0, -9.0, 9.0, 17.0, 25.0})
        locs.emplace_back(2.0 * s, y * s, 0.0);
    locs.emplace_back(-28.0 * s, -8.0 * s, 5.0 * s);
    locs.emplace_back(-28.0 * s, 8.0 * s, 5.0 * s);

    ScatterProfile p;
    p.spec = ShBasisSpec(c.order);
    for (const Vec3 &loc : locs) {
        const Vec3 axis = (Vec3(0.0, 1.0, 0.0) + 0.6 * Vec3(g(rng), g(rng), g(rng))).normalized();
        const cplx w = std::polar(0.5 + 0.5 * u01(rng), two_pi * u01(rng));
        ScatterPoint pt;
        pt.location = loc;
        pt.in_coeffs = w * heaviside_pattern(p.spec, axis).coeffs;
        pt.out_coeffs = heaviside_pattern(p.spec, -axis).coeffs;
        p.points.push_back(pt);
    }
    return p;
}

inline Scenario complex_scatter_scenario(const ComplexScatterConfig &c, const ScatterProfile &profile) {
    Scenario sc;
    sc.fs_hz = c.fs_hz;
    sc.fc_hz = c.fc_hz;
    const double extra = 2.0 * c.span_m / speed_of_light * c.fs_hz;
    const auto len = static_cast<std::int64_t>(std::ceil(2.0 * c.range_m / speed_of_light * c.fs_hz + c.chirp_s * c.fs_hz +
                                                         2.0 * extra)) + 64;
    sc.update_interval_s = static_cast<double>(len) / c.fs_hz;
    sc.duration_s = sc.update_interval_s;
    sc.max_range_m = 1.5 * c.range_m;
    NodeModel radar;
    radar.id = "radar";
    WaveformSpec chirp;
    chirp.kind = WaveKind::Lfm;
    chirp.bandwidth_hz = c.bandwidth_hz;
    chirp.width_s = c.chirp_s;
    radar.tx = chirp;
    NodeModel target;
    target.id = "target";
    target.trajectory = Trajectory::fixed(Vec3(0.0, c.range_m, 0.0));
    target.profile = profile;
    sc.nodes = {radar, target};
    return sc;
}

struct ComplexScatterSpectra {
    std::vector<double> freqs;
    std::vector<double> emulated;
    std::vector<double> analytic;
    double max_deviation = 0.0;  // in band, peak-normalized
};

inline ComplexScatterSpectra complex_scatter_spectra(const ComplexScatterConfig &c, std::uint64_t seed,
                                                     EngineKind engine = EngineKind::Direct) {
    const ScatterProfile prof = aircraft_profile(c, seed);
    const Scenario sc = complex_scatter_scenario(c, prof);
    RunOptions opt;
    opt.engine = engine;
    const RunResult res = run(sc, opt);
    const SampleBlock &rx = res.receivers[0];

    std::size_t nfft = 1;
    while (nfft < 2 * rx.size())
        nfft *= 2;
    const Periodogram pe = periodogram(rx, c.fs_hz, nfft);

    // Analytic: the chirp's spectrum through the scatterers' exact delays and weights.
    const SampleBlock tx = waveform_gen(*sc.nodes[0].tx, c.fs_hz, c.chirp_s);
    const Periodogram ps = periodogram(tx, c.fs_hz, nfft);
    const Vec3 d = sc.nodes[1].trajectory.waypoints[0].position - sc.nodes[0].trajectory.waypoints[0].position;
    const Angle in = Angle::from_direction(d), out = Angle::from_direction(-d);
    const VecC psi_in = sh_eval(prof.spec, in), psi_out = sh_eval(prof.spec, out);
    std::vector<cplx> w;
    std::vector<double> T;
    for (std::size_t k = 0; k < prof.K(); ++k) {
        const Vec3 &loc = prof.points[k].location;
        T.push_back((2.0 * d.norm() + loc.dot(in.direction()) - loc.dot(out.direction())) / speed_of_light);
        w.push_back(prof.alpha(k, psi_in) * prof.beta(k, psi_out));
    }

    ComplexScatterSpectra s;
    s.freqs = pe.freqs;
    s.emulated = pe.power;
    s.analytic.resize(nfft);
    for (std::size_t i = 0; i < nfft; ++i) {
        cplx H{};
        for (std::size_t k = 0; k < w.size(); ++k)
            H += w[k] * std::polar(1.0, -two_pi * (s.freqs[i] + c.fc_hz) * T[k]);
        s.analytic[i] = ps.power[i] * std::norm(H);
    }
    for (auto *v : {&s.emulated, &s.analytic}) {
        const double m = *std::max_element(v->begin(), v->end());
        for (double &x : *v)
            x /= m;
    }
    for (std::size_t i = 0; i < nfft; ++i)
        if (std::abs(s.freqs[i]) <= 0.5 * c.bandwidth_hz)
            s.max_deviation = std::max(s.max_deviation, std::abs(s.emulated[i] - s.analytic[i]));
    return s;
}

inline ExperimentResult experiment_complexscatter(const ExperimentOptions &o = {}, const ComplexScatterConfig &base = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = detail::prepare_out(o);
    const ComplexScatterSpectra s = complex_scatter_spectra(base.scaled(o.fs_scale), o.seed, o.engine);
    if (!out.empty())
        write_csv((out / "complexscatter.csv").string(), {"freq_hz", "emulated", "analytic"},
                  {s.freqs, s.emulated, s.analytic});
    ExperimentResult r{"complexscatter", {}, {}, 0.0};
    r.metrics = {{"max_inband_deviation", s.max_deviation, "<", 0.05}};
    detail::finish(r, o, t0);
    return r;
}

// ---------------------------------------------------------------------------
// Swerling 1 fluctuation

struct SwerlingConfig {
    double fs_hz = 10e6;
    double fc_hz = 1e9;
    double range_m = 3000.0;
    double extent_m = 10.0;
    std::size_t points = 16;
    std::size_t trials = 2000;
    double pulse_s = 2e-6;
    double pri_s = 50e-6;

    SwerlingConfig scaled(double F) const {
        detail::check_scale(F);
        SwerlingConfig c = *this;
        c.fs_hz *= F;
        c.range_m /= F;
        c.extent_m /= F;
        c.pulse_s /= F;
        c.pri_s /= F;
        return c;
    }
};

/// A radar pulsing at a cloud of equal isotropic points that takes a fresh
/// random orientation every pulse.
inline Scenario swerling_scenario(const SwerlingConfig &c, std::uint64_t seed) {
    Scenario sc;
    sc.fs_hz = c.fs_hz;
    sc.fc_hz = c.fc_hz;
    sc.update_interval_s = c.pri_s;
    sc.duration_s = c.pri_s * static_cast<double>(c.trials);
    sc.max_range_m = 1.5 * c.range_m;
    NodeModel radar;
    radar.id = "radar";
    WaveformSpec pulse;
    pulse.kind = WaveKind::PulseTrain;
    pulse.width_s = c.pulse_s;
    pulse.period_s = c.pri_s;
    radar.tx = pulse;
    NodeModel target;
    target.id = "target";
    target.trajectory = Trajectory::fixed(Vec3(0.0, c.range_m, 0.0));
    target.trajectory.orientation.clear();
    std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
    for (std::size_t i = 0; i < c.trials; ++i)
        target.trajectory.orientation.push_back({c.pri_s * static_cast<double>(i), random_rotation(rng)});
    target.profile = swerling_profile(1, c.points, c.extent_m, seed);
    sc.nodes = {radar, target};
    return sc;
}

inline std::vector<double> swerling_peaks(const SwerlingConfig &c, std::uint64_t seed,
                                          EngineKind engine = EngineKind::Direct) {
    const Scenario sc = swerling_scenario(c, seed);
    const double fs = c.fs_hz;
    const SampleBlock tmpl = detail::pulse_template(*sc.nodes[0].tx, fs);
    const auto P = sc.update_samples();
    const double d = 2.0 * c.range_m / speed_of_light * fs;
    const double spread = std::sqrt(3.0) * c.extent_m / speed_of_light * fs;
    std::vector<std::pair<std::int64_t, std::int64_t>> lags;
    for (std::size_t p = 0; p < c.trials; ++p) {
        const auto base = static_cast<std::int64_t>(p) * P;
        lags.emplace_back(base + static_cast<std::int64_t>(std::floor(d - spread)) - sc.taps - 2,
                          base + static_cast<std::int64_t>(std::ceil(d + spread)) + sc.taps + 2);
    }
    while (!lags.empty() && lags.back().second + static_cast<std::int64_t>(tmpl.size()) > sc.total_samples())
        lags.pop_back();
    PulseCollector col(tmpl, lags);
    RunOptions opt;
    opt.engine = engine;
    opt.sink = [&](std::size_t node, const SampleBlock &blk) {
        if (node == 0)
            col.push(blk);
    };
    run(sc, opt);
    return col.peaks();
}

inline ExperimentResult experiment_swerling(const ExperimentOptions &o = {}, const SwerlingConfig &base = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = detail::prepare_out(o);
    const std::vector<double> peaks = swerling_peaks(base.scaled(o.fs_scale), o.seed, o.engine);
    if (!out.empty()) {
        std::vector<double> idx(peaks.size());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = static_cast<double>(i);
        write_csv((out / "swerling.csv").string(), {"pulse", "peak"}, {idx, peaks});
    }
    ExperimentResult r{"swerling", {}, {}, 0.0};
    r.metrics = {{"ks_statistic", ks_rayleigh(peaks), "<", 0.05}};
    r.info = {{"pulses", static_cast<double>(peaks.size())}, {"rayleigh_sigma", rayleigh_sigma_mle(peaks)}};
    detail::finish(r, o, t0);
    return r;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string> &experiment_names() {
    static const std::vector<std::string> names{"interferometry", "beamsweep", "complexscatter",
                                                "swerling",       "filtertable", "opcount"};
    return names;
}

inline ExperimentResult run_experiment(const std::string &name, const ExperimentOptions &o = {}) {
    if (name == "interferometry")
        return experiment_interferometry(o);
    if (name == "beamsweep")
        return experiment_beamsweep(o);
    if (name == "complexscatter")
        return experiment_complexscatter(o);
    if (name == "swerling")
        return experiment_swerling(o);
    if (name == "filtertable")
        return experiment_filtertable(o);
    if (name == "opcount")
        return experiment_opcount(o);
    throw Error(ErrorKind::ConfigError, "unknown experiment '" + name + "'");
}

} // namespace dpemu
