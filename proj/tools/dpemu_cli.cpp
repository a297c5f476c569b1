// dpemu command-line front end.
//
// Exit status: 0 success or pass, 1 an experiment missed its threshold,
// 2 bad configuration or input.

#include "dpemu/dpemu.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace dpemu;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string scenario;
    std::string engine = "direct";
    std::string out = "out";
    std::uint64_t seed = 1;
    double fs_scale = 1.0;
    std::size_t workers = 1;
};

EngineKind engine_of(const std::string &s) {
    if (s == "direct")
        return EngineKind::Direct;
    if (s == "tdl")
        return EngineKind::Tdl;
    throw Error(ErrorKind::ConfigError, "engine must be 'direct' or 'tdl'");
}

int cmd_run(const Common &c) {
    if (c.scenario.empty())
        throw Error(ErrorKind::ConfigError, "run needs --scenario");
    Scenario sc = parse_scenario(c.scenario);
    if (c.fs_scale != 1.0)
        sc = scaled_rate(sc, c.fs_scale);
    RunOptions opt;
    opt.engine = engine_of(c.engine);
    opt.workers = c.workers;
    const RunResult res = run(sc, opt);
    fs::create_directories(c.out);
    for (std::size_t m = 0; m < sc.N(); ++m) {
        StreamHeader h{sc.nodes[m].id, sc.fs_hz, sc.fc_hz, 0.0, 0};
        write_stream(fs::path(c.out) / (sc.nodes[m].id + ".cf32"), res.receivers[m], h);
    }
    std::size_t K = 0;
    for (const NodeModel &n : sc.nodes)
        K = std::max(K, n.profile.K());
    nlohmann::json j = opcount_json(res.ops, opt.engine, sc.N(), K, sc.taps);
    j["block_length"] = res.block_length;
    j["latency"] = res.latency;
    j["buffer_length"] = res.buffer_length;
    std::ofstream(fs::path(c.out) / "opcount.json") << j.dump(2) << "\n";
    std::cout << "wrote " << sc.N() << " receiver streams of " << sc.total_samples() << " samples to " << c.out << "\n";
    return 0;
}

int cmd_experiment(const Common &c, const std::string &name) {
    if (!(c.fs_scale > 0.0) || !std::isfinite(c.fs_scale))
        throw Error(ErrorKind::ConfigError, "fs scale must be positive");
    ExperimentOptions o;
    o.out_dir = c.out;
    o.seed = c.seed;
    o.fs_scale = c.fs_scale;
    o.engine = engine_of(c.engine);
    o.workers = c.workers;
    std::vector<std::string> names{name};
    if (name == "all")
        names = experiment_names();
    bool pass = true;
    for (const std::string &n : names) {
        const ExperimentResult r = run_experiment(n, o);
        std::cout << r.summary();
        pass = pass && r.pass();
    }
    return pass ? 0 : 1;
}

int cmd_design_filter(const Common &c, const std::string &method, int taps, double mu) {
    if (!method.empty()) {
        const FracDelayFilter f = design(fd_method_from_string(method), taps, mu);
        std::cout.precision(17);
        for (double t : f.taps)
            std::cout << t << "\n";
        return 0;
    }
    fs::create_directories(c.out);
    std::ofstream out(fs::path(c.out) / "filter_table.csv");
    out << "method,R,oversample_pct,delay_accuracy_ns,amplitude_ripple\n";
    for (FdMethod m : {FdMethod::Legendre, FdMethod::Spline})
        for (int R : {4, 8})
            for (double pct : {20.0, 25.0, 30.0, 33.0}) {
                const FilterMetrics fm = measure(m, R, pct);
                out << to_string(m) << "," << R << "," << pct << "," << fm.delay_accuracy_ns << "," << fm.amplitude_ripple
                    << "\n";
            }
    std::cout << "wrote " << (fs::path(c.out) / "filter_table.csv").string() << "\n";
    return 0;
}

int cmd_fit_antenna(const Common &c, int order, int side) {
    BeamSweepConfig cfg;
    cfg.order = order;
    cfg.array_side = side;
    const AntennaFit fit = beam_sweep_antenna(cfg);
    fs::create_directories(c.out);
    save_antenna(fs::path(c.out) / "antenna.json", fit.model);
    std::cout << "order " << order << ", D = " << fit.model.D << ": train NMSE " << fit.train_nmse << ", test NMSE "
              << fit.test_nmse << "\n";
    return 0;
}

int cmd_fit_scatter(const Common &c, const std::string &profile_path, std::size_t K, int grid_side, double spacing) {
    ScatterProfile truth;
    const std::vector<Vec3> grid = cubic_grid(grid_side, spacing);
    if (!profile_path.empty()) {
        truth = load_profile(profile_path);
    } else {
        std::mt19937_64 rng(c.seed);
        std::uniform_int_distribution<std::size_t> pick(0, grid.size() - 1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        truth.spec = ShBasisSpec(0);
        std::vector<std::size_t> used;
        while (truth.K() < K) {
            const std::size_t g = pick(rng);
            if (std::find(used.begin(), used.end(), g) != used.end())
                continue;
            used.push_back(g);
            truth.points.push_back(
                ScatterProfile::isotropic_point(truth.spec, grid[g], std::polar(0.5 + u(rng), two_pi * u(rng))));
        }
    }
    std::vector<double> freqs;
    for (int i = 0; i < 16; ++i)
        freqs.push_back(1e9 + 25e6 * i);
    std::vector<Angle> angles = SphereGrid::quadrature(8, 16).angles;
    const MonostaticTable table = synthesize_monostatic(truth, freqs, angles);
    const OmpFit fit = omp_fit_monostatic(table, grid, K, truth.spec);
    fs::create_directories(c.out);
    save_profile(fs::path(c.out) / "profile.json", fit.profile);
    std::cout << "recovered " << fit.profile.K() << " points, normalized residual "
              << (fit.mse_history.empty() ? 0.0 : fit.mse_history.back()) << "\n";
    return 0;
}

int cmd_analyze(const Common &c, const std::string &stream, const std::string &tmpl_path) {
    if (stream.empty())
        throw Error(ErrorKind::ConfigError, "analyze needs --stream");
    const auto [rx, hdr] = read_stream(stream);
    if (rx.empty())
        throw Error(ErrorKind::ConfigError, "stream is empty");
    fs::create_directories(c.out);
    const Periodogram p = periodogram(rx, hdr.fs_hz);
    write_csv((fs::path(c.out) / "periodogram.csv").string(), {"freq_hz", "power", "normalized"},
              {p.freqs, p.power, p.normalized});
    if (!tmpl_path.empty()) {
        SampleBlock t = read_stream(tmpl_path).first;
        t.start_index = 0;
        const MatchedFilterResult mf = matched_filter(rx, t);
        std::vector<double> lags(mf.lags.begin(), mf.lags.end());
        write_csv((fs::path(c.out) / "matched_filter.csv").string(), {"lag", "magnitude"}, {lags, mf.magnitude});
        std::cout << "matched filter peak " << mf.peak_mag << " at lag " << mf.peak_lag << "\n";
    }
    std::cout << "wrote analysis of " << rx.size() << " samples to " << c.out << "\n";
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"dpemu: direct-path RF channel emulator"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App *s) {
        s->add_option("--scenario", c.scenario, "Scenario file");
        s->add_option("--engine", c.engine, "Engine: direct or tdl")->check(CLI::IsMember({"direct", "tdl"}));
        s->add_option("--out", c.out, "Output directory");
        s->add_option("--seed", c.seed, "Random seed");
        s->add_option("--fs-scale", c.fs_scale, "Sample-rate scale factor");
        s->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    };

    auto *run_cmd = app.add_subcommand("run", "Emulate a scenario and write receiver streams");
    add_common(run_cmd);

    std::string exp_name;
    auto *exp_cmd = app.add_subcommand("experiment", "Run a named experiment and check it");
    add_common(exp_cmd);
    exp_cmd->add_option("name", exp_name, "Experiment name or 'all'")->required();

    std::string method;
    int taps = 4;
    double mu = 0.0;
    auto *df_cmd = app.add_subcommand("design-filter", "Filter quality table, or the taps of one filter");
    add_common(df_cmd);
    df_cmd->add_option("--method", method, "Print taps for spline or legendre");
    df_cmd->add_option("--taps", taps, "Filter length");
    df_cmd->add_option("--mu", mu, "Fractional delay in [0, 1)");

    int order = 3, side = 13;
    auto *fa_cmd = app.add_subcommand("fit-antenna", "Fit the factored model of a backed planar array");
    add_common(fa_cmd);
    fa_cmd->add_option("--order", order, "Spherical harmonic order");
    fa_cmd->add_option("--side", side, "Elements per side");

    std::string profile_path;
    std::size_t K = 3;
    int grid_side = 5;
    double spacing = 0.5;
    auto *fs_cmd = app.add_subcommand("fit-scatter", "Recover point scatterers from a monostatic table");
    add_common(fs_cmd);
    fs_cmd->add_option("--profile", profile_path, "Ground-truth profile (default: random on-grid points)");
    fs_cmd->add_option("--points", K, "Number of scatterers");
    fs_cmd->add_option("--grid", grid_side, "Candidate grid points per side");
    fs_cmd->add_option("--spacing", spacing, "Candidate grid spacing in meters");

    std::string stream, tmpl;
    auto *an_cmd = app.add_subcommand("analyze", "Periodogram and matched filter of a receiver stream");
    add_common(an_cmd);
    an_cmd->add_option("--stream", stream, "Receiver stream (.cf32 with .json sidecar)");
    an_cmd->add_option("--template", tmpl, "Template stream for the matched filter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*run_cmd)
            return cmd_run(c);
        if (*exp_cmd)
            return cmd_experiment(c, exp_name);
        if (*df_cmd)
            return cmd_design_filter(c, method, taps, mu);
        if (*fa_cmd)
            return cmd_fit_antenna(c, order, side);
        if (*fs_cmd)
            return cmd_fit_scatter(c, profile_path, K, grid_side, spacing);
        if (*an_cmd)
            return cmd_analyze(c, stream, tmpl);
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
