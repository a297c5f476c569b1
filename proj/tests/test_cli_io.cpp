#include "dpemu/dpemu.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

using namespace dpemu;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

const fs::path scenario_dir = DPEMU_SCENARIO_DIR;

fs::path scratch(const std::string &name) {
    const fs::path p = fs::temp_directory_path() / ("dpemu_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int cli(const std::string &args) {
    const std::string cmd = std::string(DPEMU_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

ErrorKind kind_of(const std::function<void()> &f, std::string *what = nullptr) {
    try {
        f();
    } catch (const Error &e) {
        if (what)
            *what = e.what();
        return e.kind();
    }
    FAIL("no error raised");
    return ErrorKind::InvalidArgument;
}

json minimal_doc() {
    return json::parse(R"({"globals": {"fc_hz": 1e9, "fs_hz": 25e6},
        "nodes": [{"id": "a", "waypoints": [{"x": 0, "y": 0, "z": 0}], "tx": {"kind": "tone"}},
                  {"id": "b", "waypoints": [{"x": 900, "y": 0, "z": 0}]}]})");
}

} // namespace

TEST_CASE("minimal scenario gets defaults") {
    const Scenario sc = parse_scenario(scenario_dir / "minimal.json");
    REQUIRE(sc.N() == 2);
    CHECK(sc.fs_hz == 25e6);
    CHECK(sc.update_interval_s == 1.3e-3);
    CHECK(sc.taps == 4);
    CHECK(sc.filter == FdMethod::Spline);
    for (const NodeModel &n : sc.nodes) {
        CHECK(n.antenna.D == 1);
        CHECK(n.antenna_ref == "isotropic");
        CHECK(n.profile.empty());
        CHECK(n.rx_offset == Vec3::Zero());
        CHECK(n.mute.empty());
    }
    REQUIRE(sc.nodes[0].tx);
    CHECK(sc.nodes[0].tx->kind == WaveKind::Tone);
    CHECK(!sc.nodes[1].tx);
}

TEST_CASE("shipped interferometry scenario") {
    const Scenario sc = parse_scenario(scenario_dir / "interferometry.json");
    REQUIRE(sc.N() == 3);
    const Vec3 a = sc.nodes[0].trajectory.at(0).position, b = sc.nodes[1].trajectory.at(0).position;
    const Kinematics r = sc.nodes[2].trajectory.at(0);
    CHECK((a - b).norm() == Approx(4000.0));
    CHECK((r.position - a).norm() == Approx(8000.0));
    CHECK((r.position - b).norm() == Approx(8000.0));
    CHECK(r.velocity.norm() == Approx(100.0));
    CHECK(r.velocity.dot(b - a) == Approx(r.velocity.norm() * 4000.0));
    CHECK(sc.muted(0, 1));
    CHECK(!sc.muted(0, 2));
    CHECK(sc.nodes[2].profile.K() == 1);
    // Same scenario as the experiment builds.
    CHECK(scenario_to_json(sc) == scenario_to_json(interferometry_scenario({})));
}

TEST_CASE("every shipped scenario parses and runs") {
    for (const auto &entry : fs::directory_iterator(scenario_dir)) {
        if (entry.path().extension() != ".json")
            continue;
        INFO(entry.path().string());
        Scenario sc = parse_scenario(entry.path());
        sc.duration_s = std::min(sc.duration_s, 0.02);
        const RunResult res = run(sc);
        CHECK(res.receivers.size() == sc.N());
        double e = 0.0;
        for (const SampleBlock &b : res.receivers)
            e += block_energy(b);
        CHECK(e > 0.0);
    }
}

TEST_CASE("schema errors name the field") {
    std::string what;
    json doc = minimal_doc();
    doc["globals"]["fs_hz"] = -25e6;
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("globals.fs_hz") != std::string::npos);

    doc = minimal_doc();
    doc["globals"].erase("fs_hz");
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("globals.fs_hz") != std::string::npos);

    doc = minimal_doc();
    doc["nodes"][1]["waypoints"][0]["y"] = "far";
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("nodes[1].waypoints[0].y") != std::string::npos);

    doc = minimal_doc();
    doc["nodes"][0]["tx"]["kind"] = "sawtooth";
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("nodes[0].tx.kind") != std::string::npos);

    doc = minimal_doc();
    doc["nodes"][0].erase("id");
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("nodes[0].id") != std::string::npos);

    doc = minimal_doc();
    doc["globals"]["taps"] = 6;
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("globals.taps") != std::string::npos);

    doc = minimal_doc();
    doc["nodes"][0]["orientation"] = json::parse(R"([{"t": 0, "matrix": [1, 0, 0, 0, 2, 0, 0, 0, 1]}])");
    CHECK(kind_of([&] { scenario_from_json(doc); }, &what) == ErrorKind::SchemaError);
    CHECK(what.find("nodes[0].orientation[0].matrix") != std::string::npos);

    doc = minimal_doc();
    doc["nodes"][0]["mute"] = json::array({"ghost"});
    CHECK(kind_of([&] { scenario_from_json(doc); }) == ErrorKind::ConfigError);

    doc = minimal_doc();
    doc["nodes"][0]["tx"]["freq_hz"] = 20e6;
    CHECK(kind_of([&] { scenario_from_json(doc); }) == ErrorKind::BandExceeded);
}

TEST_CASE("missing references name the file") {
    std::string what;
    json doc = minimal_doc();
    doc["nodes"][1]["profile_ref"] = "no_such_profile.json";
    CHECK(kind_of([&] { scenario_from_json(doc, scenario_dir); }, &what) == ErrorKind::MissingRef);
    CHECK(what.find("no_such_profile.json") != std::string::npos);

    doc = minimal_doc();
    doc["nodes"][1]["antenna_ref"] = "models/absent_array.json";
    CHECK(kind_of([&] { scenario_from_json(doc, scenario_dir); }, &what) == ErrorKind::MissingRef);
    CHECK(what.find("absent_array.json") != std::string::npos);

    CHECK(kind_of([&] { parse_scenario(scenario_dir / "nope.json"); }) == ErrorKind::MissingRef);
}

TEST_CASE("parse, serialize, parse is the identity") {
    const fs::path dir = scratch("roundtrip");
    for (const char *name : {"minimal.json", "interferometry.json", "radar.json"}) {
        INFO(name);
        const Scenario a = parse_scenario(scenario_dir / name);
        const json ja = scenario_to_json(a);
        const Scenario b = scenario_from_json(json::parse(ja.dump()), scenario_dir);
        CHECK(scenario_to_json(b) == ja);
    }
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Scenario a = random_scenario(seed);
        save_scenario(dir / "s.json", a);
        const Scenario b = parse_scenario(dir / "s.json");
        CHECK(scenario_to_json(b) == scenario_to_json(a));
        // Bit-identical emulation from the reloaded file.
        const RunResult ra = run(a), rb = run(b);
        for (std::size_t m = 0; m < a.N(); ++m)
            CHECK(ra.receivers[m].data == rb.receivers[m].data);
    }
}

TEST_CASE("antenna and profile files round-trip") {
    const fs::path dir = scratch("models");
    const Scenario s = random_scenario(9);
    save_antenna(dir / "a.json", s.nodes[1].antenna);
    const AntennaModel a = load_antenna(dir / "a.json");
    CHECK(antenna_to_json(a) == antenna_to_json(s.nodes[1].antenna));
    AntennaModel g = AntennaModel::isotropic();
    g.geometry = ElementGeometry{{Vec3(0.0, 0.25, -0.5)}};
    save_antenna(dir / "g.json", g);
    REQUIRE(load_antenna(dir / "g.json").geometry);
    CHECK(load_antenna(dir / "g.json").geometry->offsets_wavelengths[0] == Vec3(0.0, 0.25, -0.5));
    save_profile(dir / "p.json", s.nodes[2].profile);
    CHECK(profile_to_json(load_profile(dir / "p.json")) == profile_to_json(s.nodes[2].profile));
}

TEST_CASE("sample-file transmitter") {
    const fs::path dir = scratch("samples");
    SampleBlock w;
    for (int i = 0; i < 64; ++i)
        w.data.emplace_back(std::cos(0.1 * i), std::sin(0.1 * i));
    write_stream(dir / "burst.cf32", w, {"burst", 25e6, 1e9, 0.0, 0});
    json doc = minimal_doc();
    doc["nodes"][0]["tx"] = {{"kind", "file"}, {"file", "burst.cf32"}};
    const Scenario sc = scenario_from_json(doc, dir);
    REQUIRE(sc.nodes[0].tx->samples.size() == 64);
    CHECK(std::abs(sc.nodes[0].tx->samples[10] - w.data[10]) < 1e-6);
    CHECK(scenario_to_json(sc)["nodes"][0]["tx"]["file"] == "burst.cf32");
}

TEST_CASE("rate scaling keeps delays and Doppler in samples") {
    Scenario sc = parse_scenario(scenario_dir / "radar.json");
    sc.nodes[1].trajectory.waypoints.push_back({2e-4, Vec3(20.0, 3010.0, 0.0), Vec3(-40.0, 10.0, 5.0)});
    const double F = 4.0;
    const Scenario s2 = scaled_rate(sc, F);
    CHECK(s2.fs_hz == sc.fs_hz * F);
    CHECK(s2.update_samples() == sc.update_samples());
    CHECK(s2.total_samples() == sc.total_samples());
    // Lengths shrink while displacements over the run do not, so Doppler in
    // samples is exact at the start and drifts slowly afterwards.
    for (double t : {0.0, 1e-4, 2.5e-4}) {
        const PathState a = path_between(sc.nodes[0].trajectory.at(t), sc.nodes[1].trajectory.at(t), sc.fc_hz, t);
        const PathState b =
            path_between(s2.nodes[0].trajectory.at(t / F), s2.nodes[1].trajectory.at(t / F), s2.fc_hz, t / F);
        CHECK(a.doppler_hz / sc.fs_hz == Approx(b.doppler_hz / s2.fs_hz).epsilon(t == 0.0 ? 1e-12 : 1e-3));
        if (t == 0.0)
            CHECK(a.delay_s * sc.fs_hz == Approx(b.delay_s * s2.fs_hz).epsilon(1e-12));
    }
    // Later waypoints continue the scaled motion; deliberate jumps shrink by F.
    const auto &w0 = sc.nodes[1].trajectory.waypoints, &w = s2.nodes[1].trajectory.waypoints;
    const Vec3 jump = w0[1].position - w0[0].position - w0[0].velocity * (w0[1].t - w0[0].t);
    CHECK((w[1].position - w[0].position - w[0].velocity * (w[1].t - w[0].t) - jump / F).norm() < 1e-9);
    CHECK(s2.nodes[0].tx->bandwidth_hz == sc.nodes[0].tx->bandwidth_hz * F);
    CHECK_THROWS_AS(scaled_rate(sc, 0.0), Error);
}

TEST_CASE("pulse collector agrees with a whole-stream matched filter") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    SampleBlock stream, tmpl;
    for (int i = 0; i < 5000; ++i)
        stream.data.emplace_back(g(rng), g(rng));
    for (int i = 0; i < 30; ++i)
        tmpl.data.emplace_back(g(rng), g(rng));
    std::vector<std::pair<std::int64_t, std::int64_t>> lags;
    for (std::int64_t p = 0; p < 9; ++p)
        lags.emplace_back(400 * p + 17, 400 * p + 60);
    PulseCollector col(tmpl, lags);
    for (std::size_t i = 0; i < stream.size(); i += 333) {
        SampleBlock blk;
        blk.start_index = static_cast<std::int64_t>(i);
        blk.data.assign(stream.data.begin() + static_cast<std::ptrdiff_t>(i),
                        stream.data.begin() + static_cast<std::ptrdiff_t>(std::min(i + 333, stream.size())));
        col.push(blk);
    }
    REQUIRE(col.peaks().size() == lags.size());
    for (std::size_t p = 0; p < lags.size(); ++p)
        CHECK(col.peaks()[p] == Approx(matched_filter(stream, tmpl, lags[p]).peak_mag).epsilon(1e-12));
}

TEST_CASE("interferometry with a still reflector has no beat") {
    InterferometryConfig c;
    c.speed_mps = 0.0;
    c.duration_s = 0.03;
    const InterferometryCurves cv = interferometry_curves(c);
    REQUIRE(cv.t_emit.size() > 100);
    for (std::size_t rx = 0; rx < 2; ++rx)
        for (double v : cv.emulated[rx])
            CHECK(v == Approx(1.0).epsilon(1e-6));
}

TEST_CASE("short interferometry run follows the baseline") {
    InterferometryConfig c;
    c.duration_s = 0.1;
    const InterferometryCurves cv = interferometry_curves(c);
    CHECK(cv.nrmse[0] < 0.02);
    CHECK(cv.nrmse[1] < 0.02);
    // The beat actually swings through nulls in this window.
    CHECK(*std::min_element(cv.baseline[0].begin(), cv.baseline[0].end()) < 0.1);
}

TEST_CASE("table and op-count experiments") {
    const fs::path dir = scratch("experiments");
    ExperimentOptions o;
    o.out_dir = dir;
    const ExperimentResult ft = experiment_filtertable(o);
    CHECK(ft.pass());
    std::ifstream f(dir / "filtertable.csv");
    std::string line;
    int rows = -1;
    while (std::getline(f, line))
        ++rows;
    CHECK(rows == 16);

    const ExperimentResult oc = experiment_opcount(o);
    CHECK(oc.metric("tdl_relative_error").pass());
    CHECK(oc.metric("direct_relative_error").pass());
    CHECK(oc.metric("ratio").pass());
    CHECK(oc.metric("tdl_r2").pass());
    CHECK(oc.metric("engine_counter_mismatch").pass());
    CHECK(fs::exists(dir / "opcount.csv"));
    CHECK(fs::exists(dir / "opcount_summary.json"));
}

TEST_CASE("command-line exit codes") {
    const fs::path dir = scratch("cli");
    const std::string out = " --out " + dir.string();
    CHECK(cli("run --scenario " + (scenario_dir / "minimal.json").string() + out) == 0);
    CHECK(fs::exists(dir / "rx.cf32"));
    CHECK(fs::exists(dir / "rx.cf32.json"));
    CHECK(fs::exists(dir / "opcount.json"));
    CHECK(read_stream(dir / "rx.cf32").first.size() == 25000);

    CHECK(cli("run --engine tdl --fs-scale 0.5 --scenario " + (scenario_dir / "radar.json").string() + out) == 0);
    CHECK(cli("analyze --stream " + (dir / "radar.cf32").string() + " --template " + (dir / "radar.cf32").string() + out) ==
          0);
    CHECK(fs::exists(dir / "periodogram.csv"));
    CHECK(fs::exists(dir / "matched_filter.csv"));

    std::ofstream(dir / "bad.json") << R"({"globals": {"fs_hz": -1, "fc_hz": 1e9}, "nodes": []})";
    CHECK(cli("run --scenario " + (dir / "bad.json").string() + out) == 2);
    CHECK(cli("run --scenario " + (dir / "missing.json").string() + out) == 2);
    CHECK(cli("run" + out) == 2);
    CHECK(cli("experiment nonsense" + out) == 2);
    CHECK(cli("experiment filtertable --fs-scale -1" + out) == 2);
    CHECK(cli("experiment swerling --fs-scale -1" + out) == 2);
    CHECK(cli("frobnicate") == 2);

    CHECK(cli("experiment filtertable" + out) == 0);
    // The direct engine's N^2 K fit misses R^2 > 0.999 by construction, so this reports a failure.
    CHECK(cli("experiment opcount" + out) == 1);

    CHECK(cli("design-filter" + out) == 0);
    CHECK(fs::exists(dir / "filter_table.csv"));
    CHECK(cli("design-filter --method spline --taps 4 --mu 0.5") == 0);
    CHECK(cli("design-filter --method quadratic --taps 4 --mu 0.5") == 2);

    CHECK(cli("fit-antenna --order 2 --side 3" + out) == 0);
    CHECK(load_antenna(dir / "antenna.json").D == 9);
    CHECK(cli("fit-scatter --seed 4" + out) == 0);
    CHECK(load_profile(dir / "profile.json").K() == 3);
}
