// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Scenario files, antenna models and scattering profiles as JSON.
//
// Scenario layout:
//
//   { "globals": { "fc_hz", "fs_hz", "update_interval_s", "max_range_m",
//                  "duration_s", "loss_ref_m", "filter", "taps" },
//     "nodes": [ { "id", "waypoints": [{t,x,y,z,vx,vy,vz}],
//                  "orientation": [{t, "matrix": [9 numbers, row-major]}],
//                  "antenna_ref": "isotropic" | path, "antenna": {inline},
//                  "steer": [{t, azimuth_deg, polar_deg}],
//                  "profile_ref": path, "profile": {inline},
//                  "tx": {kind, ...}, "rx_offset": [x,y,z], "mute": [ids] } ] }
//
// Relative paths resolve against the scenario file's directory.

#pragma once

#include "dpemu/scenario.hpp"
#include "dpemu/stream_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>

namespace dpemu {

using json = nlohmann::json;

namespace detail {

/// A JSON node together with its location in the document, for error messages.
class Field {
public:
    Field(const json &j, std::string path) : j_(&j), path_(std::move(path)) {}

    const std::string &path() const { return path_; }
    const json &raw() const { return *j_; }

    [[noreturn]] void fail(const std::string &msg) const { throw Error(ErrorKind::SchemaError, path_ + ": " + msg); }

    bool has(const std::string &key) const { return j_->is_object() && j_->contains(key); }

    Field operator[](const std::string &key) const {
        if (!j_->is_object())
            fail("expected an object");
        auto it = j_->find(key);
        if (it == j_->end())
            Field(*j_, join(key)).fail("missing");
        return Field(*it, join(key));
    }

    Field operator[](std::size_t i) const { return Field((*j_)[i], path_ + "[" + std::to_string(i) + "]"); }

    std::size_t array_size() const {
        if (!j_->is_array())
            fail("expected an array");
        return j_->size();
    }

    double number() const {
        if (!j_->is_number())
            fail("expected a number");
        const double v = j_->get<double>();
        if (!std::isfinite(v))
            fail("must be finite");
        return v;
    }

    double number_or(const std::string &key, double def) const { return has(key) ? (*this)[key].number() : def; }

    std::int64_t integer() const {
        if (!j_->is_number_integer())
            fail("expected an integer");
        return j_->get<std::int64_t>();
    }

    std::string string() const {
        if (!j_->is_string())
            fail("expected a string");
        return j_->get<std::string>();
    }

    Vec3 vec3() const {
        if (array_size() != 3)
            fail("expected three numbers");
        return Vec3((*this)[0].number(), (*this)[1].number(), (*this)[2].number());
    }

private:
    std::string join(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

    const json *j_;
    std::string path_;
};

inline json vec_json(const Vec3 &v) { return json::array({v.x(), v.y(), v.z()}); }

inline json coeffs_json(const VecC &c) {
    json re = json::array(), im = json::array();
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        re.push_back(c[i].real());
        im.push_back(c[i].imag());
    }
    return {{"real", re}, {"imag", im}};
}

inline VecC parse_coeffs(const Field &f, int P) {
    const Field re = f["real"], im = f["imag"];
    if (re.array_size() != static_cast<std::size_t>(P))
        re.fail("expected " + std::to_string(P) + " coefficients");
    if (im.array_size() != static_cast<std::size_t>(P))
        im.fail("expected " + std::to_string(P) + " coefficients");
    VecC c(P);
    for (int i = 0; i < P; ++i)
        c[i] = cplx(re[static_cast<std::size_t>(i)].number(), im[static_cast<std::size_t>(i)].number());
    return c;
}

inline ShBasisSpec parse_order(const Field &f) {
    const std::int64_t order = f.integer();
    if (order < 0 || order > ShBasisSpec::max_order)
        f.fail("order must lie in [0, 31]");
    return ShBasisSpec(static_cast<int>(order));
}

inline json load_json(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::MissingRef, path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
}

inline void save_json(const std::filesystem::path &path, const json &j) {
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::ConfigError, "cannot write " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace detail

// ---------------------------------------------------------------------------
// Antenna models: {"order", "D", "steer": [coeffs], "field": [coeffs], "geometry": [[x,y,z]]}

inline json antenna_to_json(const AntennaModel &a) {
    json j{{"order", a.spec.order}, {"D", a.D}, {"steer", json::array()}, {"field", json::array()}};
    for (const ShFunction &f : a.steer_factors)
        j["steer"].push_back(detail::coeffs_json(f.coeffs));
    for (const ShFunction &f : a.field_factors)
        j["field"].push_back(detail::coeffs_json(f.coeffs));
    if (a.geometry) {
        j["geometry"] = json::array();
        for (const Vec3 &o : a.geometry->offsets_wavelengths)
            j["geometry"].push_back(detail::vec_json(o));
    }
    return j;
}

inline AntennaModel antenna_from_json(const detail::Field &f) {
    AntennaModel a;
    a.spec = detail::parse_order(f["order"]);
    const std::int64_t D = f["D"].integer();
    if (D < 1)
        f["D"].fail("must be at least 1");
    a.D = static_cast<int>(D);
    a.steer_factors.clear();
    a.field_factors.clear();
    for (const char *key : {"steer", "field"}) {
        const detail::Field list = f[key];
        if (list.array_size() != static_cast<std::size_t>(D))
            list.fail("expected D = " + std::to_string(D) + " factors");
        auto &dst = std::string(key) == "steer" ? a.steer_factors : a.field_factors;
        for (std::size_t d = 0; d < list.array_size(); ++d)
            dst.emplace_back(a.spec, detail::parse_coeffs(list[d], a.spec.P()));
    }
    if (f.has("geometry")) {
        const detail::Field g = f["geometry"];
        if (g.array_size() != static_cast<std::size_t>(D))
            g.fail("expected D offsets");
        ElementGeometry geo;
        for (std::size_t d = 0; d < g.array_size(); ++d)
            geo.offsets_wavelengths.push_back(g[d].vec3());
        a.geometry = geo;
    }
    return a;
}

inline AntennaModel load_antenna(const std::filesystem::path &path) {
    const json j = detail::load_json(path);
    return antenna_from_json(detail::Field(j, path.filename().string()));
}

inline void save_antenna(const std::filesystem::path &path, const AntennaModel &a) {
    detail::save_json(path, antenna_to_json(a));
}

// ---------------------------------------------------------------------------
// Scattering profiles: {"order", "points": [{"location", "in", "out"}]}

inline json profile_to_json(const ScatterProfile &p) {
    json j{{"order", p.spec.order}, {"points", json::array()}};
    for (const ScatterPoint &s : p.points)
        j["points"].push_back({{"location", detail::vec_json(s.location)},
                               {"in", detail::coeffs_json(s.in_coeffs)},
                               {"out", detail::coeffs_json(s.out_coeffs)}});
    return j;
}

inline ScatterProfile profile_from_json(const detail::Field &f) {
    ScatterProfile p;
    p.spec = detail::parse_order(f["order"]);
    const detail::Field pts = f["points"];
    if (pts.array_size() > ScatterProfile::max_points)
        pts.fail("at most 16 points");
    for (std::size_t k = 0; k < pts.array_size(); ++k) {
        ScatterPoint s;
        s.location = pts[k]["location"].vec3();
        s.in_coeffs = detail::parse_coeffs(pts[k]["in"], p.spec.P());
        s.out_coeffs = detail::parse_coeffs(pts[k]["out"], p.spec.P());
        p.points.push_back(std::move(s));
    }
    return p;
}

inline ScatterProfile load_profile(const std::filesystem::path &path) {
    const json j = detail::load_json(path);
    return profile_from_json(detail::Field(j, path.filename().string()));
}

inline void save_profile(const std::filesystem::path &path, const ScatterProfile &p) {
    detail::save_json(path, profile_to_json(p));
}

// ---------------------------------------------------------------------------
// Waveforms

inline json waveform_to_json(const WaveformSpec &w) {
    json j{{"kind", to_string(w.kind)}, {"amplitude", w.amplitude}};
    switch (w.kind) {
    case WaveKind::Tone:
        j["freq_hz"] = w.freq_hz;
        break;
    case WaveKind::Lfm:
        j["bandwidth_hz"] = w.bandwidth_hz;
        j["width_s"] = w.width_s;
        j["period_s"] = w.period_s;
        break;
    case WaveKind::PulseTrain:
        j["freq_hz"] = w.freq_hz;
        j["bandwidth_hz"] = w.bandwidth_hz;
        j["width_s"] = w.width_s;
        j["period_s"] = w.period_s;
        break;
    case WaveKind::Samples:
        j["file"] = w.file;
        break;
    }
    j["start_s"] = w.start_s;
    return j;
}

/// Raw cf32le samples; a sidecar header is used when present.
inline std::vector<cplx> load_samples(const std::filesystem::path &path) {
    if (std::filesystem::exists(path.string() + ".json"))
        return read_stream(path).first.data;
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::MissingRef, path.string());
    std::vector<cplx> out;
    float w[2];
    while (in.read(reinterpret_cast<char *>(w), sizeof w))
        out.emplace_back(w[0], w[1]);
    return out;
}

inline WaveformSpec waveform_from_json(const detail::Field &f, const std::filesystem::path &base) {
    WaveformSpec w;
    try {
        w.kind = wave_kind_from_string(f["kind"].string());
    } catch (const Error &e) {
        if (e.kind() == ErrorKind::SchemaError && f.has("kind"))
            f["kind"].fail("unknown waveform kind");
        throw;
    }
    w.amplitude = f.number_or("amplitude", 1.0);
    w.freq_hz = f.number_or("freq_hz", 0.0);
    w.bandwidth_hz = f.number_or("bandwidth_hz", 0.0);
    w.width_s = f.number_or("width_s", 0.0);
    w.period_s = f.number_or("period_s", 0.0);
    w.start_s = f.number_or("start_s", 0.0);
    if (w.bandwidth_hz < 0.0)
        f["bandwidth_hz"].fail("must be nonnegative");
    if (w.width_s < 0.0)
        f["width_s"].fail("must be nonnegative");
    if (w.period_s < 0.0)
        f["period_s"].fail("must be nonnegative");
    if (w.kind == WaveKind::Lfm && !(w.width_s > 0.0))
        f["width_s"].fail("a chirp needs a positive width");
    if (w.kind == WaveKind::PulseTrain && !(w.width_s > 0.0 && w.period_s >= w.width_s))
        f["period_s"].fail("a pulse train needs 0 < width_s <= period_s");
    if (w.kind == WaveKind::Samples) {
        w.file = f["file"].string();
        w.samples = load_samples(base / w.file);
    }
    return w;
}

// ---------------------------------------------------------------------------
// Scenarios

inline json scenario_to_json(const Scenario &sc) {
    json g{{"fc_hz", sc.fc_hz},
           {"fs_hz", sc.fs_hz},
           {"update_interval_s", sc.update_interval_s},
           {"max_range_m", sc.max_range_m},
           {"duration_s", sc.duration_s},
           {"loss_ref_m", sc.loss_ref_m},
           {"filter", to_string(sc.filter)},
           {"taps", sc.taps}};
    json nodes = json::array();
    for (const NodeModel &n : sc.nodes) {
        json j{{"id", n.id}};
        for (const Waypoint &w : n.trajectory.waypoints)
            j["waypoints"].push_back({{"t", w.t},
                                      {"x", w.position.x()},
                                      {"y", w.position.y()},
                                      {"z", w.position.z()},
                                      {"vx", w.velocity.x()},
                                      {"vy", w.velocity.y()},
                                      {"vz", w.velocity.z()}});
        for (const auto &o : n.trajectory.orientation) {
            json m = json::array();
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    m.push_back(o.value(r, c));
            j["orientation"].push_back({{"t", o.t}, {"matrix", m}});
        }
        j["antenna_ref"] = n.antenna_ref;
        if (n.antenna_ref == "inline")
            j["antenna"] = antenna_to_json(n.antenna);
        for (const auto &s : n.steer)
            j["steer"].push_back({{"t", s.t}, {"azimuth_deg", s.value.azimuth_deg}, {"polar_deg", s.value.polar_deg}});
        if (!n.profile_ref.empty())
            j["profile_ref"] = n.profile_ref;
        else if (!n.profile.empty())
            j["profile"] = profile_to_json(n.profile);
        if (n.tx)
            j["tx"] = waveform_to_json(*n.tx);
        j["rx_offset"] = detail::vec_json(n.rx_offset);
        j["mute"] = n.mute;
        nodes.push_back(std::move(j));
    }
    return {{"globals", g}, {"nodes", nodes}};
}

/// Builds a scenario from a parsed document.  Field-level problems raise
/// SchemaError with the field's path; cross-field checks raise ConfigError.
inline Scenario scenario_from_json(const json &doc, const std::filesystem::path &base = ".") {
    using detail::Field;
    const Field root(doc, "");
    Scenario sc;
    const Field g = root["globals"];
    auto positive = [&](const char *key, double &dst, bool required, bool allow_zero = false) {
        if (!required && !g.has(key))
            return;
        const Field f = g[key];
        dst = f.number();
        if (allow_zero ? dst < 0.0 : dst <= 0.0)
            f.fail(allow_zero ? "must be nonnegative" : "must be positive");
    };
    positive("fs_hz", sc.fs_hz, true);
    positive("fc_hz", sc.fc_hz, true, true);
    positive("update_interval_s", sc.update_interval_s, false);
    positive("max_range_m", sc.max_range_m, false);
    positive("duration_s", sc.duration_s, false, true);
    positive("loss_ref_m", sc.loss_ref_m, false);
    if (g.has("filter")) {
        const std::string m = g["filter"].string();
        if (m != "spline" && m != "legendre")
            g["filter"].fail("expected \"spline\" or \"legendre\"");
        sc.filter = fd_method_from_string(m);
    }
    if (g.has("taps")) {
        const std::int64_t R = g["taps"].integer();
        if (R != 4 && R != 8)
            g["taps"].fail("must be 4 or 8");
        sc.taps = static_cast<int>(R);
    }

    const Field nodes = root["nodes"];
    for (std::size_t i = 0; i < nodes.array_size(); ++i) {
        const Field nf = nodes[i];
        NodeModel n;
        n.id = nf["id"].string();

        const Field wps = nf["waypoints"];
        if (wps.array_size() == 0)
            wps.fail("at least one waypoint is required");
        n.trajectory.waypoints.clear();
        for (std::size_t w = 0; w < wps.array_size(); ++w) {
            const Field wf = wps[w];
            Waypoint p;
            p.t = wf.number_or("t", 0.0);
            p.position = Vec3(wf["x"].number(), wf["y"].number(), wf["z"].number());
            p.velocity = Vec3(wf.number_or("vx", 0.0), wf.number_or("vy", 0.0), wf.number_or("vz", 0.0));
            if (w > 0 && !(p.t > n.trajectory.waypoints.back().t))
                wf["t"].fail("waypoint times must increase");
            n.trajectory.waypoints.push_back(p);
        }

        if (nf.has("orientation")) {
            const Field of = nf["orientation"];
            n.trajectory.orientation.clear();
            for (std::size_t o = 0; o < of.array_size(); ++o) {
                const Field m = of[o]["matrix"];
                if (m.array_size() != 9)
                    m.fail("expected nine numbers");
                Mat3 R;
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c)
                        R(r, c) = m[static_cast<std::size_t>(3 * r + c)].number();
                if (!is_rotation(R, 1e-6))
                    m.fail("not a rotation matrix");
                n.trajectory.orientation.push_back({of[o].number_or("t", 0.0), R});
            }
            if (n.trajectory.orientation.empty())
                of.fail("at least one entry is required");
        }

        n.antenna_ref = nf.has("antenna_ref") ? nf["antenna_ref"].string() : "isotropic";
        if (n.antenna_ref == "inline") {
            n.antenna = antenna_from_json(nf["antenna"]);
        } else if (n.antenna_ref != "isotropic") {
            try {
                n.antenna = load_antenna(base / n.antenna_ref);
            } catch (const Error &e) {
                if (e.kind() == ErrorKind::MissingRef)
                    throw Error(ErrorKind::MissingRef, n.antenna_ref);
                throw;
            }
        }

        if (nf.has("steer")) {
            const Field sf = nf["steer"];
            n.steer.clear();
            for (std::size_t s = 0; s < sf.array_size(); ++s) {
                const double pol = sf[s]["polar_deg"].number();
                if (pol < 0.0 || pol > 180.0)
                    sf[s]["polar_deg"].fail("must lie in [0, 180]");
                n.steer.push_back({sf[s].number_or("t", 0.0), Angle::normalized(sf[s]["azimuth_deg"].number(), pol)});
            }
            if (n.steer.empty())
                sf.fail("at least one entry is required");
        }

        if (nf.has("profile_ref")) {
            n.profile_ref = nf["profile_ref"].string();
            try {
                n.profile = load_profile(base / n.profile_ref);
            } catch (const Error &e) {
                if (e.kind() == ErrorKind::MissingRef)
                    throw Error(ErrorKind::MissingRef, n.profile_ref);
                throw;
            }
        } else if (nf.has("profile")) {
            n.profile = profile_from_json(nf["profile"]);
        }

        if (nf.has("tx"))
            n.tx = waveform_from_json(nf["tx"], base);
        if (nf.has("rx_offset"))
            n.rx_offset = nf["rx_offset"].vec3();
        if (nf.has("mute")) {
            const Field mf = nf["mute"];
            for (std::size_t m = 0; m < mf.array_size(); ++m)
                n.mute.push_back(mf[m].string());
        }
        sc.nodes.push_back(std::move(n));
    }
    sc.validate();
    return sc;
}

inline Scenario parse_scenario(const std::filesystem::path &path) {
    const json doc = detail::load_json(path);
    return scenario_from_json(doc, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

inline void save_scenario(const std::filesystem::path &path, const Scenario &sc) {
    detail::save_json(path, scenario_to_json(sc));
}

} // namespace dpemu
