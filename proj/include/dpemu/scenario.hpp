// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------

#pragma once

#include "dpemu/core.hpp"
#include "dpemu/fdelay.hpp"
#include "dpemu/geom.hpp"
#include "dpemu/scatter.hpp"
#include "dpemu/sphharm.hpp"
#include "dpemu/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace dpemu {

/// One object: motion, radiator, scattering profile, and optional transmitter.
struct NodeModel {
    std::string id;
    Trajectory trajectory;
    AntennaModel antenna = AntennaModel::isotropic();
    std::vector<TimedValue<Angle>> steer{TimedValue<Angle>{0.0, Angle{}}};
    ScatterProfile profile;
    std::optional<WaveformSpec> tx;
    Vec3 rx_offset = Vec3::Zero();
    /// Ids of nodes this node's antenna neither transmits to nor receives from.
    std::vector<std::string> mute;

    // Where the models came from; kept so a parsed scenario serializes back.
    std::string antenna_ref = "isotropic";
    std::string profile_ref;
};

struct Scenario {
    std::vector<NodeModel> nodes;
    double fc_hz = 1e9;
    double fs_hz = 25e6;
    double update_interval_s = 1.3e-3;
    double max_range_m = 10e3;
    double duration_s = 1e-3;
    double loss_ref_m = 1.0;
    FdMethod filter = FdMethod::Spline;
    int taps = 4;
    int bank_settings = FilterBank::default_settings;

    std::size_t N() const noexcept { return nodes.size(); }

    std::int64_t update_samples() const {
        return static_cast<std::int64_t>(std::llround(update_interval_s * fs_hz));
    }

    std::int64_t total_samples() const { return static_cast<std::int64_t>(std::llround(duration_s * fs_hz)); }

    std::size_t index_of(const std::string &id) const {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id == id)
                return i;
        throw Error(ErrorKind::ConfigError, "no node with id '" + id + "'");
    }

    /// True when either end of the pair has muted the other.
    bool muted(std::size_t a, std::size_t b) const {
        auto has = [&](std::size_t x, std::size_t y) {
            const auto &m = nodes[x].mute;
            return std::find(m.begin(), m.end(), nodes[y].id) != m.end();
        };
        return has(a, b) || has(b, a);
    }

    void validate() const {
        auto fail = [](const std::string &msg) { throw Error(ErrorKind::ConfigError, msg); };
        if (nodes.size() < 2)
            fail("a scenario needs at least two nodes");
        if (!(fs_hz > 0.0) || !std::isfinite(fs_hz))
            fail("fs must be positive");
        if (!(fc_hz >= 0.0) || !std::isfinite(fc_hz))
            fail("fc must be nonnegative");
        if (!(update_interval_s > 0.0))
            fail("update interval must be positive");
        const double U = update_interval_s * fs_hz;
        if (std::abs(U - std::round(U)) > 1e-6 * std::max(1.0, U) || std::round(U) < 1.0)
            fail("update interval times fs must be a whole number of samples");
        if (!(max_range_m > 0.0))
            fail("max range must be positive");
        if (!(duration_s >= 0.0))
            fail("duration must be nonnegative");
        if (!(loss_ref_m > 0.0))
            fail("loss reference distance must be positive");
        if (taps != 4 && taps != 8)
            fail("filter length must be 4 or 8");
        if (bank_settings < 1)
            fail("filter bank needs at least one setting");
        std::set<std::string> ids;
        for (const NodeModel &n : nodes) {
            if (n.id.empty())
                fail("node id must be nonempty");
            if (!ids.insert(n.id).second)
                fail("duplicate node id '" + n.id + "'");
        }
        for (const NodeModel &n : nodes) {
            try {
                n.profile.validate();
                n.antenna.validate();
            } catch (const Error &e) {
                fail("node '" + n.id + "': " + e.what());
            }
            if (n.trajectory.waypoints.empty())
                fail("node '" + n.id + "' has no waypoints");
            for (const auto &o : n.trajectory.orientation)
                if (!is_rotation(o.value))
                    fail("node '" + n.id + "' orientation is not a rotation");
            if (n.steer.empty())
                fail("node '" + n.id + "' has an empty steer schedule");
            for (const auto &s : n.steer)
                if (!s.value.valid())
                    fail("node '" + n.id + "' has an invalid steer angle");
            for (const std::string &m : n.mute) {
                if (m == n.id)
                    fail("node '" + n.id + "' cannot mute itself");
                if (!ids.count(m))
                    fail("node '" + n.id + "' mutes unknown node '" + m + "'");
            }
            if (!n.rx_offset.allFinite())
                fail("node '" + n.id + "' rx offset is not finite");
            if (n.tx) {
                try {
                    check_band(*n.tx, fs_hz);
                    Waveform(*n.tx, fs_hz);
                } catch (const Error &e) {
                    if (e.kind() == ErrorKind::BandExceeded)
                        throw;
                    fail("node '" + n.id + "' transmit waveform: " + e.what());
                }
            }
        }
    }
};

/// Rescales a scenario to sample rate F fs.  Baseband frequencies and speeds
/// scale by F, lengths and times by 1/F, and the carrier stays put, so delays
/// in samples and Doppler shifts as a fraction of fs are unchanged.
/// Sample-file waveforms are left as they are.
inline Scenario scaled_rate(Scenario sc, double F) {
    if (!(F > 0.0) || !std::isfinite(F))
        throw Error(ErrorKind::ConfigError, "fs scale must be positive");
    sc.fs_hz *= F;
    sc.update_interval_s /= F;
    sc.duration_s /= F;
    sc.max_range_m /= F;
    sc.loss_ref_m /= F;
    for (NodeModel &n : sc.nodes) {
        // Later waypoints follow the scaled motion; any jump between segments scales by 1/F.
        const std::vector<Waypoint> orig = n.trajectory.waypoints;
        for (std::size_t i = 0; i < orig.size(); ++i) {
            Waypoint &w = n.trajectory.waypoints[i];
            w.t = orig[i].t / F;
            w.velocity = orig[i].velocity * F;
            if (i == 0) {
                w.position = orig[0].position / F;
            } else {
                const Waypoint &a = orig[i - 1], &b = n.trajectory.waypoints[i - 1];
                const Vec3 jump = orig[i].position - a.position - a.velocity * (orig[i].t - a.t);
                w.position = b.position + b.velocity * (w.t - b.t) + jump / F;
            }
        }
        for (auto &o : n.trajectory.orientation)
            o.t /= F;
        for (auto &s : n.steer)
            s.t /= F;
        for (ScatterPoint &p : n.profile.points)
            p.location /= F;
        n.rx_offset /= F;
        if (n.tx && n.tx->kind != WaveKind::Samples) {
            n.tx->freq_hz *= F;
            n.tx->bandwidth_hz *= F;
            n.tx->width_s /= F;
            n.tx->period_s /= F;
            n.tx->start_s /= F;
        }
    }
    return sc;
}

} // namespace dpemu
