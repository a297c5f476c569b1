// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Nodal emulation.  Node m sends y_{m,l} to every other node l and records a
// receiver stream r_m.  Two engines compute the same signals:
//
//   direct  Each node keeps K intermediate signals
//             v_{m,k}(t) = sum_{n != m} alpha_{m,k}(th^i_n) x_{n,m}(t - tau_{n,k})
//           where x_{n,m} is the arrival from n, and forms
//             y'_{m,l}(t) = G_m s_m(t - tau_{m,l})
//                         + sum_k beta_{m,k}(th^o_l) v_{m,k}(t - tau_{m,l} + tau_{k,l}).
//   tdl     No shared intermediates: every (source, scatterer) term is
//           filtered straight out of the arrival history.
//
// Both multiply by C(d) e^{j Phi(t)} and use the same receiver
//   r_m(t) = sum_{n != m} G_m(th^s, -th^i_n) x_{n,m}(t - tau_{n,r}).
//
// Carrier phases of the scatterer and receiver offsets are folded into the
// weights (alpha e^{-j 2 pi fc tau_{n,k}}, beta e^{+j 2 pi fc tau_{k,l}}).
// Phi starts at -2 pi fc tau(t0) and advances at 2 pi f_D, with f_D taken
// at the middle of each update so the phase tracks the slewing delay.
//
// Schedule: blocks of B samples.  Outputs for [b0, b0 + B) read
// intermediates strictly older than b0 - Lambda; intermediates and receiver
// samples for [b0 - Lambda, b0 + B - Lambda) are formed once the block's
// arrivals are in.  Lambda covers the scatterer and receiver offsets, and B
// is shrunk below the shortest inter-node delay to keep this causal.

#pragma once

#include "dpemu/core.hpp"
#include "dpemu/fdelay.hpp"
#include "dpemu/geom.hpp"
#include "dpemu/opcount.hpp"
#include "dpemu/scatter.hpp"
#include "dpemu/scenario.hpp"
#include "dpemu/sphharm.hpp"
#include "dpemu/waveform.hpp"

#include <algorithm>
#include <barrier>
#include <cmath>
#include <deque>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <thread>
#include <vector>

namespace dpemu {

/// Parameters of one ordered pair, held for one update interval.
struct PairParams {
    double delay0 = 0.0;  // samples, at the update start
    double delay1 = 0.0;  // samples, at the next update start
    double doppler_hz = 0.0;
    double phase0 = 0.0;  // carrier phase at the update start
    double loss = 0.0;
    cplx g_tx{};          // source radiator toward the destination
    cplx g_rx{};          // destination radiator from the source, offset phase folded in
    double rx_delay = 0.0;
    std::vector<cplx> alpha;     // destination scatterers
    std::vector<double> tau_in;  // samples
    std::vector<cplx> beta;      // source scatterers
    std::vector<double> tau_out; // samples
};

struct UpdateParams {
    std::int64_t u = 0;
    std::int64_t t0 = 0;
    std::size_t N = 0;
    std::vector<PairParams> pairs;

    const PairParams &pair(std::size_t src, std::size_t dst) const { return pairs[src * N + dst]; }
};

/// Geometry and weights for update u.  `prev` supplies the carried carrier phase.
inline UpdateParams compute_update(const Scenario &sc, std::int64_t u, const UpdateParams *prev) {
    const std::size_t N = sc.N();
    const std::int64_t U = sc.update_samples();
    const double fs = sc.fs_hz, fc = sc.fc_hz;
    const double t_a = static_cast<double>(u * U) / fs;
    const double t_b = static_cast<double>((u + 1) * U) / fs;
    const double t_mid = 0.5 * (t_a + t_b);

    std::vector<Kinematics> ka, kb, km;
    for (const NodeModel &n : sc.nodes) {
        ka.push_back(n.trajectory.at(t_a));
        kb.push_back(n.trajectory.at(t_b));
        km.push_back(n.trajectory.at(t_mid));
    }
    UpdateParams up;
    up.u = u;
    up.t0 = u * U;
    up.N = N;
    up.pairs.resize(N * N);
    for (std::size_t m = 0; m < N; ++m) {
        const NodeModel &src = sc.nodes[m];
        const Angle steer_src = active_at<Angle>(src.steer, t_a);
        for (std::size_t l = 0; l < N; ++l) {
            if (l == m)
                continue;
            const NodeModel &dst = sc.nodes[l];
            const PathState p = path_between(ka[m], ka[l], fc, t_a, sc.loss_ref_m);
            if (p.distance_m > sc.max_range_m)
                throw Error(ErrorKind::BufferUnderrun, "path " + src.id + " -> " + dst.id + " spans " +
                                                           std::to_string(p.distance_m) + " m, beyond max range");
            PairParams &pp = up.pairs[m * N + l];
            pp.delay0 = p.delay_s * fs;
            pp.delay1 = path_between(kb[m], kb[l], fc, t_b, sc.loss_ref_m).delay_s * fs;
            pp.doppler_hz = path_between(km[m], km[l], fc, t_mid, sc.loss_ref_m).doppler_hz;
            pp.loss = p.loss_amp;
            if (prev) {
                const PairParams &q = prev->pair(m, l);
                pp.phase0 = std::remainder(q.phase0 + two_pi * q.doppler_hz * static_cast<double>(U) / fs, two_pi);
            } else {
                pp.phase0 = std::remainder(-two_pi * fc * p.delay_s, two_pi);
            }

            const bool muted = sc.muted(m, l);
            if (!muted) {
                pp.g_tx = antenna_gain(src.antenna, steer_src, p.outgoing);
                const Angle steer_dst = active_at<Angle>(dst.steer, t_a);
                const double tau_r = dst.rx_offset.dot(steering_vector(p.incoming));
                pp.g_rx = antenna_gain(dst.antenna, steer_dst, p.incoming.antipode()) *
                          std::polar(1.0, -two_pi * fc * tau_r);
                pp.rx_delay = tau_r * fs;
            }

            const ScatterProfile &hd = dst.profile;
            if (!hd.empty()) {
                const VecC psi = sh_eval(hd.spec, p.incoming);
                const Vec3 a = steering_vector(p.incoming);
                for (std::size_t k = 0; k < hd.K(); ++k) {
                    const double tau = hd.points[k].location.dot(a);
                    pp.alpha.push_back(hd.alpha(k, psi) * std::polar(1.0, -two_pi * fc * tau));
                    pp.tau_in.push_back(tau * fs);
                }
            }
            const ScatterProfile &hs = src.profile;
            if (!hs.empty()) {
                const VecC psi = sh_eval(hs.spec, p.outgoing);
                const Vec3 a = steering_vector(p.outgoing);
                for (std::size_t k = 0; k < hs.K(); ++k) {
                    const double tau = hs.points[k].location.dot(a);
                    pp.beta.push_back(hs.beta(k, psi) * std::polar(1.0, two_pi * fc * tau));
                    pp.tau_out.push_back(tau * fs);
                }
            }
        }
    }
    return up;
}

/// Persistent workers released together by a barrier; item i runs on worker i % W.
class LockstepPool {
public:
    explicit LockstepPool(std::size_t workers)
        : W_(std::max<std::size_t>(workers, 1)), sync_(static_cast<std::ptrdiff_t>(W_)) {
        for (std::size_t w = 1; w < W_; ++w)
            threads_.emplace_back([this, w] { loop(w); });
    }

    ~LockstepPool() {
        if (W_ > 1) {
            stop_ = true;
            sync_.arrive_and_wait();
        }
        for (auto &t : threads_)
            t.join();
    }

    LockstepPool(const LockstepPool &) = delete;
    LockstepPool &operator=(const LockstepPool &) = delete;

    std::size_t workers() const noexcept { return W_; }

    void run(std::size_t items, const std::function<void(std::size_t)> &f) {
        task_ = &f;
        items_ = items;
        errors_.assign(items, nullptr);
        if (W_ > 1)
            sync_.arrive_and_wait();
        work(0);
        if (W_ > 1)
            sync_.arrive_and_wait();
        task_ = nullptr;
        for (auto &e : errors_)
            if (e)
                std::rethrow_exception(e);
    }

private:
    void loop(std::size_t w) {
        for (;;) {
            sync_.arrive_and_wait();
            if (stop_)
                return;
            work(w);
            sync_.arrive_and_wait();
        }
    }

    void work(std::size_t w) {
        for (std::size_t i = w; i < items_; i += W_) {
            try {
                (*task_)(i);
            } catch (...) {
                errors_[i] = std::current_exception();
            }
        }
    }

    std::size_t W_;
    std::barrier<> sync_;
    std::vector<std::thread> threads_;
    const std::function<void(std::size_t)> *task_ = nullptr;
    std::size_t items_ = 0;
    std::vector<std::exception_ptr> errors_;
    bool stop_ = false;
};

struct RunOptions {
    EngineKind engine = EngineKind::Direct;
    std::size_t workers = 1;
    /// Keep every arrival and intermediate signal (tests only; memory grows with the run).
    bool capture = false;
    /// Called on the driving thread, in node order, with each new receiver block
    /// (samples >= 0 only).  When set, receivers are not kept in the result.
    std::function<void(std::size_t node, const SampleBlock &block)> sink;
};

struct RunResult {
    std::vector<SampleBlock> receivers;  // one per node, samples [0, duration * fs)
    OpCount ops;                         // measured per emulated sample
    std::int64_t block_length = 0;
    std::int64_t latency = 0;
    std::size_t buffer_length = 0;
    std::vector<std::vector<SampleBlock>> arrivals;       // [src][dst], when captured
    std::vector<std::vector<SampleBlock>> intermediates;  // [node][k], when captured
};

class Emulator {
public:
    Emulator(const Scenario &sc, RunOptions opt)
        : sc_(validated(sc)), opt_(opt), bank_(sc.filter, sc.taps, sc.bank_settings), R_(sc.taps), N_(sc.N()) {
        U_ = sc_.update_samples();
        total_ = sc_.total_samples();
        const double fs = sc_.fs_hz;

        double xs = 0.0, xr = 0.0;
        for (const NodeModel &n : sc_.nodes) {
            for (const ScatterPoint &p : n.profile.points)
                xs = std::max(xs, p.location.norm() / speed_of_light * fs);
            xr = std::max(xr, n.rx_offset.norm() / speed_of_light * fs);
        }
        X_ = static_cast<std::int64_t>(std::ceil(xs));
        latency_ = static_cast<std::int64_t>(std::ceil(std::max(xs, xr))) + R_ / 2 + 2;
        maxdelay_ = static_cast<std::int64_t>(std::ceil(sc_.max_range_m / speed_of_light * fs)) + 1;
        lookback_ = maxdelay_ + latency_ + 2 * X_ + 2 * R_ + 16;

        // Shortest delay over every update the run touches fixes the block length.
        double tau_min = std::numeric_limits<double>::infinity();
        const std::int64_t u_end = floor_div(total_ + latency_ + U_, U_) + 1;
        for (std::int64_t u = 0; u <= u_end; ++u) {
            const double t = static_cast<double>(u * U_) / fs;
            std::vector<Kinematics> k;
            for (const NodeModel &n : sc_.nodes)
                k.push_back(n.trajectory.at(t));
            for (std::size_t m = 0; m < N_; ++m)
                for (std::size_t l = 0; l < N_; ++l)
                    if (m != l)
                        tau_min = std::min(tau_min, path_between(k[m], k[l], sc_.fc_hz, t).delay_s * fs);
        }
        const double slack = tau_min - static_cast<double>(X_ + R_ / 2 + 1 + latency_);
        B_ = std::min<std::int64_t>(U_, static_cast<std::int64_t>(std::floor(slack)));
        if (B_ < 1)
            throw Error(ErrorKind::CausalityViolation,
                        "shortest inter-node delay (" + std::to_string(tau_min) +
                            " samples) does not exceed the scatterer and receiver offsets plus filter support");

        const auto cap_tx = static_cast<std::size_t>(maxdelay_ + B_ + 2 * R_ + 8);
        const auto cap_v = static_cast<std::size_t>(maxdelay_ + B_ + 2 * X_ + 2 * R_ + 16);
        buffer_length_ = static_cast<std::size_t>(maxdelay_ + B_ + latency_ + 2 * X_ + 2 * R_ + 16);
        nodes_.resize(N_);
        for (std::size_t m = 0; m < N_; ++m) {
            NodeState &ns = nodes_[m];
            ns.tx_line = DelayLine(cap_tx, 0);
            for (std::size_t n = 0; n < N_; ++n)
                ns.arrivals.emplace_back(buffer_length_, 0);
            for (std::size_t k = 0; k < sc_.nodes[m].profile.K(); ++k)
                ns.inter.emplace_back(cap_v, -latency_);
            if (sc_.nodes[m].tx)
                ns.wave.emplace(*sc_.nodes[m].tx, fs);
            if (opt_.capture) {
                ns.cap_arrivals.resize(N_);
                ns.cap_inter.resize(sc_.nodes[m].profile.K());
                for (auto &b : ns.cap_inter)
                    b.start_index = -latency_;
            }
        }
        mail_.assign(N_ * N_, nullptr);
    }

    std::int64_t block_length() const noexcept { return B_; }
    std::int64_t latency() const noexcept { return latency_; }

    RunResult run() {
        LockstepPool pool(opt_.workers);
        RunResult res;
        res.receivers.resize(N_);
        const std::function<void(std::size_t)> phase_a = [this](std::size_t m) { guarded([&] { outputs(m); }); };
        const std::function<void(std::size_t)> phase_b = [this](std::size_t m) { guarded([&] { inputs(m); }); };
        std::int64_t steps = 0;
        for (b0_ = 0; b0_ - latency_ < total_; b0_ += B_) {
            refresh_params();
            pool.run(N_, phase_a);
            pool.run(N_, phase_b);
            const std::int64_t lo = b0_ - latency_;
            const std::int64_t first = std::max<std::int64_t>(lo, 0), last = std::min(lo + B_, total_);
            for (std::size_t m = 0; m < N_ && first < last; ++m) {
                const auto &rx = nodes_[m].rx_block;
                const auto from = rx.begin() + (first - lo), to = rx.begin() + (last - lo);
                if (opt_.sink) {
                    SampleBlock blk;
                    blk.start_index = first;
                    blk.data.assign(from, to);
                    opt_.sink(m, blk);
                } else {
                    res.receivers[m].data.insert(res.receivers[m].data.end(), from, to);
                }
            }
            steps += B_;
        }
        double ops = 0.0;
        for (const NodeState &ns : nodes_)
            ops += static_cast<double>(ns.ops);
        res.ops = OpCount{steps > 0 ? ops / static_cast<double>(steps) : 0.0, opcount_convention()};
        res.block_length = B_;
        res.latency = latency_;
        res.buffer_length = buffer_length_;
        if (opt_.capture) {
            res.arrivals.assign(N_, std::vector<SampleBlock>(N_));
            res.intermediates.resize(N_);
            for (std::size_t m = 0; m < N_; ++m) {
                for (std::size_t n = 0; n < N_; ++n)
                    res.arrivals[n][m] = std::move(nodes_[m].cap_arrivals[n]);
                res.intermediates[m] = std::move(nodes_[m].cap_inter);
            }
        }
        return res;
    }

private:
    struct NodeState {
        std::optional<Waveform> wave;
        DelayLine tx_line;
        std::vector<DelayLine> arrivals;  // indexed by source
        std::vector<DelayLine> inter;     // direct engine intermediates
        std::vector<cplx> rx_block;
        std::int64_t ops = 0;
        std::vector<SampleBlock> cap_arrivals;
        std::vector<SampleBlock> cap_inter;
    };

    static const Scenario &validated(const Scenario &sc) {
        sc.validate();
        return sc;
    }

    template <typename F>
    static void guarded(F &&f) {
        try {
            f();
        } catch (const Error &e) {
            if (e.kind() == ErrorKind::DelayOutOfRange)
                throw Error(ErrorKind::BufferUnderrun, e.what());
            throw;
        }
    }

    const UpdateParams &params_at(std::int64_t t) const {
        const std::int64_t u = floor_div(t, U_);
        const std::int64_t i = u - params_.front()->u;
        if (i < 0 || i >= static_cast<std::int64_t>(params_.size()))
            throw Error(ErrorKind::BufferUnderrun, "update parameters for sample " + std::to_string(t) + " not held");
        return *params_[static_cast<std::size_t>(i)];
    }

    void refresh_params() {
        const std::int64_t u_lo = floor_div(b0_ - lookback_, U_);
        const std::int64_t u_hi = floor_div(b0_ + B_ - 1, U_);
        while (!params_.empty() && params_.front()->u < u_lo)
            params_.pop_front();
        if (params_.empty())
            params_.push_back(std::make_shared<const UpdateParams>(compute_update(sc_, u_lo, nullptr)));
        while (params_.back()->u < u_hi)
            params_.push_back(
                std::make_shared<const UpdateParams>(compute_update(sc_, params_.back()->u + 1, params_.back().get())));
    }

    // Delay (samples) and path factor C e^{j Phi} for pair (m, l) at output sample t.
    std::pair<double, cplx> path_at(const PairParams &p, std::int64_t t, std::int64_t t0) const {
        const double frac = static_cast<double>(t - t0) / static_cast<double>(U_);
        const double delay = p.delay0 + (p.delay1 - p.delay0) * frac;
        const double phase = p.phase0 + two_pi * p.doppler_hz * static_cast<double>(t - t0) / sc_.fs_hz;
        return {delay, p.loss * std::polar(1.0, phase)};
    }

    // Phase A: transmit samples and outputs y_{m,l} for [b0, b0 + B).
    void outputs(std::size_t m) {
        NodeState &ns = nodes_[m];
        for (std::int64_t t = b0_; t < b0_ + B_; ++t)
            ns.tx_line.push(ns.wave ? ns.wave->at(t) : cplx{});
        const std::size_t K = sc_.nodes[m].profile.K();
        const auto rlen = static_cast<std::int64_t>(R_);
        for (std::size_t l = 0; l < N_; ++l) {
            if (l == m)
                continue;
            auto blk = std::make_shared<SampleBlock>();
            blk->start_index = b0_;
            blk->data.resize(static_cast<std::size_t>(B_));
            for (std::int64_t t = b0_; t < b0_ + B_; ++t) {
                const UpdateParams &up = params_at(t);
                const PairParams &p = up.pair(m, l);
                const auto [delay, factor] = path_at(p, t, up.t0);
                const double q0 = static_cast<double>(t) - delay;
                cplx acc = p.g_tx * ns.tx_line.sample_at(q0, bank_);
                if (opt_.engine == EngineKind::Direct) {
                    for (std::size_t k = 0; k < K; ++k)
                        acc += p.beta[k] * ns.inter[k].sample_at(q0 + p.tau_out[k], bank_);
                    ns.ops += (static_cast<std::int64_t>(K) + 1) * rlen + 1;
                } else {
                    for (std::size_t n = 0; n < N_; ++n) {
                        if (n == m)
                            continue;
                        for (std::size_t k = 0; k < K; ++k)
                            acc += p.beta[k] * tdl_term(m, n, k, q0 + p.tau_out[k]);
                    }
                    ns.ops += (static_cast<std::int64_t>(N_ - 1) * static_cast<std::int64_t>(K) + 1) * rlen + 1;
                }
                blk->data[static_cast<std::size_t>(t - b0_)] = factor * acc;
            }
            mail_[m * N_ + l] = std::move(blk);
        }
    }

    // Source n's contribution through scatterer k of node m, read at position pos
    // of the (never materialized) intermediate signal.
    cplx tdl_term(std::size_t m, std::size_t n, std::size_t k, double pos) const {
        const FilterBank::Read rd = bank_.resolve(pos);
        const DelayLine &arr = nodes_[m].arrivals[n];
        cplx acc{};
        for (int r = 0; r < R_; ++r) {
            const std::int64_t idx = rd.newest - r;
            if (idx < -latency_)
                continue;
            const PairParams &q = params_at(idx).pair(n, m);
            acc += rd.taps[r] * (q.alpha[k] * arr.sample_at(static_cast<double>(idx) - q.tau_in[k], bank_));
        }
        return acc;
    }

    // Phase B: take in this block's arrivals, then intermediates and receiver
    // samples for [b0 - Lambda, b0 + B - Lambda).
    void inputs(std::size_t m) {
        NodeState &ns = nodes_[m];
        for (std::size_t n = 0; n < N_; ++n) {
            if (n == m)
                continue;
            const SampleBlock &blk = *mail_[n * N_ + m];
            ns.arrivals[n].append(blk.data);
            if (opt_.capture)
                ns.cap_arrivals[n].data.insert(ns.cap_arrivals[n].data.end(), blk.data.begin(), blk.data.end());
        }
        const std::int64_t lo = b0_ - latency_;
        const std::size_t K = sc_.nodes[m].profile.K();
        const auto rlen = static_cast<std::int64_t>(R_);
        const auto others = static_cast<std::int64_t>(N_ - 1);
        if (opt_.engine == EngineKind::Direct) {
            for (std::int64_t t = lo; t < lo + B_; ++t) {
                const UpdateParams &up = params_at(t);
                for (std::size_t k = 0; k < K; ++k) {
                    cplx v{};
                    for (std::size_t n = 0; n < N_; ++n) {
                        if (n == m)
                            continue;
                        const PairParams &q = up.pair(n, m);
                        v += q.alpha[k] * ns.arrivals[n].sample_at(static_cast<double>(t) - q.tau_in[k], bank_);
                    }
                    ns.inter[k].push(v);
                    if (opt_.capture)
                        ns.cap_inter[k].data.push_back(v);
                }
                ns.ops += static_cast<std::int64_t>(K) * others * rlen;
            }
        }
        ns.rx_block.assign(static_cast<std::size_t>(B_), cplx{});
        for (std::int64_t t = lo; t < lo + B_; ++t) {
            const UpdateParams &up = params_at(t);
            cplx r{};
            for (std::size_t n = 0; n < N_; ++n) {
                if (n == m)
                    continue;
                const PairParams &q = up.pair(n, m);
                r += q.g_rx * ns.arrivals[n].sample_at(static_cast<double>(t) - q.rx_delay, bank_);
            }
            ns.rx_block[static_cast<std::size_t>(t - lo)] = r;
            ns.ops += others * rlen;
        }
    }

    Scenario sc_;
    RunOptions opt_;
    FilterBank bank_;
    int R_;
    std::size_t N_;
    std::int64_t U_ = 1, total_ = 0, X_ = 0, latency_ = 0, maxdelay_ = 0, lookback_ = 0, B_ = 1;
    std::size_t buffer_length_ = 0;
    std::int64_t b0_ = 0;
    std::vector<NodeState> nodes_;
    std::vector<std::shared_ptr<const SampleBlock>> mail_;
    std::deque<std::shared_ptr<const UpdateParams>> params_;
};

inline RunResult run(const Scenario &sc, RunOptions opt = {}) { return Emulator(sc, opt).run(); }

} // namespace dpemu
