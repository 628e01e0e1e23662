#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tdcsim/analysis.hpp"
#include "tdcsim/calibration.hpp"
#include "tdcsim/config.hpp"
#include "tdcsim/delay_line.hpp"
#include "tdcsim/server.hpp"
#include "tdcsim/sources.hpp"
#include "tdcsim/steady.hpp"
#include "tdcsim/stream.hpp"

namespace tdcsim {

// ---------- temperature sweep ----------

struct TempSweepRow {
    double temp_c = 0;
    Strategy strategy = Strategy::kFixedRo5;
    double fwhm_ps = 0;
    double trunc_delay_ps = 0;
    int n_c = 0;
};

struct TempSweepResult {
    std::vector<TempSweepRow> rows;
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
};

namespace detail {

inline std::vector<uint64_t> fine_histogram(std::span<const RawTag> tags, size_t bins_hint) {
    std::vector<uint64_t> hist(bins_hint, 0);
    for (const auto& t : tags) {
        if (t.fine >= hist.size()) hist.resize(t.fine + 1, 0);
        hist[t.fine]++;  // slot 0 unused: fine indices start at 1
    }
    return {hist.begin() + 1, hist.end()};
}

inline CalibrationTable ro_table_at(const TdlState& st, const SourceConfig& ro_cfg,
                                    size_t n_events, uint64_t seed) {
    SourceConfig cfg = ro_cfg;
    cfg.seed = seed;
    const auto events = next_events(cfg, n_events);
    std::vector<RawTag> tags(events.size());
    for (size_t i = 0; i < events.size(); ++i) tags[i] = st.digitize(events[i].time_ps);
    const auto hist = fine_histogram(tags, 160);
    return build_table(hist, st.coarse_period_ps());
}

}  // namespace detail

// For every temperature step, digitizes one split two-channel detection
// stream on both delay lines and reports the two-channel FWHM, the truncated
// mean bin delay, and the populated bin count under each calibration
// strategy. The detection stream and channel noises are drawn once and reused
// across steps, so strategy curves respond to the line physics rather than to
// per-step sampling noise; the per-step ring-oscillator recalibration is the
// exception, drawing a fresh stream at every step as a real recalibration
// would. The steady window carries across steps and is never reset.
inline TempSweepResult run_tempsweep(const ExperimentSpec& spec) {
    if (spec.temp_step_c <= 0) throw ConfigError("tempsweep: temperature step must be positive");
    if (spec.strategies.empty()) throw ConfigError("tempsweep: no strategies");
    const size_t n = spec.events_per_temp;
    const double tau = spec.profile.coarse_period_ps();
    const double fit_bin = tau / spec.profile.target_nc / 2;

    const DelayLineModel line_a = make_delay_line(spec.profile);
    const DelayLineModel line_b =
        sibling_line(line_a, spec.channel_dev_sigma, derive_seed(spec.seed, 3));

    const auto events = next_events(spec.spd, n);
    std::vector<double> arrival_a(n), arrival_b(n);
    {
        Rng noise_a(derive_seed(spec.seed, 4));
        Rng noise_b(derive_seed(spec.seed, 5));
        for (size_t i = 0; i < n; ++i) {
            arrival_a[i] = events[i].time_ps + noise_a.gaussian(0.0, spec.channel_noise_ps);
            arrival_b[i] = events[i].time_ps + noise_b.gaussian(0.0, spec.channel_noise_ps);
        }
    }

    std::optional<CalibrationTable> ro5_a, ro5_b, spd5_a, spd5_b;
    std::optional<SteadyState> steady_a, steady_b;

    TempSweepResult result;
    result.spec_hash = spec_hash(spec);
    result.seed = spec.seed;

    std::vector<RawTag> tags_a(n), tags_b(n);
    std::vector<double> ts_a(n), ts_b(n);
    size_t step = 0;
    for (double T = spec.temp_start_c; T <= spec.temp_stop_c + 1e-9;
         T += spec.temp_step_c, ++step) {
        const TdlState st_a = line_a.state_at(T);
        const TdlState st_b = line_b.state_at(T);
        for (size_t i = 0; i < n; ++i) {
            tags_a[i] = st_a.digitize(arrival_a[i], 0);
            tags_b[i] = st_b.digitize(arrival_b[i], 1);
        }

        const bool first = step == 0;
        if (first) {
            ro5_a = detail::ro_table_at(st_a, spec.ro, n, derive_seed(spec.ro.seed, 1000));
            ro5_b = detail::ro_table_at(st_b, spec.ro, n, derive_seed(spec.ro.seed, 2000));
            spd5_a = build_table(detail::fine_histogram(tags_a, 160), tau);
            spd5_b = build_table(detail::fine_histogram(tags_b, 160), tau);
            steady_a.emplace(spec.window_capacity, tau);
            steady_b.emplace(spec.window_capacity, tau);
            for (size_t i = 0; i < n; ++i) {
                steady_a->push(tags_a[i].fine);
                steady_b->push(tags_b[i].fine);
            }
        }

        for (Strategy strat : spec.strategies) {
            const CalibrationTable* table_a = nullptr;
            const CalibrationTable* table_b = nullptr;
            CalibrationTable fresh_a, fresh_b, steady_snap_a, steady_snap_b;
            switch (strat) {
                case Strategy::kFixedRo5:
                    table_a = &*ro5_a;
                    table_b = &*ro5_b;
                    break;
                case Strategy::kFixedSpd5:
                    table_a = &*spd5_a;
                    table_b = &*spd5_b;
                    break;
                case Strategy::kRoPerStep:
                    fresh_a = detail::ro_table_at(st_a, spec.ro, n,
                                                  derive_seed(spec.ro.seed, 1000 + step));
                    fresh_b = detail::ro_table_at(st_b, spec.ro, n,
                                                  derive_seed(spec.ro.seed, 2000 + step));
                    table_a = &fresh_a;
                    table_b = &fresh_b;
                    break;
                case Strategy::kSteady:
                    break;
            }

            if (strat == Strategy::kSteady) {
                if (first) {
                    // the startup window: the first detections both seed the
                    // window and are calibrated with the resulting table
                    for (size_t i = 0; i < n; ++i) {
                        ts_a[i] = steady_a->calibrate(tags_a[i]);
                        ts_b[i] = steady_b->calibrate(tags_b[i]);
                    }
                } else {
                    // detection-by-detection: refresh the window, then tag
                    for (size_t i = 0; i < n; ++i) {
                        steady_a->push(tags_a[i].fine);
                        ts_a[i] = steady_a->calibrate(tags_a[i]);
                        steady_b->push(tags_b[i].fine);
                        ts_b[i] = steady_b->calibrate(tags_b[i]);
                    }
                }
                steady_snap_a = steady_a->table();
                steady_snap_b = steady_b->table();
                table_a = &steady_snap_a;
                table_b = &steady_snap_b;
            } else {
                // stale tables may not reach the hottest bins; those tags
                // clamp to the last calibrated center
                for (size_t i = 0; i < n; ++i) {
                    ts_a[i] = static_cast<double>(tags_a[i].coarse) * tau -
                              table_a->center_clamped(tags_a[i].fine);
                    ts_b[i] = static_cast<double>(tags_b[i].coarse) * tau -
                              table_b->center_clamped(tags_b[i].fine);
                }
            }

            TempSweepRow row;
            row.temp_c = T;
            row.strategy = strat;
            row.fwhm_ps = fwhm_jitter(ts_a, ts_b, fit_bin).fwhm_ps;
            row.n_c = table_a->n_c;
            row.trunc_delay_ps = truncated_mean_delay(
                table_a->bin_widths_ps, std::min(120, table_a->n_c));
            result.rows.push_back(row);
        }
    }
    return result;
}

inline void write_tempsweep_csv(const TempSweepResult& r, std::ostream& out) {
    out << "# spec_hash=0x" << std::hex << r.spec_hash << std::dec << " seed=" << r.seed << "\n";
    out << "temp_c,strategy,fwhm_ps,trunc_delay_ps,n_c\n";
    out << std::setprecision(10);
    for (const auto& row : r.rows)
        out << row.temp_c << ',' << to_string(row.strategy) << ',' << row.fwhm_ps << ','
            << row.trunc_delay_ps << ',' << row.n_c << "\n";
}

// ---------- calibration-source comparison ----------

struct CalibCompareResult {
    double chi2 = 0;
    std::vector<uint64_t> hist_ro;
    std::vector<uint64_t> hist_spd;
    std::optional<std::string> uniformity_warning;
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
};

// Code-density histograms from the internal oscillator and from the
// laser-plus-detector path on the same line, with the symmetric chi-square
// between them.
inline CalibCompareResult run_calib_compare(const ExperimentSpec& spec) {
    const DelayLineModel line = make_delay_line(spec.profile);
    const TdlState st = line.state_at(spec.profile.t_ref_c);
    const size_t n = spec.window_capacity;

    CalibCompareResult res;
    res.spec_hash = spec_hash(spec);
    res.seed = spec.seed;
    res.uniformity_warning = commensurability_warning(
        spec.spd.frequency_hz, spec.profile.f_s_hz, spec.spd.jitter_sigma_ps);

    const auto ro_events = next_events(spec.ro, n);
    const auto spd_events = next_events(spec.spd, n);
    std::vector<RawTag> ro_tags(n), spd_tags(n);
    for (size_t i = 0; i < n; ++i) {
        ro_tags[i] = st.digitize(ro_events[i].time_ps);
        spd_tags[i] = st.digitize(spd_events[i].time_ps);
    }
    res.hist_ro = detail::fine_histogram(ro_tags, 160);
    res.hist_spd = detail::fine_histogram(spd_tags, 160);
    res.chi2 = chi_square(res.hist_ro, res.hist_spd);
    return res;
}

inline void write_calib_compare_csv(const CalibCompareResult& r, std::ostream& out) {
    out << "# spec_hash=0x" << std::hex << r.spec_hash << std::dec << " seed=" << r.seed
        << " chi2=" << r.chi2;
    if (r.uniformity_warning) out << " warning=\"" << *r.uniformity_warning << "\"";
    out << "\nbin,count_ro,count_spd\n";
    const size_t n = std::max(r.hist_ro.size(), r.hist_spd.size());
    for (size_t i = 0; i < n; ++i)
        out << (i + 1) << ',' << (i < r.hist_ro.size() ? r.hist_ro[i] : 0) << ','
            << (i < r.hist_spd.size() ? r.hist_spd[i] : 0) << "\n";
}

// ---------- QKD scenario ----------

struct QkdRunResult {
    QberResult qber;
    PulseShapeReport pulse;
    std::vector<double> gate_widths_ps;
    std::vector<double> gate_qber;
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
};

// Polarization-pattern stream through a four-detector receiver: passive basis
// choice, a configurable wrong-detector probability within the measured
// basis, one delay line per detector, and per-detector code-density
// calibration. Background detections count against the pattern of the slot
// they land in.
inline QkdRunResult run_qkd(const ExperimentSpec& spec) {
    const double period = 1e12 / spec.qkd_frequency_hz;
    SourceConfig src = default_source(SourceKind::kQkdPattern, derive_seed(spec.seed, 10));
    src.frequency_hz = spec.qkd_frequency_hz;
    src.pattern = spec.qkd_pattern;
    src.detection_prob = spec.qkd_detection_prob;
    src.background_rate_hz = spec.qkd_background_rate_hz;
    src.jitter_sigma_ps = spec.detector_jitter_ps;

    const DelayLineModel base_line = make_delay_line(spec.profile);
    std::vector<DelayLineModel> lines;
    std::vector<TdlState> states;
    std::vector<CalibrationTable> tables;
    for (int ch = 0; ch < 4; ++ch) {
        lines.push_back(ch == 0 ? base_line
                                : sibling_line(base_line, spec.channel_dev_sigma,
                                               derive_seed(spec.seed, 20 + ch)));
        states.push_back(lines.back().state_at(spec.profile.t_ref_c));
        tables.push_back(detail::ro_table_at(states.back(), spec.ro, spec.window_capacity,
                                             derive_seed(spec.seed, 30 + ch)));
    }

    const auto events = next_events(src, spec.qkd_events);
    Rng route_rng(derive_seed(spec.seed, 40));
    BasisMap basis;
    std::vector<TaggedEvent> tagged;
    std::vector<double> timestamps;
    tagged.reserve(events.size());
    timestamps.reserve(events.size());
    for (const auto& e : events) {
        char label = e.label;
        if (label == 0) {
            // background: judged against the slot it falls into
            const auto slot = static_cast<uint64_t>(std::llround(e.time_ps / period));
            label = spec.qkd_pattern[static_cast<size_t>(
                (slot + spec.qkd_pattern.size() - 1) % spec.qkd_pattern.size())];
        }
        const int photon_basis = basis.label_basis.at(label);
        const int measured_basis = route_rng.bernoulli(0.5) ? 1 : 0;
        int detected;
        if (measured_basis == photon_basis) {
            detected = basis.expected_channel.at(label);
            if (route_rng.bernoulli(spec.qkd_routing_error)) detected ^= 1;  // basis conjugate
        } else {
            detected = (measured_basis == 0 ? 0 : 2) + (route_rng.bernoulli(0.5) ? 1 : 0);
        }
        const RawTag tag = states[static_cast<size_t>(detected)].digitize(
            e.time_ps, static_cast<uint8_t>(detected));
        const double ts = static_cast<double>(tag.coarse) * states[0].coarse_period_ps() -
                          tables[static_cast<size_t>(detected)].center_clamped(tag.fine);
        tagged.push_back({ts, detected, e.label != 0 ? e.label : label});
        timestamps.push_back(ts);
    }

    QkdRunResult res;
    res.spec_hash = spec_hash(spec);
    res.seed = spec.seed;
    res.pulse = pulse_shape(timestamps, period,
                            spec.profile.coarse_period_ps() / spec.profile.target_nc / 2);

    GateSpec gate;
    gate.center_offset_ps = res.pulse.peak_phase_ps;
    gate.width_ps = spec.qkd_gate_width_ps > 0 ? spec.qkd_gate_width_ps : period;
    res.qber = qber(tagged, gate, period, basis);

    for (double frac : {1.0, 0.5, 0.25, 0.125}) {
        GateSpec g{gate.center_offset_ps, period * frac};
        res.gate_widths_ps.push_back(g.width_ps);
        res.gate_qber.push_back(qber(tagged, g, period, basis).qber);
    }
    return res;
}

inline void write_qkd_csv(const QkdRunResult& r, std::ostream& out) {
    out << "# spec_hash=0x" << std::hex << r.spec_hash << std::dec << " seed=" << r.seed
        << " qber=" << r.qber.qber << " gated=" << r.qber.gated << " sifted=" << r.qber.sifted
        << " pulse_fwhm_ps=" << r.pulse.fwhm_ps << "\n";
    out << "gate_width_ps,qber\n";
    for (size_t i = 0; i < r.gate_widths_ps.size(); ++i)
        out << r.gate_widths_ps[i] << ',' << r.gate_qber[i] << "\n";
}

inline void write_pulse_csv(const PulseShapeReport& rep, std::ostream& out) {
    out << "center_ps,count\n";
    for (size_t i = 0; i < rep.histogram.counts.size(); ++i)
        out << rep.histogram.center(i) << ',' << rep.histogram.counts[i] << "\n";
}

// ---------- streaming benchmark ----------

struct StreamBenchResult {
    uint64_t records = 0;
    double elapsed_s = 0;
    double sustained_rate_per_s = 0;
    bool lossless = false;
    bool ordered = false;
    uint64_t server_drops = 0;
    uint64_t spec_hash = 0;
    uint64_t seed = 0;
};

// Loopback push of sequence-stamped records through the continuous service;
// the client checks count and ordering while the producer runs flat out.
inline StreamBenchResult run_stream_bench(const ExperimentSpec& spec) {
    ServerConfig scfg;
    scfg.mode = ServerConfig::Mode::kContinuous;
    scfg.buffer_records = spec.bench_buffer_records;
    TagServer server(scfg);
    server.start();

    const uint64_t total = spec.bench_records;
    StreamBenchResult res;
    res.spec_hash = spec_hash(spec);
    res.seed = spec.seed;
    res.records = total;

    std::atomic<bool> client_ok{false};
    std::atomic<bool> client_ordered{true};
    std::thread client([&] {
        net::Socket sock = connect_to("127.0.0.1", server.port());
        uint64_t got = 0;
        uint64_t expect = 0;
        bool ordered = true;
        std::vector<uint64_t> buf;
        while (got < total) {
            uint32_t count = 0;
            if (!net::read_all(sock.fd(), &count, 4)) break;
            buf.resize(count);
            if (count && !net::read_all(sock.fd(), buf.data(), count * size_t{8})) break;
            for (uint32_t i = 0; i < count; ++i) {
                const auto [tag, flags] = decode_record(buf[i]);
                if (tag.coarse != (expect & kCoarseMask)) ordered = false;
                ++expect;
            }
            got += count;
        }
        client_ordered = ordered;
        client_ok = got == total;
    });

    // give the client a beat to connect before records start flowing
    while (server.stats().accepted_clients == 0)
        std::this_thread::sleep_for(std::chrono::milliseconds(1));

    const auto t0 = std::chrono::steady_clock::now();
    const size_t batch_size = size_t{1} << 16;
    std::vector<uint64_t> batch(batch_size);
    uint64_t seq = 0;
    while (seq < total) {
        const size_t nb = static_cast<size_t>(std::min<uint64_t>(batch_size, total - seq));
        for (size_t i = 0; i < nb; ++i) {
            RawTag t;
            t.coarse = (seq + i) & kCoarseMask;
            t.fine = static_cast<uint32_t>((seq + i) % 200);
            t.channel = static_cast<uint8_t>((seq + i) % 4);
            batch[i] = encode_record(t, kFlagCalibrationValid);
        }
        server.push({batch.data(), nb});
        seq += nb;
    }
    server.finish();
    client.join();
    const auto t1 = std::chrono::steady_clock::now();

    res.elapsed_s = std::chrono::duration<double>(t1 - t0).count();
    res.sustained_rate_per_s = static_cast<double>(total) / res.elapsed_s;
    res.server_drops = server.stats().records_dropped;
    res.lossless = client_ok && res.server_drops == 0;
    res.ordered = client_ordered;
    server.stop();
    return res;
}

// ---------- output helpers ----------

inline void write_text_file(const std::string& path, const std::string& contents) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << contents;
}

}  // namespace tdcsim
