#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdcsim/rng.hpp"
#include "tdcsim/types.hpp"

namespace tdcsim {

enum class SourceKind { kRingOscillator, kLaserSpd, kSquareWave, kQkdPattern };

struct SourceEvent {
    double time_ps = 0;
    char label = 0;  // pattern symbol, 0 for unlabeled (incl. background)
};

struct SourceConfig {
    SourceKind kind = SourceKind::kRingOscillator;
    double frequency_hz = kDefaultSampleHz / kGoldenRatio;
    double jitter_sigma_ps = 0.0;
    double detection_prob = 1.0;
    double background_rate_hz = 0.0;
    std::string pattern = "HVDD";
    uint64_t seed = 1;
};

// Factory defaults per kind: the ring oscillator and the laser run at rates
// incommensurate with the sampling clock; detector jitter of 100 ps applies
// wherever a single-photon detector is in the path.
inline SourceConfig default_source(SourceKind kind, uint64_t seed) {
    SourceConfig cfg;
    cfg.kind = kind;
    cfg.seed = seed;
    switch (kind) {
        case SourceKind::kRingOscillator:
            cfg.frequency_hz = kDefaultSampleHz / kGoldenRatio;
            break;
        case SourceKind::kLaserSpd:
            cfg.frequency_hz = kDefaultSampleHz / (2.0 * kGoldenRatio);
            cfg.jitter_sigma_ps = 100.0;
            break;
        case SourceKind::kSquareWave:
            cfg.frequency_hz = 1e6;
            break;
        case SourceKind::kQkdPattern:
            cfg.frequency_hz = 50e6;
            cfg.jitter_sigma_ps = 100.0;
            break;
    }
    return cfg;
}

// Small-denominator rational check between the source rate and the sampling
// clock. When f_s/f is within 1e-9 of p/q with q small and the per-event
// jitter cannot smear the q phase combs (sigma < tau_coarse / (2q)), a
// code-density run on this source will not be uniform.
inline std::optional<std::string> commensurability_warning(double frequency_hz, double f_s_hz,
                                                           double jitter_sigma_ps,
                                                           int max_denominator = 64) {
    if (frequency_hz <= 0 || f_s_hz <= 0)
        throw std::invalid_argument("commensurability: rates must be positive");
    const double ratio = f_s_hz / frequency_hz;
    const double tau = coarse_period_ps(f_s_hz);
    // continued-fraction convergents of ratio
    double x = ratio;
    uint64_t p_prev = 1, q_prev = 0, p = static_cast<uint64_t>(std::floor(x)), q = 1;
    for (int iter = 0; iter < 32; ++iter) {
        const double approx = static_cast<double>(p) / static_cast<double>(q);
        if (q <= static_cast<uint64_t>(max_denominator) &&
            std::abs(ratio - approx) < 1e-9 * ratio &&
            jitter_sigma_ps < tau / (2.0 * static_cast<double>(q))) {
            return "source frequency is commensurate with the sampling clock (ratio ~ " +
                   std::to_string(p) + "/" + std::to_string(q) +
                   "); code-density input will not be uniform";
        }
        const double frac = x - std::floor(x);
        if (frac < 1e-12) break;
        x = 1.0 / frac;
        const uint64_t a = static_cast<uint64_t>(std::floor(x));
        const uint64_t p_next = a * p + p_prev;
        const uint64_t q_next = a * q + q_prev;
        p_prev = p;
        q_prev = q;
        p = p_next;
        q = q_next;
        if (q > static_cast<uint64_t>(max_denominator)) break;
    }
    return std::nullopt;
}

namespace detail {

inline void finalize_events(std::vector<SourceEvent>& ev) {
    std::stable_sort(ev.begin(), ev.end(),
                     [](const SourceEvent& a, const SourceEvent& b) { return a.time_ps < b.time_ps; });
    // enforce strictly increasing times; coincidences get a femtosecond nudge
    for (size_t i = 1; i < ev.size(); ++i)
        if (ev[i].time_ps <= ev[i - 1].time_ps) ev[i].time_ps = ev[i - 1].time_ps + 1e-3;
}

}  // namespace detail

// Generate `count` events in simulated time. Pulsed kinds emit at k/f with
// per-event Gaussian jitter, thinned by detection_prob; a Poisson background
// is merged in when configured. Times are strictly increasing.
inline std::vector<SourceEvent> next_events(const SourceConfig& cfg, size_t count) {
    if (count < 1) throw std::invalid_argument("next_events: count < 1");
    if (cfg.frequency_hz <= 0) throw std::invalid_argument("next_events: frequency <= 0");
    if (cfg.detection_prob < 0 || cfg.detection_prob > 1)
        throw std::invalid_argument("next_events: detection_prob out of range");
    if (cfg.jitter_sigma_ps < 0) throw std::invalid_argument("next_events: jitter_sigma < 0");
    if (cfg.kind == SourceKind::kQkdPattern && cfg.pattern.empty())
        throw std::invalid_argument("next_events: empty pattern");

    Rng rng(cfg.seed);
    Rng bg_rng(derive_seed(cfg.seed, 0x6267));
    const double period_ps = 1e12 / cfg.frequency_hz;
    std::vector<SourceEvent> out;
    out.reserve(count);

    double next_bg = cfg.background_rate_hz > 0
                         ? bg_rng.exponential(cfg.background_rate_hz) * 1e12
                         : std::numeric_limits<double>::infinity();
    uint64_t k = 0;
    while (out.size() < count) {
        ++k;
        const double pulse_time = static_cast<double>(k) * period_ps;
        while (next_bg < pulse_time && out.size() < count) {
            out.push_back({next_bg, 0});
            next_bg += bg_rng.exponential(cfg.background_rate_hz) * 1e12;
        }
        if (out.size() >= count) break;

        char label = 0;
        bool emit = true;
        switch (cfg.kind) {
            case SourceKind::kRingOscillator:
            case SourceKind::kSquareWave:
                break;
            case SourceKind::kLaserSpd:
                emit = rng.bernoulli(cfg.detection_prob);
                break;
            case SourceKind::kQkdPattern:
                label = cfg.pattern[static_cast<size_t>((k - 1) % cfg.pattern.size())];
                emit = rng.bernoulli(cfg.detection_prob);
                break;
        }
        if (!emit) continue;
        double t = pulse_time;
        if (cfg.jitter_sigma_ps > 0) t += rng.gaussian(0.0, cfg.jitter_sigma_ps);
        if (t <= 0) t = 1e-3;
        out.push_back({t, label});
    }
    detail::finalize_events(out);
    return out;
}

// Copy one event stream into two channels with independent per-event Gaussian
// perturbations. Event order (and pairing by index) is preserved.
inline std::pair<std::vector<SourceEvent>, std::vector<SourceEvent>> split_two_channels(
    std::span<const SourceEvent> events, double jitter_sigma_per_channel_ps, uint64_t seed) {
    if (jitter_sigma_per_channel_ps < 0)
        throw std::invalid_argument("split_two_channels: sigma < 0");
    Rng rng_a(derive_seed(seed, 0));
    Rng rng_b(derive_seed(seed, 1));
    std::vector<SourceEvent> a(events.begin(), events.end());
    std::vector<SourceEvent> b(events.begin(), events.end());
    if (jitter_sigma_per_channel_ps > 0) {
        for (auto& e : a) e.time_ps += rng_a.gaussian(0.0, jitter_sigma_per_channel_ps);
        for (auto& e : b) e.time_ps += rng_b.gaussian(0.0, jitter_sigma_per_channel_ps);
    }
    return {std::move(a), std::move(b)};
}

}  // namespace tdcsim
