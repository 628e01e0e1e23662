#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "tdcsim/delay_line.hpp"
#include "tdcsim/sources.hpp"

namespace tdcsim {

using json = nlohmann::json;

// Configuration problems map to CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Strategy { kFixedRo5, kFixedSpd5, kRoPerStep, kSteady };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::kFixedRo5: return "fixed_ro_5C";
        case Strategy::kFixedSpd5: return "fixed_spd_5C";
        case Strategy::kRoPerStep: return "ro_per_step";
        case Strategy::kSteady: return "steady";
    }
    return "?";
}

inline Strategy strategy_from_string(const std::string& s) {
    if (s == "fixed_ro_5C") return Strategy::kFixedRo5;
    if (s == "fixed_spd_5C") return Strategy::kFixedSpd5;
    if (s == "ro_per_step") return Strategy::kRoPerStep;
    if (s == "steady") return Strategy::kSteady;
    throw ConfigError("unknown strategy: " + s);
}

inline std::string to_string(SourceKind k) {
    switch (k) {
        case SourceKind::kRingOscillator: return "ring_oscillator";
        case SourceKind::kLaserSpd: return "laser_spd";
        case SourceKind::kSquareWave: return "square_wave";
        case SourceKind::kQkdPattern: return "qkd_pattern";
    }
    return "?";
}

inline SourceKind source_kind_from_string(const std::string& s) {
    if (s == "ring_oscillator") return SourceKind::kRingOscillator;
    if (s == "laser_spd") return SourceKind::kLaserSpd;
    if (s == "square_wave") return SourceKind::kSquareWave;
    if (s == "qkd_pattern") return SourceKind::kQkdPattern;
    throw ConfigError("unknown source kind: " + s);
}

// ---- JSON glue ----

inline void to_json(json& j, const DelayProfileConfig& c) {
    j = json{{"kind", c.kind == DelayProfileConfig::Kind::kUniform ? "uniform" : "two_population"},
             {"n_taps", c.n_taps},
             {"seed", c.seed},
             {"target_nc", c.target_nc},
             {"t_ref_c", c.t_ref_c},
             {"temp_coeff_per_c", c.temp_coeff_per_c},
             {"f_s_hz", c.f_s_hz},
             {"coarse_period_override_ps", c.coarse_period_override_ps},
             {"large_median_ps", c.large_median_ps},
             {"large_sigma", c.large_sigma},
             {"mid_median_ps", c.mid_median_ps},
             {"mid_sigma", c.mid_sigma},
             {"tiny_median_ps", c.tiny_median_ps},
             {"tiny_sigma", c.tiny_sigma},
             {"extreme_median_ps", c.extreme_median_ps},
             {"extreme_sigma", c.extreme_sigma},
             {"extreme_groups", c.extreme_groups},
             {"uniform_delay_ps", c.uniform_delay_ps},
             {"gradient_sigma", c.gradient_sigma},
             {"gradient_seed", c.gradient_seed}};
}

inline void from_json(const json& j, DelayProfileConfig& c) {
    DelayProfileConfig d;
    const std::string kind = j.value("kind", "two_population");
    if (kind == "uniform")
        c.kind = DelayProfileConfig::Kind::kUniform;
    else if (kind == "two_population")
        c.kind = DelayProfileConfig::Kind::kTwoPopulation;
    else
        throw ConfigError("unknown profile kind: " + kind);
    c.n_taps = j.value("n_taps", d.n_taps);
    c.seed = j.value("seed", d.seed);
    c.target_nc = j.value("target_nc", d.target_nc);
    c.t_ref_c = j.value("t_ref_c", d.t_ref_c);
    c.temp_coeff_per_c = j.value("temp_coeff_per_c", d.temp_coeff_per_c);
    c.f_s_hz = j.value("f_s_hz", d.f_s_hz);
    c.coarse_period_override_ps = j.value("coarse_period_override_ps", 0.0);
    c.large_median_ps = j.value("large_median_ps", d.large_median_ps);
    c.large_sigma = j.value("large_sigma", d.large_sigma);
    c.mid_median_ps = j.value("mid_median_ps", d.mid_median_ps);
    c.mid_sigma = j.value("mid_sigma", d.mid_sigma);
    c.tiny_median_ps = j.value("tiny_median_ps", d.tiny_median_ps);
    c.tiny_sigma = j.value("tiny_sigma", d.tiny_sigma);
    c.extreme_median_ps = j.value("extreme_median_ps", d.extreme_median_ps);
    c.extreme_sigma = j.value("extreme_sigma", d.extreme_sigma);
    c.extreme_groups = j.value("extreme_groups", d.extreme_groups);
    c.uniform_delay_ps = j.value("uniform_delay_ps", d.uniform_delay_ps);
    c.gradient_sigma = j.value("gradient_sigma", d.gradient_sigma);
    c.gradient_seed = j.value("gradient_seed", d.gradient_seed);
}

inline void to_json(json& j, const SourceConfig& c) {
    j = json{{"kind", to_string(c.kind)},
             {"frequency_hz", c.frequency_hz},
             {"jitter_sigma_ps", c.jitter_sigma_ps},
             {"detection_prob", c.detection_prob},
             {"background_rate_hz", c.background_rate_hz},
             {"pattern", c.pattern},
             {"seed", c.seed}};
}

inline void from_json(const json& j, SourceConfig& c) {
    SourceConfig d;
    c.kind = source_kind_from_string(j.value("kind", "ring_oscillator"));
    c.frequency_hz = j.value("frequency_hz", d.frequency_hz);
    c.jitter_sigma_ps = j.value("jitter_sigma_ps", d.jitter_sigma_ps);
    c.detection_prob = j.value("detection_prob", d.detection_prob);
    c.background_rate_hz = j.value("background_rate_hz", d.background_rate_hz);
    c.pattern = j.value("pattern", d.pattern);
    c.seed = j.value("seed", d.seed);
}

// Full model export: generator config plus the realized per-tap arrays.
inline json model_to_json(const DelayLineModel& m) {
    json j;
    j["profile"] = m.config();
    j["base_delays_ps"] = m.base_delays_ps();
    j["gradient"] = m.gradient();
    return j;
}

inline DelayLineModel model_from_json(const json& j) {
    DelayProfileConfig cfg = j.at("profile").get<DelayProfileConfig>();
    std::vector<double> base = j.at("base_delays_ps").get<std::vector<double>>();
    std::vector<double> grad = j.at("gradient").get<std::vector<double>>();
    return DelayLineModel(std::move(base), std::move(grad), std::move(cfg));
}

// ---- experiment spec ----

struct ExperimentSpec {
    std::string name = "tempsweep";
    DelayProfileConfig profile;
    // channel pair: per-tap log-normal deviation of channel 1 and per-event
    // per-channel electronic noise
    double channel_dev_sigma = 0.17;
    double channel_noise_ps = 5.0;
    SourceConfig spd;
    SourceConfig ro;
    double temp_start_c = 5.0;
    double temp_stop_c = 80.0;
    double temp_step_c = 1.0;
    std::vector<Strategy> strategies = {Strategy::kFixedRo5, Strategy::kFixedSpd5,
                                        Strategy::kRoPerStep, Strategy::kSteady};
    size_t events_per_temp = size_t{1} << 17;
    size_t window_capacity = size_t{1} << 17;
    std::string out_dir = ".";
    uint64_t seed = 7;
    std::string format = "csv";  // csv | json

    // qkd scenario
    double qkd_frequency_hz = 50e6;
    std::string qkd_pattern = "HVDD";
    double qkd_routing_error = 0.022;
    double qkd_detection_prob = 0.5;
    double qkd_background_rate_hz = 0.0;
    size_t qkd_events = size_t{1} << 20;
    double qkd_gate_width_ps = 0.0;  // 0 -> full period
    double detector_jitter_ps = 100.0;

    // streaming benchmark
    uint64_t bench_records = 20'000'000;
    double bench_rate_target_per_s = 12e6;
    size_t bench_buffer_records = size_t{1} << 20;

    ExperimentSpec() {
        spd = default_source(SourceKind::kLaserSpd, derive_seed(seed, 1));
        ro = default_source(SourceKind::kRingOscillator, derive_seed(seed, 2));
        profile.gradient_sigma = 1.0;
    }

    void reseed(uint64_t s) {
        seed = s;
        profile.seed = s;
        spd.seed = derive_seed(s, 1);
        ro.seed = derive_seed(s, 2);
    }
};

inline void to_json(json& j, const ExperimentSpec& s) {
    std::vector<std::string> strat;
    for (auto st : s.strategies) strat.push_back(to_string(st));
    j = json{{"name", s.name},
             {"profile", s.profile},
             {"channel_dev_sigma", s.channel_dev_sigma},
             {"channel_noise_ps", s.channel_noise_ps},
             {"spd", s.spd},
             {"ro", s.ro},
             {"temp_start_c", s.temp_start_c},
             {"temp_stop_c", s.temp_stop_c},
             {"temp_step_c", s.temp_step_c},
             {"strategies", strat},
             {"events_per_temp", s.events_per_temp},
             {"window_capacity", s.window_capacity},
             {"out_dir", s.out_dir},
             {"seed", s.seed},
             {"format", s.format},
             {"qkd_frequency_hz", s.qkd_frequency_hz},
             {"qkd_pattern", s.qkd_pattern},
             {"qkd_routing_error", s.qkd_routing_error},
             {"qkd_detection_prob", s.qkd_detection_prob},
             {"qkd_background_rate_hz", s.qkd_background_rate_hz},
             {"qkd_events", s.qkd_events},
             {"qkd_gate_width_ps", s.qkd_gate_width_ps},
             {"detector_jitter_ps", s.detector_jitter_ps},
             {"bench_records", s.bench_records},
             {"bench_rate_target_per_s", s.bench_rate_target_per_s},
             {"bench_buffer_records", s.bench_buffer_records}};
}

inline void from_json(const json& j, ExperimentSpec& s) {
    ExperimentSpec d;
    s.reseed(j.value("seed", d.seed));  // derives sub-seeds; explicit sections override below
    s.name = j.value("name", d.name);
    if (j.contains("profile")) j.at("profile").get_to(s.profile);
    s.channel_dev_sigma = j.value("channel_dev_sigma", d.channel_dev_sigma);
    s.channel_noise_ps = j.value("channel_noise_ps", d.channel_noise_ps);
    if (j.contains("spd")) j.at("spd").get_to(s.spd);
    if (j.contains("ro")) j.at("ro").get_to(s.ro);
    s.temp_start_c = j.value("temp_start_c", d.temp_start_c);
    s.temp_stop_c = j.value("temp_stop_c", d.temp_stop_c);
    s.temp_step_c = j.value("temp_step_c", d.temp_step_c);
    if (j.contains("strategies")) {
        s.strategies.clear();
        for (const auto& name : j.at("strategies"))
            s.strategies.push_back(strategy_from_string(name.get<std::string>()));
    }
    s.events_per_temp = j.value("events_per_temp", d.events_per_temp);
    s.window_capacity = j.value("window_capacity", d.window_capacity);
    s.out_dir = j.value("out_dir", d.out_dir);
    s.seed = j.value("seed", d.seed);
    s.format = j.value("format", d.format);
    s.qkd_frequency_hz = j.value("qkd_frequency_hz", d.qkd_frequency_hz);
    s.qkd_pattern = j.value("qkd_pattern", d.qkd_pattern);
    s.qkd_routing_error = j.value("qkd_routing_error", d.qkd_routing_error);
    s.qkd_detection_prob = j.value("qkd_detection_prob", d.qkd_detection_prob);
    s.qkd_background_rate_hz = j.value("qkd_background_rate_hz", d.qkd_background_rate_hz);
    s.qkd_events = j.value("qkd_events", d.qkd_events);
    s.qkd_gate_width_ps = j.value("qkd_gate_width_ps", d.qkd_gate_width_ps);
    s.detector_jitter_ps = j.value("detector_jitter_ps", d.detector_jitter_ps);
    s.bench_records = j.value("bench_records", d.bench_records);
    s.bench_rate_target_per_s = j.value("bench_rate_target_per_s", d.bench_rate_target_per_s);
    s.bench_buffer_records = j.value("bench_buffer_records", d.bench_buffer_records);
    if (s.temp_step_c <= 0) throw ConfigError("temperature step must be positive");
    if (s.format != "csv" && s.format != "json") throw ConfigError("format must be csv or json");
}

inline ExperimentSpec load_experiment_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return j.get<ExperimentSpec>();
}

// FNV-1a over the canonical dump; stamped into every output for provenance.
inline uint64_t spec_hash(const ExperimentSpec& spec) {
    const std::string dump = json(spec).dump();
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace tdcsim
