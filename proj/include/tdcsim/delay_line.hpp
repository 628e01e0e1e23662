#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdcsim/decoder.hpp"
#include "tdcsim/rng.hpp"
#include "tdcsim/types.hpp"

namespace tdcsim {

inline constexpr double kMinSupportedTempC = 5.0;
inline constexpr double kMaxSupportedTempC = 80.0;
inline constexpr double kMinSaneTempC = -40.0;
inline constexpr double kMaxSaneTempC = 120.0;

// Generator settings for a simulated carry chain. Delays are drawn per group
// of four taps in the pattern [large, mid, tiny, mid]; a couple of groups get
// an extra-slow large tap. The draw is then rescaled so the first `target_nc`
// taps cover one coarse period at the reference temperature.
struct DelayProfileConfig {
    enum class Kind { kTwoPopulation, kUniform };

    Kind kind = Kind::kTwoPopulation;
    int n_taps = 144;
    uint64_t seed = 7;
    int target_nc = 132;
    double t_ref_c = 25.0;
    double temp_coeff_per_c = 5.0e-4;
    double f_s_hz = kDefaultSampleHz;
    double coarse_period_override_ps = 0.0;  // 0 -> 1e12 / f_s_hz

    double large_median_ps = 38.0;
    double large_sigma = 0.10;
    double mid_median_ps = 14.0;
    double mid_sigma = 0.45;
    double tiny_median_ps = 2.5;
    double tiny_sigma = 0.50;
    double extreme_median_ps = 62.4;
    double extreme_sigma = 0.05;
    std::vector<int> extreme_groups = {9, 21};

    double uniform_delay_ps = 10.0;  // kUniform only

    // Per-tap spread of the thermal coefficient. 0 keeps the drift uniform
    // across the chain.
    double gradient_sigma = 0.0;
    uint64_t gradient_seed = 0;  // 0 -> derived from seed

    double coarse_period_ps() const {
        return coarse_period_override_ps > 0 ? coarse_period_override_ps : 1e12 / f_s_hz;
    }
};

class DelayLineModel;

// Per-temperature snapshot: cumulative propagation times and the number of
// observable bins. Used for bulk digitization at a fixed temperature.
class TdlState {
  public:
    TdlState(std::vector<double> prefix, int leading_zero_taps, double coarse_period_ps,
             double temp_c)
        : prefix_(std::move(prefix)),
          leading_zero_taps_(leading_zero_taps),
          coarse_period_ps_(coarse_period_ps),
          temp_c_(temp_c) {
        auto it = std::lower_bound(prefix_.begin(), prefix_.end(), coarse_period_ps_);
        if (it == prefix_.end())
            throw std::runtime_error("delay chain does not cover one coarse period");
        n_line_ = static_cast<int>(it - prefix_.begin()) + 1 - leading_zero_taps_;
    }

    // Largest fine index this line can produce at this temperature.
    int n_line() const { return n_line_; }
    double temp_c() const { return temp_c_; }
    double coarse_period_ps() const { return coarse_period_ps_; }
    const std::vector<double>& prefix() const { return prefix_; }

    // Ones in the captured code: taps fully traversed within delta.
    int popcount_for_delta(double delta_ps) const {
        auto it = std::upper_bound(prefix_.begin(), prefix_.end(), delta_ps);
        return static_cast<int>(it - prefix_.begin());
    }

    // Bin index of a capture: ones counted from the first tap with non-zero
    // delay, plus one for the tap the signal is still inside. A capture that
    // lands exactly on a tap boundary resolves to the later bin, clamped at
    // the end of the chain.
    uint32_t fine_from_popcount(int popcount) const {
        int fine = popcount - leading_zero_taps_ + 1;
        return static_cast<uint32_t>(std::clamp(fine, 1, n_line_));
    }

    uint32_t fine_from_code(const ThermometerCode& code) const {
        return fine_from_popcount(static_cast<int>(decode(code)));
    }

    RawTag digitize(double arrival_ps, uint8_t channel = 0) const {
        if (arrival_ps < 0) throw std::invalid_argument("digitize: arrival_time < 0");
        const double edge = std::floor(arrival_ps / coarse_period_ps_) + 1.0;
        const double delta = edge * coarse_period_ps_ - arrival_ps;
        RawTag tag;
        tag.coarse = static_cast<uint64_t>(edge) & kCoarseMask;
        tag.fine = fine_from_popcount(popcount_for_delta(delta));
        tag.channel = channel;
        return tag;
    }

  private:
    std::vector<double> prefix_;
    int leading_zero_taps_;
    double coarse_period_ps_;
    double temp_c_;
    int n_line_;
};

// Ground truth of the simulated hardware: per-tap delays at the reference
// temperature plus a linear thermal model,
//   delay_k(T) = base_k * (1 + temp_coeff * gradient_k * (t_ref - T)).
// Immutable after construction; safe to share across threads.
class DelayLineModel {
  public:
    DelayLineModel(std::vector<double> base_delays_ps, std::vector<double> gradient,
                   DelayProfileConfig config)
        : base_delays_(std::move(base_delays_ps)),
          gradient_(std::move(gradient)),
          config_(std::move(config)) {
        validate();
    }

    int n_taps() const { return static_cast<int>(base_delays_.size()); }
    double t_ref_c() const { return config_.t_ref_c; }
    double temp_coeff_per_c() const { return config_.temp_coeff_per_c; }
    double coarse_period_ps() const { return config_.coarse_period_ps(); }
    double f_s_hz() const { return config_.f_s_hz; }
    const std::vector<double>& base_delays_ps() const { return base_delays_; }
    const std::vector<double>& gradient() const { return gradient_; }
    const DelayProfileConfig& config() const { return config_; }
    int leading_zero_taps() const { return leading_zero_taps_; }

    std::vector<double> effective_delays_ps(double temp_c) const {
        check_sane_temperature(temp_c);
        std::vector<double> out(base_delays_.size());
        const double dt = config_.t_ref_c - temp_c;
        for (size_t k = 0; k < base_delays_.size(); ++k)
            out[k] = base_delays_[k] * (1.0 + config_.temp_coeff_per_c * gradient_[k] * dt);
        return out;
    }

    TdlState state_at(double temp_c) const {
        std::vector<double> prefix = effective_delays_ps(temp_c);
        std::partial_sum(prefix.begin(), prefix.end(), prefix.begin());
        return TdlState(std::move(prefix), leading_zero_taps_, coarse_period_ps(), temp_c);
    }

    // Observable bin count at a temperature.
    int n_line(double temp_c) const { return state_at(temp_c).n_line(); }

    // Capture of one event: index of the clock edge that latches the line and
    // the thermometer code at that edge.
    std::pair<uint64_t, ThermometerCode> sample(double arrival_ps, double temp_c) const {
        if (arrival_ps < 0) throw std::invalid_argument("sample: arrival_time < 0");
        const TdlState st = state_at(temp_c);
        const double edge = std::floor(arrival_ps / coarse_period_ps()) + 1.0;
        const double delta = edge * coarse_period_ps() - arrival_ps;
        const int ones = st.popcount_for_delta(delta);
        ThermometerCode code;
        code.bits.assign(base_delays_.size(), 0);
        for (int i = 0; i < ones && i < n_taps(); ++i) code.bits[i] = 1;
        return {static_cast<uint64_t>(edge) & kCoarseMask, std::move(code)};
    }

  private:
    void validate() {
        if (base_delays_.size() < 1) throw std::invalid_argument("delay line: no taps");
        if (gradient_.size() != base_delays_.size())
            throw std::invalid_argument("delay line: gradient length mismatch");
        bool any_positive = false;
        for (double d : base_delays_) {
            if (d < 0) throw std::invalid_argument("delay line: negative base delay");
            if (d > 0) any_positive = true;
        }
        if (!any_positive) throw std::invalid_argument("delay line: all delays zero");
        for (double t : {kMinSupportedTempC, kMaxSupportedTempC}) {
            double sum = 0;
            const double dt = config_.t_ref_c - t;
            for (size_t k = 0; k < base_delays_.size(); ++k) {
                const double d =
                    base_delays_[k] * (1.0 + config_.temp_coeff_per_c * gradient_[k] * dt);
                if (d < 0)
                    throw std::invalid_argument(
                        "delay line: negative effective delay at supported temperature");
                sum += d;
            }
            if (sum < coarse_period_ps())
                throw std::invalid_argument("delay line: chain shorter than one coarse period");
        }
        int z = 0;
        while (z < n_taps() && base_delays_[static_cast<size_t>(z)] == 0.0) ++z;
        leading_zero_taps_ = z;
    }

    static void check_sane_temperature(double temp_c) {
        if (temp_c < kMinSaneTempC || temp_c > kMaxSaneTempC)
            throw std::invalid_argument("temperature outside sanity range");
    }

    std::vector<double> base_delays_;
    std::vector<double> gradient_;
    DelayProfileConfig config_;
    int leading_zero_taps_ = 0;
};

namespace detail {

inline std::vector<double> draw_gradient(const DelayProfileConfig& cfg, size_t n) {
    std::vector<double> grad(n, 1.0);
    if (cfg.gradient_sigma > 0) {
        const uint64_t gseed =
            cfg.gradient_seed != 0 ? cfg.gradient_seed : derive_seed(cfg.seed, 0x67726164);
        Rng rng(gseed);
        for (auto& g : grad) g = 1.0 + cfg.gradient_sigma * rng.gaussian();
    }
    return grad;
}

}  // namespace detail

inline DelayLineModel make_delay_line(const DelayProfileConfig& cfg) {
    if (cfg.n_taps < 4) throw std::invalid_argument("make_delay_line: n_taps < 4");
    if (cfg.target_nc < 1 || cfg.target_nc > cfg.n_taps)
        throw std::invalid_argument("make_delay_line: target_nc out of range");
    const size_t n = static_cast<size_t>(cfg.n_taps);

    std::vector<double> base(n);
    if (cfg.kind == DelayProfileConfig::Kind::kUniform) {
        if (cfg.uniform_delay_ps <= 0)
            throw std::invalid_argument("make_delay_line: uniform delay must be positive");
        std::fill(base.begin(), base.end(), cfg.uniform_delay_ps);
    } else {
        for (double m : {cfg.large_median_ps, cfg.mid_median_ps, cfg.tiny_median_ps,
                         cfg.extreme_median_ps})
            if (m <= 0) throw std::invalid_argument("make_delay_line: non-positive median");
        Rng rng(cfg.seed);
        for (size_t g = 0; 4 * g < n; ++g) {
            const bool extreme = std::find(cfg.extreme_groups.begin(), cfg.extreme_groups.end(),
                                           static_cast<int>(g)) != cfg.extreme_groups.end();
            const double medians[4] = {extreme ? cfg.extreme_median_ps : cfg.large_median_ps,
                                       cfg.mid_median_ps, cfg.tiny_median_ps, cfg.mid_median_ps};
            const double sigmas[4] = {extreme ? cfg.extreme_sigma : cfg.large_sigma,
                                      cfg.mid_sigma, cfg.tiny_sigma, cfg.mid_sigma};
            for (size_t j = 0; j < 4 && 4 * g + j < n; ++j)
                base[4 * g + j] = medians[j] * std::exp(sigmas[j] * rng.gaussian());
        }
        // Normalize: the first target_nc taps span one coarse period at t_ref,
        // overshooting by a sliver so the last bin is reachable but never
        // exceeded.
        double head = std::accumulate(base.begin(), base.begin() + cfg.target_nc, 0.0);
        const double scale = cfg.coarse_period_ps() * (1.0 + 1e-9) / head;
        for (auto& d : base) d *= scale;
    }
    return DelayLineModel(std::move(base), detail::draw_gradient(cfg, n), cfg);
}

// A second channel cut from the same cloth: per-tap delays of `model`
// perturbed log-normally, with its own thermal gradient draw.
inline DelayLineModel sibling_line(const DelayLineModel& model, double deviation_sigma,
                                   uint64_t seed) {
    Rng rng(seed);
    std::vector<double> base = model.base_delays_ps();
    for (auto& d : base) d *= std::exp(deviation_sigma * rng.gaussian());
    DelayProfileConfig cfg = model.config();
    cfg.seed = seed;
    cfg.gradient_seed = derive_seed(seed, 0x73696221);
    std::vector<double> grad = detail::draw_gradient(cfg, base.size());
    return DelayLineModel(std::move(base), std::move(grad), std::move(cfg));
}

// With probability p, swap the two bits straddling the 1->0 transition
// (e.g. 11111000 -> 11110100). The ones count is preserved.
inline ThermometerCode inject_bubbles(const ThermometerCode& code, double p_bubble, Rng& rng) {
    if (p_bubble < 0 || p_bubble > 1)
        throw std::invalid_argument("inject_bubbles: probability out of range");
    ThermometerCode out = code;
    if (p_bubble == 0 || out.bits.size() < 2) return out;
    if (!rng.bernoulli(p_bubble)) return out;
    for (size_t i = 0; i + 1 < out.bits.size(); ++i) {
        if (out.bits[i] == 1 && out.bits[i + 1] == 0) {
            std::swap(out.bits[i], out.bits[i + 1]);
            break;
        }
    }
    return out;
}

}  // namespace tdcsim
