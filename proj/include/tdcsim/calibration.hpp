#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "tdcsim/types.hpp"

namespace tdcsim {

// Inverse standard normal CDF. Rational approximation (Acklam) refined with
// one Halley step against erfc; absolute error well below 1e-9.
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("normal_quantile: p outside (0,1)");
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    const double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

// Minimum number of events for a code-density run: ceil((z_{alpha/2}/beta)^2 * n_c).
inline uint64_t min_events(double alpha, double beta, int n_c) {
    if (!(alpha > 0 && alpha < 1)) throw std::invalid_argument("min_events: alpha out of range");
    if (!(beta > 0 && beta <= 1)) throw std::invalid_argument("min_events: beta out of range");
    if (n_c < 1) throw std::invalid_argument("min_events: n_c < 1");
    const double z = normal_quantile(1.0 - alpha / 2.0);
    return static_cast<uint64_t>(std::ceil((z / beta) * (z / beta) * n_c));
}

inline uint64_t next_pow2(uint64_t v) {
    uint64_t p = 1;
    while (p < v) p <<= 1;
    return p;
}

// Code-density calibration of one channel. Bin i in [1, n_c] has width
//   dt_i = w_i / sum(w) * tau_coarse.
// Cumulative times t_i mark bin edges. Calibrated centers place each event at
// the middle of its bin, with half of the last bin's width added globally:
// the first bin's propagation is completed by the tail of the previous cycle,
// and the constant offset keeps the mean spacing of consecutive centers equal
// to tau_coarse / n_c exactly.
struct CalibrationTable {
    std::vector<uint64_t> counts;        // counts[i-1] = w_i
    int n_c = 0;
    double coarse_period_ps = 0;
    std::vector<double> bin_widths_ps;   // dt_i
    std::vector<double> cumulative_ps;   // t_i
    std::vector<double> centers_ps;      // t^c_i
    double tau_res_ps = 0;
    std::vector<int> empty_interior_bins;  // quality report: bins with w_i == 0

    // t^c for a fine index; fine == 0 is the bare clock edge.
    double center(uint32_t fine) const {
        if (fine == 0) return 0.0;
        if (static_cast<int>(fine) > n_c)
            throw std::out_of_range("calibrate: fine index beyond table range");
        return centers_ps[fine - 1];
    }

    // Same, but fines beyond the table clamp to the last center. For use with
    // stale tables where the live chain has grown past the calibrated range.
    double center_clamped(uint32_t fine) const {
        if (fine == 0) return 0.0;
        return centers_ps[std::min<uint32_t>(fine, static_cast<uint32_t>(n_c)) - 1];
    }
};

inline CalibrationTable build_table(std::span<const uint64_t> counts, double coarse_period_ps) {
    if (coarse_period_ps <= 0) throw std::invalid_argument("build_table: bad coarse period");
    size_t last = counts.size();
    while (last > 0 && counts[last - 1] == 0) --last;
    if (last == 0) throw std::invalid_argument("build_table: all-zero counts");

    CalibrationTable t;
    t.counts.assign(counts.begin(), counts.begin() + last);
    t.n_c = static_cast<int>(last);
    t.coarse_period_ps = coarse_period_ps;
    t.tau_res_ps = coarse_period_ps / static_cast<double>(t.n_c);

    uint64_t total = 0;
    for (uint64_t w : t.counts) total += w;
    const double scale = coarse_period_ps / static_cast<double>(total);

    t.bin_widths_ps.resize(last);
    t.cumulative_ps.resize(last);
    t.centers_ps.resize(last);
    // Integer prefixes keep the identities exact: t_{n_c} == tau_coarse and
    // the telescoped mean center spacing == tau_res to round-off.
    uint64_t prefix = 0;
    const double w_last = static_cast<double>(t.counts[last - 1]);
    for (size_t i = 0; i < last; ++i) {
        const double w = static_cast<double>(t.counts[i]);
        t.bin_widths_ps[i] = w * scale;
        t.cumulative_ps[i] = static_cast<double>(prefix + t.counts[i]) * scale;
        if (t.counts[i] == 0) {
            t.centers_ps[i] = i == 0 ? 0.0 : t.centers_ps[i - 1];
            t.empty_interior_bins.push_back(static_cast<int>(i) + 1);
        } else {
            t.centers_ps[i] = (0.5 * w_last + static_cast<double>(prefix) + 0.5 * w) * scale;
        }
        prefix += t.counts[i];
    }
    return t;
}

inline double calibrate_tag(const CalibrationTable& table, const RawTag& tag) {
    return static_cast<double>(tag.coarse) * table.coarse_period_ps - table.center(tag.fine);
}

// Symmetric distance between two histograms after unit-sum normalization:
//   sum_i (p_i - q_i)^2 / (p_i + q_i) over bins with p_i + q_i > 0.
inline double chi_square(std::span<const uint64_t> hist_a, std::span<const uint64_t> hist_b) {
    if (hist_a.empty() || hist_b.empty())
        throw std::invalid_argument("chi_square: empty histogram");
    uint64_t ta = 0, tb = 0;
    for (uint64_t v : hist_a) ta += v;
    for (uint64_t v : hist_b) tb += v;
    if (ta == 0 || tb == 0) throw std::invalid_argument("chi_square: empty histogram");
    const size_t n = std::max(hist_a.size(), hist_b.size());
    double stat = 0;
    for (size_t i = 0; i < n; ++i) {
        const double p = i < hist_a.size() ? static_cast<double>(hist_a[i]) / ta : 0.0;
        const double q = i < hist_b.size() ? static_cast<double>(hist_b[i]) / tb : 0.0;
        if (p + q > 0) stat += (p - q) * (p - q) / (p + q);
    }
    return stat;
}

}  // namespace tdcsim
