#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdcsim/calibration.hpp"
#include "tdcsim/types.hpp"

namespace tdcsim {

inline constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2*sqrt(2*ln 2)

struct Histogram1D {
    double lo = 0;
    double bin_width = 0;
    std::vector<uint64_t> counts;

    double center(size_t i) const { return lo + (static_cast<double>(i) + 0.5) * bin_width; }
    double edge(size_t i) const { return lo + static_cast<double>(i) * bin_width; }
    uint64_t total() const {
        uint64_t t = 0;
        for (uint64_t c : counts) t += c;
        return t;
    }

    static Histogram1D build(std::span<const double> values, double bin_width) {
        if (values.empty()) throw std::invalid_argument("histogram: empty input");
        if (bin_width <= 0) throw std::invalid_argument("histogram: bad bin width");
        auto [mn, mx] = std::minmax_element(values.begin(), values.end());
        Histogram1D h;
        h.bin_width = bin_width;
        h.lo = *mn;
        const size_t nbins =
            static_cast<size_t>(std::floor((*mx - *mn) / bin_width)) + 1;
        h.counts.assign(nbins, 0);
        for (double v : values) {
            size_t i = static_cast<size_t>((v - h.lo) / bin_width);
            if (i >= nbins) i = nbins - 1;
            h.counts[i]++;
        }
        return h;
    }
};

struct GaussianFit {
    double amplitude = 0;  // total area in counts
    double mean = 0;
    double sigma = 0;
    double residual_norm = 0;  // rms of per-bin residuals over fitted bins
    bool degenerate = false;
    int iterations = 0;
};

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace detail

// Least-squares Gaussian on a histogram. The model integrates the Gaussian
// over each bin (erf differences), so coarse binning does not bias sigma.
// Residuals are weighted by sqrt(count): high bins anchor the fit, which
// keeps the result on the peak when the data has non-Gaussian shoulders.
// Levenberg-Marquardt on (area, mean, sigma), initialized from the peak bin
// and the half-maximum width.
inline GaussianFit fit_gaussian(const Histogram1D& hist) {
    GaussianFit fit;
    const size_t n = hist.counts.size();
    size_t nonzero = 0;
    size_t peak = 0;
    for (size_t i = 0; i < n; ++i) {
        if (hist.counts[i] > 0) ++nonzero;
        if (hist.counts[i] > hist.counts[peak]) peak = i;
    }
    if (n < 3 || nonzero < 3) {
        fit.degenerate = true;
        fit.mean = n ? hist.center(peak) : 0.0;
        return fit;
    }

    const double peak_count = static_cast<double>(hist.counts[peak]);
    size_t left = peak, right = peak;
    while (left > 0 && static_cast<double>(hist.counts[left]) > peak_count / 2) --left;
    while (right + 1 < n && static_cast<double>(hist.counts[right]) > peak_count / 2) ++right;
    double mean = hist.center(peak);
    double sigma = std::max((hist.center(right) - hist.center(left)) / kFwhmPerSigma,
                            hist.bin_width / 2);
    double area = static_cast<double>(hist.total());

    std::vector<double> w(n);
    for (size_t i = 0; i < n; ++i) w[i] = std::sqrt(std::max<double>(hist.counts[i], 1.0));

    auto chisq = [&](double a, double m, double s) {
        double acc = 0;
        for (size_t i = 0; i < n; ++i) {
            const double zl = (hist.edge(i) - m) / s;
            const double zr = (hist.edge(i + 1) - m) / s;
            const double model = a * (detail::normal_cdf(zr) - detail::normal_cdf(zl));
            const double r = w[i] * (model - static_cast<double>(hist.counts[i]));
            acc += r * r;
        }
        return acc;
    };

    double lambda = 1e-3;
    double best = chisq(area, mean, sigma);
    int it = 0;
    for (; it < 80; ++it) {
        // residuals and jacobian of the weighted model
        std::array<std::array<double, 3>, 3> jtj{};
        std::array<double, 3> jtr{};
        for (size_t i = 0; i < n; ++i) {
            const double zl = (hist.edge(i) - mean) / sigma;
            const double zr = (hist.edge(i + 1) - mean) / sigma;
            const double cl = detail::normal_cdf(zl), cr = detail::normal_cdf(zr);
            const double pl = std::exp(-0.5 * zl * zl) / std::sqrt(2.0 * 3.14159265358979323846);
            const double pr = std::exp(-0.5 * zr * zr) / std::sqrt(2.0 * 3.14159265358979323846);
            const double model = area * (cr - cl);
            const double r = w[i] * (model - static_cast<double>(hist.counts[i]));
            const double da = w[i] * (cr - cl);
            const double dm = w[i] * area * (pl - pr) / sigma;
            const double ds = w[i] * area * (zl * pl - zr * pr) / sigma;
            const double grad[3] = {da, dm, ds};
            for (int u = 0; u < 3; ++u) {
                jtr[u] += grad[u] * r;
                for (int v = 0; v < 3; ++v) jtj[u][v] += grad[u] * grad[v];
            }
        }
        // solve (JtJ + lambda*diag) step = -Jtr
        std::array<std::array<double, 4>, 3> m{};
        for (int u = 0; u < 3; ++u) {
            for (int v = 0; v < 3; ++v) m[u][v] = jtj[u][v];
            m[u][u] *= 1.0 + lambda;
            m[u][3] = -jtr[u];
        }
        bool singular = false;
        for (int col = 0; col < 3; ++col) {
            int piv = col;
            for (int row = col + 1; row < 3; ++row)
                if (std::abs(m[row][col]) > std::abs(m[piv][col])) piv = row;
            if (std::abs(m[piv][col]) < 1e-30) {
                singular = true;
                break;
            }
            std::swap(m[piv], m[col]);
            for (int row = 0; row < 3; ++row) {
                if (row == col) continue;
                const double f = m[row][col] / m[col][col];
                for (int k = col; k < 4; ++k) m[row][k] -= f * m[col][k];
            }
        }
        if (singular) break;
        const double step_a = m[0][3] / m[0][0];
        const double step_m = m[1][3] / m[1][1];
        const double step_s = m[2][3] / m[2][2];
        const double na = area + step_a;
        const double nm = mean + step_m;
        const double ns = sigma + step_s;
        if (!(ns > 1e-12) || !(na > 0)) {
            lambda *= 10;
            if (lambda > 1e12) break;
            continue;
        }
        const double trial = chisq(na, nm, ns);
        if (trial < best) {
            const double rel = (best - trial) / std::max(best, 1e-300);
            area = na;
            mean = nm;
            sigma = ns;
            best = trial;
            lambda = std::max(lambda * 0.3, 1e-12);
            if (rel < 1e-12) break;
        } else {
            lambda *= 10;
            if (lambda > 1e12) break;
        }
    }

    fit.amplitude = area;
    fit.mean = mean;
    fit.sigma = sigma;
    fit.iterations = it;
    fit.residual_norm = std::sqrt(best / static_cast<double>(n));
    return fit;
}

struct JitterReport {
    Histogram1D histogram;
    GaussianFit fit;
    double fwhm_ps = 0;
    bool degenerate = false;
};

// FWHM of the pairwise difference a[i] - b[i]. Both sequences must tag the
// same underlying events, in order.
inline JitterReport fwhm_jitter(std::span<const double> tags_a, std::span<const double> tags_b,
                                double bin_width_ps) {
    if (tags_a.empty() || tags_b.empty()) throw std::invalid_argument("fwhm_jitter: empty input");
    if (tags_a.size() != tags_b.size())
        throw std::invalid_argument("fwhm_jitter: mismatched lengths");
    std::vector<double> diffs(tags_a.size());
    for (size_t i = 0; i < tags_a.size(); ++i) diffs[i] = tags_a[i] - tags_b[i];
    auto [mn, mx] = std::minmax_element(diffs.begin(), diffs.end());
    JitterReport rep;
    if (*mx - *mn < 1e-9) {
        // delta distribution; no width to fit
        rep.degenerate = true;
        rep.fwhm_ps = 0;
        rep.histogram.lo = *mn;
        rep.histogram.bin_width = bin_width_ps;
        rep.histogram.counts = {diffs.size()};
        rep.fit.degenerate = true;
        rep.fit.mean = *mn;
        return rep;
    }
    rep.histogram = Histogram1D::build(diffs, bin_width_ps);
    rep.fit = fit_gaussian(rep.histogram);
    rep.degenerate = rep.fit.degenerate;
    rep.fwhm_ps = rep.degenerate ? 0.0 : kFwhmPerSigma * rep.fit.sigma;
    return rep;
}

// Per-bin deviation of the hit counts from the uniform ideal:
//   dnl_i = (w_i - <w>) / <w>  computed as (w_i * n - sum) / sum.
inline std::vector<double> dnl(std::span<const uint64_t> counts) {
    size_t last = counts.size();
    while (last > 0 && counts[last - 1] == 0) --last;
    if (last == 0) throw std::invalid_argument("dnl: empty counts");
    uint64_t sum = 0;
    for (size_t i = 0; i < last; ++i) sum += counts[i];
    std::vector<double> out(last);
    for (size_t i = 0; i < last; ++i) {
        const double num = static_cast<double>(counts[i] * last) - static_cast<double>(sum);
        out[i] = num / static_cast<double>(sum);
    }
    return out;
}

// Same deviation computed on consecutive calibrated-center differences; the
// mean spacing equals tau_res exactly, so the mean tdnl is zero.
inline std::vector<double> tdnl(const CalibrationTable& table) {
    std::vector<double> out(static_cast<size_t>(table.n_c));
    double prev = 0.0;
    for (int i = 1; i <= table.n_c; ++i) {
        const double d = table.centers_ps[static_cast<size_t>(i) - 1] - prev;
        prev = table.centers_ps[static_cast<size_t>(i) - 1];
        out[static_cast<size_t>(i) - 1] = (d - table.tau_res_ps) / table.tau_res_ps;
    }
    return out;
}

struct LinearityReport {
    std::vector<double> dnl;
    std::vector<double> tdnl;
    double dnl_min = 0, dnl_max = 0;
    int bins_above_one = 0;
};

inline LinearityReport linearity(const CalibrationTable& table) {
    LinearityReport rep;
    rep.dnl = dnl({table.counts.data(), table.counts.size()});
    rep.tdnl = tdnl(table);
    auto [mn, mx] = std::minmax_element(rep.dnl.begin(), rep.dnl.end());
    rep.dnl_min = *mn;
    rep.dnl_max = *mx;
    for (double v : rep.dnl)
        if (v > 1.0) rep.bins_above_one++;
    return rep;
}

inline double truncated_mean_delay(std::span<const double> widths_ps, int k) {
    if (k < 1 || static_cast<size_t>(k) > widths_ps.size())
        throw std::invalid_argument("truncated_mean_delay: k exceeds bins");
    double s = 0;
    for (int i = 0; i < k; ++i) s += widths_ps[static_cast<size_t>(i)];
    return s / static_cast<double>(k);
}

struct PulseShapeReport {
    Histogram1D histogram;  // folded time axis, recentered on the peak
    GaussianFit fit;
    double fwhm_ps = 0;
    double period_ps = 0;
    double peak_phase_ps = 0;  // folded position of the histogram origin
    bool poor_fit = false;     // residual-driven flag (mismatched folding period)
};

// Fold timestamps modulo the period and fit the pulse. The fold is shifted so
// the dominant peak sits mid-range, away from the wrap seam.
inline PulseShapeReport pulse_shape(std::span<const double> timestamps_ps, double period_ps,
                                    double bin_width_ps) {
    if (timestamps_ps.empty()) throw std::invalid_argument("pulse_shape: empty input");
    if (period_ps <= 0) throw std::invalid_argument("pulse_shape: period must be positive");
    // coarse pass to locate the peak phase
    const size_t coarse_bins = 64;
    std::vector<uint64_t> coarse(coarse_bins, 0);
    for (double t : timestamps_ps) {
        double ph = std::fmod(t, period_ps);
        if (ph < 0) ph += period_ps;
        coarse[std::min(coarse_bins - 1,
                        static_cast<size_t>(ph / period_ps * coarse_bins))]++;
    }
    const size_t pk = static_cast<size_t>(
        std::max_element(coarse.begin(), coarse.end()) - coarse.begin());
    const double peak_phase = (static_cast<double>(pk) + 0.5) / coarse_bins * period_ps;
    const double shift = peak_phase - period_ps / 2;

    std::vector<double> folded(timestamps_ps.size());
    for (size_t i = 0; i < timestamps_ps.size(); ++i) {
        double ph = std::fmod(timestamps_ps[i] - shift, period_ps);
        if (ph < 0) ph += period_ps;
        folded[i] = ph;
    }
    PulseShapeReport rep;
    rep.period_ps = period_ps;
    rep.peak_phase_ps = peak_phase;
    rep.histogram = Histogram1D::build(folded, bin_width_ps);
    rep.fit = fit_gaussian(rep.histogram);
    rep.fwhm_ps = rep.fit.degenerate ? 0.0 : kFwhmPerSigma * rep.fit.sigma;
    // relative residual against the peak height
    double peak_count = 0;
    for (uint64_t c : rep.histogram.counts) peak_count = std::max(peak_count, double(c));
    rep.poor_fit = rep.fit.degenerate ||
                   (peak_count > 0 && rep.fit.residual_norm / peak_count > 0.05);
    return rep;
}

// --- time-gated QBER for the three-state protocol ---

struct TaggedEvent {
    double timestamp_ps = 0;
    int detected_channel = -1;
    char true_label = 0;
};

struct GateSpec {
    double center_offset_ps = 0;  // folded position of the gate center
    double width_ps = 0;
};

// Mapping from pattern symbols to detector channels and measurement bases.
// Defaults: H->0 and V->1 in the Z basis, D->2 and A->3 in the X basis.
struct BasisMap {
    std::map<char, int> expected_channel = {{'H', 0}, {'V', 1}, {'D', 2}, {'A', 3}};
    std::map<int, int> channel_basis = {{0, 0}, {1, 0}, {2, 1}, {3, 1}};
    std::map<char, int> label_basis = {{'H', 0}, {'V', 0}, {'D', 1}, {'A', 1}};
};

struct QberResult {
    uint64_t gated = 0;   // events inside the time gate
    uint64_t sifted = 0;  // gated events measured in the preparation basis
    uint64_t errors = 0;  // sifted events in the wrong detector
    double qber = 0;
};

// Fraction of wrong-detector events among time-gated, basis-matched
// detections. Events measured in the other basis are excluded from both the
// numerator and the denominator.
inline QberResult qber(std::span<const TaggedEvent> events, const GateSpec& gate,
                       double period_ps, const BasisMap& basis = {}) {
    if (period_ps <= 0) throw std::invalid_argument("qber: period must be positive");
    if (gate.width_ps <= 0 || gate.width_ps > period_ps)
        throw std::invalid_argument("qber: gate width out of range");
    QberResult res;
    for (const auto& e : events) {
        double ph = std::fmod(e.timestamp_ps - gate.center_offset_ps, period_ps);
        if (ph < 0) ph += period_ps;
        // circular distance from the gate center
        const double dist = std::min(ph, period_ps - ph);
        if (dist > gate.width_ps / 2) continue;
        res.gated++;
        auto lb = basis.label_basis.find(e.true_label);
        auto cb = basis.channel_basis.find(e.detected_channel);
        if (lb == basis.label_basis.end() || cb == basis.channel_basis.end()) continue;
        if (lb->second != cb->second) continue;  // measured in the other basis
        res.sifted++;
        if (basis.expected_channel.at(e.true_label) != e.detected_channel) res.errors++;
    }
    if (res.gated == 0) throw std::invalid_argument("qber: empty gated set");
    res.qber = res.sifted ? static_cast<double>(res.errors) / static_cast<double>(res.sifted) : 0.0;
    return res;
}

}  // namespace tdcsim
