#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "tdcsim/calibration.hpp"
#include "tdcsim/fenwick.hpp"
#include "tdcsim/types.hpp"

namespace tdcsim {

// Event-driven calibration state: a ring buffer of the most recent fine
// indices, the live histogram over bins, and an incrementally maintained
// prefix-sum structure. Single writer per channel; materialized tables are
// immutable snapshots.
class SteadyState {
  public:
    SteadyState(size_t capacity, double coarse_period_ps, size_t bins_hint = 256)
        : capacity_(capacity),
          coarse_period_ps_(coarse_period_ps),
          counts_(bins_hint, 0),
          prefix_(bins_hint) {
        if (capacity < 1) throw std::invalid_argument("steady: capacity < 1");
        if (coarse_period_ps <= 0) throw std::invalid_argument("steady: bad coarse period");
        window_.reserve(capacity);
    }

    size_t capacity() const { return capacity_; }
    size_t size() const { return size_; }
    bool full() const { return size_ == capacity_; }
    int n_c() const { return n_c_; }
    bool capacity_warning() const { return capacity_warning_; }
    double coarse_period_ps() const { return coarse_period_ps_; }
    std::span<const uint64_t> counts() const { return {counts_.data(), counts_.size()}; }

    // events in bins [1, bin]
    uint64_t prefix_counts(uint32_t bin) const {
        return static_cast<uint64_t>(prefix_.prefix(bin));
    }

    // Append one detection, evicting the oldest once the window is full.
    void push(uint32_t fine) {
        if (fine < 1) throw std::invalid_argument("steady: fine index must be >= 1");
        ensure_bins(fine);
        if (size_ == capacity_) {
            const uint32_t old = window_[head_];
            window_[head_] = fine;
            head_ = (head_ + 1) % capacity_;
            remove_count(old);
        } else {
            window_.push_back(fine);
            ++size_;
        }
        counts_[fine - 1]++;
        prefix_.add(fine, 1);
        if (static_cast<int>(fine) > n_c_) n_c_ = static_cast<int>(fine);
    }

    // Oldest-to-newest window contents (mainly for tests).
    std::vector<uint32_t> window_snapshot() const {
        std::vector<uint32_t> out;
        out.reserve(size_);
        for (size_t i = 0; i < size_; ++i) out.push_back(window_[(head_ + i) % size_or_one()]);
        return out;
    }

    // Snapshot of the current window as a full calibration table.
    CalibrationTable table() const {
        if (n_c_ == 0) throw std::invalid_argument("steady: no events in window");
        return build_table({counts_.data(), static_cast<size_t>(n_c_)}, coarse_period_ps_);
    }

    // Calibrated center of a fine index straight from the prefix structure,
    // matching table().center() without materializing the table. O(log n_c).
    double center(uint32_t fine) const {
        if (fine == 0) return 0.0;
        if (n_c_ == 0) throw std::invalid_argument("steady: no events in window");
        if (static_cast<int>(fine) > n_c_)
            throw std::out_of_range("steady: fine index beyond current table");
        uint32_t f = fine;
        while (f >= 1 && counts_[f - 1] == 0) --f;  // empty bins inherit the previous center
        if (f == 0) return 0.0;
        const double scale = coarse_period_ps_ / static_cast<double>(size_);
        const double w_last = static_cast<double>(counts_[n_c_ - 1]);
        const double below = static_cast<double>(prefix_counts(f - 1));
        const double w = static_cast<double>(counts_[f - 1]);
        return (0.5 * w_last + below + 0.5 * w) * scale;
    }

    double center_clamped(uint32_t fine) const {
        if (fine == 0) return 0.0;
        return center(std::min<uint32_t>(fine, static_cast<uint32_t>(n_c_)));
    }

    double calibrate(const RawTag& tag) const {
        return static_cast<double>(tag.coarse) * coarse_period_ps_ - center(tag.fine);
    }

  private:
    size_t size_or_one() const { return size_ ? size_ : 1; }

    void ensure_bins(uint32_t fine) {
        if (fine <= counts_.size()) return;
        size_t n = counts_.size();
        while (n < fine) n *= 2;
        counts_.resize(n, 0);
        FenwickTree<int64_t> rebuilt(n);
        for (size_t i = 0; i < counts_.size(); ++i)
            if (counts_[i]) rebuilt.add(i + 1, static_cast<int64_t>(counts_[i]));
        prefix_ = std::move(rebuilt);
    }

    void remove_count(uint32_t fine) {
        counts_[fine - 1]--;
        prefix_.add(fine, -1);
        if (static_cast<int>(fine) == n_c_ && counts_[fine - 1] == 0) {
            while (n_c_ > 0 && counts_[n_c_ - 1] == 0) --n_c_;
        }
    }

    size_t capacity_;
    double coarse_period_ps_;
    std::vector<uint32_t> window_;
    size_t head_ = 0;
    size_t size_ = 0;
    std::vector<uint64_t> counts_;
    FenwickTree<int64_t> prefix_;
    int n_c_ = 0;
    bool capacity_warning_ = false;

    friend SteadyState steady_init(std::span<const uint64_t>, size_t, double);
};

// Seed a steady window from a static code-density histogram. The window is
// filled round-robin over the populated bins (one event per bin per pass) so
// the eviction order is well defined; with capacity >= total counts the
// initial table equals build_table of the histogram. A capacity smaller than
// the histogram keeps only the tail of the round-robin sequence and sets the
// warning flag.
inline SteadyState steady_init(std::span<const uint64_t> static_counts, size_t capacity,
                               double coarse_period_ps) {
    uint64_t total = 0;
    for (uint64_t c : static_counts) total += c;
    if (total == 0) throw std::invalid_argument("steady_init: empty counts");

    std::vector<uint32_t> order;
    order.reserve(total);
    std::vector<uint64_t> remaining(static_counts.begin(), static_counts.end());
    for (uint64_t got = 0; got < total;) {
        for (size_t i = 0; i < remaining.size(); ++i) {
            if (remaining[i] > 0) {
                remaining[i]--;
                order.push_back(static_cast<uint32_t>(i) + 1);
                ++got;
            }
        }
    }
    SteadyState st(capacity, coarse_period_ps,
                   next_pow2(std::max<uint64_t>(static_counts.size(), 256)));
    const size_t skip = total > capacity ? total - capacity : 0;
    for (size_t i = skip; i < order.size(); ++i) st.push(order[i]);
    st.capacity_warning_ = skip > 0;
    return st;
}

// Time for a full window turnover at a given detection rate.
inline double steady_refresh_time_s(size_t capacity, double events_per_s) {
    if (events_per_s <= 0) throw std::invalid_argument("refresh time: rate must be positive");
    return static_cast<double>(capacity) / events_per_s;
}

}  // namespace tdcsim
