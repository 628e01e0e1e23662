#pragma once

#include <cstdint>
#include <vector>

namespace tdcsim {

inline constexpr int kCoarseBits = 48;
inline constexpr uint64_t kCoarseMask = (uint64_t{1} << kCoarseBits) - 1;
inline constexpr double kDefaultSampleHz = 412.5e6;
inline constexpr double kGoldenRatio = 1.6180339887498949;

inline constexpr double coarse_period_ps(double f_s_hz) { return 1e12 / f_s_hz; }

// One uncalibrated timestamp: coarse clock count plus fine bin index.
// fine == 0 means "no fine information" (the bare clock edge).
struct RawTag {
    uint64_t coarse = 0;  // wraps modulo 2^48
    uint32_t fine = 0;
    uint8_t channel = 0;

    friend bool operator==(const RawTag&, const RawTag&) = default;
};

// Snapshot of the delay line captured at a clock edge: n1 ones followed by
// zeros, possibly perturbed by a bubble.
struct ThermometerCode {
    std::vector<uint8_t> bits;

    size_t size() const { return bits.size(); }
    friend bool operator==(const ThermometerCode&, const ThermometerCode&) = default;
};

}  // namespace tdcsim
