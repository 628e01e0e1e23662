#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tdcsim/types.hpp"

namespace tdcsim {

// 64-bit tag record, fields packed from the top:
//   bits [63:16] coarse (48 bit), [15:8] fine, [7:4] channel, [3:0] flags.
// Flag bit 0 marks a calibration-valid tag; the rest are reserved zero.
inline constexpr uint8_t kFlagCalibrationValid = 0x1;

inline uint64_t encode_record(const RawTag& tag, uint8_t flags = 0) {
    if (tag.fine > 0xff) throw std::invalid_argument("encode_record: fine > 255");
    if (tag.channel > 0xf) throw std::invalid_argument("encode_record: channel > 15");
    if (flags > 0xf) throw std::invalid_argument("encode_record: flags > 15");
    return ((tag.coarse & kCoarseMask) << 16) | (static_cast<uint64_t>(tag.fine) << 8) |
           (static_cast<uint64_t>(tag.channel) << 4) | flags;
}

inline std::pair<RawTag, uint8_t> decode_record(uint64_t word) {
    RawTag tag;
    tag.coarse = (word >> 16) & kCoarseMask;
    tag.fine = static_cast<uint32_t>((word >> 8) & 0xff);
    tag.channel = static_cast<uint8_t>((word >> 4) & 0xf);
    return {tag, static_cast<uint8_t>(word & 0xf)};
}

// Runtime until the 48-bit coarse counter wraps.
inline double overflow_horizon_s(double f_s_hz) {
    if (f_s_hz <= 0) throw std::invalid_argument("overflow_horizon: f_s must be positive");
    return static_cast<double>(uint64_t{1} << kCoarseBits) / f_s_hz;
}

// --- double-buffer acquisition model ---

struct BufferModel {
    enum class Mode { kContinuous, kRequest };
    uint64_t capacity_records = uint64_t{1} << 16;
    double fill_rate_per_s = 0;
    double drain_time_half_s = 0;  // time to extract capacity/2 records
    Mode mode = Mode::kContinuous;
    double request_period_s = 0.050;

    // Filling one half must outlast draining the other.
    bool no_overflow_condition() const {
        return drain_time_half_s < (static_cast<double>(capacity_records) / 2) / fill_rate_per_s;
    }
};

struct BufferReport {
    bool overflowed = false;
    double first_overflow_s = -1;
    uint64_t lost_records = 0;
    uint64_t interrupts = 0;
    std::vector<double> interrupt_times_s;
    std::vector<uint64_t> response_sizes;  // request mode: records per drain
    double effective_throughput_per_s = 0;
};

// Discrete-event walk of the double buffer. In continuous mode the CPU is
// interrupted at each half boundary and extracts that half; a drain that is
// still busy queues the next one, and the writer entering a half whose drain
// has not finished loses the records written until it completes. In request
// mode the memory between the previous drained position and the current
// write position is extracted every request period.
inline BufferReport simulate_buffer(const BufferModel& model, double duration_s) {
    if (model.capacity_records < 2 || model.fill_rate_per_s <= 0 ||
        model.drain_time_half_s < 0 || duration_s <= 0)
        throw std::invalid_argument("simulate_buffer: bad parameters");
    BufferReport rep;
    const double half = static_cast<double>(model.capacity_records) / 2;

    if (model.mode == BufferModel::Mode::kContinuous) {
        const double half_fill_time = half / model.fill_rate_per_s;
        double drain_free_at = 0;  // when the CPU finishes the previous block
        uint64_t k = 1;
        for (;; ++k) {
            const double t_boundary = static_cast<double>(k) * half_fill_time;
            if (t_boundary > duration_s) break;
            rep.interrupts++;
            if (rep.interrupt_times_s.size() < 4096) rep.interrupt_times_s.push_back(t_boundary);
            const double start = std::max(t_boundary, drain_free_at);
            const double done = start + model.drain_time_half_s;
            drain_free_at = done;
            // the writer fills the other half and re-enters this one
            const double writer_back = t_boundary + half_fill_time;
            if (done > writer_back) {
                if (!rep.overflowed) {
                    rep.overflowed = true;
                    rep.first_overflow_s = writer_back;
                }
                rep.lost_records +=
                    static_cast<uint64_t>((done - writer_back) * model.fill_rate_per_s);
            }
        }
        const uint64_t produced = static_cast<uint64_t>(duration_s * model.fill_rate_per_s);
        rep.effective_throughput_per_s =
            static_cast<double>(produced - std::min(rep.lost_records, produced)) / duration_s;
        return rep;
    }

    // request mode
    double drained_pos = 0;  // absolute record position already extracted
    uint64_t k = 1;
    for (;; ++k) {
        const double t = static_cast<double>(k) * model.request_period_s;
        if (t > duration_s) break;
        rep.interrupts++;
        const double written = t * model.fill_rate_per_s;
        double backlog = written - drained_pos;
        if (backlog > static_cast<double>(model.capacity_records)) {
            const uint64_t lost =
                static_cast<uint64_t>(backlog - static_cast<double>(model.capacity_records));
            rep.lost_records += lost;
            if (!rep.overflowed) {
                rep.overflowed = true;
                rep.first_overflow_s = t;
            }
            drained_pos += static_cast<double>(lost);
            backlog = static_cast<double>(model.capacity_records);
        }
        rep.response_sizes.push_back(static_cast<uint64_t>(backlog));
        drained_pos += std::floor(backlog);
    }
    const uint64_t produced = static_cast<uint64_t>(duration_s * model.fill_rate_per_s);
    rep.effective_throughput_per_s =
        static_cast<double>(produced - std::min(rep.lost_records, produced)) / duration_s;
    return rep;
}

// --- capture files ---
// 16-byte header: magic "TDC1", u16 version, u16 reserved, f64 sampling rate;
// then raw little-endian 64-bit records.

inline constexpr uint32_t kCaptureMagic = 0x31434454;  // "TDC1"
inline constexpr uint16_t kCaptureVersion = 1;

inline void write_capture(const std::string& path, std::span<const uint64_t> records,
                          double f_s_hz) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_capture: cannot open " + path);
    const uint32_t magic = kCaptureMagic;
    const uint16_t version = kCaptureVersion;
    const uint16_t reserved = 0;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&version), 2);
    out.write(reinterpret_cast<const char*>(&reserved), 2);
    out.write(reinterpret_cast<const char*>(&f_s_hz), 8);
    out.write(reinterpret_cast<const char*>(records.data()),
              static_cast<std::streamsize>(records.size() * 8));
    if (!out) throw std::runtime_error("write_capture: write failed");
}

struct Capture {
    std::vector<uint64_t> records;
    double f_s_hz = 0;
};

inline Capture read_capture(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("read_capture: cannot open " + path);
    const auto size = static_cast<size_t>(in.tellg());
    if (size < 16 || (size - 16) % 8 != 0)
        throw std::runtime_error("read_capture: truncated file");
    in.seekg(0);
    uint32_t magic = 0;
    uint16_t version = 0, reserved = 0;
    Capture cap;
    in.read(reinterpret_cast<char*>(&magic), 4);
    in.read(reinterpret_cast<char*>(&version), 2);
    in.read(reinterpret_cast<char*>(&reserved), 2);
    in.read(reinterpret_cast<char*>(&cap.f_s_hz), 8);
    if (magic != kCaptureMagic) throw std::runtime_error("read_capture: bad magic");
    if (version != kCaptureVersion) throw std::runtime_error("read_capture: bad version");
    cap.records.resize((size - 16) / 8);
    in.read(reinterpret_cast<char*>(cap.records.data()),
            static_cast<std::streamsize>(cap.records.size() * 8));
    if (!in) throw std::runtime_error("read_capture: read failed");
    return cap;
}

}  // namespace tdcsim
