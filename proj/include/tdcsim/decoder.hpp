#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "tdcsim/types.hpp"

namespace tdcsim {

// Fine value of a captured code: the number of ones. Mirrors a pipelined
// adder tree: partial sums are reduced pairwise level by level, as the
// hardware does, instead of a single linear accumulation.
inline uint32_t decode(const ThermometerCode& code) {
    std::vector<uint32_t> sums(code.bits.begin(), code.bits.end());
    while (sums.size() > 1) {
        size_t half = (sums.size() + 1) / 2;
        for (size_t i = 0; i + half < sums.size(); ++i) sums[i] += sums[i + half];
        sums.resize(half);
    }
    return sums.empty() ? 0 : sums[0];
}

inline uint32_t decode_checked(const ThermometerCode& code, size_t expected_length) {
    if (code.size() != expected_length)
        throw std::invalid_argument("decode: code length mismatch");
    return decode(code);
}

}  // namespace tdcsim
