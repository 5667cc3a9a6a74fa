#pragma once

#include <bit>
#include <cstdint>
#include <string>

#include "spectrum/errors.hpp"

namespace spectrum {

// Storage element types supported by the container reader.
enum class Dtype { f32, f16, bf16 };

inline std::size_t dtype_size(Dtype d) {
    return d == Dtype::f32 ? 4 : 2;
}

// Container header spelling ("F32", "F16", "BF16").
inline std::string dtype_name(Dtype d) {
    switch (d) {
        case Dtype::f32: return "F32";
        case Dtype::f16: return "F16";
        default: return "BF16";
    }
}

inline bool parse_dtype(const std::string& s, Dtype& out) {
    if (s == "F32") { out = Dtype::f32; return true; }
    if (s == "F16") { out = Dtype::f16; return true; }
    if (s == "BF16") { out = Dtype::bf16; return true; }
    return false;
}

// IEEE-754 binary16 -> binary32, exact for every bit pattern.
inline float decode_f16(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h >> 15) << 31;
    const std::uint32_t exp = (h >> 10) & 0x1F;
    std::uint32_t mant = h & 0x3FF;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign; // signed zero
        } else {
            // subnormal: renormalize into the f32 exponent range
            int shift = 0;
            while ((mant & 0x400) == 0) {
                mant <<= 1;
                ++shift;
            }
            mant &= 0x3FF;
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - shift) << 23) | (mant << 13);
        }
    } else if (exp == 31) {
        bits = sign | 0x7F800000u | (mant << 13); // inf / NaN (payload preserved)
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

// bfloat16 is the top half of binary32; widening is a shift.
inline float decode_bf16(std::uint16_t b) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16);
}

// binary32 -> bfloat16, round-to-nearest-even.
inline std::uint16_t encode_bf16(float f) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x007FFFFFu) != 0) {
        return static_cast<std::uint16_t>((bits >> 16) | 0x0040); // quiet NaN
    }
    bits += 0x7FFFu + ((bits >> 16) & 1u);
    return static_cast<std::uint16_t>(bits >> 16);
}

// binary32 -> binary16, round-to-nearest-even.
inline std::uint16_t encode_f16(float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    const std::uint32_t exp = (bits >> 23) & 0xFF;
    const std::uint32_t mant = bits & 0x7FFFFFu;

    if (exp == 0xFF) {
        if (mant == 0) return sign | 0x7C00; // inf
        return sign | 0x7E00 | static_cast<std::uint16_t>(mant >> 13); // NaN, quiet bit set
    }
    const int unbiased = static_cast<int>(exp) - 127;
    if (unbiased > 15) return sign | 0x7C00; // overflow -> inf
    if (unbiased >= -14) {
        // normal range; round the 13 dropped bits to nearest even
        std::uint32_t m = mant;
        std::uint16_t e = static_cast<std::uint16_t>(unbiased + 15);
        std::uint32_t rounded = ((static_cast<std::uint32_t>(e) << 10) | (m >> 13)) +
                                (((m >> 12) & 1u) & (((m & 0xFFFu) != 0 || ((m >> 13) & 1u)) ? 1u : 0u));
        return sign | static_cast<std::uint16_t>(rounded);
    }
    if (unbiased < -25) return sign; // underflow -> signed zero
    // subnormal half: implicit leading 1 joins the mantissa before the shift
    std::uint32_t m = mant | 0x800000u;
    const int shift = -unbiased - 14 + 13; // 14..24
    const std::uint32_t kept = m >> shift;
    const std::uint32_t rem = m & ((1u << shift) - 1u);
    const std::uint32_t half = 1u << (shift - 1);
    std::uint32_t r = kept;
    if (rem > half || (rem == half && (kept & 1u))) ++r;
    return sign | static_cast<std::uint16_t>(r);
}

} // namespace spectrum
