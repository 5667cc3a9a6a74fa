#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdint>

#include "spectrum/dtype.hpp"

using namespace spectrum;

namespace {

// Independent half-precision reference built from the format definition
// with ldexp arithmetic (the implementation uses bit manipulation).
float f16_reference(std::uint16_t h) {
    const int sign = (h >> 15) ? -1 : 1;
    const int exp = (h >> 10) & 0x1F;
    const int mant = h & 0x3FF;
    if (exp == 31) {
        if (mant == 0) return sign * std::numeric_limits<float>::infinity();
        return std::numeric_limits<float>::quiet_NaN();
    }
    if (exp == 0) {
        return static_cast<float>(sign * std::ldexp(static_cast<double>(mant), -24));
    }
    return static_cast<float>(sign * std::ldexp(static_cast<double>(1024 + mant), exp - 25));
}

float bf16_reference(std::uint16_t b) {
    const int sign = (b >> 15) ? -1 : 1;
    const int exp = (b >> 7) & 0xFF;
    const int mant = b & 0x7F;
    if (exp == 0xFF) {
        if (mant == 0) return sign * std::numeric_limits<float>::infinity();
        return std::numeric_limits<float>::quiet_NaN();
    }
    if (exp == 0) {
        return static_cast<float>(sign * std::ldexp(static_cast<double>(mant), -133));
    }
    return static_cast<float>(sign * std::ldexp(static_cast<double>(128 + mant), exp - 134));
}

} // namespace

TEST_CASE("known bit patterns") {
    CHECK(decode_bf16(0x3F80) == 1.0f);
    CHECK(decode_f16(0x3C00) == 1.0f);
    CHECK(decode_f16(0xBC00) == -1.0f);
    CHECK(decode_f16(0x0000) == 0.0f);
    CHECK(std::signbit(decode_f16(0x8000)));
    CHECK(decode_f16(0x7C00) == std::numeric_limits<float>::infinity());
    CHECK(std::isnan(decode_f16(0x7E01)));
    CHECK(decode_bf16(0xC000) == -2.0f);
    CHECK(std::isnan(decode_bf16(0x7FC1)));
}

TEST_CASE("f16 decode is exact for every bit pattern") {
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto h = static_cast<std::uint16_t>(bits);
        const float got = decode_f16(h);
        const float want = f16_reference(h);
        if (std::isnan(want)) {
            CHECK(std::isnan(got));
        } else {
            CHECK(std::bit_cast<std::uint32_t>(got) == std::bit_cast<std::uint32_t>(want));
        }
    }
}

TEST_CASE("bf16 decode is exact for every bit pattern") {
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto b = static_cast<std::uint16_t>(bits);
        const float got = decode_bf16(b);
        const float want = bf16_reference(b);
        if (std::isnan(want)) {
            CHECK(std::isnan(got));
        } else {
            CHECK(std::bit_cast<std::uint32_t>(got) == std::bit_cast<std::uint32_t>(want));
        }
    }
}

TEST_CASE("encode inverts decode on representable values") {
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto h = static_cast<std::uint16_t>(bits);
        const float v = decode_f16(h);
        if (std::isnan(v)) continue; // NaNs re-encode as a canonical quiet NaN
        CHECK(encode_f16(v) == h);
    }
    for (std::uint32_t bits = 0; bits <= 0xFFFF; ++bits) {
        const auto b = static_cast<std::uint16_t>(bits);
        const float v = decode_bf16(b);
        if (std::isnan(v)) continue;
        CHECK(encode_bf16(v) == b);
    }
}

TEST_CASE("encode rounds to nearest even") {
    // halfway between 1.0 (0x3C00) and 1.0009765625 (0x3C01) -> even
    CHECK(encode_f16(1.00048828125f) == 0x3C00);
    // halfway between 0x3C01 and 0x3C02 -> even (0x3C02)
    CHECK(encode_f16(1.00146484375f) == 0x3C02);
    CHECK(encode_f16(65520.0f) == 0x7C00);  // rounds past f16 max -> inf
    CHECK(encode_bf16(1.00390625f) == 0x3F80); // tie -> even
}
