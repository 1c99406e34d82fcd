#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace blembed {

/// Philox4x32-10 block cipher (Salmon et al., Random123). Stateless: the
/// output is a pure function of (counter, key).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static constexpr std::uint32_t M0 = 0xD2511F53u, M1 = 0xCD9E8D57u;
    static constexpr std::uint32_t W0 = 0x9E3779B9u, W1 = 0xBB67AE85u;

    static constexpr Counter block(Counter ctr, Key key) {
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                key[0] += W0;
                key[1] += W1;
            }
            const std::uint64_t p0 = std::uint64_t(M0) * ctr[0];
            const std::uint64_t p1 = std::uint64_t(M1) * ctr[2];
            ctr = {std::uint32_t(p1 >> 32) ^ ctr[1] ^ key[0], std::uint32_t(p1),
                   std::uint32_t(p0 >> 32) ^ ctr[3] ^ key[1], std::uint32_t(p0)};
        }
        return ctr;
    }
};

/// Uniform on the open interval (0, 1) from 53 random bits.
inline double to_open_unit(std::uint64_t bits) { return (double(bits >> 11) + 0.5) * 0x1.0p-53; }

/// Two standard normals for (seed, stream, index) by the Marsaglia polar
/// method. Each attempt consumes one Philox block with counter
/// (index, attempt, stream); rejected attempts only bump `attempt`, so the
/// output stays a pure function of its arguments.
inline std::array<double, 2> normal_pair(std::uint64_t seed, std::uint64_t stream, std::uint32_t index) {
    const Philox4x32::Key key{std::uint32_t(seed), std::uint32_t(seed >> 32)};
    for (std::uint32_t attempt = 0;; ++attempt) {
        const auto out = Philox4x32::block({index, attempt, std::uint32_t(stream), std::uint32_t(stream >> 32)}, key);
        const double u = 2.0 * to_open_unit((std::uint64_t(out[0]) << 32) | out[1]) - 1.0;
        const double v = 2.0 * to_open_unit((std::uint64_t(out[2]) << 32) | out[3]) - 1.0;
        const double r2 = u * u + v * v;
        if (r2 >= 1.0 || r2 == 0.0) continue;
        const double f = std::sqrt(-2.0 * std::log(r2) / r2);
        return {u * f, v * f};
    }
}

} // namespace blembed
