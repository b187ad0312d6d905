#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

#include "sum/errors.hpp"

namespace sum {

/// Shortest round-trip decimal form of a double. Locale-independent and
/// deterministic, so CSV/SVG output is byte-stable across runs.
inline std::string format_double(double v) {
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) {
        throw NumericError("textio", "failed to format a double");
    }
    return std::string(buf, ptr);
}

/// Fixed-precision decimal form (for SVG coordinates).
inline std::string format_double_fixed(double v, int precision) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v,
                                   std::chars_format::fixed, precision);
    if (ec != std::errc()) {
        throw NumericError("textio", "failed to format a double");
    }
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view text, const char* component) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw FormatError(component, "cannot parse '" + std::string(text) + "' as a number");
    }
    return v;
}

inline std::uint64_t fnv1a64(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// 16-hex-digit form of the FNV-1a hash; used as the config fingerprint
/// in report rows.
std::string hex64(std::uint64_t v);

}  // namespace sum
