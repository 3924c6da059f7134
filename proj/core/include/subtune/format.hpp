#pragma once

#include <charconv>
#include <string>

namespace subtune {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, end);
}

/// Fixed-point text with `digits` decimals, for accuracy-style columns.
inline std::string format_fixed(double v, int digits = 6) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
    (void)ec;
    return std::string(buf, end);
}

}  // namespace subtune
