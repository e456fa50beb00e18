#pragma once

// Small text helpers shared by the readers and writers.

#include <charconv>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ocvkit::text {

inline std::string_view trim(std::string_view s) {
    constexpr std::string_view ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

/// Splits on `sep` and trims each field. An empty input yields one empty field.
inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

/// Strict decimal parse: the whole field must be consumed.
inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') {
        s.remove_prefix(1);
    }
    if (s.empty()) {
        return std::nullopt;
    }
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return value;
}

inline std::optional<long long> parse_int(std::string_view s) {
    s = trim(s);
    long long value = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return value;
}

/// Round-trippable representation (17 significant digits).
inline std::string exact(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Fixed-point with `decimals` digits, as used in human-readable tables.
inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    std::string s = buf;
    // "-0.0000" reads badly in a table
    if (s.front() == '-' && s.find_first_not_of("-0.") == std::string::npos) {
        s.erase(0, 1);
    }
    return s;
}

/// Parses "C/N" (case-insensitive C, optional spaces) into N.
inline std::optional<int> parse_c_rate(std::string_view s) {
    s = trim(s);
    if (s.size() < 3 || (s[0] != 'C' && s[0] != 'c')) {
        return std::nullopt;
    }
    s.remove_prefix(1);
    s = trim(s);
    if (s.empty() || s.front() != '/') {
        return std::nullopt;
    }
    s.remove_prefix(1);
    const auto n = parse_int(s);
    if (!n || *n <= 0 || *n > 1'000'000) {
        return std::nullopt;
    }
    return static_cast<int>(*n);
}

inline std::string c_rate_label(int denominator) { return "C/" + std::to_string(denominator); }

} // namespace ocvkit::text
