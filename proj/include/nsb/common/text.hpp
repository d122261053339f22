#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace nsb {

/// Fixed-point rendering, e.g. fixed(3.14159, 2) == "3.14".
std::string fixed(double value, int digits);

/// Round half away from zero to `digits` decimals.
double round_to(double value, int digits);

std::vector<std::string> split(std::string_view text, char sep);
std::string_view trim(std::string_view text);
std::string to_upper(std::string_view text);

std::optional<long long> parse_int(std::string_view text);
std::optional<double> parse_real(std::string_view text);

/// `2026-10-18T16:50:00.123456Z`
std::string iso8601_utc(std::chrono::system_clock::time_point tp);
/// `20261018T165000Z`, used in directory names.
std::string compact_utc(std::chrono::system_clock::time_point tp);

std::string read_file(const std::string& path);

} // namespace nsb
