#include "nsb/common/duration.hpp"

#include <charconv>
#include <cmath>

namespace nsb {

Duration parse_duration(std::string_view text)
{
    auto fail = [&](const char* why) {
        return DurationParseError("invalid duration '" + std::string(text) + "': " + why);
    };
    std::size_t pos = 0;
    while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.')) {
        ++pos;
    }
    if (pos == 0) {
        throw fail("expected a number");
    }
    double value = 0;
    auto number = text.substr(0, pos);
    auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), value);
    if (ec != std::errc{} || ptr != number.data() + number.size()) {
        throw fail("expected a number");
    }
    auto unit = text.substr(pos);
    double micros_per_unit = 0;
    if (unit.empty() || unit == "s") {
        micros_per_unit = 1e6;
    } else if (unit == "ms") {
        micros_per_unit = 1e3;
    } else if (unit == "us") {
        micros_per_unit = 1;
    } else if (unit == "m") {
        micros_per_unit = 60e6;
    } else if (unit == "h") {
        micros_per_unit = 3600e6;
    } else {
        throw fail("unknown unit");
    }
    double micros = std::round(value * micros_per_unit);
    if (!std::isfinite(micros) || micros > 9e15) {
        throw fail("out of range");
    }
    return Duration(static_cast<Duration::rep>(micros));
}

std::string format_duration(Duration d)
{
    auto us = d.count();
    if (us != 0 && us % 1'000'000 == 0) {
        return std::to_string(us / 1'000'000) + "s";
    }
    if (us != 0 && us % 1'000 == 0) {
        return std::to_string(us / 1'000) + "ms";
    }
    return std::to_string(us) + "us";
}

} // namespace nsb
