#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include "nsb/common/error.hpp"

namespace nsb {

using Duration = std::chrono::microseconds;

class DurationParseError : public Error {
public:
    using Error::Error;
};

/// Parses `5s`, `500ms`, `1.5s`, `250us`, `2m`, `1h`. A bare number means seconds.
Duration parse_duration(std::string_view text);

/// Shortest exact rendering in the largest whole unit: `5s`, `500ms`, `250us`.
std::string format_duration(Duration d);

inline double to_seconds(Duration d) { return std::chrono::duration<double>(d).count(); }
inline double to_millis(Duration d) { return std::chrono::duration<double, std::milli>(d).count(); }

inline Duration from_seconds(double s) {
    return std::chrono::duration_cast<Duration>(std::chrono::duration<double>(s));
}

} // namespace nsb
