#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <mutex>
#include <string>

#include "nsb/common/net.hpp"
#include "nsb/common/text.hpp"

namespace nsb::workload {

inline std::string env_or(const char* name, std::string fallback)
{
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

inline double env_real(const char* name, double fallback)
{
    auto text = env_or(name, "");
    if (text.empty()) {
        return fallback;
    }
    auto v = parse_real(text);
    if (!v) {
        std::fprintf(stderr, "invalid %s='%s'\n", name, text.c_str());
        std::exit(2);
    }
    return *v;
}

inline net::Endpoint target_from_env()
{
    auto host = env_or("NSB_TARGET_HOST", "127.0.0.1");
    auto port = env_or("NSB_TARGET_PORT", "");
    auto p = parse_int(port);
    if (!p || *p < 1 || *p > 65535) {
        std::fprintf(stderr, "NSB_TARGET_PORT must be set to a valid port\n");
        std::exit(2);
    }
    return net::Endpoint{host, static_cast<std::uint16_t>(*p)};
}

/// Requests per second from NSB_RATE; nullopt means unlimited.
inline std::optional<double> rate_from_env()
{
    auto text = env_or("NSB_RATE", "unlimited");
    if (text == "unlimited" || text == "0") {
        return std::nullopt;
    }
    auto v = parse_real(text);
    if (!v || *v < 0) {
        std::fprintf(stderr, "invalid NSB_RATE='%s'\n", text.c_str());
        std::exit(2);
    }
    return *v;
}

// Shared open-loop pacer: hands out evenly spaced start times.
class Pacer {
public:
    using Clock = std::chrono::steady_clock;

    explicit Pacer(std::optional<double> per_second)
    {
        if (per_second && *per_second > 0) {
            interval_ = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(1.0 / *per_second));
        }
    }

    bool limited() const { return interval_.count() > 0; }

    Clock::time_point next_slot()
    {
        std::lock_guard lock(mu_);
        auto now = Clock::now();
        if (next_ < now - interval_) {
            next_ = now;  // do not burst to catch up after a stall
        }
        auto slot = next_;
        next_ += interval_;
        return slot;
    }

private:
    std::mutex mu_;
    Clock::duration interval_{0};
    Clock::time_point next_ = Clock::now();
};

} // namespace nsb::workload
