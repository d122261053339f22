#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "nsb/common/error.hpp"

namespace nsb::net {

using Clock = std::chrono::steady_clock;

struct Endpoint {
    std::string host;
    std::uint16_t port = 0;

    std::string str() const { return host + ":" + std::to_string(port); }
    /// `host:port`; throws nsb::Error on malformed input.
    static Endpoint parse(std::string_view text);

    bool operator==(const Endpoint&) const = default;
};

enum class FailureKind { timeout, refused, reset, protocol };

std::string_view to_string(FailureKind kind);
std::optional<FailureKind> failure_kind_from_string(std::string_view text);

// Owning file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { close(); }
    Socket(Socket&& other) noexcept : fd_(other.release()) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int get() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    int release() {
        int fd = fd_;
        fd_ = -1;
        return fd;
    }
    void close();
    /// Close with SO_LINGER {1, 0} so the peer sees a reset.
    void abort();

private:
    int fd_ = -1;
};

struct ConnectOutcome {
    Socket socket;
    std::optional<FailureKind> failure;
};

/// Non-blocking connect bounded by `deadline`. The returned socket is in non-blocking mode.
ConnectOutcome connect_tcp(const Endpoint& to, Clock::time_point deadline);

struct HttpOutcome {
    std::optional<FailureKind> failure;
    int status = 0;
    std::size_t bytes = 0;
};

/// One `GET path` over a fresh connection with `Connection: close`.
/// A response is complete once Content-Length bytes of body arrived, or at EOF
/// when no length is given. Non-2xx/3xx statuses are reported as protocol failures.
HttpOutcome http_get(const Endpoint& to, std::string_view path, Clock::time_point deadline);

/// Listening IPv4 socket; port 0 picks an ephemeral port.
Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog);
std::uint16_t local_port(const Socket& s);

/// Asks the kernel for a currently free loopback port.
std::uint16_t pick_free_port();

} // namespace nsb::net
