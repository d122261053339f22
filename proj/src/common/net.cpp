#include "nsb/common/net.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <cstring>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "nsb/common/text.hpp"

namespace nsb::net {

namespace {

int remaining_ms(Clock::time_point deadline)
{
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) {
        return 0;
    }
    // poll() rounds down; make sure we do not wake up just before the deadline
    return static_cast<int>(left) + 1;
}

// Waits for `events`; false on deadline.
bool wait_for(int fd, short events, Clock::time_point deadline)
{
    while (true) {
        int timeout = remaining_ms(deadline);
        if (timeout == 0) {
            return false;
        }
        pollfd pfd{fd, events, 0};
        int rc = ::poll(&pfd, 1, timeout);
        if (rc > 0) {
            return true;
        }
        if (rc == 0) {
            if (Clock::now() >= deadline) {
                return false;
            }
            continue;
        }
        if (errno != EINTR) {
            return true;  // let the subsequent syscall report the error
        }
    }
}

FailureKind classify_errno(int err)
{
    switch (err) {
    case ECONNRESET:
    case EPIPE:
    case ECONNABORTED:
        return FailureKind::reset;
    case ETIMEDOUT:
        return FailureKind::timeout;
    default:
        return FailureKind::refused;
    }
}

std::optional<in_addr> resolve_ipv4(const std::string& host)
{
    in_addr addr{};
    if (::inet_pton(AF_INET, host.c_str(), &addr) == 1) {
        return addr;
    }
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
        return std::nullopt;
    }
    addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

struct ResponseParser {
    std::string head;
    bool head_done = false;
    int status = 0;
    std::optional<std::size_t> content_length;
    std::size_t body_bytes = 0;
    bool malformed = false;

    // Feeds bytes; returns true when the response is complete.
    bool feed(std::string_view data)
    {
        if (!head_done) {
            head.append(data);
            auto end = head.find("\r\n\r\n");
            if (end == std::string::npos) {
                if (head.size() > 64 * 1024) {
                    malformed = true;
                    return true;
                }
                return false;
            }
            head_done = true;
            body_bytes = head.size() - (end + 4);
            head.resize(end);
            parse_head();
            if (malformed) {
                return true;
            }
        } else {
            body_bytes += data.size();
        }
        return content_length && body_bytes >= *content_length;
    }

    void parse_head()
    {
        auto lines = split(head, '\n');
        auto& status_line = lines.front();
        if (!status_line.starts_with("HTTP/1.") || status_line.size() < 12) {
            malformed = true;
            return;
        }
        auto code = parse_int(trim(std::string_view(status_line).substr(9, 3)));
        if (!code) {
            malformed = true;
            return;
        }
        status = static_cast<int>(*code);
        for (std::size_t i = 1; i < lines.size(); ++i) {
            auto line = trim(lines[i]);
            auto colon = line.find(':');
            if (colon == std::string_view::npos) {
                continue;
            }
            auto name = to_upper(trim(line.substr(0, colon)));
            if (name == "CONTENT-LENGTH") {
                if (auto n = parse_int(trim(line.substr(colon + 1))); n && *n >= 0) {
                    content_length = static_cast<std::size_t>(*n);
                }
            }
        }
    }
};

} // namespace

std::string_view to_string(FailureKind kind)
{
    switch (kind) {
    case FailureKind::timeout:
        return "timeout";
    case FailureKind::refused:
        return "refused";
    case FailureKind::reset:
        return "reset";
    case FailureKind::protocol:
        return "protocol";
    }
    return "protocol";
}

std::optional<FailureKind> failure_kind_from_string(std::string_view text)
{
    for (auto k : {FailureKind::timeout, FailureKind::refused, FailureKind::reset, FailureKind::protocol}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    return std::nullopt;
}

Endpoint Endpoint::parse(std::string_view text)
{
    auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon == 0) {
        throw Error("invalid endpoint '" + std::string(text) + "', expected host:port");
    }
    auto port = parse_int(text.substr(colon + 1));
    if (!port || *port < 1 || *port > 65535) {
        throw Error("invalid port in endpoint '" + std::string(text) + "'");
    }
    return Endpoint{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(*port)};
}

Socket& Socket::operator=(Socket&& other) noexcept
{
    if (this != &other) {
        close();
        fd_ = other.release();
    }
    return *this;
}

void Socket::close()
{
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::abort()
{
    if (fd_ >= 0) {
        linger lg{1, 0};
        ::setsockopt(fd_, SOL_SOCKET, SO_LINGER, &lg, sizeof lg);
        close();
    }
}

ConnectOutcome connect_tcp(const Endpoint& to, Clock::time_point deadline)
{
    ConnectOutcome out;
    auto addr = resolve_ipv4(to.host);
    if (!addr) {
        out.failure = FailureKind::refused;
        return out;
    }
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0));
    if (!s.valid()) {
        out.failure = FailureKind::refused;
        return out;
    }
    int one = 1;
    ::setsockopt(s.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(to.port);
    sa.sin_addr = *addr;
    int rc = ::connect(s.get(), reinterpret_cast<sockaddr*>(&sa), sizeof sa);
    if (rc != 0 && errno != EINPROGRESS) {
        out.failure = classify_errno(errno);
        return out;
    }
    if (rc != 0) {
        if (!wait_for(s.get(), POLLOUT, deadline)) {
            out.failure = FailureKind::timeout;
            return out;
        }
        int err = 0;
        socklen_t len = sizeof err;
        ::getsockopt(s.get(), SOL_SOCKET, SO_ERROR, &err, &len);
        if (err != 0) {
            out.failure = classify_errno(err);
            return out;
        }
    }
    out.socket = std::move(s);
    return out;
}

HttpOutcome http_get(const Endpoint& to, std::string_view path, Clock::time_point deadline)
{
    HttpOutcome out;
    auto conn = connect_tcp(to, deadline);
    if (conn.failure) {
        out.failure = conn.failure;
        return out;
    }
    int fd = conn.socket.get();
    std::string request = "GET " + std::string(path.empty() ? "/" : path) + " HTTP/1.1\r\nHost: " + to.host +
                          "\r\nUser-Agent: nsb-probe\r\nConnection: close\r\n\r\n";
    std::size_t sent = 0;
    while (sent < request.size()) {
        ssize_t n = ::send(fd, request.data() + sent, request.size() - sent, MSG_NOSIGNAL);
        if (n > 0) {
            sent += static_cast<std::size_t>(n);
            continue;
        }
        if (n < 0 && (errno == EAGAIN || errno == EINTR)) {
            if (!wait_for(fd, POLLOUT, deadline)) {
                out.failure = FailureKind::timeout;
                return out;
            }
            continue;
        }
        out.failure = classify_errno(errno);
        return out;
    }
    ResponseParser parser;
    char buf[4096];
    while (true) {
        if (!wait_for(fd, POLLIN, deadline)) {
            out.failure = FailureKind::timeout;
            return out;
        }
        ssize_t n = ::recv(fd, buf, sizeof buf, 0);
        if (n > 0) {
            out.bytes += static_cast<std::size_t>(n);
            if (parser.feed(std::string_view(buf, static_cast<std::size_t>(n)))) {
                break;
            }
            continue;
        }
        if (n == 0) {
            if (!parser.head_done) {
                // peer closed without a complete response
                out.failure = out.bytes == 0 ? FailureKind::reset : FailureKind::protocol;
                return out;
            }
            break;
        }
        if (errno == EAGAIN || errno == EINTR) {
            continue;
        }
        out.failure = classify_errno(errno);
        return out;
    }
    if (parser.malformed) {
        out.failure = FailureKind::protocol;
        return out;
    }
    out.status = parser.status;
    if (parser.status < 200 || parser.status >= 400) {
        out.failure = FailureKind::protocol;
    }
    return out;
}

Socket listen_tcp(const std::string& host, std::uint16_t port, int backlog)
{
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) {
        throw Error(std::string("socket: ") + std::strerror(errno));
    }
    int one = 1;
    ::setsockopt(s.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    auto addr = resolve_ipv4(host);
    if (!addr) {
        throw Error("cannot resolve " + host);
    }
    sa.sin_addr = *addr;
    if (::bind(s.get(), reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
        throw Error("bind " + host + ":" + std::to_string(port) + ": " + std::strerror(errno));
    }
    if (::listen(s.get(), backlog) != 0) {
        throw Error(std::string("listen: ") + std::strerror(errno));
    }
    return s;
}

std::uint16_t local_port(const Socket& s)
{
    sockaddr_in sa{};
    socklen_t len = sizeof sa;
    ::getsockname(s.get(), reinterpret_cast<sockaddr*>(&sa), &len);
    return ntohs(sa.sin_port);
}

std::uint16_t pick_free_port()
{
    auto s = listen_tcp("127.0.0.1", 0, 1);
    return local_port(s);
}

} // namespace nsb::net
