// nsb-http-target: minimal HTTP/1.1 server with a hard concurrency cap.
//
// `--capacity` worker threads serve requests; at most `--queue` accepted
// connections wait for a worker, anything beyond that is reset immediately.

#include <atomic>
#include <condition_variable>
#include <csignal>
#include <cstdio>
#include <deque>
#include <mutex>
#include <sys/socket.h>
#include <sys/time.h>
#include <thread>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>

#include "nsb/common/net.hpp"

namespace {

struct Options {
    std::string host = "127.0.0.1";
    int port = 8080;
    int capacity = 64;
    int delay_ms = 0;
    int queue = -1;
    int body_bytes = 64;
};

class ConnectionQueue {
public:
    explicit ConnectionQueue(std::size_t limit) : limit_(limit) {}

    // False when full.
    bool push(nsb::net::Socket& s)
    {
        {
            std::lock_guard lock(mu_);
            if (items_.size() >= limit_) {
                return false;
            }
            items_.push_back(std::move(s));
        }
        cv_.notify_one();
        return true;
    }

    nsb::net::Socket pop()
    {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !items_.empty(); });
        auto s = std::move(items_.front());
        items_.pop_front();
        return s;
    }

private:
    std::size_t limit_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<nsb::net::Socket> items_;
};

void serve(nsb::net::Socket conn, const Options& opt, const std::string& response)
{
    timeval tv{5, 0};
    ::setsockopt(conn.get(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    ::setsockopt(conn.get(), SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
    std::string head;
    char buf[2048];
    while (head.find("\r\n\r\n") == std::string::npos && head.size() < 16384) {
        ssize_t n = ::recv(conn.get(), buf, sizeof buf, 0);
        if (n <= 0) {
            return;
        }
        head.append(buf, static_cast<std::size_t>(n));
    }
    if (opt.delay_ms > 0) {
        std::this_thread::sleep_for(std::chrono::milliseconds(opt.delay_ms));
    }
    std::size_t sent = 0;
    while (sent < response.size()) {
        ssize_t n = ::send(conn.get(), response.data() + sent, response.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) {
            return;
        }
        sent += static_cast<std::size_t>(n);
    }
    ::shutdown(conn.get(), SHUT_WR);
}

} // namespace

int main(int argc, char** argv)
{
    Options opt;
    CLI::App app{"Throttled HTTP target service"};
    app.add_option("--host", opt.host, "Bind address");
    app.add_option("--port", opt.port, "Listen port")->check(CLI::Range(1, 65535));
    app.add_option("--capacity", opt.capacity, "Concurrent request cap")->check(CLI::Range(1, 4096));
    app.add_option("--delay-ms", opt.delay_ms, "Per-request service time")->check(CLI::Range(0, 600000));
    app.add_option("--queue", opt.queue, "Accepted connections allowed to wait (default: capacity)");
    app.add_option("--body-bytes", opt.body_bytes, "Response body size")->check(CLI::Range(0, 1 << 20));
    CLI11_PARSE(app, argc, argv);
    if (opt.queue < 0) {
        opt.queue = opt.capacity;
    }
    std::signal(SIGPIPE, SIG_IGN);

    nsb::net::Socket listener;
    try {
        listener = nsb::net::listen_tcp(opt.host, static_cast<std::uint16_t>(opt.port), 1024);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "nsb-http-target: %s\n", e.what());
        return 1;
    }
    std::string body(static_cast<std::size_t>(opt.body_bytes), 'x');
    std::string response = "HTTP/1.1 200 OK\r\nContent-Type: text/plain\r\nContent-Length: " +
                           std::to_string(body.size()) + "\r\nConnection: close\r\n\r\n" + body;

    ConnectionQueue queue(static_cast<std::size_t>(opt.queue));
    std::vector<std::thread> workers;
    for (int i = 0; i < opt.capacity; ++i) {
        workers.emplace_back([&] {
            while (true) {
                serve(queue.pop(), opt, response);
            }
        });
    }
    std::printf("nsb-http-target listening on %s:%d capacity=%d queue=%d delay_ms=%d\n", opt.host.c_str(),
                opt.port, opt.capacity, opt.queue, opt.delay_ms);
    std::fflush(stdout);

    while (true) {
        int fd = ::accept4(listener.get(), nullptr, nullptr, SOCK_CLOEXEC);
        if (fd < 0) {
            if (errno == EINTR || errno == ECONNABORTED || errno == EMFILE || errno == ENFILE) {
                if (errno == EMFILE || errno == ENFILE) {
                    std::this_thread::sleep_for(std::chrono::milliseconds(1));
                }
                continue;
            }
            std::perror("accept");
            return 1;
        }
        nsb::net::Socket conn(fd);
        if (!queue.push(conn)) {
            conn.abort();
        }
    }
}
