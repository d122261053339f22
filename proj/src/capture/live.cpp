#include "nsb/capture/live.hpp"

#include <arpa/inet.h>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <linux/if_packet.h>
#include <net/ethernet.h>
#include <net/if.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>
#include <vector>

#include <spdlog/spdlog.h>

namespace nsb::capture {

std::string_view to_string(CaptureUnavailable::Kind kind)
{
    switch (kind) {
    case CaptureUnavailable::Kind::permission_denied:
        return "permission_denied";
    case CaptureUnavailable::Kind::interface_not_found:
        return "interface_not_found";
    case CaptureUnavailable::Kind::failed:
        return "failed";
    }
    return "failed";
}

std::string expand_filter(std::string_view templ, std::uint16_t target_port)
{
    std::string out(templ);
    const std::string key = "${target_port}";
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos)) {
        out.replace(pos, key.size(), std::to_string(target_port));
    }
    return out;
}

std::unique_ptr<CaptureSession> CaptureSession::start(const CaptureOptions& options, const std::filesystem::path& path)
{
    std::unique_ptr<CaptureSession> s(new CaptureSession);
    s->filter_ = PacketFilter::compile(options.filter);
    s->snaplen_ = options.snaplen == 0 ? 65535 : options.snaplen;

    unsigned index = ::if_nametoindex(options.iface.c_str());
    if (index == 0) {
        throw CaptureUnavailable(CaptureUnavailable::Kind::interface_not_found,
                                 "no such interface: " + options.iface);
    }
    int fd = ::socket(AF_PACKET, SOCK_RAW | SOCK_CLOEXEC, htons(ETH_P_ALL));
    if (fd < 0) {
        int err = errno;
        auto kind = (err == EPERM || err == EACCES) ? CaptureUnavailable::Kind::permission_denied
                                                    : CaptureUnavailable::Kind::failed;
        throw CaptureUnavailable(kind, std::string("packet socket: ") + std::strerror(err));
    }
    s->fd_ = fd;
    sockaddr_ll addr{};
    addr.sll_family = AF_PACKET;
    addr.sll_protocol = htons(ETH_P_ALL);
    addr.sll_ifindex = static_cast<int>(index);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        throw CaptureUnavailable(CaptureUnavailable::Kind::failed,
                                 std::string("bind to ") + options.iface + ": " + std::strerror(errno));
    }
    timeval tv{0, 100'000};
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
    int rcvbuf = 4 << 20;
    ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &rcvbuf, sizeof rcvbuf);

    PcapHeader header;
    header.snaplen = s->snaplen_;
    header.linktype = static_cast<std::uint32_t>(LinkType::ethernet);
    s->writer_ = std::make_unique<PcapWriter>(path, header);
    s->thread_ = std::thread([p = s.get()] { p->loop(); });
    return s;
}

void CaptureSession::loop()
{
    std::vector<std::uint8_t> buf(65536);
    while (!stopping_.load()) {
        sockaddr_ll from{};
        socklen_t fromlen = sizeof from;
        ssize_t n = ::recvfrom(fd_, buf.data(), buf.size(), MSG_TRUNC, reinterpret_cast<sockaddr*>(&from), &fromlen);
        if (n < 0) {
            if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) {
                continue;
            }
            spdlog::warn("capture receive failed: {}", std::strerror(errno));
            break;
        }
        // loopback delivers every packet twice; keep the inbound copy
        if (from.sll_pkttype == PACKET_OUTGOING) {
            continue;
        }
        seen_.fetch_add(1);
        auto original = static_cast<std::size_t>(n);
        auto avail = std::min(original, buf.size());
        std::span<const std::uint8_t> frame(buf.data(), avail);
        if (!filter_.matches(decode_ipv4(static_cast<std::uint32_t>(LinkType::ethernet), frame))) {
            continue;
        }
        auto now = std::chrono::system_clock::now().time_since_epoch();
        auto us = std::chrono::duration_cast<std::chrono::microseconds>(now).count();
        auto captured = std::min<std::size_t>(avail, snaplen_);
        writer_->write(static_cast<std::uint32_t>(us / 1'000'000), static_cast<std::uint32_t>(us % 1'000'000),
                       static_cast<std::uint32_t>(original), frame.first(captured));
    }
}

CaptureStats CaptureSession::stop()
{
    if (stopped_) {
        return stats_;
    }
    stopped_ = true;
    stopping_.store(true);
    if (thread_.joinable()) {
        thread_.join();
    }
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
    if (writer_) {
        writer_->flush();
        stats_.packet_count = writer_->count();
        writer_.reset();
    }
    stats_.seen = seen_.load();
    return stats_;
}

CaptureSession::~CaptureSession()
{
    try {
        stop();
    } catch (...) {
    }
}

} // namespace nsb::capture
