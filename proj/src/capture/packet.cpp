#include "nsb/capture/packet.hpp"

#include <arpa/inet.h>

#include "nsb/capture/pcap.hpp"

namespace nsb::capture {

namespace {

std::uint16_t be16(const std::uint8_t* p)
{
    return static_cast<std::uint16_t>(p[0] << 8 | p[1]);
}

std::uint32_t be32(const std::uint8_t* p)
{
    return static_cast<std::uint32_t>(p[0]) << 24 | static_cast<std::uint32_t>(p[1]) << 16 |
           static_cast<std::uint32_t>(p[2]) << 8 | p[3];
}

} // namespace

std::optional<DecodedPacket> decode_ipv4(std::uint32_t linktype, std::span<const std::uint8_t> frame)
{
    std::size_t offset = 0;
    switch (static_cast<LinkType>(linktype)) {
    case LinkType::ethernet:
        if (frame.size() < 14 || be16(frame.data() + 12) != 0x0800) {
            return std::nullopt;
        }
        offset = 14;
        break;
    case LinkType::null_loopback: {
        if (frame.size() < 4) {
            return std::nullopt;
        }
        // address family in the writer's byte order
        std::uint32_t family = frame[0] | frame[1] << 8 | frame[2] << 16 | static_cast<std::uint32_t>(frame[3]) << 24;
        if (family != 2 && family != 0x02000000) {
            return std::nullopt;
        }
        offset = 4;
        break;
    }
    case LinkType::raw_ipv4:
        offset = 0;
        break;
    default:
        return std::nullopt;
    }
    auto ip = frame.subspan(offset);
    if (ip.size() < 20 || (ip[0] >> 4) != 4) {
        return std::nullopt;
    }
    std::size_t ihl = static_cast<std::size_t>(ip[0] & 0x0f) * 4;
    if (ihl < 20 || ip.size() < ihl) {
        return std::nullopt;
    }
    DecodedPacket p;
    p.proto = ip[9];
    p.src = be32(ip.data() + 12);
    p.dst = be32(ip.data() + 16);
    bool first_fragment = (be16(ip.data() + 6) & 0x1fff) == 0;
    auto l4 = ip.subspan(ihl);
    if (first_fragment && (p.proto == ip_proto_tcp || p.proto == ip_proto_udp)) {
        std::size_t need = p.proto == ip_proto_tcp ? 14 : 4;
        if (l4.size() >= need) {
            p.sport = be16(l4.data());
            p.dport = be16(l4.data() + 2);
            if (p.proto == ip_proto_tcp) {
                p.tcp_flags = l4[13];
            }
            p.has_ports = true;
        }
    }
    return p;
}

std::string format_ipv4(std::uint32_t addr)
{
    in_addr a{htonl(addr)};
    char buf[INET_ADDRSTRLEN];
    ::inet_ntop(AF_INET, &a, buf, sizeof buf);
    return buf;
}

std::optional<std::uint32_t> parse_ipv4(const std::string& text)
{
    in_addr a{};
    if (::inet_pton(AF_INET, text.c_str(), &a) != 1) {
        return std::nullopt;
    }
    return ntohl(a.s_addr);
}

} // namespace nsb::capture
