#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>

namespace nsb::capture {

inline constexpr std::uint8_t ip_proto_icmp = 1;
inline constexpr std::uint8_t ip_proto_tcp = 6;
inline constexpr std::uint8_t ip_proto_udp = 17;

namespace tcp_flag {
inline constexpr std::uint8_t fin = 0x01;
inline constexpr std::uint8_t syn = 0x02;
inline constexpr std::uint8_t rst = 0x04;
inline constexpr std::uint8_t psh = 0x08;
inline constexpr std::uint8_t ack = 0x10;
} // namespace tcp_flag

// IPv4 header fields plus TCP/UDP ports and TCP flags. Addresses in host order.
struct DecodedPacket {
    std::uint8_t proto = 0;
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint16_t sport = 0;
    std::uint16_t dport = 0;
    std::uint8_t tcp_flags = 0;
    bool has_ports = false;  // TCP/UDP header fully captured
};

/// nullopt for non-IPv4 frames and frames too short to hold an IPv4 header.
std::optional<DecodedPacket> decode_ipv4(std::uint32_t linktype, std::span<const std::uint8_t> frame);

std::string format_ipv4(std::uint32_t addr);
std::optional<std::uint32_t> parse_ipv4(const std::string& text);

} // namespace nsb::capture
