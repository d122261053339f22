#pragma once

// A small subset of the pcap filter language, evaluated in user space:
//   tcp | udp | icmp | ip
//   [src|dst] port N
//   [src|dst] host A.B.C.D
//   and/&&, or/||, not/!, parentheses; juxtaposition means `and` ("tcp port 80")
// The empty expression matches every packet.

#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "nsb/capture/packet.hpp"
#include "nsb/common/error.hpp"

namespace nsb::capture {

class FilterSyntaxError : public Error {
public:
    using Error::Error;
};

class PacketFilter {
public:
    struct Node;

    PacketFilter() = default;
    static PacketFilter compile(std::string_view expression);

    bool empty() const { return root_ == nullptr; }
    /// `packet` is nullopt for non-IPv4 frames, which only the empty filter accepts.
    bool matches(const std::optional<DecodedPacket>& packet) const;
    const std::string& text() const { return text_; }

private:
    std::shared_ptr<const Node> root_;
    std::string text_;
};

} // namespace nsb::capture
