#include <doctest.h>

#include <thread>

#include "nsb/capture/filter.hpp"
#include "nsb/capture/live.hpp"
#include "nsb/common/net.hpp"
#include "support.hpp"

using namespace nsb;
using namespace nsb::capture;
using namespace std::chrono_literals;

namespace {

DecodedPacket tcp(std::uint32_t src, std::uint16_t sport, std::uint32_t dst, std::uint16_t dport)
{
    return {ip_proto_tcp, src, dst, sport, dport, 0, true};
}

DecodedPacket udp(std::uint32_t src, std::uint16_t sport, std::uint32_t dst, std::uint16_t dport)
{
    return {ip_proto_udp, src, dst, sport, dport, 0, true};
}

const auto A = test::ip(127, 0, 0, 1);
const auto B = test::ip(10, 1, 2, 3);

} // namespace

TEST_CASE("empty filter matches everything")
{
    auto f = PacketFilter::compile("   ");
    CHECK(f.empty());
    CHECK(f.matches(std::nullopt));
    CHECK(f.matches(tcp(A, 1, B, 2)));
}

TEST_CASE("protocol and port primitives")
{
    auto f = PacketFilter::compile("tcp port 8080");
    CHECK(f.matches(tcp(A, 40000, B, 8080)));
    CHECK(f.matches(tcp(B, 8080, A, 40000)));
    CHECK_FALSE(f.matches(udp(A, 40000, B, 8080)));
    CHECK_FALSE(f.matches(tcp(A, 40000, B, 8081)));
    CHECK_FALSE(f.matches(std::nullopt));

    auto dst = PacketFilter::compile("dst port 80");
    CHECK(dst.matches(tcp(A, 1, B, 80)));
    CHECK_FALSE(dst.matches(tcp(A, 80, B, 1)));
    auto src = PacketFilter::compile("src port 80");
    CHECK(src.matches(tcp(A, 80, B, 1)));

    DecodedPacket icmp{ip_proto_icmp, A, B, 0, 0, 0, false};
    CHECK(PacketFilter::compile("icmp").matches(icmp));
    CHECK(PacketFilter::compile("ip").matches(icmp));
    CHECK_FALSE(PacketFilter::compile("port 0").matches(icmp));
}

TEST_CASE("hosts and boolean structure")
{
    auto f = PacketFilter::compile("host 10.1.2.3 and (udp or not tcp)");
    CHECK(f.matches(udp(A, 1, B, 2)));
    CHECK_FALSE(f.matches(tcp(A, 1, B, 2)));
    CHECK_FALSE(f.matches(udp(A, 1, A, 2)));
    auto g = PacketFilter::compile("src host 127.0.0.1 && !dst port 22 || udp");
    CHECK(g.matches(tcp(A, 1, B, 80)));
    CHECK_FALSE(g.matches(tcp(A, 1, B, 22)));
    CHECK(g.matches(udp(B, 1, A, 22)));
    CHECK(g.text() == "src host 127.0.0.1 && !dst port 22 || udp");
}

TEST_CASE("syntax errors")
{
    for (const char* bad : {"tcp port", "port 70000", "host 1.2.3", "(tcp", "tcp or", "frobnicate", "tcp )"}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(PacketFilter::compile(bad), FilterSyntaxError);
    }
}

TEST_CASE("filter templates")
{
    CHECK(expand_filter("tcp port ${target_port}", 40123) == "tcp port 40123");
    CHECK(expand_filter("", 1) == "");
}

TEST_CASE("live loopback capture")
{
    test::TempDir dir;
    auto listener = net::listen_tcp("127.0.0.1", 0, 16);
    auto port = net::local_port(listener);
    auto other = net::listen_tcp("127.0.0.1", 0, 16);

    std::unique_ptr<CaptureSession> session;
    try {
        session = CaptureSession::start({"lo", "tcp port " + std::to_string(port), 256}, dir / "cap.pcap");
    } catch (const CaptureUnavailable& e) {
        // capture needs CAP_NET_RAW; without it the degradation path is what matters
        CHECK(e.kind == CaptureUnavailable::Kind::permission_denied);
        CHECK_FALSE(std::filesystem::exists(dir / "cap.pcap"));
        return;
    }
    for (int i = 0; i < 5; ++i) {
        net::connect_tcp({"127.0.0.1", port}, std::chrono::steady_clock::now() + 1s);
        net::connect_tcp({"127.0.0.1", net::local_port(other)}, std::chrono::steady_clock::now() + 1s);
    }
    std::this_thread::sleep_for(200ms);
    auto stats = session->stop();
    auto again = session->stop();
    CHECK(stats.packet_count > 0);
    CHECK(again.packet_count == stats.packet_count);
    CHECK(stats.seen >= stats.packet_count);
    auto pcap = read_pcap(dir / "cap.pcap");
    CHECK(pcap.records.size() == stats.packet_count);
    for (const auto& r : pcap.records) {
        auto p = decode_ipv4(pcap.header.linktype, r.data);
        REQUIRE(p);
        CHECK((p->sport == port || p->dport == port));
        CHECK(r.captured_len() <= r.original_len);
        CHECK(r.captured_len() <= 256u);
    }
}

TEST_CASE("unknown interface and bad filters do not create a file")
{
    test::TempDir dir;
    try {
        CaptureSession::start({"nsb-no-such-if0", "", 256}, dir / "x.pcap");
        FAIL("expected CaptureUnavailable");
    } catch (const CaptureUnavailable& e) {
        CHECK((e.kind == CaptureUnavailable::Kind::interface_not_found ||
               e.kind == CaptureUnavailable::Kind::permission_denied));
    }
    CHECK_THROWS_AS(CaptureSession::start({"lo", "tcp port", 256}, dir / "y.pcap"), FilterSyntaxError);
    CHECK_FALSE(std::filesystem::exists(dir / "x.pcap"));
    CHECK_FALSE(std::filesystem::exists(dir / "y.pcap"));
}
