#pragma once

// Live capture through an AF_PACKET socket, filtered in user space and
// streamed to a classic pcap file.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "nsb/capture/filter.hpp"
#include "nsb/capture/pcap.hpp"

namespace nsb::capture {

struct CaptureOptions {
    std::string iface = "lo";
    std::string filter;
    unsigned snaplen = 256;
};

class CaptureUnavailable : public Error {
public:
    enum class Kind { permission_denied, interface_not_found, failed };
    CaptureUnavailable(Kind k, const std::string& what) : Error(what), kind(k) {}
    Kind kind;
};

std::string_view to_string(CaptureUnavailable::Kind kind);

struct CaptureStats {
    std::uint64_t packet_count = 0;  // written to the file
    std::uint64_t seen = 0;          // before filtering
};

/// Replaces `${target_port}` in a filter template.
std::string expand_filter(std::string_view templ, std::uint16_t target_port);

class CaptureSession {
public:
    /// Opens the socket and starts the writer thread. Throws CaptureUnavailable
    /// or FilterSyntaxError; no file is created in that case.
    static std::unique_ptr<CaptureSession> start(const CaptureOptions& options, const std::filesystem::path& path);

    ~CaptureSession();
    CaptureSession(const CaptureSession&) = delete;
    CaptureSession& operator=(const CaptureSession&) = delete;

    /// Flushes and closes the file. Safe to call more than once.
    CaptureStats stop();

private:
    CaptureSession() = default;
    void loop();

    int fd_ = -1;
    PacketFilter filter_;
    unsigned snaplen_ = 0;
    std::unique_ptr<PcapWriter> writer_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> seen_{0};
    std::thread thread_;
    bool stopped_ = false;
    CaptureStats stats_;
};

} // namespace nsb::capture
