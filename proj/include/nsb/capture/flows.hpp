#pragma once

// Bidirectional flow aggregation over a pcap file, plus the extraction-track
// seam for external feature extractors.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nsb/capture/pcap.hpp"
#include "nsb/phases.hpp"

namespace nsb::capture {

struct FlowKey {
    std::uint8_t proto = 0;
    std::uint32_t addr_lo = 0;
    std::uint16_t port_lo = 0;
    std::uint32_t addr_hi = 0;
    std::uint16_t port_hi = 0;

    /// Orders the two endpoints so that both directions share a key.
    static FlowKey make(std::uint8_t proto, std::uint32_t src, std::uint16_t sport, std::uint32_t dst,
                        std::uint16_t dport);

    auto operator<=>(const FlowKey&) const = default;
};

// Run labels copied onto every flow.
struct FlowLabels {
    std::string cell_id;
    std::string attack_id;
    std::string level;
    double t0_epoch_s = 0;              // wall-clock t0 of the run
    std::vector<PhaseWindow> windows;   // relative to t0
};

struct FlowRecord {
    FlowKey key;
    double first_ts = 0;  // epoch seconds
    double last_ts = 0;
    std::uint64_t fwd_packets = 0;
    std::uint64_t bwd_packets = 0;
    std::uint64_t fwd_bytes = 0;
    std::uint64_t bwd_bytes = 0;
    std::uint64_t syn_count = 0;
    std::uint64_t fin_count = 0;
    std::uint64_t rst_count = 0;
    std::uint64_t ack_count = 0;
    std::optional<double> iat_mean_ms;  // absent for single-packet flows
    std::optional<double> iat_std_ms;
    std::string cell_id;
    std::string attack_id;
    std::string level;
    std::string phase;  // phase of the first packet, or out_of_window

    double duration_s() const { return last_ts - first_ts; }
    std::uint64_t packets() const { return fwd_packets + bwd_packets; }
};

struct FlowExtraction {
    std::vector<FlowRecord> flows;  // ordered by first packet
    std::uint64_t ip_packets = 0;   // IPv4 TCP/UDP packets assigned to flows
    std::uint64_t skipped = 0;      // everything else
    std::optional<TruncatedRecord> truncated;
};

FlowExtraction extract_flows(const PcapContents& pcap, const FlowLabels& labels);
FlowExtraction extract_flows(const std::filesystem::path& pcap_path, const FlowLabels& labels);

inline constexpr std::string_view native_csv_header =
    "proto,addr_lo,port_lo,addr_hi,port_hi,first_ts,last_ts,duration_s,fwd_packets,bwd_packets,fwd_bytes,"
    "bwd_bytes,syn_count,fin_count,rst_count,ack_count,iat_mean_ms,iat_std_ms,cell_id,attack_id,level,phase";

std::vector<std::string> csv_fields(const FlowRecord& flow);
void write_flows_csv(const std::filesystem::path& path, const std::vector<FlowRecord>& flows);

std::string proto_name(std::uint8_t proto);

// An external extractor run as `/bin/sh -c` with `{pcap}` and `{out}` substituted.
struct ExtractorTrack {
    std::string name;
    std::string command;
};

class TrackError : public Error {
public:
    using Error::Error;
};

/// Throws TrackError when the name is not a plain token or a placeholder is missing.
ExtractorTrack register_extractor_track(std::string name, std::string command_template);

struct TrackOutcome {
    std::string name;
    std::string status;  // ok, failed, command_not_found
    std::optional<int> exit_code;
    std::string detail;
    std::filesystem::path output;  // features/<name>.csv
    std::uint64_t rows = 0;
};

/// Runs the native track and every external track concurrently against the same
/// pcap, writing `<features_dir>/<name>.csv`. Failures are isolated per track.
std::vector<TrackOutcome> run_extraction(const std::filesystem::path& pcap_path, const std::filesystem::path& features_dir,
                                         const FlowLabels& labels, const std::vector<ExtractorTrack>& tracks);

} // namespace nsb::capture
