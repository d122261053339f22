#pragma once

// Classic pcap (microsecond resolution) reader and writer.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <vector>

#include "nsb/common/error.hpp"

namespace nsb::capture {

inline constexpr std::uint32_t pcap_magic = 0xa1b2c3d4;
inline constexpr std::size_t pcap_global_header_size = 24;
inline constexpr std::size_t pcap_record_header_size = 16;

enum class LinkType : std::uint32_t {
    null_loopback = 0,
    ethernet = 1,
    raw_ipv4 = 101,
};

struct PcapHeader {
    std::uint16_t version_major = 2;
    std::uint16_t version_minor = 4;
    std::int32_t thiszone = 0;
    std::uint32_t sigfigs = 0;
    std::uint32_t snaplen = 65535;
    std::uint32_t linktype = static_cast<std::uint32_t>(LinkType::ethernet);

    bool operator==(const PcapHeader&) const = default;
};

struct PacketRecord {
    std::uint32_t ts_sec = 0;
    std::uint32_t ts_usec = 0;
    std::uint32_t original_len = 0;
    std::vector<std::uint8_t> data;  // captured bytes

    std::uint32_t captured_len() const { return static_cast<std::uint32_t>(data.size()); }
    std::int64_t micros() const { return static_cast<std::int64_t>(ts_sec) * 1'000'000 + ts_usec; }
    double timestamp() const { return ts_sec + ts_usec * 1e-6; }

    bool operator==(const PacketRecord&) const = default;
};

class PcapError : public Error {
public:
    using Error::Error;
};

class BadMagic : public PcapError {
public:
    using PcapError::PcapError;
};

struct TruncatedRecord {
    std::uint64_t offset = 0;  // file offset of the incomplete record
    bool operator==(const TruncatedRecord&) const = default;
};

struct PcapContents {
    PcapHeader header;
    std::vector<PacketRecord> records;
    std::optional<TruncatedRecord> truncated;  // records before the cut are still returned
    bool byte_swapped = false;
};

/// Throws BadMagic for anything that is not a classic microsecond pcap.
PcapContents parse_pcap(std::span<const std::uint8_t> bytes);
PcapContents read_pcap(const std::filesystem::path& path);

void write_pcap(const std::filesystem::path& path, const PcapHeader& header, std::span<const PacketRecord> records);

// Streaming writer in native (little-endian host) byte order.
class PcapWriter {
public:
    PcapWriter(const std::filesystem::path& path, const PcapHeader& header);

    void write(const PacketRecord& record);
    void write(std::uint32_t ts_sec, std::uint32_t ts_usec, std::uint32_t original_len,
               std::span<const std::uint8_t> data);
    void flush();
    std::uint64_t count() const { return count_; }

private:
    std::ofstream out_;
    std::filesystem::path path_;
    std::uint32_t snaplen_;
    std::uint64_t count_ = 0;
};

} // namespace nsb::capture
