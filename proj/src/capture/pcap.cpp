#include "nsb/capture/pcap.hpp"

#include <bit>
#include <cstring>

#include "nsb/common/text.hpp"

namespace nsb::capture {

namespace {

static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");

class Cursor {
public:
    Cursor(std::span<const std::uint8_t> bytes, bool swapped) : bytes_(bytes), swapped_(swapped) {}

    std::uint32_t u32(std::size_t at) const
    {
        std::uint32_t v;
        std::memcpy(&v, bytes_.data() + at, 4);
        return swapped_ ? __builtin_bswap32(v) : v;
    }
    std::uint16_t u16(std::size_t at) const
    {
        std::uint16_t v;
        std::memcpy(&v, bytes_.data() + at, 2);
        return swapped_ ? __builtin_bswap16(v) : v;
    }

private:
    std::span<const std::uint8_t> bytes_;
    bool swapped_;
};

void put_u32(std::string& out, std::uint32_t v)
{
    out.append(reinterpret_cast<const char*>(&v), 4);
}

void put_u16(std::string& out, std::uint16_t v)
{
    out.append(reinterpret_cast<const char*>(&v), 2);
}

std::string encode_header(const PcapHeader& h)
{
    std::string out;
    put_u32(out, pcap_magic);
    put_u16(out, h.version_major);
    put_u16(out, h.version_minor);
    put_u32(out, static_cast<std::uint32_t>(h.thiszone));
    put_u32(out, h.sigfigs);
    put_u32(out, h.snaplen);
    put_u32(out, h.linktype);
    return out;
}

} // namespace

PcapContents parse_pcap(std::span<const std::uint8_t> bytes)
{
    if (bytes.size() < pcap_global_header_size) {
        throw BadMagic("file shorter than a pcap global header");
    }
    std::uint32_t magic;
    std::memcpy(&magic, bytes.data(), 4);
    PcapContents out;
    if (magic == pcap_magic) {
        out.byte_swapped = false;
    } else if (magic == __builtin_bswap32(pcap_magic)) {
        out.byte_swapped = true;
    } else {
        char buf[32];
        std::snprintf(buf, sizeof buf, "0x%08x", magic);
        throw BadMagic(std::string("not a classic pcap file (magic ") + buf + ")");
    }
    Cursor c(bytes, out.byte_swapped);
    out.header.version_major = c.u16(4);
    out.header.version_minor = c.u16(6);
    out.header.thiszone = static_cast<std::int32_t>(c.u32(8));
    out.header.sigfigs = c.u32(12);
    out.header.snaplen = c.u32(16);
    out.header.linktype = c.u32(20);

    std::size_t pos = pcap_global_header_size;
    while (pos < bytes.size()) {
        if (bytes.size() - pos < pcap_record_header_size) {
            out.truncated = TruncatedRecord{pos};
            break;
        }
        PacketRecord r;
        r.ts_sec = c.u32(pos);
        r.ts_usec = c.u32(pos + 4);
        std::uint32_t incl = c.u32(pos + 8);
        r.original_len = c.u32(pos + 12);
        if (bytes.size() - pos - pcap_record_header_size < incl) {
            out.truncated = TruncatedRecord{pos};
            break;
        }
        auto data = bytes.subspan(pos + pcap_record_header_size, incl);
        r.data.assign(data.begin(), data.end());
        out.records.push_back(std::move(r));
        pos += pcap_record_header_size + incl;
    }
    return out;
}

PcapContents read_pcap(const std::filesystem::path& path)
{
    auto text = read_file(path.string());
    return parse_pcap(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_pcap(const std::filesystem::path& path, const PcapHeader& header, std::span<const PacketRecord> records)
{
    PcapWriter w(path, header);
    for (const auto& r : records) {
        w.write(r);
    }
    w.flush();
}

PcapWriter::PcapWriter(const std::filesystem::path& path, const PcapHeader& header)
    : out_(path, std::ios::binary | std::ios::trunc), path_(path), snaplen_(header.snaplen)
{
    if (!out_) {
        throw PcapError("cannot open " + path.string() + " for writing");
    }
    auto h = encode_header(header);
    out_.write(h.data(), static_cast<std::streamsize>(h.size()));
}

void PcapWriter::write(std::uint32_t ts_sec, std::uint32_t ts_usec, std::uint32_t original_len,
                       std::span<const std::uint8_t> data)
{
    if (data.size() > original_len || data.size() > snaplen_) {
        throw PcapError("captured length exceeds original length or snaplen");
    }
    if (ts_usec >= 1'000'000) {
        throw PcapError("microsecond field out of range");
    }
    std::string rec;
    put_u32(rec, ts_sec);
    put_u32(rec, ts_usec);
    put_u32(rec, static_cast<std::uint32_t>(data.size()));
    put_u32(rec, original_len);
    out_.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    out_.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out_) {
        throw PcapError("write failed: " + path_.string());
    }
    ++count_;
}

void PcapWriter::write(const PacketRecord& r)
{
    write(r.ts_sec, r.ts_usec, r.original_len, r.data);
}

void PcapWriter::flush()
{
    out_.flush();
    if (!out_) {
        throw PcapError("write failed: " + path_.string());
    }
}

} // namespace nsb::capture
