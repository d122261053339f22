#pragma once

// Shared helpers for the test binaries: scratch directories, paths to the
// built workloads and hand-assembled frames.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <system_error>
#include <unistd.h>
#include <vector>

namespace nsb::test {

namespace fs = std::filesystem;

inline fs::path bin_dir()
{
    return NSB_TEST_BIN_DIR;
}

inline fs::path source_dir()
{
    return NSB_TEST_SOURCE_DIR;
}

inline fs::path bundled_catalog()
{
    return source_dir() / "catalog";
}

class TempDir {
public:
    explicit TempDir(const std::string& tag = "nsb")
    {
        static int counter = 0;
        path_ = fs::temp_directory_path() /
                (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

inline void write_text(const fs::path& p, const std::string& text)
{
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

inline std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Copies the bundled catalog into `dir` so a test can corrupt it.
inline fs::path copy_catalog(const fs::path& dir)
{
    auto dst = dir / "catalog";
    fs::copy(bundled_catalog(), dst, fs::copy_options::recursive);
    return dst;
}

inline constexpr std::uint32_t ip(int a, int b, int c, int d)
{
    return static_cast<std::uint32_t>(a) << 24 | static_cast<std::uint32_t>(b) << 16 |
           static_cast<std::uint32_t>(c) << 8 | static_cast<std::uint32_t>(d);
}

inline void put16(std::vector<std::uint8_t>& b, std::uint16_t v)
{
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

inline void put32(std::vector<std::uint8_t>& b, std::uint32_t v)
{
    put16(b, static_cast<std::uint16_t>(v >> 16));
    put16(b, static_cast<std::uint16_t>(v));
}

struct FrameSpec {
    std::uint16_t ethertype = 0x0800;
    std::uint8_t proto = 6;
    std::uint32_t src = 0;
    std::uint32_t dst = 0;
    std::uint16_t sport = 0;
    std::uint16_t dport = 0;
    std::uint8_t flags = 0;
    std::uint16_t frag_offset = 0;  // in 8-byte units
    std::size_t payload = 0;
};

// Ethernet + IPv4 + TCP (20 bytes) / UDP (8) / ICMP (8) + zero payload.
inline std::vector<std::uint8_t> frame(const FrameSpec& s)
{
    std::vector<std::uint8_t> b;
    for (int i = 0; i < 6; ++i) b.push_back(0x02);
    for (int i = 0; i < 6; ++i) b.push_back(0x04);
    put16(b, s.ethertype);
    std::size_t l4 = s.proto == 6 ? 20 : 8;
    put16(b, 0x4500);
    put16(b, static_cast<std::uint16_t>(20 + l4 + s.payload));
    put16(b, 0x1234);
    put16(b, s.frag_offset & 0x1fff);
    b.push_back(64);
    b.push_back(s.proto);
    put16(b, 0);
    put32(b, s.src);
    put32(b, s.dst);
    if (s.proto == 6) {
        put16(b, s.sport);
        put16(b, s.dport);
        put32(b, 1000);  // seq
        put32(b, 0);     // ack
        b.push_back(0x50);
        b.push_back(s.flags);
        put16(b, 65535);
        put16(b, 0);
        put16(b, 0);
    } else if (s.proto == 17) {
        put16(b, s.sport);
        put16(b, s.dport);
        put16(b, static_cast<std::uint16_t>(8 + s.payload));
        put16(b, 0);
    } else {
        b.push_back(8);  // echo request
        b.push_back(0);
        put16(b, 0);
        put32(b, 0);
    }
    b.insert(b.end(), s.payload, 0);
    return b;
}

} // namespace nsb::test
