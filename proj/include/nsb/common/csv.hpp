#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include "nsb/common/error.hpp"

namespace nsb {

// RFC-4180 quoting with LF line endings.
std::string csv_escape(std::string_view field);
std::string csv_line(const std::vector<std::string>& fields);

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& path);

    void row(const std::vector<std::string>& fields);
    void flush();
    bool good() const { return static_cast<bool>(out_); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Index of a header column; throws nsb::Error when absent.
    std::size_t column(std::string_view name) const;
};

/// Parses a whole document, honoring quoted fields that span lines.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

} // namespace nsb
