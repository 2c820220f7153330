#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace coalflow {

inline constexpr const char* kVersion = "coalflow 0.1.0";

// Fixed 17-significant-digit decimal rendering ('.' separator, no locale).
std::string format_float(double v);

// RFC-4180 CSV: header row, LF line endings, quoting only where required.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};
CsvTable read_csv(const std::filesystem::path& path);

std::string iso8601_utc_now();

void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace coalflow
