#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

namespace brwre {

/// Shortest round-trippable text; non-finite values as inf, -inf, nan.
std::string format_double(double value);

/// Inverse of format_double. Throws UsageError on malformed text.
double parse_double(const std::string& text);

/// One CSV record; fields containing ',', '"', CR or LF are quoted (RFC 4180).
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);

/// Splits one CSV record, honouring RFC 4180 quotes.
std::vector<std::string> parse_csv_row(const std::string& line);

/// Finite doubles as JSON numbers, non-finite ones as the strings "inf", "-inf", "nan".
nlohmann::ordered_json json_number(double value);
double json_to_double(const nlohmann::ordered_json& value);

/// Writes `content` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace brwre
