#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace oxysense {

/// File access or file content problem: missing paths, malformed headers,
/// out-of-range values. Messages carry the path and, for parse errors, the
/// 1-based line number.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

/// Formats a double with up to 17 significant digits (full round-trip
/// precision), decimal point, locale-independent.
std::string format_double(double value);

/// Locale-independent strict double parse of a whole field.
double parse_double(std::string_view field, const std::string& context);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace io
}  // namespace oxysense
