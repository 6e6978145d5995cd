#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace llsim {

/// Hex-encoded SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Canonical double formatting ("%.17g") used in CSV output so reruns are
/// byte-identical.
std::string format_double(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

/// Joins a CSV row; fields are expected to be free of commas and newlines.
std::string csv_row(const std::vector<std::string>& fields);

}  // namespace llsim
