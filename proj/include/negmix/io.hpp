#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "negmix/common.hpp"

namespace negmix {

std::string read_text_file(const std::filesystem::path& path);

// Writes via a sibling temp file + rename so readers never observe a partial
// file and an interrupted run leaves the previous version intact.
void write_text_file_atomic(const std::filesystem::path& path,
                            const std::string& content);

// Splits on '\n', dropping a trailing empty line (files end with newline).
std::vector<std::string> split_lines(const std::string& text);
std::vector<std::string> split_on(const std::string& line, char sep);

double parse_double(std::string_view field, const std::string& context);
long parse_long(std::string_view field, const std::string& context);

std::string fmt_double(double v);            // %.17g, exact round trip
std::string fmt_fixed(double v, int places); // %.Nf

}  // namespace negmix
