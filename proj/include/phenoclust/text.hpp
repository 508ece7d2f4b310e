#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

// Small text helpers shared by every file format in the project.
namespace phenoclust::text {

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double x);

/// Strict full-token parse of a finite double; returns false on any junk.
bool parse_double(std::string_view token, double& out);

std::vector<std::string> split(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace phenoclust::text
