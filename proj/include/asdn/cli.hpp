#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace asdn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

/// Runs one subcommand (ingest | split | train | eval | sweep | gradcheck |
/// report). args excludes the program name. Failures print a single JSON
/// line {"error":kind,"message":...} to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

/// Grid syntax: comma-separated items, each a number, an inclusive integer
/// range "a:b", or a stepped real range "a:b:s".
std::vector<double> parse_grid(const std::string& text);

/// Git blob id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(const std::string& content);

}  // namespace asdn::cli
