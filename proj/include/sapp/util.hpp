#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace sapp {

/// Seconds since the Unix epoch, UTC. Honors a pinned clock (see pin_clock).
std::int64_t now_seconds();

/// Pins now_seconds() to a fixed value; std::nullopt restores the wall clock.
/// The SAPP_FIXED_TIME environment variable pins it at startup.
void pin_clock(std::optional<std::int64_t> seconds);

/// "2017-12-01T00:00:00Z"
std::string format_utc(std::int64_t seconds);

/// Parses "YYYY-MM-DDTHH:MM:SS[.fff]" as UTC. Returns nullopt on malformed input.
std::optional<std::int64_t> parse_utc(std::string_view text);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view data);

class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;
  void update(std::string_view data);
  std::string hex_digest();

 private:
  void* ctx_;
};

bool is_valid_utf8(std::string_view text);

/// Replaces invalid UTF-8 sequences with U+FFFD.
std::string sanitize_utf8(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string to_lower(std::string_view text);

/// Collapses whitespace runs into single spaces and trims both ends.
std::string normalize_space(std::string_view text);

std::string html_escape(std::string_view text);

/// Decodes the named and numeric entities that appear in StackExchange dumps.
std::string html_unescape(std::string_view text);

enum class LogLevel { info, warn, error };
void log(LogLevel level, std::string_view message);
void set_log_quiet(bool quiet);

}  // namespace sapp
