#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sapp/code_block.hpp"

namespace sapp {

/// A license is detected when every pattern of one of its rules matches
/// (case-insensitive, whitespace-normalized text). Rules are tried in order.
struct LicenseRule {
  std::string license_id;
  std::vector<std::string> patterns;
};

class RuleSet {
 public:
  explicit RuleSet(std::vector<LicenseRule> rules);

  /// Reduced built-in set: GPL-2.0/3.0, LGPL, MIT, Apache-2.0, BSD-2/3-Clause,
  /// MPL-2.0, CC-BY-SA-3.0/4.0, PSF-2.0 plus SPDX identifier lines.
  static const RuleSet& shipped_default();
  static RuleSet from_json(const nlohmann::json& j);
  static RuleSet load_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// First matching rule's license id.
  std::optional<std::string> match(std::string_view text) const;
  const std::vector<LicenseRule>& rules() const { return rules_; }
  std::set<std::string> license_ids() const;

 private:
  std::vector<LicenseRule> rules_;
  std::vector<std::vector<std::regex>> compiled_;
};

/// Text of the first run of comment lines within the first 50 lines, with
/// comment markers stripped. A leading module docstring counts as a comment.
/// Blank lines do not break a run; code does.
std::optional<std::string> leading_comment(std::string_view text);

/// Matches rules against the leading comment. No comment, or a comment with
/// no license wording → NONE; license wording no rule recognizes → UNKNOWN.
LicenseTag detect_header_license(std::string_view text, const RuleSet& rules);

/// True for LICENSE, LICENSE.*, LICENCE*, COPYING, COPYING.* (any case).
bool is_license_file_name(std::string_view name);

/// Read-only view of a package tree, addressed by '/'-separated relative paths.
class PackageFiles {
 public:
  virtual ~PackageFiles() = default;
  /// Names of regular files directly inside dir ("" is the package root).
  virtual std::vector<std::string> list(const std::string& dir) const = 0;
  /// nullopt when the file cannot be read.
  virtual std::optional<std::string> read(const std::string& path) const = 0;
};

class FilesystemPackage : public PackageFiles {
 public:
  explicit FilesystemPackage(std::filesystem::path root) : root_(std::move(root)) {}
  std::vector<std::string> list(const std::string& dir) const override;
  std::optional<std::string> read(const std::string& path) const override;

 private:
  std::filesystem::path root_;
};

/// Header scan with recursive package-file fallback. Precedence:
/// concrete header id ≻ concrete package-file id ≻ corpus default ≻ UNKNOWN
/// (from header or package file) ≻ NONE. Package-file lookups are memoized per
/// directory; safe to share across threads.
class LicenseResolver {
 public:
  LicenseResolver(const RuleSet& rules, const PackageFiles& files, std::optional<std::string> corpus_default);

  /// rel_path is the file's path relative to the package root.
  LicenseTag resolve(std::string_view file_text, const std::string& rel_path) const;

  /// Unreadable license files encountered so far.
  std::vector<std::string> unreadable() const;

 private:
  std::optional<LicenseTag> directory_license(const std::string& dir) const;

  const RuleSet& rules_;
  const PackageFiles& files_;
  std::optional<std::string> corpus_default_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::optional<LicenseTag>> memo_;
  mutable std::vector<std::string> unreadable_;
};

/// Convenience form over the real filesystem; block.locator.path is taken
/// relative to package_root.
LicenseTag resolve_license(const CodeBlock& block, const std::filesystem::path& package_root, const RuleSet& rules,
                           std::optional<std::string> corpus_default = std::nullopt);

enum class Verdict { compatible, conflict, lack_of_licensing, unknown };

std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view text);

class CompatibilityMatrix {
 public:
  CompatibilityMatrix() = default;

  /// Conservative default: identical ids and a small permissive allowlist are
  /// compatible, everything else among the shipped rule ids conflicts.
  static const CompatibilityMatrix& shipped_default();
  static CompatibilityMatrix from_json(const nlohmann::json& j);
  static CompatibilityMatrix load_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Declares a verdict; symmetric unless directed. Contradicting an existing
  /// declaration throws.
  void declare(const std::string& a, const std::string& b, Verdict v, bool directed = false);
  /// Restricts lookups to these ids; others resolve to unknown.
  void set_known_ids(std::set<std::string> ids);
  void set_default_verdict(Verdict v);

  /// compatible or conflict for known ids, unknown otherwise.
  Verdict lookup(const std::string& a, const std::string& b) const;

 private:
  struct Entry {
    Verdict verdict;
    bool directed;
  };
  bool known(const std::string& id) const;

  std::map<std::pair<std::string, std::string>, Entry> entries_;
  std::optional<std::set<std::string>> known_ids_;
  Verdict default_verdict_ = Verdict::conflict;
};

/// NONE on either side → lack-of-licensing; else UNKNOWN on either side →
/// unknown; else the matrix verdict.
Verdict classify_pair(const LicenseTag& a, const LicenseTag& b, const CompatibilityMatrix& matrix);

}  // namespace sapp
