#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sapp/license.hpp"

namespace sapp {

struct SourceFile {
  std::string bytes;
  std::optional<std::int64_t> mtime;  // UTC seconds
};

/// In-memory snapshot of the source files (matching extensions) and license
/// files of a directory or archive, keyed by normalized relative path.
class SourceTree : public PackageFiles {
 public:
  /// Directory, .zip or gzipped tar (detected by content). A missing or
  /// unreadable root, or a corrupt archive, throws ErrorKind::io.
  static SourceTree load(const std::filesystem::path& path, const std::set<std::string>& extensions);
  static SourceTree from_directory(const std::filesystem::path& root, const std::set<std::string>& extensions);
  static SourceTree from_zip(std::string_view archive, const std::set<std::string>& extensions);
  static SourceTree from_tar_gz(const std::filesystem::path& archive, const std::set<std::string>& extensions);

  void add(std::string rel_path, SourceFile file);

  const std::map<std::string, SourceFile>& files() const { return files_; }
  /// (path, reason) for files that could not be read.
  const std::vector<std::pair<std::string, std::string>>& unreadable() const { return unreadable_; }

  /// Source files (not license files) in path order.
  std::vector<std::string> source_paths() const;

  std::vector<std::string> list(const std::string& dir) const override;
  std::optional<std::string> read(const std::string& path) const override;

 private:
  bool wanted(const std::string& rel_path) const;

  std::set<std::string> extensions_;
  std::map<std::string, SourceFile> files_;
  std::vector<std::pair<std::string, std::string>> unreadable_;
};

/// Normalizes an archive member path; nullopt for absolute or escaping paths.
std::optional<std::string> normalize_member_path(std::string_view path);

}  // namespace sapp
