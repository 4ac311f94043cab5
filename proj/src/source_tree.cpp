#include "sapp/source_tree.hpp"

#include <sys/stat.h>
#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <ctime>
#include <memory>

#include "sapp/error.hpp"
#include "sapp/util.hpp"

namespace sapp {

namespace fs = std::filesystem;

namespace {

std::string file_name(const std::string& rel_path) {
  const auto slash = rel_path.rfind('/');
  return slash == std::string::npos ? rel_path : rel_path.substr(slash + 1);
}

std::string extension_of(const std::string& rel_path) {
  const std::string name = file_name(rel_path);
  const auto dot = name.rfind('.');
  return dot == std::string::npos || dot == 0 ? std::string() : to_lower(name.substr(dot));
}

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void corrupt(const std::string& what) { throw Error(ErrorKind::io, "corrupt archive: " + what); }

std::int64_t dos_time_utc(std::uint16_t time, std::uint16_t date) {
  std::tm tm{};
  tm.tm_year = ((date >> 9) & 0x7F) + 80;
  tm.tm_mon = ((date >> 5) & 0x0F) - 1;
  tm.tm_mday = date & 0x1F;
  tm.tm_hour = (time >> 11) & 0x1F;
  tm.tm_min = (time >> 5) & 0x3F;
  tm.tm_sec = (time & 0x1F) * 2;
  return static_cast<std::int64_t>(timegm(&tm));
}

// Unix mtime from the 0x5455 extended-timestamp extra field, if present.
std::optional<std::int64_t> extended_mtime(const unsigned char* extra, std::size_t len) {
  std::size_t off = 0;
  while (off + 4 <= len) {
    const auto id = le16(extra + off);
    const auto size = le16(extra + off + 2);
    if (off + 4 + size > len) break;
    if (id == 0x5455 && size >= 5 && (extra[off + 4] & 1)) {
      return static_cast<std::int64_t>(static_cast<std::int32_t>(le32(extra + off + 5)));
    }
    off += 4 + size;
  }
  return std::nullopt;
}

std::string inflate_raw(const unsigned char* data, std::size_t size, std::size_t expected) {
  std::string out(expected, '\0');
  z_stream zs{};
  if (inflateInit2(&zs, -MAX_WBITS) != Z_OK) corrupt("inflate init");
  zs.next_in = const_cast<unsigned char*>(data);
  zs.avail_in = static_cast<uInt>(size);
  zs.next_out = reinterpret_cast<unsigned char*>(out.data());
  zs.avail_out = static_cast<uInt>(expected);
  const int rc = inflate(&zs, Z_FINISH);
  const auto produced = zs.total_out;
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || produced != expected) corrupt("deflate stream");
  return out;
}

std::int64_t stat_mtime(const fs::path& p) {
  struct stat st {};
  if (::stat(p.c_str(), &st) != 0) return 0;
  return static_cast<std::int64_t>(st.st_mtime);
}

bool is_gzip(const fs::path& p) {
  std::FILE* f = std::fopen(p.c_str(), "rb");
  if (f == nullptr) return false;
  unsigned char magic[2] = {0, 0};
  const auto n = std::fread(magic, 1, 2, f);
  std::fclose(f);
  return n == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
}

std::uint64_t parse_octal(const char* field, std::size_t len) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < len && field[i] != '\0'; ++i) {
    if (field[i] == ' ') continue;
    if (field[i] < '0' || field[i] > '7') corrupt("bad octal field in tar header");
    v = v * 8 + static_cast<std::uint64_t>(field[i] - '0');
  }
  return v;
}

}  // namespace

std::optional<std::string> normalize_member_path(std::string_view path) {
  if (path.empty() || path.front() == '/') return std::nullopt;
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  while (pos <= path.size()) {
    const auto slash = path.find('/', pos);
    const auto end = slash == std::string_view::npos ? path.size() : slash;
    const auto part = path.substr(pos, end - pos);
    if (part == "..") return std::nullopt;
    if (!part.empty() && part != ".") parts.push_back(part);
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  if (parts.empty()) return std::nullopt;
  std::string out;
  for (const auto& p : parts) {
    if (!out.empty()) out.push_back('/');
    out.append(p);
  }
  return out;
}

bool SourceTree::wanted(const std::string& rel_path) const {
  return extensions_.contains(extension_of(rel_path)) || is_license_file_name(file_name(rel_path));
}

void SourceTree::add(std::string rel_path, SourceFile file) { files_[std::move(rel_path)] = std::move(file); }

std::vector<std::string> SourceTree::source_paths() const {
  std::vector<std::string> out;
  for (const auto& [path, file] : files_) {
    if (extensions_.contains(extension_of(path))) out.push_back(path);
  }
  return out;
}

std::vector<std::string> SourceTree::list(const std::string& dir) const {
  std::vector<std::string> out;
  const std::string prefix = dir.empty() ? std::string() : dir + "/";
  for (auto it = files_.lower_bound(prefix); it != files_.end() && it->first.starts_with(prefix); ++it) {
    const std::string rest = it->first.substr(prefix.size());
    if (rest.find('/') == std::string::npos) out.push_back(rest);
  }
  return out;
}

std::optional<std::string> SourceTree::read(const std::string& path) const {
  auto it = files_.find(path);
  if (it == files_.end()) return std::nullopt;
  return it->second.bytes;
}

SourceTree SourceTree::from_directory(const fs::path& root, const std::set<std::string>& extensions) {
  SourceTree tree;
  tree.extensions_ = extensions;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw Error(ErrorKind::io, "not a directory: " + root.string());
  fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw Error(ErrorKind::io, "cannot read directory " + root.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (!entry.is_regular_file(ec)) continue;
    const std::string rel = fs::relative(entry.path(), root, ec).generic_string();
    if (ec || !tree.wanted(rel)) continue;
    try {
      tree.add(rel, SourceFile{read_file(entry.path()), stat_mtime(entry.path())});
    } catch (const Error& e) {
      tree.unreadable_.emplace_back(rel, e.what());
    }
  }
  return tree;
}

SourceTree SourceTree::from_zip(std::string_view archive, const std::set<std::string>& extensions) {
  SourceTree tree;
  tree.extensions_ = extensions;
  const auto* base = reinterpret_cast<const unsigned char*>(archive.data());
  const std::size_t size = archive.size();
  if (size < 22) corrupt("zip too small");

  // End of central directory record, searched backwards over the comment.
  std::size_t eocd = std::string_view::npos;
  const std::size_t floor = size > 22 + 0xFFFF ? size - 22 - 0xFFFF : 0;
  for (std::size_t i = size - 22 + 1; i-- > floor;) {
    if (le32(base + i) == 0x06054b50) {
      eocd = i;
      break;
    }
  }
  if (eocd == std::string_view::npos) corrupt("no end of central directory");
  const std::size_t count = le16(base + eocd + 10);
  std::size_t off = le32(base + eocd + 16);
  if (le32(base + eocd + 16) == 0xFFFFFFFFu) corrupt("zip64 archives are not supported");

  for (std::size_t n = 0; n < count; ++n) {
    if (off + 46 > size || le32(base + off) != 0x02014b50) corrupt("bad central directory entry");
    const auto method = le16(base + off + 10);
    const auto dos_t = le16(base + off + 12);
    const auto dos_d = le16(base + off + 14);
    const std::size_t csize = le32(base + off + 20);
    const std::size_t usize = le32(base + off + 24);
    const std::size_t name_len = le16(base + off + 28);
    const std::size_t extra_len = le16(base + off + 30);
    const std::size_t comment_len = le16(base + off + 32);
    const std::size_t local = le32(base + off + 42);
    if (off + 46 + name_len + extra_len > size) corrupt("truncated central directory");
    const std::string name(reinterpret_cast<const char*>(base + off + 46), name_len);
    const auto mtime = extended_mtime(base + off + 46 + name_len, extra_len).value_or(dos_time_utc(dos_t, dos_d));
    off += 46 + name_len + extra_len + comment_len;

    if (name.empty() || name.back() == '/') continue;
    const auto rel = normalize_member_path(name);
    if (!rel || !tree.wanted(*rel)) continue;

    if (local + 30 > size || le32(base + local) != 0x04034b50) corrupt("bad local header for " + name);
    const std::size_t data = local + 30 + le16(base + local + 26) + le16(base + local + 28);
    if (data + csize > size) corrupt("truncated member " + name);
    std::string bytes;
    if (method == 0) {
      bytes.assign(reinterpret_cast<const char*>(base + data), csize);
    } else if (method == 8) {
      bytes = inflate_raw(base + data, csize, usize);
    } else {
      tree.unreadable_.emplace_back(*rel, "unsupported compression method " + std::to_string(method));
      continue;
    }
    tree.add(*rel, SourceFile{std::move(bytes), mtime});
  }
  return tree;
}

SourceTree SourceTree::from_tar_gz(const fs::path& archive, const std::set<std::string>& extensions) {
  SourceTree tree;
  tree.extensions_ = extensions;
  std::unique_ptr<gzFile_s, int (*)(gzFile)> gz(gzopen(archive.c_str(), "rb"), gzclose);
  if (!gz) throw Error(ErrorKind::io, "cannot open " + archive.string());

  auto read_exact = [&](char* buf, std::size_t n) {
    std::size_t got = 0;
    while (got < n) {
      const int r = gzread(gz.get(), buf + got, static_cast<unsigned>(n - got));
      if (r <= 0) return false;
      got += static_cast<std::size_t>(r);
    }
    return true;
  };

  std::optional<std::string> long_name;
  char header[512];
  while (true) {
    if (!read_exact(header, sizeof header)) corrupt("truncated tar stream");
    if (std::all_of(header, header + 512, [](char c) { return c == '\0'; })) break;
    const std::uint64_t size = parse_octal(header + 124, 12);
    const std::int64_t mtime = static_cast<std::int64_t>(parse_octal(header + 136, 12));
    const char type = header[156];
    std::string name(header, strnlen(header, 100));
    if (std::memcmp(header + 257, "ustar", 5) == 0 && header[345] != '\0') {
      name = std::string(header + 345, strnlen(header + 345, 155)) + "/" + name;
    }
    const std::size_t padded = static_cast<std::size_t>((size + 511) / 512 * 512);
    std::string body(padded, '\0');
    if (padded > 0 && !read_exact(body.data(), padded)) corrupt("truncated tar member " + name);
    body.resize(static_cast<std::size_t>(size));

    if (type == 'L') {  // GNU long name for the next member
      long_name = std::string(body.c_str());
      continue;
    }
    if (type == 'x') {  // pax extended header: look for path=
      for (std::size_t pos = 0; pos < body.size();) {
        const auto sp = body.find(' ', pos);
        if (sp == std::string::npos) break;
        const std::size_t len = std::stoul(body.substr(pos, sp - pos));
        if (len == 0 || pos + len > body.size()) break;
        const std::string record = body.substr(sp + 1, pos + len - sp - 2);
        if (record.starts_with("path=")) long_name = record.substr(5);
        pos += len;
      }
      continue;
    }
    if (long_name) {
      name = *long_name;
      long_name.reset();
    }
    if (type != '0' && type != '\0') continue;
    const auto rel = normalize_member_path(name);
    if (!rel || !tree.wanted(*rel)) continue;
    tree.add(*rel, SourceFile{std::move(body), mtime});
  }
  return tree;
}

SourceTree SourceTree::load(const fs::path& path, const std::set<std::string>& extensions) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorKind::io, "no such path: " + path.string());
  if (fs::is_directory(path, ec)) return from_directory(path, extensions);
  if (is_gzip(path)) return from_tar_gz(path, extensions);
  const std::string bytes = read_file(path);
  if (bytes.size() >= 4 && le32(reinterpret_cast<const unsigned char*>(bytes.data())) == 0x04034b50) {
    return from_zip(bytes, extensions);
  }
  if (bytes.size() >= 22 && bytes.starts_with("PK\x05\x06")) return from_zip(bytes, extensions);  // empty zip
  throw Error(ErrorKind::io, "not a directory, zip or tar.gz archive: " + path.string());
}

}  // namespace sapp
