#include "sapp/license.hpp"

#include <algorithm>
#include <array>

#include "sapp/error.hpp"
#include "sapp/util.hpp"

namespace sapp {

using nlohmann::json;

namespace {

constexpr std::size_t kHeaderWindow = 50;

// Phrases that mark a comment as talking about licensing at all.
constexpr std::array<std::string_view, 12> kLicenseWording = {
    "license", "licence", "copyright", "(c)", "\xC2\xA9", "all rights reserved", "permission is hereby granted",
    "redistribution", "warranty", "spdx-license-identifier", "public domain", "copyleft"};

const char* kDefaultRules = R"([
  {"license_id": "GPL-3.0", "patterns": ["SPDX-License-Identifier:\\s*GPL-3\\.0"]},
  {"license_id": "GPL-2.0", "patterns": ["SPDX-License-Identifier:\\s*GPL-2\\.0"]},
  {"license_id": "LGPL-3.0", "patterns": ["SPDX-License-Identifier:\\s*LGPL-3\\.0"]},
  {"license_id": "LGPL-2.1", "patterns": ["SPDX-License-Identifier:\\s*LGPL-2\\.1"]},
  {"license_id": "MIT", "patterns": ["SPDX-License-Identifier:\\s*MIT\\b"]},
  {"license_id": "Apache-2.0", "patterns": ["SPDX-License-Identifier:\\s*Apache-2\\.0"]},
  {"license_id": "BSD-3-Clause", "patterns": ["SPDX-License-Identifier:\\s*BSD-3-Clause"]},
  {"license_id": "BSD-2-Clause", "patterns": ["SPDX-License-Identifier:\\s*BSD-2-Clause"]},
  {"license_id": "MPL-2.0", "patterns": ["SPDX-License-Identifier:\\s*MPL-2\\.0"]},
  {"license_id": "PSF-2.0", "patterns": ["SPDX-License-Identifier:\\s*PSF-2\\.0"]},
  {"license_id": "CC-BY-SA-3.0", "patterns": ["SPDX-License-Identifier:\\s*CC-BY-SA-3\\.0"]},
  {"license_id": "CC-BY-SA-4.0", "patterns": ["SPDX-License-Identifier:\\s*CC-BY-SA-4\\.0"]},
  {"license_id": "LGPL-3.0", "patterns": ["GNU Lesser General Public License", "version 3"]},
  {"license_id": "LGPL-2.1", "patterns": ["GNU Lesser General Public License", "version 2\\.1"]},
  {"license_id": "GPL-3.0", "patterns": ["GNU General Public License", "version 3"]},
  {"license_id": "GPL-3.0", "patterns": ["\\bGPL\\s*v?3"]},
  {"license_id": "GPL-2.0", "patterns": ["GNU General Public License", "version 2"]},
  {"license_id": "GPL-2.0", "patterns": ["\\bGPL\\s*v?2"]},
  {"license_id": "Apache-2.0", "patterns": ["Apache License", "Version 2\\.0"]},
  {"license_id": "Apache-2.0", "patterns": ["\\bApache[- ]2(\\.0)?\\b"]},
  {"license_id": "MPL-2.0", "patterns": ["Mozilla Public License", "2\\.0"]},
  {"license_id": "PSF-2.0", "patterns": ["Python Software Foundation License"]},
  {"license_id": "PSF-2.0", "patterns": ["PYTHON SOFTWARE FOUNDATION LICENSE VERSION 2"]},
  {"license_id": "PSF-2.0", "patterns": ["\\bPSF License"]},
  {"license_id": "CC-BY-SA-3.0", "patterns": ["Creative Commons", "Attribution-ShareAlike 3\\.0"]},
  {"license_id": "CC-BY-SA-3.0", "patterns": ["\\bCC[- ]BY[- ]SA[- ]3\\.0"]},
  {"license_id": "CC-BY-SA-4.0", "patterns": ["Creative Commons", "Attribution-ShareAlike 4\\.0"]},
  {"license_id": "BSD-3-Clause", "patterns": ["Redistribution and use in source and binary forms", "Neither the name of"]},
  {"license_id": "BSD-2-Clause", "patterns": ["Redistribution and use in source and binary forms"]},
  {"license_id": "MIT", "patterns": ["Permission is hereby granted, free of charge"]},
  {"license_id": "MIT", "patterns": ["\\bMIT License\\b"]},
  {"license_id": "MIT", "patterns": ["Licensed under the MIT\\b"]}
])";

// Permissive licenses that may be combined freely.
constexpr std::array<std::string_view, 3> kPermissive = {"MIT", "BSD-2-Clause", "BSD-3-Clause"};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\f\v");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\f\v");
  return s.substr(b, e - b + 1);
}

bool has_license_wording(std::string_view text) {
  const std::string lower = to_lower(text);
  return std::any_of(kLicenseWording.begin(), kLicenseWording.end(),
                     [&](std::string_view w) { return lower.find(w) != std::string::npos; });
}

std::string parent_dir(const std::string& path) {
  const auto slash = path.rfind('/');
  return slash == std::string::npos ? std::string() : path.substr(0, slash);
}

}  // namespace

RuleSet::RuleSet(std::vector<LicenseRule> rules) : rules_(std::move(rules)) {
  compiled_.reserve(rules_.size());
  for (const auto& rule : rules_) {
    if (rule.license_id.empty()) throw Error(ErrorKind::config, "license rule with empty license_id");
    if (rule.patterns.empty()) throw Error(ErrorKind::config, "license rule " + rule.license_id + " has no patterns");
    std::vector<std::regex> res;
    for (const auto& p : rule.patterns) {
      try {
        res.emplace_back(p, std::regex::ECMAScript | std::regex::icase | std::regex::optimize);
      } catch (const std::regex_error& e) {
        throw Error(ErrorKind::config, "bad pattern for " + rule.license_id + ": " + p + " (" + e.what() + ")");
      }
    }
    compiled_.push_back(std::move(res));
  }
}

const RuleSet& RuleSet::shipped_default() {
  static const RuleSet rules = from_json(json::parse(kDefaultRules));
  return rules;
}

RuleSet RuleSet::from_json(const json& j) {
  if (!j.is_array()) throw Error(ErrorKind::config, "rule set must be a JSON list");
  std::vector<LicenseRule> rules;
  for (const auto& item : j) {
    try {
      rules.push_back({item.at("license_id").get<std::string>(), item.at("patterns").get<std::vector<std::string>>()});
    } catch (const json::exception& e) {
      throw Error(ErrorKind::config, std::string("malformed license rule: ") + e.what());
    }
  }
  return RuleSet(std::move(rules));
}

RuleSet RuleSet::load_file(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "cannot parse rule set " + path.string() + ": " + e.what());
  }
}

json RuleSet::to_json() const {
  json out = json::array();
  for (const auto& r : rules_) out.push_back({{"license_id", r.license_id}, {"patterns", r.patterns}});
  return out;
}

std::optional<std::string> RuleSet::match(std::string_view text) const {
  const std::string normalized = normalize_space(text);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const bool all = std::all_of(compiled_[i].begin(), compiled_[i].end(),
                                 [&](const std::regex& re) { return std::regex_search(normalized, re); });
    if (all) return rules_[i].license_id;
  }
  return std::nullopt;
}

std::set<std::string> RuleSet::license_ids() const {
  std::set<std::string> ids;
  for (const auto& r : rules_) ids.insert(r.license_id);
  return ids;
}

std::optional<std::string> leading_comment(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size() && lines.size() < kHeaderWindow;) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }

  std::string run;
  bool in_run = false;
  bool saw_code = false;
  std::string_view block_end;  // "*/", "\"\"\"" or "'''" while inside a multi-line comment

  auto add = [&](std::string_view piece) {
    piece = trim(piece);
    if (piece.empty()) return;
    if (!run.empty()) run.push_back(' ');
    run.append(piece);
  };

  for (std::string_view raw : lines) {
    std::string_view line = trim(raw);
    if (!block_end.empty()) {
      const auto close = line.find(block_end);
      if (close == std::string_view::npos) {
        if (block_end == "*/" && line.starts_with("*")) line.remove_prefix(1);
        add(line);
      } else {
        std::string_view inner = line.substr(0, close);
        if (block_end == "*/" && inner.starts_with("*")) inner.remove_prefix(1);
        add(inner);
        block_end = {};
      }
      continue;
    }
    if (line.empty()) continue;
    if (line.starts_with("#") || line.starts_with("//")) {
      line.remove_prefix(line.starts_with("#") ? 1 : 2);
      while (!line.empty() && (line.front() == '#' || line.front() == '/' || line.front() == '!')) line.remove_prefix(1);
      in_run = true;
      add(line);
      continue;
    }
    std::string_view opener;
    if (line.starts_with("/*")) opener = "/*";
    else if (!saw_code && (line.starts_with("\"\"\"") || line.starts_with("'''"))) opener = line.substr(0, 3);
    else if (!saw_code && line.size() > 3 && (line[0] == 'r' || line[0] == 'u' || line[0] == 'R' || line[0] == 'U') &&
             (line.substr(1).starts_with("\"\"\"") || line.substr(1).starts_with("'''"))) {
      line.remove_prefix(1);
      opener = line.substr(0, 3);
    }
    if (!opener.empty()) {
      const std::string_view closer = opener == "/*" ? std::string_view("*/") : opener;
      line.remove_prefix(opener.size());
      in_run = true;
      const auto close = line.find(closer);
      if (close == std::string_view::npos) {
        add(line);
        block_end = closer;
      } else {
        add(line.substr(0, close));
      }
      continue;
    }
    // A code line: ends a run, or is skipped while looking for one.
    saw_code = true;
    if (in_run) break;
  }
  if (!in_run) return std::nullopt;
  return run;
}

LicenseTag detect_header_license(std::string_view text, const RuleSet& rules) {
  const auto comment = leading_comment(text);
  if (!comment) return {std::string(kLicenseNone), LicenseProvenance::header};
  if (auto id = rules.match(*comment)) return {*id, LicenseProvenance::header};
  if (has_license_wording(*comment)) return {std::string(kLicenseUnknown), LicenseProvenance::header};
  return {std::string(kLicenseNone), LicenseProvenance::header};
}

bool is_license_file_name(std::string_view name) {
  const std::string lower = to_lower(name);
  for (std::string_view stem : {"license", "licence", "copying"}) {
    if (lower == stem) return true;
    if (lower.starts_with(stem) && lower.size() > stem.size() && (lower[stem.size()] == '.' || lower[stem.size()] == '-' || lower[stem.size()] == '_')) {
      return true;
    }
  }
  return false;
}

std::vector<std::string> FilesystemPackage::list(const std::string& dir) const {
  std::vector<std::string> names;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(root_ / dir, ec)) {
    if (entry.is_regular_file(ec)) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::optional<std::string> FilesystemPackage::read(const std::string& path) const {
  try {
    return read_file(root_ / path);
  } catch (const Error&) {
    return std::nullopt;
  }
}

LicenseResolver::LicenseResolver(const RuleSet& rules, const PackageFiles& files,
                                 std::optional<std::string> corpus_default)
    : rules_(rules), files_(files), corpus_default_(std::move(corpus_default)) {}

std::optional<LicenseTag> LicenseResolver::directory_license(const std::string& dir) const {
  {
    std::lock_guard lock(mu_);
    if (auto it = memo_.find(dir); it != memo_.end()) return it->second;
  }
  std::optional<LicenseTag> found;
  std::vector<std::string> bad;
  for (const auto& name : files_.list(dir)) {
    if (!is_license_file_name(name)) continue;
    const std::string path = dir.empty() ? name : dir + "/" + name;
    const auto body = files_.read(path);
    if (!body) {
      bad.push_back(path);
      log(LogLevel::warn, "unreadable license file " + path + ", treated as absent");
      continue;
    }
    if (auto id = rules_.match(*body)) {
      found = LicenseTag{*id, LicenseProvenance::package_file};
      break;
    }
    if (!found) found = LicenseTag{std::string(kLicenseUnknown), LicenseProvenance::package_file};
  }
  std::lock_guard lock(mu_);
  unreadable_.insert(unreadable_.end(), bad.begin(), bad.end());
  memo_.emplace(dir, found);
  return found;
}

LicenseTag LicenseResolver::resolve(std::string_view file_text, const std::string& rel_path) const {
  const LicenseTag header = detect_header_license(file_text, rules_);
  if (header.is_concrete()) return header;

  // Nearest directory holding a license file decides; stop at the package root.
  std::optional<LicenseTag> package;
  std::string dir = parent_dir(rel_path);
  while (true) {
    package = directory_license(dir);
    if (package || dir.empty()) break;
    dir = parent_dir(dir);
  }
  if (package && package->is_concrete()) return *package;
  if (corpus_default_) return {*corpus_default_, LicenseProvenance::corpus_default};
  if (header.is_unknown()) return header;
  if (package) return *package;
  return {std::string(kLicenseNone), LicenseProvenance::package_file};
}

std::vector<std::string> LicenseResolver::unreadable() const {
  std::lock_guard lock(mu_);
  return unreadable_;
}

LicenseTag resolve_license(const CodeBlock& block, const std::filesystem::path& package_root, const RuleSet& rules,
                           std::optional<std::string> corpus_default) {
  FilesystemPackage files(package_root);
  LicenseResolver resolver(rules, files, std::move(corpus_default));
  return resolver.resolve(block.raw_text, block.locator.path);
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::compatible: return "compatible";
    case Verdict::conflict: return "conflict";
    case Verdict::lack_of_licensing: return "lack-of-licensing";
    case Verdict::unknown: return "unknown";
  }
  return "unknown";
}

Verdict parse_verdict(std::string_view text) {
  if (text == "compatible") return Verdict::compatible;
  if (text == "conflict") return Verdict::conflict;
  if (text == "lack-of-licensing") return Verdict::lack_of_licensing;
  if (text == "unknown") return Verdict::unknown;
  throw Error(ErrorKind::parse, "unknown verdict '" + std::string(text) + "'");
}

const CompatibilityMatrix& CompatibilityMatrix::shipped_default() {
  static const CompatibilityMatrix m = [] {
    CompatibilityMatrix out;
    out.set_known_ids(RuleSet::shipped_default().license_ids());
    for (std::size_t i = 0; i < kPermissive.size(); ++i) {
      for (std::size_t j = i + 1; j < kPermissive.size(); ++j) {
        out.declare(std::string(kPermissive[i]), std::string(kPermissive[j]), Verdict::compatible);
      }
    }
    out.set_default_verdict(Verdict::conflict);
    return out;
  }();
  return m;
}

void CompatibilityMatrix::declare(const std::string& a, const std::string& b, Verdict v, bool directed) {
  if (v != Verdict::compatible && v != Verdict::conflict) {
    throw Error(ErrorKind::config, "matrix verdicts must be compatible or conflict");
  }
  auto put = [&](const std::string& x, const std::string& y, bool dir) {
    auto [it, inserted] = entries_.try_emplace({x, y}, Entry{v, dir});
    if (!inserted && it->second.verdict != v) {
      throw Error(ErrorKind::config, "contradictory matrix entries for (" + x + ", " + y + ")");
    }
  };
  put(a, b, directed);
  if (!directed && a != b) put(b, a, false);
}

void CompatibilityMatrix::set_known_ids(std::set<std::string> ids) { known_ids_ = std::move(ids); }

void CompatibilityMatrix::set_default_verdict(Verdict v) {
  if (v != Verdict::compatible && v != Verdict::conflict) {
    throw Error(ErrorKind::config, "default verdict must be compatible or conflict");
  }
  default_verdict_ = v;
}

bool CompatibilityMatrix::known(const std::string& id) const {
  if (!known_ids_) return true;
  if (known_ids_->contains(id)) return true;
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first.first == id || e.first.second == id; });
}

Verdict CompatibilityMatrix::lookup(const std::string& a, const std::string& b) const {
  if (!known(a) || !known(b)) return Verdict::unknown;
  if (auto it = entries_.find({a, b}); it != entries_.end()) return it->second.verdict;
  if (a == b) return Verdict::compatible;
  return default_verdict_;
}

CompatibilityMatrix CompatibilityMatrix::from_json(const json& j) {
  CompatibilityMatrix m;
  try {
    if (j.contains("default_verdict")) m.set_default_verdict(parse_verdict(j.at("default_verdict").get<std::string>()));
    if (j.contains("licenses")) m.set_known_ids(j.at("licenses").get<std::set<std::string>>());
    for (const auto& p : j.value("pairs", json::array())) {
      m.declare(p.at("a").get<std::string>(), p.at("b").get<std::string>(),
                parse_verdict(p.at("verdict").get<std::string>()), p.value("directed", false));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("malformed compatibility matrix: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("malformed compatibility matrix: ") + e.what());
  }
  return m;
}

CompatibilityMatrix CompatibilityMatrix::load_file(const std::filesystem::path& path) {
  try {
    return from_json(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "cannot parse matrix " + path.string() + ": " + e.what());
  }
}

json CompatibilityMatrix::to_json() const {
  json pairs = json::array();
  for (const auto& [key, entry] : entries_) {
    // Symmetric entries are stored both ways; emit each once.
    if (!entry.directed && key.first > key.second) continue;
    json p = {{"a", key.first}, {"b", key.second}, {"verdict", to_string(entry.verdict)}};
    if (entry.directed) p["directed"] = true;
    pairs.push_back(std::move(p));
  }
  json out = {{"pairs", pairs}, {"default_verdict", to_string(default_verdict_)}};
  if (known_ids_) out["licenses"] = *known_ids_;
  return out;
}

Verdict classify_pair(const LicenseTag& a, const LicenseTag& b, const CompatibilityMatrix& matrix) {
  if (a.is_none() || b.is_none()) return Verdict::lack_of_licensing;
  if (a.is_unknown() || b.is_unknown()) return Verdict::unknown;
  return matrix.lookup(a.id, b.id);
}

}  // namespace sapp
